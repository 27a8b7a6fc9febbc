#ifndef PFTADB_GRAD_CHECK_HPP
#define PFTADB_GRAD_CHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "pftadb/autodiff.hpp"
#include "pftadb/error.hpp"

namespace pftadb {

/// Scalar function rebuilt on a fresh graph at every evaluation.
using ScalarFunction = std::function<Var(Graph&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    std::size_t checked_entries = 0;
    double max_abs_error = 0.0;
};

// Denominator floor. Central differences at eps ~ 1e-5 carry roughly 1e-11
// of absolute round-off, so gradients smaller than this are judged on an
// absolute scale instead of a relative one.
inline constexpr double kGradCheckFloor = 1e-4;

/// Compares reverse-mode gradients against central differences for every
/// entry of every trainable parameter. Frozen parameters are skipped.
inline GradCheckReport grad_check_report(const ScalarFunction& f, std::span<Parameter* const> params, double eps) {
    if (!(eps > 0.0 && eps <= 1e-3)) throw ConfigError("grad_check: eps must lie in (0, 1e-3]");

    auto evaluate = [&f]() {
        Graph g(false);
        const Var out = f(g);
        if (out.value().size() != 1) throw DimensionError("grad_check: function is not scalar");
        const double v = out.value()[0];
        if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
        return v;
    };

    for (Parameter* p : params) p->zero_grad();
    {
        Graph g(true);
        const Var out = f(g);
        if (!std::isfinite(out.value()[0])) throw NumericError("grad_check: function value is not finite");
        g.backward(out);
    }

    GradCheckReport report;
    for (Parameter* p : params) {
        if (!p->trainable) continue;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double original = p->value[i];
            p->value[i] = original + eps;
            const double up = evaluate();
            p->value[i] = original - eps;
            const double down = evaluate();
            p->value[i] = original;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = p->gradient[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
            const double rel = std::abs(analytic - numeric) / denom;
            ++report.checked_entries;
            report.max_abs_error = std::max(report.max_abs_error, std::abs(analytic - numeric));
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_parameter = p->name;
                report.worst_index = i;
            }
        }
    }
    return report;
}

inline double grad_check(const ScalarFunction& f, std::span<Parameter* const> params, double eps = 1e-5) {
    return grad_check_report(f, params, eps).max_rel_error;
}

}  // namespace pftadb

#endif  // PFTADB_GRAD_CHECK_HPP
