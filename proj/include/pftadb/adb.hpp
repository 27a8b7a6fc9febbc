#ifndef PFTADB_ADB_HPP
#define PFTADB_ADB_HPP

#include <cmath>
#include <cstddef>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pftadb/autodiff.hpp"
#include "pftadb/error.hpp"
#include "pftadb/head.hpp"
#include "pftadb/model.hpp"
#include "pftadb/ops.hpp"
#include "pftadb/optim.hpp"
#include "pftadb/tensor.hpp"

namespace pftadb {

/// Per known class: a fixed centroid and a radius delta = softplus(raw).
struct BoundarySet {
    std::vector<std::vector<double>> centroids;
    std::vector<double> raw_radii;

    std::size_t num_classes() const noexcept { return centroids.size(); }
    int open_label() const noexcept { return static_cast<int>(centroids.size()); }
    double radius(std::size_t k) const { return detail::softplus(raw_radii.at(k)); }
};

struct AdbConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 100;
    double initial_raw_radius = 0.0;  // softplus(0) = ln 2
};

inline double euclidean(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("distance between vectors of different width");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

/// Stacks representation vectors into an n x feature_dim matrix.
inline Tensor stack_features(const std::vector<IntentRepresentation>& reps) {
    if (reps.empty()) return Tensor({0, 0});
    const std::size_t width = reps.front().features.size();
    Tensor out({reps.size(), width});
    for (std::size_t i = 0; i < reps.size(); ++i) {
        if (reps[i].features.size() != width) throw DimensionError("representations of different width");
        std::copy(reps[i].features.begin(), reps[i].features.end(), out.row(i).begin());
    }
    return out;
}

/// Per-class arithmetic mean of the representation rows.
inline std::vector<std::vector<double>> compute_centroids(const Tensor& reps, std::span<const int> labels,
                                                          std::size_t num_classes) {
    if (labels.size() != reps.rows()) throw DimensionError("label count differs from representation count");
    std::vector<std::vector<double>> sums(num_classes, std::vector<double>(reps.cols(), 0.0));
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw LabelError("label " + std::to_string(labels[i]) + " is not a known class");
        }
        const auto k = static_cast<std::size_t>(labels[i]);
        const auto row = reps.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) sums[k][j] += row[j];
        ++counts[k];
    }
    for (std::size_t k = 0; k < num_classes; ++k) {
        if (counts[k] == 0) throw DataError("known class " + std::to_string(k) + " has no samples");
        for (double& v : sums[k]) v /= static_cast<double>(counts[k]);
    }
    return sums;
}

/// Distance of every sample to its own class centroid.
inline std::vector<double> centroid_distances(const Tensor& reps, std::span<const int> labels,
                                              const std::vector<std::vector<double>>& centroids) {
    std::vector<double> d(reps.rows());
    for (std::size_t i = 0; i < reps.rows(); ++i) {
        d[i] = euclidean(reps.row(i), centroids.at(static_cast<std::size_t>(labels[i])));
    }
    return d;
}

/// Mean over samples of |d_i - delta_{y_i}|, i.e. (d - delta) outside the
/// boundary and (delta - d) inside. `raw` is a K x 1 value of unconstrained
/// radii; only it receives gradients.
inline Var boundary_loss(Graph& g, const std::vector<double>& distances, std::span<const int> labels, Var raw) {
    if (distances.size() != labels.size()) throw DimensionError("distance count differs from label count");
    if (distances.empty()) throw DataError("boundary loss over an empty sample set");
    std::vector<std::size_t> ids(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) ids[i] = static_cast<std::size_t>(labels[i]);
    const Var radii = softplus(gather_rows(raw, std::move(ids)));
    const Var d = g.constant(Tensor({distances.size(), 1}, distances));
    return mean_all(abs(sub(d, radii)));
}

inline double boundary_loss(const Tensor& reps, std::span<const int> labels,
                            const std::vector<std::vector<double>>& centroids, std::span<const double> raw_radii) {
    Graph g(false);
    Tensor raw({raw_radii.size(), 1}, std::vector<double>(raw_radii.begin(), raw_radii.end()));
    return boundary_loss(g, centroid_distances(reps, labels, centroids), labels, g.constant(std::move(raw))).value()[0];
}

struct BoundaryTrace {
    std::vector<double> losses;                 // loss before each update
    std::vector<std::vector<double>> radii;     // radii after each update
};

/// Fixes centroids, then fits the raw radii with full-batch Adam.
inline BoundarySet learn_boundaries(const Tensor& reps, std::span<const int> labels, std::size_t num_classes,
                                    const AdbConfig& cfg = {}, BoundaryTrace* trace = nullptr) {
    BoundarySet set;
    set.centroids = compute_centroids(reps, labels, num_classes);
    const std::vector<double> distances = centroid_distances(reps, labels, set.centroids);
    Parameter raw("adb.raw_radius", Tensor({num_classes, 1}, cfg.initial_raw_radius));
    Adam adam;
    Parameter* params[] = {&raw};
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        raw.zero_grad();
        Graph g(true);
        const Var loss = boundary_loss(g, distances, labels, g.parameter(raw));
        const double value = loss.value()[0];
        if (!std::isfinite(value)) throw NumericError("boundary loss diverged at epoch " + std::to_string(epoch));
        g.backward(loss);
        adam.step(params, cfg.learning_rate);
        if (trace) {
            trace->losses.push_back(value);
            std::vector<double> r(num_classes);
            for (std::size_t k = 0; k < num_classes; ++k) r[k] = detail::softplus(raw.value[k]);
            trace->radii.push_back(std::move(r));
        }
    }
    set.raw_radii.assign(raw.value.data().begin(), raw.value.data().end());
    return set;
}

/// Nearest centroid (lowest id on ties), accepted only inside its radius;
/// otherwise the open label K.
inline int predict_open(std::span<const double> rep, const BoundarySet& boundaries) {
    if (boundaries.num_classes() == 0) throw DataError("no boundaries");
    std::size_t best = 0;
    double best_d = euclidean(rep, boundaries.centroids[0]);
    for (std::size_t k = 1; k < boundaries.num_classes(); ++k) {
        const double d = euclidean(rep, boundaries.centroids[k]);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best_d <= boundaries.radius(best) ? static_cast<int>(best) : boundaries.open_label();
}

// ---------------------------------------------------------------------------
// Files
//
// Representation dump:   <id>\t<gold label>\t<f1> <f2> ...
// Boundaries:            <class id>\t<c1> <c2> ...\t<radius>\t<raw radius>
// ---------------------------------------------------------------------------

inline void write_representations(const std::string& path, const std::vector<IntentRepresentation>& reps) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& r : reps) {
        out << r.id << '\t' << r.label << '\t';
        for (std::size_t j = 0; j < r.features.size(); ++j) out << (j ? " " : "") << format_double(r.features[j]);
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

namespace detail {

inline std::vector<double> parse_doubles(const std::string& field, const std::string& where) {
    std::vector<double> out;
    std::istringstream in(field);
    std::string tok;
    while (in >> tok) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size()) throw ParseError(where + ": bad number '" + tok + "'");
        out.push_back(v);
    }
    return out;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

}  // namespace detail

inline std::vector<IntentRepresentation> read_representations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<IntentRepresentation> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string where = path + ":" + std::to_string(n);
        const auto fields = detail::split_tabs(line);
        if (fields.size() != 3) throw ParseError(where + ": expected id, label and features");
        IntentRepresentation r;
        r.id = fields[0];
        try {
            r.label = std::stoi(fields[1]);
        } catch (const std::exception&) {
            throw ParseError(where + ": bad label");
        }
        r.features = detail::parse_doubles(fields[2], where);
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_boundaries(const std::string& path, const BoundarySet& set) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (std::size_t k = 0; k < set.num_classes(); ++k) {
        out << k << '\t';
        for (std::size_t j = 0; j < set.centroids[k].size(); ++j) {
            out << (j ? " " : "") << format_double(set.centroids[k][j]);
        }
        out << '\t' << format_double(set.radius(k)) << '\t' << format_double(set.raw_radii[k]) << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

inline BoundarySet read_boundaries(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    BoundarySet set;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string where = path + ":" + std::to_string(n);
        const auto fields = detail::split_tabs(line);
        if (fields.size() != 4) throw ParseError(where + ": expected class id, centroid, radius, raw radius");
        if (fields[0] != std::to_string(n - 1)) throw ParseError(where + ": class ids must run 0..K-1 in order");
        set.centroids.push_back(detail::parse_doubles(fields[1], where));
        const auto raw = detail::parse_doubles(fields[3], where);
        if (raw.size() != 1) throw ParseError(where + ": bad raw radius");
        set.raw_radii.push_back(raw[0]);
    }
    return set;
}

}  // namespace pftadb

#endif  // PFTADB_ADB_HPP
