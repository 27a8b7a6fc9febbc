#ifndef PFTADB_TENSOR_HPP
#define PFTADB_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pftadb/error.hpp"

namespace pftadb {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "x" : "") << shape[i];
    }
    out << ']';
    return out.str();
}

/// Dense row-major tensor of doubles.
///
/// Most of the library works with rank-2 tensors. A rank-1 tensor of length n
/// behaves as a 1 x n row wherever a matrix view is needed (rows()/cols()).
/// Zero extents are allowed so that an empty prefix (0 x d) is representable.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_)) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor({rows, cols}, fill);
    }

    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw DimensionError("ragged matrix literal");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(data));
    }

    static Tensor vector(std::initializer_list<double> values) {
        return Tensor({values.size()}, std::vector<double>(values));
    }

    static Tensor vector(std::span<const double> values) {
        return Tensor({values.size()}, std::vector<double>(values.begin(), values.end()));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t rows() const noexcept {
        if (shape_.size() == 2) return shape_[0];
        return shape_.empty() ? 0 : 1;
    }
    std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size()) {
            throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    /// Largest absolute entrywise difference; shapes must match.
    double max_abs_diff(const Tensor& other) const {
        if (other.shape_ != shape_) {
            throw DimensionError("shape mismatch " + shape_string(shape_) + " vs " + shape_string(other.shape_));
        }
        double worst = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i) {
            worst = std::max(worst, std::abs(data_[i] - other.data_[i]));
        }
        return worst;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Trainable (or frozen) model weight with its accumulated gradient.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor gradient;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor v, bool train = true)
        : name(std::move(n)), value(std::move(v)), gradient(value.shape()), trainable(train) {}

    void zero_grad() {
        if (gradient.shape() != value.shape()) {
            gradient = Tensor(value.shape());
        } else {
            gradient.fill(0.0);
        }
    }
};

}  // namespace pftadb

#endif  // PFTADB_TENSOR_HPP
