#ifndef PFTADB_AUTODIFF_HPP
#define PFTADB_AUTODIFF_HPP

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <utility>

#include "pftadb/error.hpp"
#include "pftadb/tensor.hpp"

namespace pftadb {

class Graph;

/// Handle to a value recorded on a Graph.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    bool requires_grad() const;
    std::size_t id() const noexcept { return id_; }
    Graph* graph() const noexcept { return graph_; }
    bool valid() const noexcept { return graph_ != nullptr; }

private:
    friend class Graph;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode tape.
///
/// Every op appends a node holding its forward value and a closure that pushes
/// the node's output gradient to its inputs. Nodes live in a deque, so values
/// stay put while the tape grows. A graph built with record=false evaluates
/// forward only: parameters bind as constants and no closures are kept.
class Graph {
public:
    using Backward = std::function<void(Graph&, const Tensor& grad_out)>;

    explicit Graph(bool record = true) : record_(record) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const noexcept { return record_; }

    Var constant(Tensor value) {
        check_finite(value, "constant");
        nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
        return Var(this, nodes_.size() - 1);
    }

    /// Binds a parameter. Repeated binds of the same parameter share one leaf.
    Var parameter(Parameter& p) {
        if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
        const bool grad = record_ && p.trainable;
        nodes_.push_back(Node{p.value, {}, {}, grad ? &p : nullptr, grad});
        bound_.emplace(&p, nodes_.size() - 1);
        return Var(this, nodes_.size() - 1);
    }

    /// Appends the result of an op. `backward` runs only if some input needs a gradient.
    Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward, const char* op = "op") {
        bool grad = false;
        for (const Var& in : inputs) grad = grad || in.requires_grad();
        return record_impl(std::move(value), grad, std::move(backward), op);
    }

    template <typename Range>
    Var record_range(Tensor value, const Range& inputs, Backward backward, const char* op = "op") {
        bool grad = false;
        for (const Var& in : inputs) grad = grad || in.requires_grad();
        return record_impl(std::move(value), grad, std::move(backward), op);
    }

    const Tensor& value(Var v) const { return nodes_[v.id_].value; }
    bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }

    /// Gradient buffer for `v`, allocated on first use; null if `v` needs no gradient.
    Tensor* grad_target(Var v) {
        Node& node = nodes_[v.id_];
        if (!node.requires_grad) return nullptr;
        if (node.grad.shape() != node.value.shape()) node.grad = Tensor(node.value.shape());
        return &node.grad;
    }

    /// Runs reverse accumulation from a scalar output and adds the results
    /// into Parameter::gradient of every bound trainable parameter.
    void backward(Var output) {
        if (!record_) throw ConfigError("backward on a graph built without recording");
        Node& out = nodes_[output.id_];
        if (out.value.size() != 1) {
            throw DimensionError("backward needs a scalar output, got " + shape_string(out.value.shape()));
        }
        if (!out.requires_grad) return;
        grad_target(output)->fill(1.0);
        for (std::size_t i = output.id_ + 1; i-- > 0;) {
            Node& node = nodes_[i];
            if (!node.requires_grad || node.grad.empty()) continue;
            if (node.backward) {
                node.backward(*this, node.grad);
            } else if (node.param != nullptr) {
                Parameter& p = *node.param;
                if (p.gradient.shape() != p.value.shape()) p.gradient = Tensor(p.value.shape());
                auto dst = p.gradient.data();
                auto src = node.grad.data();
                for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
            }
        }
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        Backward backward;
        Parameter* param;
        bool requires_grad;
    };

    static void check_finite(const Tensor& t, const char* op) {
        if (!t.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
    }

    Var record_impl(Tensor value, bool grad, Backward backward, const char* op) {
        check_finite(value, op);
        grad = grad && record_;
        nodes_.push_back(Node{std::move(value), {}, grad ? std::move(backward) : Backward{}, nullptr, grad});
        return Var(this, nodes_.size() - 1);
    }

    bool record_;
    std::deque<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> bound_;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }
inline bool Var::requires_grad() const { return graph_->requires_grad(*this); }

}  // namespace pftadb

#endif  // PFTADB_AUTODIFF_HPP
