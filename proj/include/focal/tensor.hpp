#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "focal/error.hpp"

namespace focal {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Graph;

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // lazily sized for intermediates, eager for leaves
    bool requires_grad = false;
    bool leaf = true;
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

}  // namespace detail

/// Dense row-major array with an optional gradient slot.
///
/// Tensor is a handle: copies share the same storage, the way an autodiff
/// variable must so that parameters can be referenced from several graph
/// nodes. Use clone() for an independent deep copy.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<T> data();
    std::span<const T> data() const;
    /// Throws UsageError when the tensor does not track gradients.
    std::span<T> grad();
    std::span<const T> grad() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    void zero_grad();

    /// Value of a one-element tensor.
    T item() const;
    T at(std::size_t flat_index) const { return data()[flat_index]; }

    Tensor clone() const;
    /// Same values, no gradient tracking, fresh storage.
    Tensor detach() const;

    const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

    std::shared_ptr<detail::Node<T>> node_;

    friend class Graph<T>;
};

/// Record of the operations executed in one forward pass. Nodes are kept in
/// execution order, so walking the record backwards visits every node after
/// all of its consumers.
///
/// A graph built with recording == false creates plain values and keeps no
/// history (evaluation mode).
template <typename T>
class Graph {
public:
    using NodePtr = std::shared_ptr<detail::Node<T>>;
    using BackwardFn = std::function<void(detail::Node<T>&)>;

    explicit Graph(bool recording = true) : recording_(recording) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const noexcept { return recording_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Creates an operation output. `backward` is invoked with the output node
    /// during the reverse pass; it must only touch parents that require grad.
    /// The closure is dropped when no parent requires grad.
    Tensor<T> make(Shape shape, std::vector<T> values, std::initializer_list<const Tensor<T>*> parents,
                   BackwardFn backward);

    /// Reverse pass from a scalar. Intermediate gradients are reset first, so
    /// repeated calls accumulate into leaves exactly once per call.
    void backward(const Tensor<T>& loss);

    void clear() { nodes_.clear(); }

private:
    bool recording_;
    std::vector<NodePtr> nodes_;
};

}  // namespace focal
