#include "focal/tensor.hpp"

#include <numeric>
#include <sstream>

namespace focal {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_extents(const Shape& shape) {
    for (std::size_t e : shape) {
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad) {
    check_extents(shape);
    auto node = std::make_shared<detail::Node<T>>();
    node->value.assign(shape_numel(shape), T(0));
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    if (requires_grad) node->ensure_grad();
    node_ = std::move(node);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
    check_extents(shape);
    if (values.size() != shape_numel(shape)) {
        throw DimensionError("tensor of shape " + shape_str(shape) + " given " + std::to_string(values.size()) +
                             " elements");
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    if (requires_grad) node->ensure_grad();
    node_ = std::move(node);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
    if (!node_) throw UsageError("use of an undefined tensor");
    return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
    return shape_numel(shape());
}

template <typename T>
std::span<T> Tensor<T>::data() {
    shape();
    return node_->value;
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
    shape();
    return node_->value;
}

template <typename T>
std::span<T> Tensor<T>::grad() {
    if (!requires_grad()) throw UsageError("tensor does not require grad");
    node_->ensure_grad();
    return node_->grad;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
    if (!requires_grad()) throw UsageError("tensor does not require grad");
    node_->ensure_grad();
    return node_->grad;
}

template <typename T>
bool Tensor<T>::requires_grad() const {
    return node_ && node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
    shape();
    node_->requires_grad = on;
    if (on) {
        node_->ensure_grad();
    } else {
        node_->grad.clear();
    }
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (requires_grad()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    Tensor out(shape(), node_->value, node_->requires_grad);
    if (node_->requires_grad && node_->grad.size() == node_->value.size()) out.node_->grad = node_->grad;
    return out;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(shape(), node_->value, false);
}

template <typename T>
Tensor<T> Graph<T>::make(Shape shape, std::vector<T> values, std::initializer_list<const Tensor<T>*> parents,
                         BackwardFn backward) {
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->leaf = false;
    bool any = false;
    if (recording_) {
        for (const Tensor<T>* p : parents) any = any || p->requires_grad();
    }
    if (any) {
        node->requires_grad = true;
        node->backward = std::move(backward);
        nodes_.push_back(node);
    }
    return Tensor<T>(std::move(node));
}

template <typename T>
void Graph<T>::backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw UsageError("backward() needs a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "undefined"));
    }
    if (!loss.requires_grad()) throw UsageError("backward() on a loss that does not depend on any parameter");
    for (auto& n : nodes_) n->grad.clear();
    auto& root = loss.node();
    root->ensure_grad();
    root->grad[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        detail::Node<T>& n = **it;
        if (n.grad.empty() || !n.backward) continue;
        n.backward(n);
    }
}

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace focal
