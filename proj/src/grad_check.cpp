#include "focal/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace focal {

namespace {

template <typename T>
double evaluate(const ScalarFn<T>& f) {
    Graph<T> g(false);
    return static_cast<double>(f(g).item());
}

}  // namespace

template <typename T>
GradCheckResult grad_check(const ScalarFn<T>& f, std::vector<std::pair<Tensor<T>, std::size_t>> coords, double h) {
    for (auto& [tensor, idx] : coords) {
        if (!tensor.requires_grad()) throw UsageError("grad_check: tensor does not require grad");
        if (idx >= tensor.numel()) throw UsageError("grad_check: index out of range");
        tensor.zero_grad();
    }
    // Analytic gradients for every distinct tensor in one reverse pass.
    {
        Graph<T> g(true);
        g.backward(f(g));
    }
    std::vector<double> analytic;
    analytic.reserve(coords.size());
    for (auto& [tensor, idx] : coords) analytic.push_back(static_cast<double>(tensor.grad()[idx]));

    GradCheckResult result;
    for (std::size_t c = 0; c < coords.size(); ++c) {
        auto& [tensor, idx] = coords[c];
        T& slot = tensor.data()[idx];
        const T saved = slot;
        auto at = [&](double offset) {
            slot = static_cast<T>(static_cast<double>(saved) + offset);
            return evaluate(f);
        };
        // Five-point central stencil: O(h^4) truncation, so h can be large
        // enough to keep round-off small on tiny gradients. Differencing
        // symmetric pairs first keeps a flat direction exactly zero.
        const double near = at(h) - at(-h);
        const double far = at(2 * h) - at(-2 * h);
        const double numeric = (8.0 * near - far) / (12.0 * h);
        slot = saved;
        const double a = analytic[c];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        if (c == 0 || rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_index = c;
            result.analytic = a;
            result.numeric = numeric;
        }
        ++result.checked;
    }
    return result;
}

template <typename T>
GradCheckResult grad_check(const ScalarFn<T>& f, Tensor<T>& x, double h) {
    std::vector<std::pair<Tensor<T>, std::size_t>> coords;
    coords.reserve(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) coords.emplace_back(x, i);
    return grad_check(f, std::move(coords), h);
}

template GradCheckResult grad_check<float>(const ScalarFn<float>&, Tensor<float>&, double);
template GradCheckResult grad_check<double>(const ScalarFn<double>&, Tensor<double>&, double);
template GradCheckResult grad_check<float>(const ScalarFn<float>&, std::vector<std::pair<Tensor<float>, std::size_t>>,
                                           double);
template GradCheckResult grad_check<double>(const ScalarFn<double>&,
                                            std::vector<std::pair<Tensor<double>, std::size_t>>, double);

}  // namespace focal
