#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "focal/tensor.hpp"

namespace focal {

/// Scalar-valued function of the current parameter values, built on the given graph.
template <typename T>
using ScalarFn = std::function<Tensor<T>(Graph<T>&)>;

struct GradCheckResult {
    double max_rel_error = 0;
    std::size_t worst_index = 0;
    double analytic = 0;   // at the worst element
    double numeric = 0;
    std::size_t checked = 0;
};

/// Central-difference check (five-point stencil) of d f / d x for every
/// element of `x`.
/// Relative error per element: |a - n| / max(|a|, |n|, 1e-8).
template <typename T>
GradCheckResult grad_check(const ScalarFn<T>& f, Tensor<T>& x, double h = 1e-5);

/// Same, restricted to chosen (tensor, flat index) coordinates; used to sample
/// a fraction of a model's parameters. All listed tensors must require grad.
template <typename T>
GradCheckResult grad_check(const ScalarFn<T>& f, std::vector<std::pair<Tensor<T>, std::size_t>> coords,
                           double h = 1e-5);

}  // namespace focal
