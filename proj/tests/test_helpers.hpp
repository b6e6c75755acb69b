#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "stylepipe/tensor.hpp"

namespace test_helpers {

using stylepipe::real;
using stylepipe::Tensor;

// central finite differences of a scalar functional w.r.t. one parameter
// tensor; perturbs params in place
inline std::vector<real> finite_diff_grad(Tensor& param, const std::function<real()>& f,
                                          real h = real(1e-6)) {
    std::vector<real> g(static_cast<size_t>(param.numel()));
    for (int64_t i = 0; i < param.numel(); ++i) {
        const real keep = param.data()[i];
        param.data()[i] = keep + h;
        const real fp = f();
        param.data()[i] = keep - h;
        const real fm = f();
        param.data()[i] = keep;
        g[static_cast<size_t>(i)] = (fp - fm) / (2 * h);
    }
    return g;
}

inline real rel_err(real got, real want) {
    const real denom = std::max<real>(std::abs(want), real(1e-8));
    return std::abs(got - want) / denom;
}

}  // namespace test_helpers
