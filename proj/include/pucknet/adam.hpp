// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pucknet/tensor.hpp"

namespace pucknet {

// Bias-corrected Adam with coupled L2: the gradient is augmented by
// 2 * l2_lambda * theta before the moment updates.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double l2_lambda = 0.0;
    std::uint64_t t = 0;

    std::vector<Tensor> params;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    AdamState() = default;
    AdamState(std::vector<Tensor> parameters, double lr_, double l2)
        : lr(lr_), l2_lambda(l2), params(std::move(parameters)) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (const Tensor& p : params) {
            m.emplace_back(p.size(), 0.0);
            v.emplace_back(p.size(), 0.0);
        }
    }
};

inline void adam_step(AdamState& state) {
    for (Tensor& p : state.params)
        if (!p.has_grad())
            fail_contract("adam_step on parameter ", shape_str(p.shape()),
                          " with uninitialized grad (no backward pass ran)");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < state.params.size(); ++i) {
        Tensor& p = state.params[i];
        std::vector<double>& mv = state.m[i];
        std::vector<double>& vv = state.v[i];
        double* theta = p.values().data();
        const double* grad = p.grad().data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = grad[j] + 2.0 * state.l2_lambda * theta[j];
            mv[j] = state.beta1 * mv[j] + (1.0 - state.beta1) * g;
            vv[j] = state.beta2 * vv[j] + (1.0 - state.beta2) * g * g;
            const double mhat = mv[j] / bc1;
            const double vhat = vv[j] / bc2;
            theta[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

inline void zero_grads(AdamState& state) {
    for (Tensor& p : state.params) p.zero_grad();
}

} // namespace pucknet
