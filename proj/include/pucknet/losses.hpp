// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "pucknet/ops.hpp"

namespace pucknet {

inline double sigmoid(double l) {
    if (l >= 0.0) return 1.0 / (1.0 + std::exp(-l));
    const double e = std::exp(l);
    return e / (1.0 + e);
}

// Mean binary cross-entropy on raw logits, computed in the log-sum-exp form
// so it stays finite for logits far into the saturated range.
// Per sample: max(l,0) - l*c + log1p(exp(-|l|)).
inline Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& labels) {
    const std::size_t n = logits.size();
    if (n == 0) fail_contract("bce_with_logits on empty batch");
    if (labels.size() != n)
        fail_contract("bce_with_logits: ", n, " logits vs ", labels.size(), " labels");
    for (double c : labels)
        if (c != 0.0 && c != 1.0) fail_contract("bce_with_logits label must be 0 or 1, got ", c);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double l = logits.values()[i], c = labels[i];
        acc += std::max(l, 0.0) - l * c + std::log1p(std::exp(-std::abs(l)));
    }
    const double mean = acc / static_cast<double>(n);
    Tensor lc = logits;
    return detail::make_op_output("bce_with_logits", {1}, {mean}, {logits},
                                  [lc, labels, n](const detail::TensorData& o) mutable {
                                      if (!lc.requires_grad()) return;
                                      const double g = o.grad[0] / static_cast<double>(n);
                                      double* dl = lc.grad().data();
                                      for (std::size_t i = 0; i < n; ++i)
                                          dl[i] += g * (sigmoid(lc.values()[i]) - labels[i]);
                                  });
}

inline double huber(double d) {
    const double a = std::abs(d);
    return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

inline double huber_grad(double d) { return d < -1.0 ? -1.0 : (d > 1.0 ? 1.0 : d); }

struct SmoothL1Result {
    std::vector<double> per_sample;
    double mean = 0.0;
};

// Plain (non-differentiable) smooth-L1 over paired coordinate arrays laid out
// as [x0,y0,x1,y1,...]; the two components of a sample are averaged first,
// then samples are averaged.
inline SmoothL1Result smooth_l1(const std::vector<double>& s, const std::vector<double>& y,
                                std::size_t components = 2) {
    if (s.size() != y.size())
        fail_contract("smooth_l1: size mismatch ", s.size(), " vs ", y.size());
    if (components == 0 || s.size() % components)
        fail_contract("smooth_l1: ", s.size(), " values not divisible into ", components,
                      "-component samples");
    SmoothL1Result r;
    const std::size_t n = s.size() / components;
    r.per_sample.resize(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double z = 0.0;
        for (std::size_t k = 0; k < components; ++k) z += huber(s[i * components + k] - y[i * components + k]);
        z /= static_cast<double>(components);
        r.per_sample[i] = z;
        acc += z;
    }
    r.mean = n ? acc / static_cast<double>(n) : 0.0;
    return r;
}

struct LossReport {
    double l_class = 0.0;
    double l_reg = 0.0;
    double total = 0.0;
    std::size_t n = 0;
};

struct CombinedLoss {
    Tensor total; // scalar, differentiable
    LossReport report;
};

// Classification BCE plus label-masked smooth-L1 over predicted coordinates.
// Samples with label 0 are skipped outright in the regression term, so their
// coordinate gradients are exactly zero and perturbing their predictions
// cannot change the loss in any bit.
inline CombinedLoss combined_masked_loss(const Tensor& logits, const std::vector<double>& labels,
                                         const Tensor& coords,
                                         const std::vector<double>& target_coords) {
    const std::size_t n = labels.size();
    if (logits.size() != n)
        fail_contract("combined_masked_loss: ", logits.size(), " logits vs ", n, " labels");
    if (coords.size() != 2 * n || target_coords.size() != 2 * n)
        fail_contract("combined_masked_loss: coords want ", 2 * n, " values, got ", coords.size(),
                      " predicted and ", target_coords.size(), " target");

    Tensor l_class = bce_with_logits(logits, labels);

    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 1.0) continue;
        acc += 0.5 * (huber(coords.values()[2 * i] - target_coords[2 * i]) +
                      huber(coords.values()[2 * i + 1] - target_coords[2 * i + 1]));
    }
    const double reg_mean = acc / static_cast<double>(n);
    Tensor cc = coords;
    Tensor l_reg = detail::make_op_output(
        "masked_smooth_l1", {1}, {reg_mean}, {coords},
        [cc, labels, target_coords, n](const detail::TensorData& o) mutable {
            if (!cc.requires_grad()) return;
            const double g = o.grad[0] / static_cast<double>(n);
            double* dc = cc.grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                if (labels[i] != 1.0) continue;
                dc[2 * i] += g * 0.5 * huber_grad(cc.values()[2 * i] - target_coords[2 * i]);
                dc[2 * i + 1] +=
                    g * 0.5 * huber_grad(cc.values()[2 * i + 1] - target_coords[2 * i + 1]);
            }
        });

    CombinedLoss out;
    out.total = add(l_class, l_reg);
    out.report.l_class = l_class.item();
    out.report.l_reg = l_reg.item();
    out.report.total = out.total.item();
    out.report.n = n;
    return out;
}

} // namespace pucknet
