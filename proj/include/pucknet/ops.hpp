// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "pucknet/tensor.hpp"

namespace pucknet {

enum class NetMode { Train, Eval };

namespace detail {

// ---- GEMM kernels -------------------------------------------------------
// Plain loops in orders the compiler vectorizes well; every output element is
// accumulated in one fixed order, so results are bit-reproducible.

// C(MxN) += A(MxK) * B(KxN)
inline void gemm_acc(std::size_t M, std::size_t K, std::size_t N, const double* A,
                     const double* B, double* C) {
    for (std::size_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        double* c = C + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const double av = a[k];
            const double* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C(MxN) += A(MxK) * B(NxK)^T
inline void gemm_abt_acc(std::size_t M, std::size_t K, std::size_t N, const double* A,
                         const double* B, double* C) {
    for (std::size_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        for (std::size_t j = 0; j < N; ++j) {
            const double* b = B + j * K;
            double acc = 0.0;
            for (std::size_t k = 0; k < K; ++k) acc += a[k] * b[k];
            C[i * N + j] += acc;
        }
    }
}

// C(MxN) += A(KxM)^T * B(KxN)
inline void gemm_atb_acc(std::size_t M, std::size_t K, std::size_t N, const double* A,
                         const double* B, double* C) {
    for (std::size_t k = 0; k < K; ++k) {
        const double* a = A + k * M;
        const double* b = B + k * N;
        for (std::size_t i = 0; i < M; ++i) {
            const double av = a[i];
            double* c = C + i * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// ---- conv geometry -------------------------------------------------------

struct ConvGeom {
    std::size_t C, H, W;      // input feature map (one image)
    std::size_t k, stride, pad;
    std::size_t Ho, Wo;       // output spatial dims

    static ConvGeom make(std::size_t C, std::size_t H, std::size_t W, std::size_t k,
                         std::size_t stride, std::size_t pad) {
        ConvGeom g{C, H, W, k, stride, pad, 0, 0};
        if (H + 2 * pad < k || W + 2 * pad < k)
            fail_contract("conv kernel ", k, " larger than padded input ", H + 2 * pad, "x",
                          W + 2 * pad);
        g.Ho = (H + 2 * pad - k) / stride + 1;
        g.Wo = (W + 2 * pad - k) / stride + 1;
        return g;
    }
    std::size_t rows() const { return C * k * k; }
    std::size_t cols() const { return Ho * Wo; }
};

// col(C*k*k x Ho*Wo) <- patches of x(CxHxW); out-of-bounds reads are zero.
inline void im2col(const ConvGeom& g, const double* x, double* col) {
    const std::size_t L = g.cols();
    for (std::size_t c = 0; c < g.C; ++c) {
        const double* xc = x + c * g.H * g.W;
        for (std::size_t kh = 0; kh < g.k; ++kh) {
            for (std::size_t kw = 0; kw < g.k; ++kw) {
                double* row = col + ((c * g.k + kh) * g.k + kw) * L;
                for (std::size_t oh = 0; oh < g.Ho; ++oh) {
                    const long ih = static_cast<long>(oh * g.stride + kh) - static_cast<long>(g.pad);
                    double* dst = row + oh * g.Wo;
                    if (ih < 0 || ih >= static_cast<long>(g.H)) {
                        std::fill(dst, dst + g.Wo, 0.0);
                        continue;
                    }
                    const double* src = xc + static_cast<std::size_t>(ih) * g.W;
                    for (std::size_t ow = 0; ow < g.Wo; ++ow) {
                        const long iw =
                            static_cast<long>(ow * g.stride + kw) - static_cast<long>(g.pad);
                        dst[ow] = (iw < 0 || iw >= static_cast<long>(g.W))
                                      ? 0.0
                                      : src[static_cast<std::size_t>(iw)];
                    }
                }
            }
        }
    }
}

// Scatter-add inverse of im2col: x(CxHxW) += patches(col).
inline void col2im_acc(const ConvGeom& g, const double* col, double* x) {
    const std::size_t L = g.cols();
    for (std::size_t c = 0; c < g.C; ++c) {
        double* xc = x + c * g.H * g.W;
        for (std::size_t kh = 0; kh < g.k; ++kh) {
            for (std::size_t kw = 0; kw < g.k; ++kw) {
                const double* row = col + ((c * g.k + kh) * g.k + kw) * L;
                for (std::size_t oh = 0; oh < g.Ho; ++oh) {
                    const long ih = static_cast<long>(oh * g.stride + kh) - static_cast<long>(g.pad);
                    if (ih < 0 || ih >= static_cast<long>(g.H)) continue;
                    double* dst = xc + static_cast<std::size_t>(ih) * g.W;
                    const double* src = row + oh * g.Wo;
                    for (std::size_t ow = 0; ow < g.Wo; ++ow) {
                        const long iw =
                            static_cast<long>(ow * g.stride + kw) - static_cast<long>(g.pad);
                        if (iw >= 0 && iw < static_cast<long>(g.W))
                            dst[static_cast<std::size_t>(iw)] += src[ow];
                    }
                }
            }
        }
    }
}

inline void check_4d(const Tensor& t, const char* what) {
    if (t.shape().size() != 4) fail_contract(what, " must be 4-d, got ", shape_str(t.shape()));
}

} // namespace detail

// ---- conv2d ---------------------------------------------------------------
// x: N x Cin x H x W, w: Cout x Cin x k x k, b: Cout.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride = 1,
                     std::size_t pad = 0) {
    detail::check_4d(x, "conv2d input");
    detail::check_4d(w, "conv2d weight");
    const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Cout = w.dim(0), k = w.dim(2);
    if (stride < 1) fail_contract("conv2d stride must be >= 1, got ", stride);
    if (k < 1) fail_contract("conv2d kernel must be >= 1");
    if (w.dim(1) != Cin)
        fail_contract("conv2d channel mismatch: input has Cin=", Cin, ", weight wants Cin=",
                      w.dim(1), " (weight ", shape_str(w.shape()), ", input ",
                      shape_str(x.shape()), ")");
    if (w.dim(3) != k) fail_contract("conv2d kernel must be square, got ", shape_str(w.shape()));
    if (b.shape() != Shape{Cout})
        fail_contract("conv2d bias must be [", Cout, "], got ", shape_str(b.shape()));

    const auto g = detail::ConvGeom::make(Cin, H, W, k, stride, pad);
    const std::size_t L = g.cols(), CK = g.rows();
    std::vector<double> out(N * Cout * L);
    std::vector<double> col(CK * L);
    for (std::size_t n = 0; n < N; ++n) {
        detail::im2col(g, x.values().data() + n * Cin * H * W, col.data());
        double* y = out.data() + n * Cout * L;
        for (std::size_t o = 0; o < Cout; ++o)
            std::fill(y + o * L, y + (o + 1) * L, b.values()[o]);
        detail::gemm_acc(Cout, CK, L, w.values().data(), col.data(), y);
    }

    Tensor xc = x, wc = w, bc = b;
    return detail::make_op_output(
        "conv2d", {N, Cout, g.Ho, g.Wo}, std::move(out), {x, w, b},
        [xc, wc, bc, g, stride, pad](const detail::TensorData& o) mutable {
            const std::size_t N = xc.dim(0), Cin = xc.dim(1), H = xc.dim(2), W = xc.dim(3);
            const std::size_t Cout = wc.dim(0);
            const std::size_t L = g.cols(), CK = g.rows();
            std::vector<double> col(CK * L);
            std::vector<double> dcol;
            if (xc.requires_grad()) dcol.resize(CK * L);
            for (std::size_t n = 0; n < N; ++n) {
                const double* dy = o.grad.data() + n * Cout * L;
                if (bc.requires_grad()) {
                    double* db = bc.grad().data();
                    for (std::size_t oc = 0; oc < Cout; ++oc) {
                        double acc = 0.0;
                        const double* r = dy + oc * L;
                        for (std::size_t j = 0; j < L; ++j) acc += r[j];
                        db[oc] += acc;
                    }
                }
                if (wc.requires_grad()) {
                    detail::im2col(g, xc.values().data() + n * Cin * H * W, col.data());
                    detail::gemm_abt_acc(Cout, L, CK, dy, col.data(), wc.grad().data());
                }
                if (xc.requires_grad()) {
                    std::fill(dcol.begin(), dcol.end(), 0.0);
                    detail::gemm_atb_acc(CK, Cout, L, wc.values().data(), dy, dcol.data());
                    detail::col2im_acc(g, dcol.data(), xc.grad().data() + n * Cin * H * W);
                }
            }
        });
}

// ---- conv_transpose2d -------------------------------------------------------
// x: N x Cin x H x W, w: Cin x Cout x k x k, b: Cout.
// Forward equals the input-gradient of conv2d(. , w, stride, pad) whose output
// spatial dims are (H, W); hence H' = (H-1)*stride - 2*pad + k.
inline Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b,
                               std::size_t stride = 1, std::size_t pad = 0) {
    detail::check_4d(x, "conv_transpose2d input");
    detail::check_4d(w, "conv_transpose2d weight");
    const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Cout = w.dim(1), k = w.dim(2);
    if (stride < 1) fail_contract("conv_transpose2d stride must be >= 1, got ", stride);
    if (w.dim(0) != Cin)
        fail_contract("conv_transpose2d channel mismatch: input Cin=", Cin, ", weight wants ",
                      w.dim(0), " (weight ", shape_str(w.shape()), ")");
    if (b.shape() != Shape{Cout})
        fail_contract("conv_transpose2d bias must be [", Cout, "], got ", shape_str(b.shape()));
    const std::size_t Hs = (H - 1) * stride + k, Ws = (W - 1) * stride + k;
    if (Hs < 2 * pad + 1 || Ws < 2 * pad + 1)
        fail_contract("conv_transpose2d padding ", pad, " too large for input ", H, "x", W);
    const std::size_t Ho = Hs - 2 * pad, Wo = Ws - 2 * pad;

    // Geometry of the matching forward conv: (Ho,Wo) -> (H,W).
    const auto g = detail::ConvGeom::make(Cout, Ho, Wo, k, stride, pad);
    const std::size_t L = g.cols(), CK = g.rows(); // L == H*W, CK == Cout*k*k
    std::vector<double> out(N * Cout * Ho * Wo, 0.0);
    std::vector<double> col(CK * L);
    for (std::size_t n = 0; n < N; ++n) {
        std::fill(col.begin(), col.end(), 0.0);
        detail::gemm_atb_acc(CK, Cin, L, w.values().data(), x.values().data() + n * Cin * L,
                             col.data());
        double* y = out.data() + n * Cout * Ho * Wo;
        detail::col2im_acc(g, col.data(), y);
        for (std::size_t oc = 0; oc < Cout; ++oc) {
            double* yc = y + oc * Ho * Wo;
            const double bv = b.values()[oc];
            for (std::size_t j = 0; j < Ho * Wo; ++j) yc[j] += bv;
        }
    }

    Tensor xc = x, wc = w, bc = b;
    return detail::make_op_output(
        "conv_transpose2d", {N, Cout, Ho, Wo}, std::move(out), {x, w, b},
        [xc, wc, bc, g](const detail::TensorData& o) mutable {
            const std::size_t N = xc.dim(0), Cin = xc.dim(1);
            const std::size_t Cout = g.C, Ho = g.H, Wo = g.W;
            const std::size_t L = g.cols(), CK = g.rows();
            std::vector<double> coldy(CK * L);
            for (std::size_t n = 0; n < N; ++n) {
                const double* dy = o.grad.data() + n * Cout * Ho * Wo;
                if (bc.requires_grad()) {
                    double* db = bc.grad().data();
                    for (std::size_t oc = 0; oc < Cout; ++oc) {
                        double acc = 0.0;
                        const double* r = dy + oc * Ho * Wo;
                        for (std::size_t j = 0; j < Ho * Wo; ++j) acc += r[j];
                        db[oc] += acc;
                    }
                }
                detail::im2col(g, dy, coldy.data());
                if (xc.requires_grad())
                    detail::gemm_acc(Cin, CK, L, wc.values().data(), coldy.data(),
                                     xc.grad().data() + n * Cin * L);
                if (wc.requires_grad())
                    detail::gemm_abt_acc(Cin, L, CK, xc.values().data() + n * Cin * L,
                                         coldy.data(), wc.grad().data());
            }
        });
}

// ---- batch_norm2d -----------------------------------------------------------

struct RunningStats {
    std::vector<double> mean;
    std::vector<double> var;

    explicit RunningStats(std::size_t channels = 0)
        : mean(channels, 0.0), var(channels, 1.0) {}
};

// Train mode normalizes each channel over batch and spatial dims with biased
// variance and updates `running` in place (unbiased variance, standard
// convention); eval mode uses the running stats only.
inline Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                           double momentum, NetMode mode, RunningStats& running) {
    detail::check_4d(x, "batch_norm2d input");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
        fail_contract("batch_norm2d gamma/beta must be [", C, "], got ", shape_str(gamma.shape()),
                      " and ", shape_str(beta.shape()));
    if (running.mean.size() != C || running.var.size() != C)
        fail_contract("batch_norm2d running stats sized ", running.mean.size(), ", want ", C);

    const std::size_t spatial = H * W;
    const std::size_t count = N * spatial;
    std::vector<double> mu(C), invstd(C);
    if (mode == NetMode::Train) {
        if (count < 2)
            fail_contract("batch_norm2d train mode needs >= 2 elements per channel, got ", count,
                          " (degenerate variance)");
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* p = x.values().data() + (n * C + c) * spatial;
                for (std::size_t j = 0; j < spatial; ++j) s += p[j];
            }
            const double m = s / static_cast<double>(count);
            double v = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* p = x.values().data() + (n * C + c) * spatial;
                for (std::size_t j = 0; j < spatial; ++j) {
                    const double d = p[j] - m;
                    v += d * d;
                }
            }
            v /= static_cast<double>(count);
            mu[c] = m;
            invstd[c] = 1.0 / std::sqrt(v + eps);
            const double unbiased = v * static_cast<double>(count) / static_cast<double>(count - 1);
            running.mean[c] = (1.0 - momentum) * running.mean[c] + momentum * m;
            running.var[c] = (1.0 - momentum) * running.var[c] + momentum * unbiased;
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            mu[c] = running.mean[c];
            invstd[c] = 1.0 / std::sqrt(running.var[c] + eps);
        }
    }

    std::vector<double> out(x.size());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const double* p = x.values().data() + (n * C + c) * spatial;
            double* q = out.data() + (n * C + c) * spatial;
            const double m = mu[c], is = invstd[c];
            const double gm = gamma.values()[c], bt = beta.values()[c];
            for (std::size_t j = 0; j < spatial; ++j) q[j] = (p[j] - m) * is * gm + bt;
        }

    Tensor xc = x, gc = gamma, bc = beta;
    const bool train = mode == NetMode::Train;
    return detail::make_op_output(
        "batch_norm2d", x.shape(), std::move(out), {x, gamma, beta},
        [xc, gc, bc, mu, invstd, train](const detail::TensorData& o) mutable {
            const std::size_t N = xc.dim(0), C = xc.dim(1), spatial = xc.dim(2) * xc.dim(3);
            const double cnt = static_cast<double>(N * spatial);
            for (std::size_t c = 0; c < C; ++c) {
                const double m = mu[c], is = invstd[c], gm = gc.values()[c];
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t n = 0; n < N; ++n) {
                    const double* dy = o.grad.data() + (n * C + c) * spatial;
                    const double* xv = xc.values().data() + (n * C + c) * spatial;
                    for (std::size_t j = 0; j < spatial; ++j) {
                        sum_dy += dy[j];
                        sum_dy_xhat += dy[j] * (xv[j] - m) * is;
                    }
                }
                if (gc.requires_grad()) gc.grad()[c] += sum_dy_xhat;
                if (bc.requires_grad()) bc.grad()[c] += sum_dy;
                if (!xc.requires_grad()) continue;
                if (train) {
                    const double mean_dy = sum_dy / cnt, mean_dy_xhat = sum_dy_xhat / cnt;
                    for (std::size_t n = 0; n < N; ++n) {
                        const double* dy = o.grad.data() + (n * C + c) * spatial;
                        const double* xv = xc.values().data() + (n * C + c) * spatial;
                        double* dx = xc.grad().data() + (n * C + c) * spatial;
                        for (std::size_t j = 0; j < spatial; ++j) {
                            const double xhat = (xv[j] - m) * is;
                            dx[j] += gm * is * (dy[j] - mean_dy - xhat * mean_dy_xhat);
                        }
                    }
                } else {
                    for (std::size_t n = 0; n < N; ++n) {
                        const double* dy = o.grad.data() + (n * C + c) * spatial;
                        double* dx = xc.grad().data() + (n * C + c) * spatial;
                        for (std::size_t j = 0; j < spatial; ++j) dx[j] += gm * is * dy[j];
                    }
                }
            }
        });
}

// ---- elementwise / reduction ops -------------------------------------------

inline Tensor relu(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
    Tensor xc = x;
    return detail::make_op_output("relu", x.shape(), std::move(out), {x},
                                  [xc](const detail::TensorData& o) mutable {
                                      if (!xc.requires_grad()) return;
                                      double* dx = xc.grad().data();
                                      for (std::size_t i = 0; i < o.grad.size(); ++i)
                                          if (xc.values()[i] > 0.0) dx[i] += o.grad[i];
                                  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        fail_contract("add shape mismatch: ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    Tensor ac = a, bc = b;
    return detail::make_op_output("add", a.shape(), std::move(out), {a, b},
                                  [ac, bc](const detail::TensorData& o) mutable {
                                      if (ac.requires_grad()) {
                                          double* g = ac.grad().data();
                                          for (std::size_t i = 0; i < o.grad.size(); ++i)
                                              g[i] += o.grad[i];
                                      }
                                      if (bc.requires_grad()) {
                                          double* g = bc.grad().data();
                                          for (std::size_t i = 0; i < o.grad.size(); ++i)
                                              g[i] += o.grad[i];
                                      }
                                  });
}

// 2x2 stride-2 mean pooling; spatial dims must be even.
inline Tensor avg_pool2x2(const Tensor& x) {
    detail::check_4d(x, "avg_pool2x2 input");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 || W % 2)
        fail_contract("avg_pool2x2 needs even spatial dims, got ", H, "x", W);
    const std::size_t Ho = H / 2, Wo = W / 2;
    std::vector<double> out(N * C * Ho * Wo);
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const double* p = x.values().data() + nc * H * W;
        double* q = out.data() + nc * Ho * Wo;
        for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j) {
                const double* r0 = p + (2 * i) * W + 2 * j;
                const double* r1 = r0 + W;
                q[i * Wo + j] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
            }
    }
    Tensor xc = x;
    return detail::make_op_output(
        "avg_pool2x2", {N, C, Ho, Wo}, std::move(out), {x},
        [xc, Ho, Wo, H, W, N, C](const detail::TensorData& o) mutable {
            if (!xc.requires_grad()) return;
            for (std::size_t nc = 0; nc < N * C; ++nc) {
                const double* dy = o.grad.data() + nc * Ho * Wo;
                double* dx = xc.grad().data() + nc * H * W;
                for (std::size_t i = 0; i < Ho; ++i)
                    for (std::size_t j = 0; j < Wo; ++j) {
                        const double g = 0.25 * dy[i * Wo + j];
                        double* r0 = dx + (2 * i) * W + 2 * j;
                        double* r1 = r0 + W;
                        r0[0] += g;
                        r0[1] += g;
                        r1[0] += g;
                        r1[1] += g;
                    }
            }
        });
}

inline Tensor global_avg_pool(const Tensor& x) {
    detail::check_4d(x, "global_avg_pool input");
    const std::size_t N = x.dim(0), C = x.dim(1), spatial = x.dim(2) * x.dim(3);
    std::vector<double> out(N * C);
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const double* p = x.values().data() + nc * spatial;
        double s = 0.0;
        for (std::size_t j = 0; j < spatial; ++j) s += p[j];
        out[nc] = s / static_cast<double>(spatial);
    }
    Tensor xc = x;
    return detail::make_op_output("global_avg_pool", {N, C}, std::move(out), {x},
                                  [xc, spatial](const detail::TensorData& o) mutable {
                                      if (!xc.requires_grad()) return;
                                      const double inv = 1.0 / static_cast<double>(spatial);
                                      double* dx = xc.grad().data();
                                      for (std::size_t nc = 0; nc < o.grad.size(); ++nc) {
                                          const double g = o.grad[nc] * inv;
                                          for (std::size_t j = 0; j < spatial; ++j)
                                              dx[nc * spatial + j] += g;
                                      }
                                  });
}

// x: N x F, w: F x G, b: G.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape().size() != 2 || w.shape().size() != 2)
        fail_contract("linear wants 2-d input and weight, got ", shape_str(x.shape()), " and ",
                      shape_str(w.shape()));
    const std::size_t N = x.dim(0), F = x.dim(1), G = w.dim(1);
    if (w.dim(0) != F)
        fail_contract("linear inner dim mismatch: input F=", F, ", weight ",
                      shape_str(w.shape()));
    if (b.shape() != Shape{G})
        fail_contract("linear bias must be [", G, "], got ", shape_str(b.shape()));
    std::vector<double> out(N * G);
    for (std::size_t n = 0; n < N; ++n)
        std::copy(b.values().begin(), b.values().end(), out.begin() + n * G);
    detail::gemm_acc(N, F, G, x.values().data(), w.values().data(), out.data());
    Tensor xc = x, wc = w, bc = b;
    return detail::make_op_output(
        "linear", {N, G}, std::move(out), {x, w, b},
        [xc, wc, bc, N, F, G](const detail::TensorData& o) mutable {
            if (bc.requires_grad()) {
                double* db = bc.grad().data();
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t g = 0; g < G; ++g) db[g] += o.grad[n * G + g];
            }
            if (wc.requires_grad())
                detail::gemm_atb_acc(F, N, G, xc.values().data(), o.grad.data(),
                                     wc.grad().data());
            if (xc.requires_grad())
                detail::gemm_abt_acc(N, G, F, o.grad.data(), wc.values().data(),
                                     xc.grad().data());
        });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        fail_contract("mul shape mismatch: ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    Tensor ac = a, bc = b;
    return detail::make_op_output("mul", a.shape(), std::move(out), {a, b},
                                  [ac, bc](const detail::TensorData& o) mutable {
                                      if (ac.requires_grad()) {
                                          double* g = ac.grad().data();
                                          for (std::size_t i = 0; i < o.grad.size(); ++i)
                                              g[i] += o.grad[i] * bc.values()[i];
                                      }
                                      if (bc.requires_grad()) {
                                          double* g = bc.grad().data();
                                          for (std::size_t i = 0; i < o.grad.size(); ++i)
                                              g[i] += o.grad[i] * ac.values()[i];
                                      }
                                  });
}

inline Tensor square(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x.values()[i] * x.values()[i];
    Tensor xc = x;
    return detail::make_op_output("square", x.shape(), std::move(out), {x},
                                  [xc](const detail::TensorData& o) mutable {
                                      if (!xc.requires_grad()) return;
                                      double* g = xc.grad().data();
                                      for (std::size_t i = 0; i < o.grad.size(); ++i)
                                          g[i] += 2.0 * o.grad[i] * xc.values()[i];
                                  });
}

inline Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    Tensor xc = x;
    return detail::make_op_output("sum", {1}, {s}, {x},
                                  [xc](const detail::TensorData& o) mutable {
                                      if (!xc.requires_grad()) return;
                                      double* g = xc.grad().data();
                                      for (std::size_t i = 0; i < xc.size(); ++i)
                                          g[i] += o.grad[0];
                                  });
}

// ---- spatial_soft_argmax ----------------------------------------------------
// Softmax over all H*W cells of a 1-channel heatmap, then the expected
// cell-center coordinate scaled into [0,out_width] x [0,out_height]. Cell
// (r,c) maps to ((c+0.5)/W*out_width, (r+0.5)/H*out_height).
inline Tensor spatial_soft_argmax(const Tensor& h, double out_width, double out_height) {
    detail::check_4d(h, "spatial_soft_argmax input");
    if (h.dim(1) != 1)
        fail_contract("spatial_soft_argmax wants a single-channel heatmap, got ",
                      shape_str(h.shape()));
    if (out_width <= 0.0 || out_height <= 0.0)
        fail_contract("spatial_soft_argmax output extent must be positive");
    const std::size_t N = h.dim(0), H = h.dim(2), W = h.dim(3), L = H * W;
    std::vector<double> prob(N * L);
    std::vector<double> out(N * 2);
    for (std::size_t n = 0; n < N; ++n) {
        const double* p = h.values().data() + n * L;
        double* q = prob.data() + n * L;
        double mx = p[0];
        for (std::size_t j = 1; j < L; ++j) mx = std::max(mx, p[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
            q[j] = std::exp(p[j] - mx);
            z += q[j];
        }
        for (std::size_t j = 0; j < L; ++j) q[j] /= z;
        double ex = 0.0, ey = 0.0;
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c < W; ++c) {
                const double pr = q[r * W + c];
                ex += pr * (static_cast<double>(c) + 0.5) / static_cast<double>(W) * out_width;
                ey += pr * (static_cast<double>(r) + 0.5) / static_cast<double>(H) * out_height;
            }
        out[n * 2] = ex;
        out[n * 2 + 1] = ey;
    }
    Tensor hc = h;
    return detail::make_op_output(
        "spatial_soft_argmax", {N, 2}, std::move(out), {h},
        [hc, prob = std::move(prob), out_width, out_height](const detail::TensorData& o) mutable {
            if (!hc.requires_grad()) return;
            const std::size_t N = hc.dim(0), H = hc.dim(2), W = hc.dim(3), L = H * W;
            for (std::size_t n = 0; n < N; ++n) {
                const double* q = prob.data() + n * L;
                const double gx = o.grad[n * 2], gy = o.grad[n * 2 + 1];
                const double ex = o.values[n * 2], ey = o.values[n * 2 + 1];
                double* dh = hc.grad().data() + n * L;
                for (std::size_t r = 0; r < H; ++r)
                    for (std::size_t c = 0; c < W; ++c) {
                        const double ax =
                            (static_cast<double>(c) + 0.5) / static_cast<double>(W) * out_width;
                        const double ay =
                            (static_cast<double>(r) + 0.5) / static_cast<double>(H) * out_height;
                        dh[r * W + c] += q[r * W + c] * ((ax - ex) * gx + (ay - ey) * gy);
                    }
            }
        });
}

} // namespace pucknet
