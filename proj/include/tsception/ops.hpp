#pragma once

// Differentiable operations. Everything is valid (no-padding) convolution
// semantics; pooling drops trailing remainders (floor). Each op validates
// shapes up front and records a backprop closure via detail::attach.

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "tsception/errors.hpp"
#include "tsception/rng.hpp"
#include "tsception/tensor.hpp"

namespace tsception {

namespace detail {

template <typename S>
void accumulate(TensorNode<S>* node, const std::vector<S>& delta) {
    if (!node->requires_grad) return;
    node->ensure_grad();
    S* g = node->grad.data();
    const S* d = delta.data();
    for (std::size_t i = 0; i < delta.size(); ++i) g[i] += d[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: valid cross-correlation, x[B,Cin,H,W] * w[Cout,Cin,kh,kw] + b[Cout]
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                 int stride_h = 1, int stride_w = 1) {
    if (x.rank() != 4 || weight.rank() != 4)
        throw DimensionError("conv2d expects rank-4 input and weight, got " +
                             shape_str(x.shape()) + " and " + shape_str(weight.shape()));
    const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(1) != Cin)
        throw DimensionError("conv2d channel mismatch: input " + shape_str(x.shape()) +
                             " vs weight " + shape_str(weight.shape()));
    if (bias.rank() != 1 || bias.dim(0) != Cout)
        throw DimensionError("conv2d bias must have shape (" + std::to_string(Cout) +
                             "), got " + shape_str(bias.shape()));
    if (kh > H || kw > W)
        throw DimensionError("conv2d kernel " + shape_str(weight.shape()) +
                             " larger than input " + shape_str(x.shape()));
    if (stride_h < 1 || stride_w < 1) throw ConfigError("conv2d stride must be >= 1");

    const int OH = (H - kh) / stride_h + 1;
    const int OW = (W - kw) / stride_w + 1;
    Tensor<S> out({B, Cout, OH, OW});

    const S* xd = x.data();
    const S* wd = weight.data();
    const S* bd = bias.data();
    S* od = out.data();

    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Cout; ++co) {
            const S bval = bd[co];
            for (int oh = 0; oh < OH; ++oh) {
                S* orow = od + ((static_cast<long>(b) * Cout + co) * OH + oh) * OW;
                for (int ow = 0; ow < OW; ++ow) orow[ow] = bval;
                for (int ci = 0; ci < Cin; ++ci) {
                    for (int r = 0; r < kh; ++r) {
                        const S* xrow =
                            xd + ((static_cast<long>(b) * Cin + ci) * H + oh * stride_h + r) * W;
                        const S* wrow = wd + ((static_cast<long>(co) * Cin + ci) * kh + r) * kw;
                        if (stride_w == 1) {
                            for (int k = 0; k < kw; ++k) {
                                const S c = wrow[k];
                                const S* xk = xrow + k;
                                for (int ow = 0; ow < OW; ++ow) orow[ow] += c * xk[ow];
                            }
                        } else {
                            for (int ow = 0; ow < OW; ++ow) {
                                S acc = S(0);
                                const S* xk = xrow + static_cast<long>(ow) * stride_w;
                                for (int k = 0; k < kw; ++k) acc += wrow[k] * xk[k];
                                orow[ow] += acc;
                            }
                        }
                    }
                }
            }
        }
    }

    detail::attach(out, {x, weight, bias}, [=](detail::TensorNode<S>* self) {
        auto xn = x.node();
        auto wn = weight.node();
        auto bn = bias.node();
        return [=]() {
            const S* go = self->grad.data();
            const S* xd2 = xn->data.data();
            const S* wd2 = wn->data.data();
            if (bn->requires_grad) {
                bn->ensure_grad();
                S* gb = bn->grad.data();
                for (int b = 0; b < B; ++b)
                    for (int co = 0; co < Cout; ++co) {
                        const S* grow = go + ((static_cast<long>(b) * Cout + co) * OH) * OW;
                        S acc = S(0);
                        for (long i = 0; i < static_cast<long>(OH) * OW; ++i) acc += grow[i];
                        gb[co] += acc;
                    }
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                S* gw = wn->grad.data();
                for (int b = 0; b < B; ++b)
                    for (int co = 0; co < Cout; ++co)
                        for (int oh = 0; oh < OH; ++oh) {
                            const S* grow =
                                go + ((static_cast<long>(b) * Cout + co) * OH + oh) * OW;
                            for (int ci = 0; ci < Cin; ++ci)
                                for (int r = 0; r < kh; ++r) {
                                    const S* xrow = xd2 + ((static_cast<long>(b) * Cin + ci) * H +
                                                           oh * stride_h + r) *
                                                              W;
                                    S* gwrow =
                                        gw + ((static_cast<long>(co) * Cin + ci) * kh + r) * kw;
                                    if (stride_w == 1) {
                                        for (int k = 0; k < kw; ++k) {
                                            S acc = S(0);
                                            const S* xk = xrow + k;
                                            for (int ow = 0; ow < OW; ++ow)
                                                acc += xk[ow] * grow[ow];
                                            gwrow[k] += acc;
                                        }
                                    } else {
                                        for (int ow = 0; ow < OW; ++ow) {
                                            const S g = grow[ow];
                                            const S* xk = xrow + static_cast<long>(ow) * stride_w;
                                            for (int k = 0; k < kw; ++k) gwrow[k] += g * xk[k];
                                        }
                                    }
                                }
                        }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                S* gx = xn->grad.data();
                for (int b = 0; b < B; ++b)
                    for (int co = 0; co < Cout; ++co)
                        for (int oh = 0; oh < OH; ++oh) {
                            const S* grow =
                                go + ((static_cast<long>(b) * Cout + co) * OH + oh) * OW;
                            for (int ci = 0; ci < Cin; ++ci)
                                for (int r = 0; r < kh; ++r) {
                                    S* gxrow = gx + ((static_cast<long>(b) * Cin + ci) * H +
                                                     oh * stride_h + r) *
                                                        W;
                                    const S* wrow =
                                        wd2 + ((static_cast<long>(co) * Cin + ci) * kh + r) * kw;
                                    if (stride_w == 1) {
                                        for (int k = 0; k < kw; ++k) {
                                            const S c = wrow[k];
                                            S* gxk = gxrow + k;
                                            for (int ow = 0; ow < OW; ++ow)
                                                gxk[ow] += c * grow[ow];
                                        }
                                    } else {
                                        for (int ow = 0; ow < OW; ++ow) {
                                            const S g = grow[ow];
                                            S* gxk = gxrow + static_cast<long>(ow) * stride_w;
                                            for (int k = 0; k < kw; ++k) gxk[k] += g * wrow[k];
                                        }
                                    }
                                }
                        }
            }
        };
    });
    return out;
}

// ---------------------------------------------------------------------------
// relu: elementwise max(0, x); gradient at exactly 0 is 0
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    Tensor<S> out(x.shape());
    const S* xd = x.data();
    S* od = out.data();
    const long n = x.size();
    for (long i = 0; i < n; ++i) od[i] = xd[i] > S(0) ? xd[i] : S(0);

    detail::attach(out, {x}, [=](detail::TensorNode<S>* self) {
        auto xn = x.node();
        return [=]() {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const S* go = self->grad.data();
            const S* xd2 = xn->data.data();
            S* gx = xn->grad.data();
            for (long i = 0; i < n; ++i)
                if (xd2[i] > S(0)) gx[i] += go[i];
        };
    });
    return out;
}

// ---------------------------------------------------------------------------
// avgpool2d: non-overlapping window mean, trailing remainder dropped
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> avgpool2d(const Tensor<S>& x, int pool_h, int pool_w) {
    if (x.rank() != 4)
        throw DimensionError("avgpool2d expects rank-4 input, got " + shape_str(x.shape()));
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (pool_h < 1 || pool_w < 1) throw ConfigError("avgpool2d window must be >= 1");
    if (pool_h > H || pool_w > W)
        throw DimensionError("avgpool2d window (" + std::to_string(pool_h) + "," +
                             std::to_string(pool_w) + ") larger than input " +
                             shape_str(x.shape()));
    const int OH = H / pool_h;
    const int OW = W / pool_w;
    Tensor<S> out({B, C, OH, OW});
    const S inv = S(1) / static_cast<S>(pool_h * pool_w);

    const S* xd = x.data();
    S* od = out.data();
    for (long bc = 0; bc < static_cast<long>(B) * C; ++bc) {
        const S* xpl = xd + bc * H * W;
        S* opl = od + bc * OH * OW;
        for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) {
                S acc = S(0);
                for (int r = 0; r < pool_h; ++r) {
                    const S* xrow = xpl + (static_cast<long>(oh) * pool_h + r) * W +
                                    static_cast<long>(ow) * pool_w;
                    for (int c = 0; c < pool_w; ++c) acc += xrow[c];
                }
                opl[static_cast<long>(oh) * OW + ow] = acc * inv;
            }
    }

    detail::attach(out, {x}, [=](detail::TensorNode<S>* self) {
        auto xn = x.node();
        return [=]() {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const S* go = self->grad.data();
            S* gx = xn->grad.data();
            for (long bc = 0; bc < static_cast<long>(B) * C; ++bc) {
                const S* gpl = go + bc * OH * OW;
                S* gxpl = gx + bc * H * W;
                for (int oh = 0; oh < OH; ++oh)
                    for (int ow = 0; ow < OW; ++ow) {
                        const S g = gpl[static_cast<long>(oh) * OW + ow] * inv;
                        for (int r = 0; r < pool_h; ++r) {
                            S* gxrow = gxpl + (static_cast<long>(oh) * pool_h + r) * W +
                                       static_cast<long>(ow) * pool_w;
                            for (int c = 0; c < pool_w; ++c) gxrow[c] += g;
                        }
                    }
            }
        };
    });
    return out;
}

// ---------------------------------------------------------------------------
// batchnorm2d: per-channel normalization over (B,H,W)
// ---------------------------------------------------------------------------

template <typename S>
struct BatchNormState {
    std::vector<S> running_mean;
    std::vector<S> running_var;

    explicit BatchNormState(int channels = 0)
        : running_mean(channels, S(0)), running_var(channels, S(1)) {}
};

template <typename S>
Tensor<S> batchnorm2d(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                      BatchNormState<S>& state, bool training, S momentum = S(0.1),
                      S eps = S(1e-5)) {
    if (x.rank() != 4)
        throw DimensionError("batchnorm2d expects rank-4 input, got " + shape_str(x.shape()));
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (gamma.rank() != 1 || gamma.dim(0) != C || beta.rank() != 1 || beta.dim(0) != C)
        throw DimensionError("batchnorm2d gamma/beta must have shape (" + std::to_string(C) +
                             "), got " + shape_str(gamma.shape()) + " and " +
                             shape_str(beta.shape()));
    if (static_cast<int>(state.running_mean.size()) != C)
        throw DimensionError("batchnorm2d state has " +
                             std::to_string(state.running_mean.size()) + " channels, input has " +
                             std::to_string(C));
    const long n = static_cast<long>(B) * H * W;  // reduction count per channel
    if (training && n < 2)
        throw ValueError("batchnorm2d train mode needs B*H*W >= 2 per channel, got " +
                         std::to_string(n));

    Tensor<S> out({B, C, H, W});
    const S* xd = x.data();
    const S* gd = gamma.data();
    const S* bd = beta.data();
    S* od = out.data();
    const long plane = static_cast<long>(H) * W;

    std::vector<S> mean(C), invstd(C);
    if (training) {
        for (int c = 0; c < C; ++c) {
            S m = S(0);
            for (int b = 0; b < B; ++b) {
                const S* xpl = xd + (static_cast<long>(b) * C + c) * plane;
                for (long i = 0; i < plane; ++i) m += xpl[i];
            }
            m /= static_cast<S>(n);
            S var = S(0);
            for (int b = 0; b < B; ++b) {
                const S* xpl = xd + (static_cast<long>(b) * C + c) * plane;
                for (long i = 0; i < plane; ++i) {
                    const S d = xpl[i] - m;
                    var += d * d;
                }
            }
            var /= static_cast<S>(n);  // biased, used for normalization
            mean[c] = m;
            invstd[c] = S(1) / std::sqrt(var + eps);
            // running estimate stores the unbiased variance
            const S unbiased = var * static_cast<S>(n) / static_cast<S>(n - 1);
            state.running_mean[c] = (S(1) - momentum) * state.running_mean[c] + momentum * m;
            state.running_var[c] = (S(1) - momentum) * state.running_var[c] + momentum * unbiased;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = state.running_mean[c];
            invstd[c] = S(1) / std::sqrt(state.running_var[c] + eps);
        }
    }

    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const S* xpl = xd + (static_cast<long>(b) * C + c) * plane;
            S* opl = od + (static_cast<long>(b) * C + c) * plane;
            const S m = mean[c], is = invstd[c], g = gd[c], bt = bd[c];
            for (long i = 0; i < plane; ++i) opl[i] = (xpl[i] - m) * is * g + bt;
        }

    detail::attach(out, {x, gamma, beta}, [=](detail::TensorNode<S>* self) {
        auto xn = x.node();
        auto gn = gamma.node();
        auto btn = beta.node();
        auto mean_c = mean;      // captured batch statistics
        auto invstd_c = invstd;
        return [=]() {
            const S* go = self->grad.data();
            const S* xd2 = xn->data.data();
            const S* gd2 = gn->data.data();
            // per-channel reductions: sum(g) and sum(g * xhat)
            std::vector<S> sum_g(C, S(0)), sum_gx(C, S(0));
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    const S* gpl = go + (static_cast<long>(b) * C + c) * plane;
                    const S* xpl = xd2 + (static_cast<long>(b) * C + c) * plane;
                    const S m = mean_c[c], is = invstd_c[c];
                    S sg = S(0), sgx = S(0);
                    for (long i = 0; i < plane; ++i) {
                        sg += gpl[i];
                        sgx += gpl[i] * (xpl[i] - m) * is;
                    }
                    sum_g[c] += sg;
                    sum_gx[c] += sgx;
                }
            if (btn->requires_grad) {
                btn->ensure_grad();
                for (int c = 0; c < C; ++c) btn->grad[c] += sum_g[c];
            }
            if (gn->requires_grad) {
                gn->ensure_grad();
                for (int c = 0; c < C; ++c) gn->grad[c] += sum_gx[c];
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                S* gx = xn->grad.data();
                for (int b = 0; b < B; ++b)
                    for (int c = 0; c < C; ++c) {
                        const S* gpl = go + (static_cast<long>(b) * C + c) * plane;
                        const S* xpl = xd2 + (static_cast<long>(b) * C + c) * plane;
                        S* gxpl = gx + (static_cast<long>(b) * C + c) * plane;
                        const S m = mean_c[c], is = invstd_c[c], g = gd2[c];
                        if (training) {
                            const S mg = sum_g[c] / static_cast<S>(n);
                            const S mgx = sum_gx[c] / static_cast<S>(n);
                            for (long i = 0; i < plane; ++i) {
                                const S xhat = (xpl[i] - m) * is;
                                gxpl[i] += g * is * (gpl[i] - mg - xhat * mgx);
                            }
                        } else {
                            for (long i = 0; i < plane; ++i) gxpl[i] += g * is * gpl[i];
                        }
                    }
            }
        };
    });
    return out;
}

// ---------------------------------------------------------------------------
// linear: x[B,F] @ w[F,H] + b[H]
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
    if (x.rank() != 2 || weight.rank() != 2)
        throw DimensionError("linear expects rank-2 input and weight, got " +
                             shape_str(x.shape()) + " and " + shape_str(weight.shape()));
    const int B = x.dim(0), F = x.dim(1), H = weight.dim(1);
    if (weight.dim(0) != F)
        throw DimensionError("linear dimension mismatch: input " + shape_str(x.shape()) +
                             " vs weight " + shape_str(weight.shape()));
    if (bias.rank() != 1 || bias.dim(0) != H)
        throw DimensionError("linear bias must have shape (" + std::to_string(H) + "), got " +
                             shape_str(bias.shape()));

    Tensor<S> out({B, H});
    const S* xd = x.data();
    const S* wd = weight.data();
    const S* bd = bias.data();
    S* od = out.data();
    for (int b = 0; b < B; ++b) {
        S* orow = od + static_cast<long>(b) * H;
        for (int h = 0; h < H; ++h) orow[h] = bd[h];
        const S* xrow = xd + static_cast<long>(b) * F;
        for (int f = 0; f < F; ++f) {
            const S xv = xrow[f];
            const S* wrow = wd + static_cast<long>(f) * H;
            for (int h = 0; h < H; ++h) orow[h] += xv * wrow[h];
        }
    }

    detail::attach(out, {x, weight, bias}, [=](detail::TensorNode<S>* self) {
        auto xn = x.node();
        auto wn = weight.node();
        auto bn = bias.node();
        return [=]() {
            const S* go = self->grad.data();
            if (bn->requires_grad) {
                bn->ensure_grad();
                S* gb = bn->grad.data();
                for (int b = 0; b < B; ++b) {
                    const S* grow = go + static_cast<long>(b) * H;
                    for (int h = 0; h < H; ++h) gb[h] += grow[h];
                }
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                S* gw = wn->grad.data();
                const S* xd2 = xn->data.data();
                for (int b = 0; b < B; ++b) {
                    const S* xrow = xd2 + static_cast<long>(b) * F;
                    const S* grow = go + static_cast<long>(b) * H;
                    for (int f = 0; f < F; ++f) {
                        const S xv = xrow[f];
                        S* gwrow = gw + static_cast<long>(f) * H;
                        for (int h = 0; h < H; ++h) gwrow[h] += xv * grow[h];
                    }
                }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                S* gx = xn->grad.data();
                const S* wd2 = wn->data.data();
                for (int b = 0; b < B; ++b) {
                    const S* grow = go + static_cast<long>(b) * H;
                    S* gxrow = gx + static_cast<long>(b) * F;
                    for (int f = 0; f < F; ++f) {
                        const S* wrow = wd2 + static_cast<long>(f) * H;
                        S acc = S(0);
                        for (int h = 0; h < H; ++h) acc += wrow[h] * grow[h];
                        gxrow[f] += acc;
                    }
                }
            }
        };
    });
    return out;
}

// ---------------------------------------------------------------------------
// dropout: inverted dropout (train scales survivors by 1/(1-rate))
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) {
        // identity; keep the graph edge so upstream gradients flow unchanged
        Tensor<S> out(x.shape(), x.vec());
        detail::attach(out, {x}, [=](detail::TensorNode<S>* self) {
            auto xn = x.node();
            return [=]() {
                if (!xn->requires_grad) return;
                xn->ensure_grad();
                const S* go = self->grad.data();
                S* gx = xn->grad.data();
                for (long i = 0; i < static_cast<long>(self->grad.size()); ++i) gx[i] += go[i];
            };
        });
        return out;
    }

    const long n = x.size();
    const S scale = S(1.0 / (1.0 - rate));
    auto mask = std::make_shared<std::vector<S>>(n);
    Tensor<S> out(x.shape());
    const S* xd = x.data();
    S* od = out.data();
    for (long i = 0; i < n; ++i) {
        const S m = rng.uniform() >= rate ? scale : S(0);
        (*mask)[i] = m;
        od[i] = xd[i] * m;
    }

    detail::attach(out, {x}, [=](detail::TensorNode<S>* self) {
        auto xn = x.node();
        return [=]() {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const S* go = self->grad.data();
            const S* md = mask->data();
            S* gx = xn->grad.data();
            for (long i = 0; i < n; ++i) gx[i] += go[i] * md[i];
        };
    });
    return out;
}

// ---------------------------------------------------------------------------
// softmax_cross_entropy: mean over batch of -log softmax(logits)[label]
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
        throw DimensionError("softmax_cross_entropy expects rank-2 logits, got " +
                             shape_str(logits.shape()));
    const int B = logits.dim(0), K = logits.dim(1);
    if (static_cast<int>(labels.size()) != B)
        throw DimensionError("softmax_cross_entropy got " + std::to_string(labels.size()) +
                             " labels for batch " + std::to_string(B));
    for (int b = 0; b < B; ++b)
        if (labels[b] < 0 || labels[b] >= K)
            throw ValueError("label " + std::to_string(labels[b]) + " out of range [0," +
                             std::to_string(K) + ") at row " + std::to_string(b));

    auto probs = std::make_shared<std::vector<S>>(static_cast<long>(B) * K);
    const S* ld = logits.data();
    S total = S(0);
    for (int b = 0; b < B; ++b) {
        const S* row = ld + static_cast<long>(b) * K;
        S mx = row[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        S denom = S(0);
        for (int k = 0; k < K; ++k) denom += std::exp(row[k] - mx);
        const S log_denom = std::log(denom);
        for (int k = 0; k < K; ++k)
            (*probs)[static_cast<long>(b) * K + k] = std::exp(row[k] - mx) / denom;
        total += -(row[labels[b]] - mx - log_denom);
    }
    Tensor<S> out = Tensor<S>::scalar(total / static_cast<S>(B));

    detail::attach(out, {logits}, [=](detail::TensorNode<S>* self) {
        auto ln = logits.node();
        auto labels_c = labels;
        return [=]() {
            if (!ln->requires_grad) return;
            ln->ensure_grad();
            const S g = self->grad[0] / static_cast<S>(B);
            S* gl = ln->grad.data();
            const S* pd = probs->data();
            for (int b = 0; b < B; ++b)
                for (int k = 0; k < K; ++k) {
                    const S onehot = (k == labels_c[b]) ? S(1) : S(0);
                    gl[static_cast<long>(b) * K + k] +=
                        g * (pd[static_cast<long>(b) * K + k] - onehot);
                }
        };
    });
    return out;
}

// ---------------------------------------------------------------------------
// l1_penalty: lambda * sum |theta|; subgradient at 0 is 0
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> l1_penalty(const std::vector<Tensor<S>>& params, S lambda) {
    if (lambda < S(0)) throw ConfigError("l1_penalty lambda must be >= 0");
    S total = S(0);
    for (const auto& p : params) {
        const S* d = p.data();
        for (long i = 0; i < p.size(); ++i) total += std::abs(d[i]);
    }
    Tensor<S> out = Tensor<S>::scalar(lambda * total);

    detail::attach(out, params, [=](detail::TensorNode<S>* self) {
        std::vector<std::shared_ptr<detail::TensorNode<S>>> nodes;
        nodes.reserve(params.size());
        for (const auto& p : params) nodes.push_back(p.node());
        return [=]() {
            const S g = self->grad[0] * lambda;
            for (auto& n : nodes) {
                if (!n->requires_grad) continue;
                n->ensure_grad();
                const S* d = n->data.data();
                S* gp = n->grad.data();
                for (std::size_t i = 0; i < n->data.size(); ++i) {
                    if (d[i] > S(0))
                        gp[i] += g;
                    else if (d[i] < S(0))
                        gp[i] -= g;
                }
            }
        };
    });
    return out;
}

// ---------------------------------------------------------------------------
// concat: along a given axis; all other dims must match
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& tensors, int axis) {
    if (tensors.empty()) throw DimensionError("concat of zero tensors");
    const int rank = tensors[0].rank();
    if (axis < 0 || axis >= rank)
        throw DimensionError("concat axis " + std::to_string(axis) + " out of range for rank " +
                             std::to_string(rank));
    Shape out_shape = tensors[0].shape();
    for (std::size_t t = 1; t < tensors.size(); ++t) {
        if (tensors[t].rank() != rank)
            throw DimensionError("concat rank mismatch: " + shape_str(tensors[0].shape()) +
                                 " vs " + shape_str(tensors[t].shape()));
        for (int d = 0; d < rank; ++d) {
            if (d == axis) continue;
            if (tensors[t].dim(d) != out_shape[d])
                throw DimensionError("concat non-axis dim mismatch at axis " + std::to_string(d) +
                                     ": " + shape_str(tensors[0].shape()) + " vs " +
                                     shape_str(tensors[t].shape()));
        }
        out_shape[axis] += tensors[t].dim(axis);
    }

    long outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= out_shape[d];
    for (int d = axis + 1; d < rank; ++d) inner *= out_shape[d];

    Tensor<S> out(out_shape);
    S* od = out.data();
    const long out_axis_stride = static_cast<long>(out_shape[axis]) * inner;
    long offset = 0;  // in axis units
    std::vector<long> offsets(tensors.size());
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        offsets[t] = offset;
        const long len = static_cast<long>(tensors[t].dim(axis)) * inner;
        const S* xd = tensors[t].data();
        for (long o = 0; o < outer; ++o)
            std::memcpy(od + o * out_axis_stride + offset * inner, xd + o * len,
                        sizeof(S) * len);
        offset += tensors[t].dim(axis);
    }

    detail::attach(out, tensors, [=](detail::TensorNode<S>* self) {
        std::vector<std::shared_ptr<detail::TensorNode<S>>> nodes;
        std::vector<long> axis_len;
        for (const auto& t : tensors) {
            nodes.push_back(t.node());
            axis_len.push_back(t.dim(axis));
        }
        return [=]() {
            const S* go = self->grad.data();
            for (std::size_t t = 0; t < nodes.size(); ++t) {
                auto& n = nodes[t];
                if (!n->requires_grad) continue;
                n->ensure_grad();
                S* gx = n->grad.data();
                const long len = axis_len[t] * inner;
                for (long o = 0; o < outer; ++o) {
                    const S* gsrc = go + o * out_axis_stride + offsets[t] * inner;
                    S* gdst = gx + o * len;
                    for (long i = 0; i < len; ++i) gdst[i] += gsrc[i];
                }
            }
        };
    });
    return out;
}

// ---------------------------------------------------------------------------
// reshape: same element count, new shape (copying view)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.size())
        throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(new_shape) +
                             " changes element count");
    Tensor<S> out(std::move(new_shape), x.vec());
    detail::attach(out, {x}, [=](detail::TensorNode<S>* self) {
        auto xn = x.node();
        return [=]() {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const S* go = self->grad.data();
            S* gx = xn->grad.data();
            for (std::size_t i = 0; i < self->grad.size(); ++i) gx[i] += go[i];
        };
    });
    return out;
}

// ---------------------------------------------------------------------------
// add: elementwise, same shape (used to compose the training loss)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape())
        throw DimensionError("add shape mismatch: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    Tensor<S> out(a.shape());
    const S* ad = a.data();
    const S* bd = b.data();
    S* od = out.data();
    for (long i = 0; i < a.size(); ++i) od[i] = ad[i] + bd[i];

    detail::attach(out, {a, b}, [=](detail::TensorNode<S>* self) {
        auto an = a.node();
        auto bn = b.node();
        return [=]() {
            detail::accumulate(an.get(), self->grad);
            detail::accumulate(bn.get(), self->grad);
        };
    });
    return out;
}

// mul: elementwise product, same shape
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape())
        throw DimensionError("mul shape mismatch: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    Tensor<S> out(a.shape());
    const S* ad = a.data();
    const S* bd = b.data();
    S* od = out.data();
    for (long i = 0; i < a.size(); ++i) od[i] = ad[i] * bd[i];

    detail::attach(out, {a, b}, [=](detail::TensorNode<S>* self) {
        auto an = a.node();
        auto bn = b.node();
        return [=]() {
            const S* go = self->grad.data();
            const long n = static_cast<long>(self->grad.size());
            if (an->requires_grad) {
                an->ensure_grad();
                S* ga = an->grad.data();
                const S* bd2 = bn->data.data();
                for (long i = 0; i < n; ++i) ga[i] += go[i] * bd2[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                S* gb = bn->grad.data();
                const S* ad2 = an->data.data();
                for (long i = 0; i < n; ++i) gb[i] += go[i] * ad2[i];
            }
        };
    });
    return out;
}

// scale: multiply every element by a constant
template <typename S>
Tensor<S> scale(const Tensor<S>& x, S c) {
    Tensor<S> out(x.shape());
    const S* xd = x.data();
    S* od = out.data();
    for (long i = 0; i < x.size(); ++i) od[i] = xd[i] * c;

    detail::attach(out, {x}, [=](detail::TensorNode<S>* self) {
        auto xn = x.node();
        return [=]() {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const S* go = self->grad.data();
            S* gx = xn->grad.data();
            for (std::size_t i = 0; i < self->grad.size(); ++i) gx[i] += go[i] * c;
        };
    });
    return out;
}

// sum of all elements -> scalar (test utility and loss plumbing)
template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
    S total = S(0);
    const S* xd = x.data();
    for (long i = 0; i < x.size(); ++i) total += xd[i];
    Tensor<S> out = Tensor<S>::scalar(total);
    detail::attach(out, {x}, [=](detail::TensorNode<S>* self) {
        auto xn = x.node();
        return [=]() {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const S g = self->grad[0];
            for (auto& v : xn->grad) v += g;
        };
    });
    return out;
}

}  // namespace tsception
