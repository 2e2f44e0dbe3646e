#include "racam/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace racam {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Input planes converted to double once, with a zero ring of `pad` on
// each side, so inner loops run without bounds checks.
struct PaddedPlanes {
    int h = 0, w = 0, pad = 0, pw = 0;
    std::vector<double> buf;  // [C][h+2p][w+2p]

    PaddedPlanes(const Tensor& x, int p) {
        const int c = x.dim(0);
        h = x.dim(1);
        w = x.dim(2);
        pad = p;
        pw = w + 2 * p;
        buf.assign(std::size_t(c) * (h + 2 * p) * pw, 0.0);
        for (int ci = 0; ci < c; ++ci) {
            for (int i = 0; i < h; ++i) {
                const float* src = x.data() + (std::int64_t(ci) * h + i) * w;
                double* dst = plane(ci) + std::size_t(i + p) * pw + p;
                for (int j = 0; j < w; ++j) dst[j] = double(src[j]);
            }
        }
    }

    double* plane(int ci) { return buf.data() + std::size_t(ci) * (h + 2 * pad) * pw; }
    const double* plane(int ci) const { return buf.data() + std::size_t(ci) * (h + 2 * pad) * pw; }
};

// acc[j] += sum_c w[c] * row[j*stride + c], left-associated. The 3-tap
// stride-1 case is the hot path in every model here.
inline void conv_row_acc(double* acc, const double* row, const float* wrow, int kw, int stride,
                         int n) {
    if (kw == 3 && stride == 1) {
        const double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
        for (int j = 0; j < n; ++j) acc[j] += w0 * row[j] + w1 * row[j + 1] + w2 * row[j + 2];
    } else if (kw == 1 && stride == 1) {
        const double w0 = wrow[0];
        for (int j = 0; j < n; ++j) acc[j] += w0 * row[j];
    } else {
        for (int j = 0; j < n; ++j) {
            double t = 0.0;
            const double* r = row + std::int64_t(j) * stride;
            for (int c = 0; c < kw; ++c) t += double(wrow[c]) * r[c];
            acc[j] += t;
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int pad) {
    require(input.ndim() == 3, fmt::format("conv2d: input must be [C,H,W], got {}", input.shape_str()));
    require(weight.ndim() == 4,
            fmt::format("conv2d: weight must be [Cout,Cin,kH,kW], got {}", weight.shape_str()));
    require(bias.ndim() == 1, fmt::format("conv2d: bias must be [Cout], got {}", bias.shape_str()));
    require(stride >= 1, "conv2d: stride must be >= 1");
    require(pad >= 0, "conv2d: pad must be >= 0");
    const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(1) != cin || bias.dim(0) != cout) throw_shape_error("conv2d", input, weight);
    require(kh <= h + 2 * pad && kw <= w + 2 * pad,
            fmt::format("conv2d: kernel {}x{} larger than padded input {}x{}", kh, kw, h + 2 * pad,
                        w + 2 * pad));

    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (w + 2 * pad - kw) / stride + 1;

    PaddedPlanes xp(input, pad);
    Tensor out({cout, ho, wo});
    std::vector<double> acc(std::size_t(ho) * wo);

    for (int co = 0; co < cout; ++co) {
        std::fill(acc.begin(), acc.end(), double(bias[co]));
        for (int ci = 0; ci < cin; ++ci) {
            const double* plane = xp.plane(ci);
            for (int r = 0; r < kh; ++r) {
                const float* wrow = weight.data() + ((std::int64_t(co) * cin + ci) * kh + r) * kw;
                for (int i = 0; i < ho; ++i) {
                    const double* row = plane + std::size_t(i * stride + r) * xp.pw;
                    conv_row_acc(&acc[std::size_t(i) * wo], row, wrow, kw, stride, wo);
                }
            }
        }
        float* dst = out.data() + std::int64_t(co) * ho * wo;
        for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = float(acc[i]);
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weight,
                            int stride, int pad) {
    const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    const int ho = grad_out.dim(1), wo = grad_out.dim(2);
    require(grad_out.ndim() == 3 && grad_out.dim(0) == cout, "conv2d_backward: bad grad shape");

    Conv2dGrads g;
    g.bias = Tensor({cout});
    g.weight = Tensor({cout, cin, kh, kw});
    g.input = Tensor({cin, h, w});

    for (int co = 0; co < cout; ++co) {
        double s = 0.0;
        const float* gp = grad_out.data() + std::int64_t(co) * ho * wo;
        for (std::int64_t i = 0; i < std::int64_t(ho) * wo; ++i) s += double(gp[i]);
        g.bias[co] = float(s);
    }

    PaddedPlanes xp(input, pad);
    for (int co = 0; co < cout; ++co) {
        const float* gp = grad_out.data() + std::int64_t(co) * ho * wo;
        for (int ci = 0; ci < cin; ++ci) {
            const double* plane = xp.plane(ci);
            for (int r = 0; r < kh; ++r) {
                // one pass per kernel row, all kw taps at once
                std::vector<double> taps(std::size_t(kw), 0.0);
                for (int i = 0; i < ho; ++i) {
                    const double* row = plane + std::size_t(i * stride + r) * xp.pw;
                    const float* grow = gp + std::int64_t(i) * wo;
                    if (kw == 3 && stride == 1) {
                        double s0 = 0.0, s1 = 0.0, s2 = 0.0;
                        for (int j = 0; j < wo; ++j) {
                            const double gv = double(grow[j]);
                            s0 += gv * row[j];
                            s1 += gv * row[j + 1];
                            s2 += gv * row[j + 2];
                        }
                        taps[0] += s0;
                        taps[1] += s1;
                        taps[2] += s2;
                    } else {
                        for (int c = 0; c < kw; ++c) {
                            double s = 0.0;
                            const double* rc = row + c;
                            for (int j = 0; j < wo; ++j) s += double(grow[j]) * rc[std::int64_t(j) * stride];
                            taps[std::size_t(c)] += s;
                        }
                    }
                }
                for (int c = 0; c < kw; ++c) {
                    g.weight[((std::int64_t(co) * cin + ci) * kh + r) * kw + c] = float(taps[std::size_t(c)]);
                }
            }
        }
    }

    if (stride == 1 && kh - 1 - pad >= 0 && kw - 1 - pad >= 0) {
        // The input gradient is a correlation of the output gradient with
        // the spatially flipped, channel-transposed kernel.
        Tensor wt({cin, cout, kh, kw});
        for (int co = 0; co < cout; ++co) {
            for (int ci = 0; ci < cin; ++ci) {
                for (int r = 0; r < kh; ++r) {
                    for (int c = 0; c < kw; ++c) {
                        wt[((std::int64_t(ci) * cout + co) * kh + (kh - 1 - r)) * kw + (kw - 1 - c)] =
                            weight[((std::int64_t(co) * cin + ci) * kh + r) * kw + c];
                    }
                }
            }
        }
        g.input = conv2d(grad_out, wt, Tensor({cin}), 1, kh - 1 - pad);
    } else {
        // Scatter into a padded accumulator; target indices i*stride+r
        // stay inside [0, H+2p) by the kernel-size precondition.
        const int ph = h + 2 * pad, pw = w + 2 * pad;
        std::vector<double> dpad(std::size_t(ph) * pw);
        for (int ci = 0; ci < cin; ++ci) {
            std::fill(dpad.begin(), dpad.end(), 0.0);
            for (int co = 0; co < cout; ++co) {
                const float* gp = grad_out.data() + std::int64_t(co) * ho * wo;
                for (int r = 0; r < kh; ++r) {
                    for (int c = 0; c < kw; ++c) {
                        const double wv =
                            double(weight[((std::int64_t(co) * cin + ci) * kh + r) * kw + c]);
                        for (int i = 0; i < ho; ++i) {
                            double* drow = &dpad[std::size_t(i * stride + r) * pw + c];
                            const float* grow = gp + std::int64_t(i) * wo;
                            for (int j = 0; j < wo; ++j)
                                drow[std::int64_t(j) * stride] += wv * double(grow[j]);
                        }
                    }
                }
            }
            for (int i = 0; i < h; ++i) {
                const double* src = &dpad[std::size_t(i + pad) * pw + pad];
                float* dst = g.input.data() + (std::int64_t(ci) * h + i) * w;
                for (int j = 0; j < w; ++j) dst[j] = float(src[j]);
            }
        }
    }
    return g;
}

Tensor leaky_relu(const Tensor& input, float slope) {
    require(slope >= 0.0f && slope < 1.0f, fmt::format("leaky_relu: slope {} outside [0,1)", slope));
    Tensor out = input;
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        const float x = out[i];
        out[i] = x > 0.0f ? x : slope * x;
    }
    return out;
}

MaxPoolResult maxpool2d(const Tensor& input, int k, int stride) {
    require(input.ndim() == 3, "maxpool2d: input must be [C,H,W]");
    require(k > 0 && stride > 0, fmt::format("maxpool2d: k={} stride={} must be positive", k, stride));
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    require(k <= h && k <= w, fmt::format("maxpool2d: window {} exceeds input {}x{}", k, h, w));
    const int ho = (h - k) / stride + 1;
    const int wo = (w - k) / stride + 1;

    MaxPoolResult res;
    res.output = Tensor({c, ho, wo});
    res.argmax.assign(std::size_t(c) * ho * wo, 0);
    for (int ci = 0; ci < c; ++ci) {
        const float* plane = input.data() + std::int64_t(ci) * h * w;
        for (int i = 0; i < ho; ++i) {
            for (int j = 0; j < wo; ++j) {
                float best = -std::numeric_limits<float>::infinity();
                std::int32_t best_idx = 0;
                for (int r = 0; r < k; ++r) {
                    const int y = i * stride + r;
                    for (int x = 0; x < k; ++x) {
                        const std::int32_t idx = y * w + (j * stride + x);
                        const float v = plane[idx];
                        if (v > best) {  // strict: first occurrence wins ties
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                const std::int64_t o = (std::int64_t(ci) * ho + i) * wo + j;
                res.output[o] = best;
                res.argmax[std::size_t(o)] = best_idx;
            }
        }
    }
    return res;
}

Tensor maxpool2d_backward(const Tensor& grad_out, const Tensor& input,
                          const std::vector<std::int32_t>& argmax) {
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    Tensor g({c, h, w});
    std::vector<double> acc(std::size_t(h) * w);
    const std::int64_t per_ch = grad_out.numel() / c;
    for (int ci = 0; ci < c; ++ci) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* gp = grad_out.data() + std::int64_t(ci) * per_ch;
        const std::int32_t* am = argmax.data() + std::int64_t(ci) * per_ch;
        for (std::int64_t i = 0; i < per_ch; ++i) acc[std::size_t(am[i])] += double(gp[i]);
        float* dst = g.data() + std::int64_t(ci) * h * w;
        for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = float(acc[i]);
    }
    return g;
}

Tensor global_avg_pool(const Tensor& input) {
    require(input.ndim() == 3, "global_avg_pool: input must be [C,H,W]");
    const int c = input.dim(0);
    const std::int64_t hw = std::int64_t(input.dim(1)) * input.dim(2);
    Tensor out({c});
    for (int ci = 0; ci < c; ++ci) {
        const float* p = input.data() + ci * hw;
        double s = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) s += double(p[i]);
        out[ci] = float(s / double(hw));
    }
    return out;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, const Tensor& input) {
    const int c = input.dim(0);
    const std::int64_t hw = std::int64_t(input.dim(1)) * input.dim(2);
    Tensor g(input.shape());
    for (int ci = 0; ci < c; ++ci) {
        const float v = float(double(grad_out[ci]) / double(hw));
        float* p = g.data() + ci * hw;
        for (std::int64_t i = 0; i < hw; ++i) p[i] = v;
    }
    return g;
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require(input.ndim() == 1 && weight.ndim() == 2 && bias.ndim() == 1, "linear: expects x[N], W[M,N], b[M]");
    const int n = input.dim(0), m = weight.dim(0);
    if (weight.dim(1) != n || bias.dim(0) != m) throw_shape_error("linear", input, weight);
    Tensor out({m});
    for (int i = 0; i < m; ++i) {
        double s = double(bias[i]);
        const float* wr = weight.data() + std::int64_t(i) * n;
        for (int j = 0; j < n; ++j) s += double(wr[j]) * double(input[j]);
        out[i] = float(s);
    }
    return out;
}

LinearGrads linear_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weight) {
    const int n = input.dim(0), m = weight.dim(0);
    LinearGrads g;
    g.bias = grad_out;
    g.weight = Tensor({m, n});
    for (int i = 0; i < m; ++i) {
        const double gv = double(grad_out[i]);
        const float* x = input.data();
        float* wr = g.weight.data() + std::int64_t(i) * n;
        for (int j = 0; j < n; ++j) wr[j] = float(gv * double(x[j]));
    }
    g.input = Tensor({n});
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += double(grad_out[i]) * double(weight[std::int64_t(i) * n + j]);
        g.input[j] = float(s);
    }
    return g;
}

namespace {

// log(sum exp(z)) with z = logits - max, in double.
double log_sum_exp(const Tensor& logits, double& max_out) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::int64_t i = 0; i < logits.numel(); ++i) m = std::max(m, double(logits[i]));
    double se = 0.0;
    for (std::int64_t i = 0; i < logits.numel(); ++i) se += std::exp(double(logits[i]) - m);
    max_out = m;
    return std::log(se);
}

}  // namespace

float softmax_cross_entropy(const Tensor& logits, int label) {
    require(label >= 0 && label < logits.numel(),
            fmt::format("softmax_cross_entropy: label {} out of range [0,{})", label, logits.numel()));
    double m = 0.0;
    const double lse = log_sum_exp(logits, m);
    return float(lse - (double(logits[label]) - m));
}

Tensor softmax(const Tensor& logits) {
    double m = 0.0;
    const double lse = log_sum_exp(logits, m);
    Tensor p(logits.shape());
    for (std::int64_t i = 0; i < logits.numel(); ++i)
        p[i] = float(std::exp(double(logits[i]) - m - lse));
    return p;
}

Tensor softmax_cross_entropy_backward(const Tensor& logits, int label) {
    Tensor g = softmax(logits);
    g[label] -= 1.0f;
    return g;
}

float pixel_cross_entropy(const Tensor& logits, const Tensor& target) {
    require(logits.ndim() == 3 && target.ndim() == 3 && target.dim(0) == 1,
            "pixel_cross_entropy: expects logits[K,H,W], target[1,H,W]");
    const int k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    if (target.dim(1) != h || target.dim(2) != w) throw_shape_error("pixel_cross_entropy", logits, target);
    const std::int64_t hw = std::int64_t(h) * w;
    double total = 0.0;
    for (std::int64_t p = 0; p < hw; ++p) {
        double m = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) m = std::max(m, double(logits[c * hw + p]));
        double se = 0.0;
        for (int c = 0; c < k; ++c) se += std::exp(double(logits[c * hw + p]) - m);
        const int label = int(target[p]);
        require(label >= 0 && label < k, "pixel_cross_entropy: target class out of range");
        total += std::log(se) - (double(logits[label * hw + p]) - m);
    }
    return float(total / double(hw));
}

Tensor pixel_cross_entropy_backward(const Tensor& logits, const Tensor& target) {
    const int k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    const std::int64_t hw = std::int64_t(h) * w;
    Tensor g(logits.shape());
    for (std::int64_t p = 0; p < hw; ++p) {
        double m = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) m = std::max(m, double(logits[c * hw + p]));
        double se = 0.0;
        for (int c = 0; c < k; ++c) se += std::exp(double(logits[c * hw + p]) - m);
        const int label = int(target[p]);
        for (int c = 0; c < k; ++c) {
            double v = std::exp(double(logits[c * hw + p]) - m) / se;
            if (c == label) v -= 1.0;
            g[c * hw + p] = float(v / double(hw));
        }
    }
    return g;
}

namespace {

struct ResizeAxis {
    std::vector<int> lo, hi;
    std::vector<double> frac;
};

// Align-corners source coordinates; a single output sample reads the
// input center.
ResizeAxis resize_axis(int in, int out) {
    ResizeAxis a;
    a.lo.resize(std::size_t(out));
    a.hi.resize(std::size_t(out));
    a.frac.resize(std::size_t(out));
    for (int i = 0; i < out; ++i) {
        double src = out > 1 ? double(i) * double(in - 1) / double(out - 1) : double(in - 1) / 2.0;
        int lo = int(std::floor(src));
        lo = std::clamp(lo, 0, in - 1);
        const int hi = std::min(lo + 1, in - 1);
        a.lo[std::size_t(i)] = lo;
        a.hi[std::size_t(i)] = hi;
        a.frac[std::size_t(i)] = src - double(lo);
    }
    return a;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
    require(input.ndim() == 3, "bilinear_resize: input must be [C,H,W]");
    require(out_h >= 1 && out_w >= 1, "bilinear_resize: output dims must be >= 1");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const ResizeAxis ay = resize_axis(h, out_h);
    const ResizeAxis ax = resize_axis(w, out_w);
    Tensor out({c, out_h, out_w});
    for (int ci = 0; ci < c; ++ci) {
        const float* p = input.data() + std::int64_t(ci) * h * w;
        float* q = out.data() + std::int64_t(ci) * out_h * out_w;
        for (int i = 0; i < out_h; ++i) {
            const double fy = ay.frac[std::size_t(i)];
            const float* r0 = p + std::int64_t(ay.lo[std::size_t(i)]) * w;
            const float* r1 = p + std::int64_t(ay.hi[std::size_t(i)]) * w;
            for (int j = 0; j < out_w; ++j) {
                const double fx = ax.frac[std::size_t(j)];
                const int x0 = ax.lo[std::size_t(j)], x1 = ax.hi[std::size_t(j)];
                const double top = (1.0 - fx) * double(r0[x0]) + fx * double(r0[x1]);
                const double bot = (1.0 - fx) * double(r1[x0]) + fx * double(r1[x1]);
                q[std::int64_t(i) * out_w + j] = float((1.0 - fy) * top + fy * bot);
            }
        }
    }
    return out;
}

Tensor bilinear_resize_backward(const Tensor& grad_out, int in_h, int in_w) {
    const int c = grad_out.dim(0), oh = grad_out.dim(1), ow = grad_out.dim(2);
    const ResizeAxis ay = resize_axis(in_h, oh);
    const ResizeAxis ax = resize_axis(in_w, ow);
    Tensor g({c, in_h, in_w});
    std::vector<double> acc(std::size_t(in_h) * in_w);
    for (int ci = 0; ci < c; ++ci) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* gp = grad_out.data() + std::int64_t(ci) * oh * ow;
        for (int i = 0; i < oh; ++i) {
            const double fy = ay.frac[std::size_t(i)];
            const int y0 = ay.lo[std::size_t(i)], y1 = ay.hi[std::size_t(i)];
            for (int j = 0; j < ow; ++j) {
                const double fx = ax.frac[std::size_t(j)];
                const int x0 = ax.lo[std::size_t(j)], x1 = ax.hi[std::size_t(j)];
                const double gv = double(gp[std::int64_t(i) * ow + j]);
                acc[std::size_t(y0) * in_w + x0] += gv * (1.0 - fy) * (1.0 - fx);
                acc[std::size_t(y0) * in_w + x1] += gv * (1.0 - fy) * fx;
                acc[std::size_t(y1) * in_w + x0] += gv * fy * (1.0 - fx);
                acc[std::size_t(y1) * in_w + x1] += gv * fy * fx;
            }
        }
        float* dst = g.data() + std::int64_t(ci) * in_h * in_w;
        for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = float(acc[i]);
    }
    return g;
}

}  // namespace racam
