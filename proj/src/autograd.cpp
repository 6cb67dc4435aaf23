#include "lulc/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <unordered_set>

namespace lulc::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

namespace {

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const Var& p : parents)
        if (p.defined() && p.requires_grad()) n->requires_grad = true;
    if (n->requires_grad) {
        for (const Var& p : parents)
            if (p.defined()) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Var(std::move(n));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    LULC_CHECK(a.value().same_shape(b.value()),
               op << ": shape mismatch " << shape_str(a.value().shape()) << " vs "
                  << shape_str(b.value().shape()));
}

}  // namespace

void backward(const Var& root) {
    LULC_CHECK(root.defined() && root.value().numel() == 1, "backward requires a scalar root");
    if (!root.requires_grad()) return;

    // iterative post-order DFS for topological order
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad();
    root.node()->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise / reductions
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.value().shape());
    const int n = out.numel();
    for (int i = 0; i < n; ++i) out[i] = a.value()[i] + b.value()[i];
    auto an = a.node(), bn = b.node();
    const bool need_a = a.requires_grad(), need_b = b.requires_grad();
    return make_op(std::move(out), {a, b}, [an, bn, need_a, need_b](Node& self) {
        if (need_a) {
            Tensor& g = an->ensure_grad();
            for (int i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
        if (need_b) {
            Tensor& g = bn->ensure_grad();
            for (int i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.value().shape());
    const int n = out.numel();
    for (int i = 0; i < n; ++i) out[i] = a.value()[i] - b.value()[i];
    auto an = a.node(), bn = b.node();
    const bool need_a = a.requires_grad(), need_b = b.requires_grad();
    return make_op(std::move(out), {a, b}, [an, bn, need_a, need_b](Node& self) {
        if (need_a) {
            Tensor& g = an->ensure_grad();
            for (int i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
        if (need_b) {
            Tensor& g = bn->ensure_grad();
            for (int i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.value().shape());
    const int n = out.numel();
    for (int i = 0; i < n; ++i) out[i] = a.value()[i] * b.value()[i];
    auto an = a.node(), bn = b.node();
    const bool need_a = a.requires_grad(), need_b = b.requires_grad();
    return make_op(std::move(out), {a, b}, [an, bn, need_a, need_b](Node& self) {
        if (need_a) {
            Tensor& g = an->ensure_grad();
            for (int i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * bn->value[i];
        }
        if (need_b) {
            Tensor& g = bn->ensure_grad();
            for (int i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * an->value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out(a.value().shape());
    for (int i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * s;
    auto an = a.node();
    return make_op(std::move(out), {a}, [an, s](Node& self) {
        Tensor& g = an->ensure_grad();
        for (int i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * s;
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out(a.value().shape());
    for (int i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + s;
    auto an = a.node();
    return make_op(std::move(out), {a}, [an](Node& self) {
        Tensor& g = an->ensure_grad();
        for (int i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    });
}

Var square(const Var& a) {
    Tensor out(a.value().shape());
    for (int i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * a.value()[i];
    auto an = a.node();
    return make_op(std::move(out), {a}, [an](Node& self) {
        Tensor& g = an->ensure_grad();
        for (int i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * 2.0 * an->value[i];
    });
}

Var abs_val(const Var& a) {
    Tensor out(a.value().shape());
    for (int i = 0; i < out.numel(); ++i) out[i] = std::abs(a.value()[i]);
    auto an = a.node();
    return make_op(std::move(out), {a}, [an](Node& self) {
        Tensor& g = an->ensure_grad();
        for (int i = 0; i < g.numel(); ++i) {
            double v = an->value[i];
            double sgn = (v > 0.0) ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
            g[i] += self.grad[i] * sgn;
        }
    });
}

Var mean_all(const Var& a) {
    Tensor out({1});
    double acc = 0.0;
    for (int i = 0; i < a.value().numel(); ++i) acc += a.value()[i];
    const double inv_n = 1.0 / a.value().numel();
    out[0] = acc * inv_n;
    auto an = a.node();
    return make_op(std::move(out), {a}, [an, inv_n](Node& self) {
        Tensor& g = an->ensure_grad();
        const double gs = self.grad[0] * inv_n;
        for (int i = 0; i < g.numel(); ++i) g[i] += gs;
    });
}

Var sum_vars(const std::vector<Var>& vs) {
    LULC_CHECK(!vs.empty(), "sum_vars: empty input");
    Var acc = vs[0];
    for (size_t i = 1; i < vs.size(); ++i) acc = add(acc, vs[i]);
    return acc;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

Var relu(const Var& a) {
    Tensor out(a.value().shape());
    for (int i = 0; i < out.numel(); ++i) out[i] = a.value()[i] > 0.0 ? a.value()[i] : 0.0;
    auto an = a.node();
    return make_op(std::move(out), {a}, [an](Node& self) {
        Tensor& g = an->ensure_grad();
        for (int i = 0; i < g.numel(); ++i)
            if (an->value[i] > 0.0) g[i] += self.grad[i];
    });
}

Var leaky_relu(const Var& a, double slope) {
    Tensor out(a.value().shape());
    for (int i = 0; i < out.numel(); ++i) {
        double v = a.value()[i];
        out[i] = v > 0.0 ? v : slope * v;
    }
    auto an = a.node();
    return make_op(std::move(out), {a}, [an, slope](Node& self) {
        Tensor& g = an->ensure_grad();
        for (int i = 0; i < g.numel(); ++i)
            g[i] += self.grad[i] * (an->value[i] > 0.0 ? 1.0 : slope);
    });
}

Var tanh_act(const Var& a) {
    Tensor out(a.value().shape());
    for (int i = 0; i < out.numel(); ++i) out[i] = std::tanh(a.value()[i]);
    auto an = a.node();
    auto on = std::make_shared<Tensor>(out);
    return make_op(std::move(out), {a}, [an, on](Node& self) {
        Tensor& g = an->ensure_grad();
        for (int i = 0; i < g.numel(); ++i) {
            double y = (*on)[i];
            g[i] += self.grad[i] * (1.0 - y * y);
        }
    });
}

Var sigmoid_act(const Var& a) {
    Tensor out(a.value().shape());
    for (int i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
    auto an = a.node();
    auto on = std::make_shared<Tensor>(out);
    return make_op(std::move(out), {a}, [an, on](Node& self) {
        Tensor& g = an->ensure_grad();
        for (int i = 0; i < g.numel(); ++i) {
            double y = (*on)[i];
            g[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

Var softmax_channels(const Var& a) {
    const Tensor& x = a.value();
    LULC_CHECK(x.ndim() == 4, "softmax_channels expects NCHW, got " << shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out(x.shape());
    for (int n = 0; n < N; ++n)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                double mx = x.at4(n, 0, h, w);
                for (int c = 1; c < C; ++c) mx = std::max(mx, x.at4(n, c, h, w));
                double se = 0.0;
                for (int c = 0; c < C; ++c) se += std::exp(x.at4(n, c, h, w) - mx);
                for (int c = 0; c < C; ++c) out.at4(n, c, h, w) = std::exp(x.at4(n, c, h, w) - mx) / se;
            }
    auto xn = a.node();
    auto yv = std::make_shared<Tensor>(out);
    return make_op(std::move(out), {a}, [xn, yv, N, C, H, W](Node& self) {
        Tensor& g = xn->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    double dot = 0.0;
                    for (int c = 0; c < C; ++c) dot += self.grad.at4(n, c, h, w) * yv->at4(n, c, h, w);
                    for (int c = 0; c < C; ++c) {
                        const double y = yv->at4(n, c, h, w);
                        g.at4(n, c, h, w) += y * (self.grad.at4(n, c, h, w) - dot);
                    }
                }
    });
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
    int N, C, H, W, OC, KH, KW, OH, OW;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad, int dil) {
    LULC_CHECK(x.ndim() == 4, "conv2d: input must be NCHW, got " << shape_str(x.shape()));
    LULC_CHECK(w.ndim() == 4, "conv2d: weight must be [OC,C,KH,KW]");
    LULC_CHECK(x.dim(1) == w.dim(1),
               "conv2d: channel mismatch, input " << x.dim(1) << " vs weight " << w.dim(1));
    ConvDims d;
    d.N = x.dim(0);
    d.C = x.dim(1);
    d.H = x.dim(2);
    d.W = x.dim(3);
    d.OC = w.dim(0);
    d.KH = w.dim(2);
    d.KW = w.dim(3);
    d.OH = (d.H + 2 * pad - dil * (d.KH - 1) - 1) / stride + 1;
    d.OW = (d.W + 2 * pad - dil * (d.KW - 1) - 1) / stride + 1;
    LULC_CHECK(d.OH > 0 && d.OW > 0, "conv2d: input " << d.H << "x" << d.W
                                       << " too small for kernel " << d.KH << "x" << d.KW
                                       << " stride " << stride << " pad " << pad);
    return d;
}

void im2col(const double* x, const ConvDims& d, int stride, int pad, int dil, double* col) {
    // col layout: [C*KH*KW, OH*OW] row-major
    const int plane = d.H * d.W;
    const int ocols = d.OH * d.OW;
    for (int c = 0; c < d.C; ++c) {
        for (int kh = 0; kh < d.KH; ++kh) {
            for (int kw = 0; kw < d.KW; ++kw) {
                double* dst = col + ((static_cast<size_t>(c) * d.KH + kh) * d.KW + kw) * ocols;
                const double* src = x + static_cast<size_t>(c) * plane;
                for (int oh = 0; oh < d.OH; ++oh) {
                    const int ih = oh * stride - pad + kh * dil;
                    if (ih < 0 || ih >= d.H) {
                        std::fill(dst, dst + d.OW, 0.0);
                        dst += d.OW;
                        continue;
                    }
                    const double* row = src + static_cast<size_t>(ih) * d.W;
                    int iw = -pad + kw * dil;
                    for (int ow = 0; ow < d.OW; ++ow, iw += stride)
                        *dst++ = (iw >= 0 && iw < d.W) ? row[iw] : 0.0;
                }
            }
        }
    }
}

void col2im_add(const double* col, const ConvDims& d, int stride, int pad, int dil, double* x) {
    const int plane = d.H * d.W;
    const int ocols = d.OH * d.OW;
    for (int c = 0; c < d.C; ++c) {
        for (int kh = 0; kh < d.KH; ++kh) {
            for (int kw = 0; kw < d.KW; ++kw) {
                const double* src = col + ((static_cast<size_t>(c) * d.KH + kh) * d.KW + kw) * ocols;
                double* dst = x + static_cast<size_t>(c) * plane;
                for (int oh = 0; oh < d.OH; ++oh) {
                    const int ih = oh * stride - pad + kh * dil;
                    if (ih < 0 || ih >= d.H) {
                        src += d.OW;
                        continue;
                    }
                    double* row = dst + static_cast<size_t>(ih) * d.W;
                    int iw = -pad + kw * dil;
                    for (int ow = 0; ow < d.OW; ++ow, iw += stride) {
                        if (iw >= 0 && iw < d.W) row[iw] += src[ow];
                    }
                    src += d.OW;
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int dilation) {
    const ConvDims d = conv_dims(x.value(), w.value(), stride, pad, dilation);
    if (b.defined())
        LULC_CHECK(b.value().numel() == d.OC, "conv2d: bias size " << b.value().numel()
                                                << " != out channels " << d.OC);
    const int ckk = d.C * d.KH * d.KW;
    const int ocols = d.OH * d.OW;

    Tensor out({d.N, d.OC, d.OH, d.OW});
    std::vector<double> col(static_cast<size_t>(ckk) * ocols);
    CMapRM Wm(w.value().data(), d.OC, ckk);
    for (int n = 0; n < d.N; ++n) {
        const double* xn = x.value().data() + static_cast<size_t>(n) * d.C * d.H * d.W;
        im2col(xn, d, stride, pad, dilation, col.data());
        CMapRM Cm(col.data(), ckk, ocols);
        MapRM Om(out.data() + static_cast<size_t>(n) * d.OC * ocols, d.OC, ocols);
        Om.noalias() = Wm * Cm;
    }
    if (b.defined()) {
        for (int n = 0; n < d.N; ++n)
            for (int oc = 0; oc < d.OC; ++oc) {
                double* p = out.data() + (static_cast<size_t>(n) * d.OC + oc) * ocols;
                const double bv = b.value()[oc];
                for (int i = 0; i < ocols; ++i) p[i] += bv;
            }
    }

    auto xn_ = x.node();
    auto wn_ = w.node();
    auto bn_ = b.defined() ? b.node() : nullptr;
    const bool need_x = x.requires_grad();
    const bool need_w = w.requires_grad();
    const bool need_b = b.defined() && b.requires_grad();
    const int stride_ = stride, pad_ = pad, dil_ = dilation;
    return make_op(std::move(out), {x, w, b},
                   [xn_, wn_, bn_, d, stride_, pad_, dil_, need_x, need_w, need_b](Node& self) {
        const int ckk = d.C * d.KH * d.KW;
        const int ocols = d.OH * d.OW;
        std::vector<double> col(static_cast<size_t>(ckk) * ocols);
        if (need_x) xn_->ensure_grad();
        if (need_w) wn_->ensure_grad();
        CMapRM Wm(wn_->value.data(), d.OC, ckk);
        for (int n = 0; n < d.N; ++n) {
            CMapRM Gm(self.grad.data() + static_cast<size_t>(n) * d.OC * ocols, d.OC, ocols);
            if (need_w) {
                const double* xv = xn_->value.data() + static_cast<size_t>(n) * d.C * d.H * d.W;
                im2col(xv, d, stride_, pad_, dil_, col.data());
                CMapRM Cm(col.data(), ckk, ocols);
                MapRM Wg(wn_->grad.data(), d.OC, ckk);
                Wg.noalias() += Gm * Cm.transpose();
            }
            if (need_x) {
                MatRM dcol = Wm.transpose() * Gm;  // [ckk, ocols]
                double* xg = xn_->grad.data() + static_cast<size_t>(n) * d.C * d.H * d.W;
                col2im_add(dcol.data(), d, stride_, pad_, dil_, xg);
            }
        }
        if (need_b) {
            Tensor& bg = bn_->ensure_grad();
            for (int n = 0; n < d.N; ++n)
                for (int oc = 0; oc < d.OC; ++oc) {
                    const double* p = self.grad.data() + (static_cast<size_t>(n) * d.OC + oc) * ocols;
                    double acc = 0.0;
                    for (int i = 0; i < ocols; ++i) acc += p[i];
                    bg[oc] += acc;
                }
        }
    });
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

Var instance_norm2d(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Tensor& xv = x.value();
    LULC_CHECK(xv.ndim() == 4, "instance_norm2d expects NCHW");
    const int N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    LULC_CHECK(gamma.value().numel() == C && beta.value().numel() == C,
               "instance_norm2d: affine param size mismatch");

    Tensor out(xv.shape());
    auto mean = std::make_shared<std::vector<double>>(static_cast<size_t>(N) * C);
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(N) * C);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* p = xv.data() + (static_cast<size_t>(n) * C + c) * HW;
            double m = 0.0;
            for (int i = 0; i < HW; ++i) m += p[i];
            m /= HW;
            double v = 0.0;
            for (int i = 0; i < HW; ++i) {
                double dlt = p[i] - m;
                v += dlt * dlt;
            }
            v /= HW;
            const double is = 1.0 / std::sqrt(v + eps);
            (*mean)[static_cast<size_t>(n) * C + c] = m;
            (*inv_std)[static_cast<size_t>(n) * C + c] = is;
            const double g = gamma.value()[c], bb = beta.value()[c];
            double* o = out.data() + (static_cast<size_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) o[i] = (p[i] - m) * is * g + bb;
        }
    }

    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    const bool need_x = x.requires_grad(), need_g = gamma.requires_grad(),
               need_b = beta.requires_grad();
    return make_op(std::move(out), {x, gamma, beta},
                   [xn, gn, bn, mean, inv_std, N, C, HW, need_x, need_g, need_b](Node& self) {
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const size_t plane = (static_cast<size_t>(n) * C + c) * HW;
                const double m = (*mean)[static_cast<size_t>(n) * C + c];
                const double is = (*inv_std)[static_cast<size_t>(n) * C + c];
                const double g = gn->value[c];
                const double* xp = xn->value.data() + plane;
                const double* gy = self.grad.data() + plane;

                double sum_gy = 0.0, sum_gy_xh = 0.0;
                for (int i = 0; i < HW; ++i) {
                    const double xh = (xp[i] - m) * is;
                    sum_gy += gy[i];
                    sum_gy_xh += gy[i] * xh;
                }
                if (need_g) gn->ensure_grad()[c] += sum_gy_xh;
                if (need_b) bn->ensure_grad()[c] += sum_gy;
                if (need_x) {
                    double* xg = xn->ensure_grad().data() + plane;
                    const double inv_hw = 1.0 / HW;
                    for (int i = 0; i < HW; ++i) {
                        const double xh = (xp[i] - m) * is;
                        // d/dx of (x - m) * inv_std with m, inv_std functions of x
                        xg[i] += g * is * (gy[i] - inv_hw * sum_gy - inv_hw * xh * sum_gy_xh);
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// resampling / shape ops
// ---------------------------------------------------------------------------

Var upsample_nearest(const Var& x, int factor) {
    const Tensor& xv = x.value();
    LULC_CHECK(xv.ndim() == 4 && factor >= 1, "upsample_nearest: bad input");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int OH = H * factor, OW = W * factor;
    Tensor out({N, C, OH, OW});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow)
                    out.at4(n, c, oh, ow) = xv.at4(n, c, oh / factor, ow / factor);
    auto xn = x.node();
    return make_op(std::move(out), {x}, [xn, N, C, H, W, factor](Node& self) {
        Tensor& g = xn->ensure_grad();
        const int OH = H * factor, OW = W * factor;
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int oh = 0; oh < OH; ++oh)
                    for (int ow = 0; ow < OW; ++ow)
                        g.at4(n, c, oh / factor, ow / factor) += self.grad.at4(n, c, oh, ow);
    });
}

namespace {
struct BilinearTap {
    int y0, y1, x0, x1;
    double wy, wx;
};
}  // namespace

Var upsample_bilinear(const Var& x, int out_h, int out_w) {
    const Tensor& xv = x.value();
    LULC_CHECK(xv.ndim() == 4 && out_h >= 1 && out_w >= 1, "upsample_bilinear: bad input");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const double sy = static_cast<double>(H) / out_h;
    const double sx = static_cast<double>(W) / out_w;

    auto taps = std::make_shared<std::vector<BilinearTap>>();
    taps->reserve(static_cast<size_t>(out_h) * out_w);
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        if (y0 < 0) { y0 = 0; wy = 0.0; }
        int y1 = std::min(y0 + 1, H - 1);
        if (y0 > H - 1) { y0 = H - 1; y1 = H - 1; wy = 0.0; }
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            if (x0 < 0) { x0 = 0; wx = 0.0; }
            int x1 = std::min(x0 + 1, W - 1);
            if (x0 > W - 1) { x0 = W - 1; x1 = W - 1; wx = 0.0; }
            taps->push_back({y0, y1, x0, x1, wy, wx});
        }
    }

    Tensor out({N, C, out_h, out_w});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            size_t t = 0;
            for (int oy = 0; oy < out_h; ++oy)
                for (int ox = 0; ox < out_w; ++ox, ++t) {
                    const BilinearTap& tp = (*taps)[t];
                    const double v00 = xv.at4(n, c, tp.y0, tp.x0);
                    const double v01 = xv.at4(n, c, tp.y0, tp.x1);
                    const double v10 = xv.at4(n, c, tp.y1, tp.x0);
                    const double v11 = xv.at4(n, c, tp.y1, tp.x1);
                    out.at4(n, c, oy, ox) = (1 - tp.wy) * ((1 - tp.wx) * v00 + tp.wx * v01) +
                                            tp.wy * ((1 - tp.wx) * v10 + tp.wx * v11);
                }
        }
    auto xn = x.node();
    return make_op(std::move(out), {x}, [xn, taps, N, C, out_h, out_w](Node& self) {
        Tensor& g = xn->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                size_t t = 0;
                for (int oy = 0; oy < out_h; ++oy)
                    for (int ox = 0; ox < out_w; ++ox, ++t) {
                        const BilinearTap& tp = (*taps)[t];
                        const double gy = self.grad.at4(n, c, oy, ox);
                        g.at4(n, c, tp.y0, tp.x0) += gy * (1 - tp.wy) * (1 - tp.wx);
                        g.at4(n, c, tp.y0, tp.x1) += gy * (1 - tp.wy) * tp.wx;
                        g.at4(n, c, tp.y1, tp.x0) += gy * tp.wy * (1 - tp.wx);
                        g.at4(n, c, tp.y1, tp.x1) += gy * tp.wy * tp.wx;
                    }
            }
    });
}

Var global_avg_pool(const Var& x) {
    const Tensor& xv = x.value();
    LULC_CHECK(xv.ndim() == 4, "global_avg_pool expects NCHW");
    const int N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    Tensor out({N, C, 1, 1});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* p = xv.data() + (static_cast<size_t>(n) * C + c) * HW;
            double acc = 0.0;
            for (int i = 0; i < HW; ++i) acc += p[i];
            out[static_cast<size_t>(n) * C + c] = acc / HW;
        }
    auto xn = x.node();
    return make_op(std::move(out), {x}, [xn, N, C, HW](Node& self) {
        Tensor& g = xn->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const double gs = self.grad[static_cast<size_t>(n) * C + c] / HW;
                double* p = g.data() + (static_cast<size_t>(n) * C + c) * HW;
                for (int i = 0; i < HW; ++i) p[i] += gs;
            }
    });
}

Var broadcast_hw(const Var& x, int h, int w) {
    const Tensor& xv = x.value();
    LULC_CHECK(xv.ndim() == 4 && xv.dim(2) == 1 && xv.dim(3) == 1, "broadcast_hw expects [N,C,1,1]");
    const int N = xv.dim(0), C = xv.dim(1);
    Tensor out({N, C, h, w});
    const int HW = h * w;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double v = xv[static_cast<size_t>(n) * C + c];
            double* p = out.data() + (static_cast<size_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) p[i] = v;
        }
    auto xn = x.node();
    return make_op(std::move(out), {x}, [xn, N, C, HW](Node& self) {
        Tensor& g = xn->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const double* p = self.grad.data() + (static_cast<size_t>(n) * C + c) * HW;
                double acc = 0.0;
                for (int i = 0; i < HW; ++i) acc += p[i];
                g[static_cast<size_t>(n) * C + c] += acc;
            }
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    LULC_CHECK(!xs.empty(), "concat_channels: empty input");
    const int N = xs[0].value().dim(0), H = xs[0].value().dim(2), W = xs[0].value().dim(3);
    int C = 0;
    for (const Var& v : xs) {
        LULC_CHECK(v.value().ndim() == 4 && v.value().dim(0) == N && v.value().dim(2) == H &&
                       v.value().dim(3) == W,
                   "concat_channels: incompatible shapes");
        C += v.value().dim(1);
    }
    Tensor out({N, C, H, W});
    const int HW = H * W;
    {
        int coff = 0;
        for (const Var& v : xs) {
            const int vc = v.value().dim(1);
            for (int n = 0; n < N; ++n)
                std::copy(v.value().data() + static_cast<size_t>(n) * vc * HW,
                          v.value().data() + static_cast<size_t>(n + 1) * vc * HW,
                          out.data() + (static_cast<size_t>(n) * C + coff) * HW);
            coff += vc;
        }
    }
    std::vector<NodePtr> nodes;
    std::vector<int> widths;
    std::vector<char> needs;
    for (const Var& v : xs) {
        nodes.push_back(v.node());
        widths.push_back(v.value().dim(1));
        needs.push_back(v.requires_grad() ? 1 : 0);
    }
    return make_op(std::move(out), xs, [nodes, widths, needs, N, C, HW](Node& self) {
        int coff = 0;
        for (size_t k = 0; k < nodes.size(); ++k) {
            const int vc = widths[k];
            if (needs[k]) {
                Tensor& g = nodes[k]->ensure_grad();
                for (int n = 0; n < N; ++n) {
                    const double* src = self.grad.data() + (static_cast<size_t>(n) * C + coff) * HW;
                    double* dst = g.data() + static_cast<size_t>(n) * vc * HW;
                    for (int i = 0; i < vc * HW; ++i) dst[i] += src[i];
                }
            }
            coff += vc;
        }
    });
}

// ---------------------------------------------------------------------------
// loss kernels
// ---------------------------------------------------------------------------

Var cross_entropy_mean(const Var& logits, const LabelBatch& labels) {
    const Tensor& x = logits.value();
    LULC_CHECK(x.ndim() == 4, "cross_entropy_mean expects NCHW logits");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    LULC_CHECK(labels.n == N && labels.h == H && labels.w == W,
               "cross_entropy_mean: label shape [" << labels.n << "," << labels.h << ","
                                                   << labels.w << "] does not match logits "
                                                   << shape_str(x.shape()));
    const size_t npix = static_cast<size_t>(N) * H * W;
    auto lse = std::make_shared<std::vector<double>>(npix);  // log-sum-exp per pixel
    double total = 0.0;
    size_t pix = 0;
    for (int n = 0; n < N; ++n)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w, ++pix) {
                const int y = labels.at(n, h, w);
                LULC_CHECK(y >= 0 && y < C, "cross_entropy_mean: label " << y
                                              << " out of range [0," << C << ") at pixel (" << n
                                              << "," << h << "," << w << ")");
                double mx = x.at4(n, 0, h, w);
                for (int c = 1; c < C; ++c) mx = std::max(mx, x.at4(n, c, h, w));
                double se = 0.0;
                for (int c = 0; c < C; ++c) se += std::exp(x.at4(n, c, h, w) - mx);
                const double l = mx + std::log(se);
                (*lse)[pix] = l;
                total += l - x.at4(n, y, h, w);
            }
    Tensor out({1});
    out[0] = total / static_cast<double>(npix);

    auto xn = logits.node();
    auto labels_copy = std::make_shared<LabelBatch>(labels);
    return make_op(std::move(out), {logits}, [xn, labels_copy, lse, N, C, H, W](Node& self) {
        Tensor& g = xn->ensure_grad();
        const double gs = self.grad[0] / (static_cast<double>(N) * H * W);
        size_t pix = 0;
        for (int n = 0; n < N; ++n)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w, ++pix) {
                    const int y = labels_copy->at(n, h, w);
                    const double l = (*lse)[pix];
                    for (int c = 0; c < C; ++c) {
                        const double p = std::exp(xn->value.at4(n, c, h, w) - l);
                        g.at4(n, c, h, w) += gs * (p - (c == y ? 1.0 : 0.0));
                    }
                }
    });
}

Var detach(const Var& a) {
    return Var::constant(a.value());
}

}  // namespace lulc::nn
