#include "eagleeye/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace eagleeye {

NodeId Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr);
}

Tensor& Tape::grad_buf(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.numel() != n.value.numel()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

const Tensor& Tape::grad(NodeId id) { return grad_buf(id); }

void Tape::accumulate(NodeId id, const Tensor& g) {
    Tensor& buf = grad_buf(id);
    for (std::int64_t i = 0; i < g.numel(); ++i) buf[i] += g[i];
}

void Tape::zero_grads() {
    for (Node& n : nodes_)
        if (n.grad.numel() > 0)
            std::memset(n.grad.data(), 0, static_cast<std::size_t>(n.grad.numel()) * sizeof(double));
}

void Tape::backward(NodeId node) {
    const Tensor& v = value(node);
    if (v.numel() != 1) throw std::invalid_argument("backward: seedless start needs a scalar node");
    backward(node, Tensor::scalar(1.0));
}

void Tape::backward(NodeId node, const Tensor& seed) {
    ensure_same_shape(value(node), seed, "backward seed");
    accumulate(node, seed);
    for (NodeId id = node; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.back && n.requires_grad && n.grad.numel() > 0) n.back(*this);
    }
}

// ---------------------------------------------------------------------------

struct TapeOps {
    static bool needs(const Tape& t, NodeId id) {
        return t.nodes_[static_cast<std::size_t>(id)].requires_grad;
    }
};

NodeId Tape::affine(NodeId x, NodeId w, NodeId b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1)
        throw std::invalid_argument("affine: expected x[N,D], w[K,D], b[K]");
    const int N = xv.dim(0), D = xv.dim(1), K = wv.dim(0);
    if (wv.dim(1) != D || bv.dim(0) != K)
        throw std::invalid_argument("affine: incompatible shapes");

    Tensor out({N, K});
    for (int n = 0; n < N; ++n) {
        const double* xr = xv.data() + static_cast<std::int64_t>(n) * D;
        double* yr = out.data() + static_cast<std::int64_t>(n) * K;
        for (int k = 0; k < K; ++k) {
            const double* wr = wv.data() + static_cast<std::int64_t>(k) * D;
            double acc = bv[k];
            for (int d = 0; d < D; ++d) acc += xr[d] * wr[d];
            yr[k] = acc;
        }
    }
    ensure_finite(out, "affine");

    bool rg = TapeOps::needs(*this, x) || TapeOps::needs(*this, w) || TapeOps::needs(*this, b);
    NodeId out_id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [x, w, b, out_id, N, D, K](Tape& t) {
            const Tensor& gy = t.grad_buf(out_id);
            const Tensor& xv2 = t.value(x);
            const Tensor& wv2 = t.value(w);
            if (TapeOps::needs(t, x)) {
                Tensor& gx = t.grad_buf(x);
                for (int n = 0; n < N; ++n) {
                    const double* gr = gy.data() + static_cast<std::int64_t>(n) * K;
                    double* gxr = gx.data() + static_cast<std::int64_t>(n) * D;
                    for (int k = 0; k < K; ++k) {
                        const double g = gr[k];
                        if (g == 0.0) continue;
                        const double* wr = wv2.data() + static_cast<std::int64_t>(k) * D;
                        for (int d = 0; d < D; ++d) gxr[d] += g * wr[d];
                    }
                }
            }
            if (TapeOps::needs(t, w)) {
                Tensor& gw = t.grad_buf(w);
                for (int n = 0; n < N; ++n) {
                    const double* gr = gy.data() + static_cast<std::int64_t>(n) * K;
                    const double* xr = xv2.data() + static_cast<std::int64_t>(n) * D;
                    for (int k = 0; k < K; ++k) {
                        const double g = gr[k];
                        if (g == 0.0) continue;
                        double* gwr = gw.data() + static_cast<std::int64_t>(k) * D;
                        for (int d = 0; d < D; ++d) gwr[d] += g * xr[d];
                    }
                }
            }
            if (TapeOps::needs(t, b)) {
                Tensor& gb = t.grad_buf(b);
                for (int n = 0; n < N; ++n) {
                    const double* gr = gy.data() + static_cast<std::int64_t>(n) * K;
                    for (int k = 0; k < K; ++k) gb[k] += gr[k];
                }
            }
        };
    }
    return out_id;
}

NodeId Tape::conv2d(NodeId x, NodeId w, NodeId b, int padding) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.rank() != 4 || wv.rank() != 4 || bv.rank() != 1)
        throw std::invalid_argument("conv2d: expected x[N,C,H,W], w[F,C,kh,kw], b[F]");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int F = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    if (wv.dim(1) != C || bv.dim(0) != F) throw std::invalid_argument("conv2d: channel mismatch");
    const int OH = H + 2 * padding - kh + 1;
    const int OW = W + 2 * padding - kw + 1;
    if (OH < 1 || OW < 1) throw std::invalid_argument("conv2d: kernel larger than padded input");

    Tensor out({N, F, OH, OW});
    const auto xat = [&](int n, int c) {
        return xv.data() + ((static_cast<std::int64_t>(n) * C + c) * H) * W;
    };
    for (int n = 0; n < N; ++n) {
        for (int f = 0; f < F; ++f) {
            double* oplane = out.data() + ((static_cast<std::int64_t>(n) * F + f) * OH) * OW;
            const double bias = bv[f];
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) oplane[i] = bias;
            for (int c = 0; c < C; ++c) {
                const double* iplane = xat(n, c);
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wval =
                            wv[((static_cast<std::int64_t>(f) * C + c) * kh + ky) * kw + kx];
                        if (wval == 0.0) continue;
                        for (int oy = 0; oy < OH; ++oy) {
                            const int iy = oy + ky - padding;
                            if (iy < 0 || iy >= H) continue;
                            const int ox_lo = std::max(0, padding - kx);
                            const int ox_hi = std::min(OW, W + padding - kx);
                            const double* irow = iplane + static_cast<std::int64_t>(iy) * W + (ox_lo + kx - padding);
                            double* orow = oplane + static_cast<std::int64_t>(oy) * OW + ox_lo;
                            for (int ox = 0; ox < ox_hi - ox_lo; ++ox) orow[ox] += wval * irow[ox];
                        }
                    }
                }
            }
        }
    }
    ensure_finite(out, "conv2d");

    bool rg = TapeOps::needs(*this, x) || TapeOps::needs(*this, w) || TapeOps::needs(*this, b);
    NodeId out_id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [x, w, b, out_id, padding, N, C, H, W, F, kh, kw](Tape& t) {
            const Tensor& gy = t.grad_buf(out_id);
            const Tensor& xv2 = t.value(x);
            const Tensor& wv2 = t.value(w);
            const int OH = H + 2 * padding - kh + 1;
            const int OW = W + 2 * padding - kw + 1;
            const bool need_x = TapeOps::needs(t, x);
            const bool need_w = TapeOps::needs(t, w);
            const bool need_b = TapeOps::needs(t, b);
            Tensor* gx = need_x ? &t.grad_buf(x) : nullptr;
            Tensor* gw = need_w ? &t.grad_buf(w) : nullptr;
            Tensor* gb = need_b ? &t.grad_buf(b) : nullptr;
            for (int n = 0; n < N; ++n) {
                for (int f = 0; f < F; ++f) {
                    const double* gplane =
                        gy.data() + ((static_cast<std::int64_t>(n) * F + f) * OH) * OW;
                    if (need_b) {
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i)
                            acc += gplane[i];
                        (*gb)[f] += acc;
                    }
                    for (int c = 0; c < C; ++c) {
                        const double* iplane =
                            xv2.data() + ((static_cast<std::int64_t>(n) * C + c) * H) * W;
                        double* gxplane =
                            need_x ? gx->data() + ((static_cast<std::int64_t>(n) * C + c) * H) * W
                                   : nullptr;
                        for (int ky = 0; ky < kh; ++ky) {
                            for (int kx = 0; kx < kw; ++kx) {
                                const std::int64_t widx =
                                    ((static_cast<std::int64_t>(f) * C + c) * kh + ky) * kw + kx;
                                const double wval = wv2[widx];
                                double wacc = 0.0;
                                for (int oy = 0; oy < OH; ++oy) {
                                    const int iy = oy + ky - padding;
                                    if (iy < 0 || iy >= H) continue;
                                    const int ox_lo = std::max(0, padding - kx);
                                    const int ox_hi = std::min(OW, W + padding - kx);
                                    const double* grow =
                                        gplane + static_cast<std::int64_t>(oy) * OW + ox_lo;
                                    const std::int64_t ibase =
                                        static_cast<std::int64_t>(iy) * W + (ox_lo + kx - padding);
                                    if (need_w) {
                                        const double* irow = iplane + ibase;
                                        for (int k = 0; k < ox_hi - ox_lo; ++k)
                                            wacc += grow[k] * irow[k];
                                    }
                                    if (need_x && wval != 0.0) {
                                        double* gxrow = gxplane + ibase;
                                        for (int k = 0; k < ox_hi - ox_lo; ++k)
                                            gxrow[k] += wval * grow[k];
                                    }
                                }
                                if (need_w) (*gw)[widx] += wacc;
                            }
                        }
                    }
                }
            }
        };
    }
    return out_id;
}

NodeId Tape::maxpool2d(NodeId x, int window, int stride) {
    const Tensor& xv = value(x);
    if (xv.rank() != 4) throw std::invalid_argument("maxpool2d: expected [N,C,H,W]");
    if (window < 1 || stride < 1) throw std::invalid_argument("maxpool2d: bad window/stride");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    if (H < window || W < window) throw std::invalid_argument("maxpool2d: window exceeds input");
    const int OH = (H - window) / stride + 1;
    const int OW = (W - window) / stride + 1;

    Tensor out({N, C, OH, OW});
    auto arg = std::make_shared<std::vector<std::int64_t>>(
        static_cast<std::size_t>(out.numel()));
    std::int64_t o = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* iplane = xv.data() + ((static_cast<std::int64_t>(n) * C + c) * H) * W;
            const std::int64_t plane_off = ((static_cast<std::int64_t>(n) * C + c) * H) * W;
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox, ++o) {
                    const int iy0 = oy * stride, ix0 = ox * stride;
                    double best = iplane[static_cast<std::int64_t>(iy0) * W + ix0];
                    std::int64_t best_idx = static_cast<std::int64_t>(iy0) * W + ix0;
                    for (int dy = 0; dy < window; ++dy)
                        for (int dx = 0; dx < window; ++dx) {
                            const std::int64_t idx =
                                static_cast<std::int64_t>(iy0 + dy) * W + (ix0 + dx);
                            if (iplane[idx] > best) {
                                best = iplane[idx];
                                best_idx = idx;
                            }
                        }
                    out[o] = best;
                    (*arg)[static_cast<std::size_t>(o)] = plane_off + best_idx;
                }
        }

    bool rg = TapeOps::needs(*this, x);
    NodeId out_id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [x, out_id, arg](Tape& t) {
            const Tensor& gy = t.grad_buf(out_id);
            Tensor& gx = t.grad_buf(x);
            for (std::int64_t i = 0; i < gy.numel(); ++i)
                gx[(*arg)[static_cast<std::size_t>(i)]] += gy[i];
        };
    }
    return out_id;
}

NodeId Tape::relu(NodeId x) {
    const Tensor& xv = value(x);
    Tensor out(xv.shape());
    for (std::int64_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    bool rg = TapeOps::needs(*this, x);
    NodeId out_id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [x, out_id](Tape& t) {
            const Tensor& gy = t.grad_buf(out_id);
            const Tensor& xv2 = t.value(x);
            Tensor& gx = t.grad_buf(x);
            for (std::int64_t i = 0; i < gy.numel(); ++i)
                if (xv2[i] > 0.0) gx[i] += gy[i];
        };
    }
    return out_id;
}

NodeId Tape::dropout(NodeId x, double rate, RngStream& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    const Tensor& xv = value(x);
    auto mask = std::make_shared<Tensor>(xv.shape());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::int64_t i = 0; i < xv.numel(); ++i)
        (*mask)[i] = rng.uniform01() >= rate ? keep_scale : 0.0;
    Tensor out(xv.shape());
    for (std::int64_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] * (*mask)[i];
    bool rg = TapeOps::needs(*this, x);
    NodeId out_id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [x, out_id, mask](Tape& t) {
            const Tensor& gy = t.grad_buf(out_id);
            Tensor& gx = t.grad_buf(x);
            for (std::int64_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i] * (*mask)[i];
        };
    }
    return out_id;
}

NodeId Tape::flatten(NodeId x) {
    const Tensor& xv = value(x);
    if (xv.rank() < 2) throw std::invalid_argument("flatten: rank must be >= 2");
    const int N = xv.dim(0);
    const int D = static_cast<int>(xv.numel() / N);
    Tensor out = xv.reshaped({N, D});
    bool rg = TapeOps::needs(*this, x);
    NodeId out_id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [x, out_id](Tape& t) {
            const Tensor& gy = t.grad_buf(out_id);
            Tensor& gx = t.grad_buf(x);
            for (std::int64_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i];
        };
    }
    return out_id;
}

namespace {

// Row softmax of z/tau into `out`; both [N,C].
void softmax_rows(const Tensor& z, double tau, Tensor& out) {
    const int N = z.dim(0), C = z.dim(1);
    for (int n = 0; n < N; ++n) {
        const double* zr = z.data() + static_cast<std::int64_t>(n) * C;
        double* pr = out.data() + static_cast<std::int64_t>(n) * C;
        double m = zr[0] / tau;
        for (int c = 1; c < C; ++c) m = std::max(m, zr[c] / tau);
        double s = 0.0;
        for (int c = 0; c < C; ++c) {
            pr[c] = std::exp(zr[c] / tau - m);
            s += pr[c];
        }
        for (int c = 0; c < C; ++c) pr[c] /= s;
    }
}

}  // namespace

NodeId Tape::softmax(NodeId z, double temperature) {
    if (temperature <= 0.0) throw std::invalid_argument("softmax: temperature must be positive");
    const Tensor& zv = value(z);
    if (zv.rank() != 2) throw std::invalid_argument("softmax: expected [N,C]");
    const int N = zv.dim(0), C = zv.dim(1);
    Tensor out({N, C});
    softmax_rows(zv, temperature, out);
    ensure_finite(out, "softmax");
    bool rg = TapeOps::needs(*this, z);
    NodeId out_id = push(std::move(out), rg, nullptr);
    if (rg) {
        const double tau = temperature;
        nodes_.back().back = [z, out_id, tau, N, C](Tape& t) {
            const Tensor& gy = t.grad_buf(out_id);
            const Tensor& p = t.value(out_id);
            Tensor& gz = t.grad_buf(z);
            for (int n = 0; n < N; ++n) {
                const double* pr = p.data() + static_cast<std::int64_t>(n) * C;
                const double* gr = gy.data() + static_cast<std::int64_t>(n) * C;
                double inner = 0.0;
                for (int c = 0; c < C; ++c) inner += gr[c] * pr[c];
                double* gzr = gz.data() + static_cast<std::int64_t>(n) * C;
                for (int c = 0; c < C; ++c) gzr[c] += pr[c] * (gr[c] - inner) / tau;
            }
        };
    }
    return out_id;
}

NodeId Tape::cross_entropy_mean(NodeId z, const Tensor& targets, double temperature) {
    const int N = value(z).dim(0);
    return cross_entropy_weighted(z, targets, std::vector<double>(static_cast<std::size_t>(N), 1.0 / N),
                                  temperature);
}

NodeId Tape::cross_entropy_weighted(NodeId z, const Tensor& targets,
                                    const std::vector<double>& weights, double temperature) {
    if (temperature <= 0.0)
        throw std::invalid_argument("cross_entropy: temperature must be positive");
    const Tensor& zv = value(z);
    ensure_same_shape(zv, targets, "cross_entropy targets");
    const int N = zv.dim(0), C = zv.dim(1);
    if (static_cast<int>(weights.size()) != N)
        throw std::invalid_argument("cross_entropy: weight count mismatch");

    auto probs = std::make_shared<Tensor>(std::vector<int>{N, C});
    softmax_rows(zv, temperature, *probs);

    double loss = 0.0;
    for (int n = 0; n < N; ++n) {
        const double* zr = zv.data() + static_cast<std::int64_t>(n) * C;
        const double* tr = targets.data() + static_cast<std::int64_t>(n) * C;
        double m = zr[0] / temperature;
        for (int c = 1; c < C; ++c) m = std::max(m, zr[c] / temperature);
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += std::exp(zr[c] / temperature - m);
        const double lse = m + std::log(s);
        double row = 0.0;
        for (int c = 0; c < C; ++c) row += tr[c] * (lse - zr[c] / temperature);
        loss += weights[static_cast<std::size_t>(n)] * row;
    }
    if (!std::isfinite(loss)) throw std::runtime_error("non-finite value in cross_entropy");

    auto tgt = std::make_shared<Tensor>(targets);
    auto w = std::make_shared<std::vector<double>>(weights);
    bool rg = TapeOps::needs(*this, z);
    NodeId out_id = push(Tensor::scalar(loss), rg, nullptr);
    if (rg) {
        const double tau = temperature;
        nodes_.back().back = [z, out_id, probs, tgt, w, tau, N, C](Tape& t) {
            const double g = t.grad_buf(out_id)[0];
            if (g == 0.0) return;
            Tensor& gz = t.grad_buf(z);
            for (int n = 0; n < N; ++n) {
                const double k = g * (*w)[static_cast<std::size_t>(n)] / tau;
                for (int c = 0; c < C; ++c) {
                    const std::int64_t i = static_cast<std::int64_t>(n) * C + c;
                    gz[i] += k * ((*probs)[i] - (*tgt)[i]);
                }
            }
        };
    }
    return out_id;
}

NodeId Tape::sum_all(NodeId x) {
    const Tensor& xv = value(x);
    double s = 0.0;
    for (std::int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
    bool rg = TapeOps::needs(*this, x);
    NodeId out_id = push(Tensor::scalar(s), rg, nullptr);
    if (rg) {
        nodes_.back().back = [x, out_id](Tape& t) {
            const double g = t.grad_buf(out_id)[0];
            Tensor& gx = t.grad_buf(x);
            for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
        };
    }
    return out_id;
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    ensure_same_shape(av, bv, "hadamard");
    Tensor out(av.shape());
    for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] * bv[i];
    bool rg = TapeOps::needs(*this, a) || TapeOps::needs(*this, b);
    NodeId out_id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [a, b, out_id](Tape& t) {
            const Tensor& gy = t.grad_buf(out_id);
            const Tensor& av2 = t.value(a);
            const Tensor& bv2 = t.value(b);
            if (TapeOps::needs(t, a)) {
                Tensor& ga = t.grad_buf(a);
                for (std::int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i] * bv2[i];
            }
            if (TapeOps::needs(t, b)) {
                Tensor& gb = t.grad_buf(b);
                for (std::int64_t i = 0; i < gy.numel(); ++i) gb[i] += gy[i] * av2[i];
            }
        };
    }
    return out_id;
}

}  // namespace eagleeye
