#include "focalforge/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

#include "focalforge/parallel.hpp"

namespace focalforge::ag {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

namespace {

Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bp) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backprop = std::move(bp);
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                                    " vs " + b->value.shape_str());
}

}  // namespace

double sorted_sum(double* buf, int n) {
    std::sort(buf, buf + n);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += buf[i];
    return s;
}

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

Var param(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    n->ensure_grad();
    return n;
}

void backward(const Var& root) {
    if (root->value.size() != 1) throw std::invalid_argument("backward: root must be scalar");

    // Post-order topological sort over grad-requiring nodes.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) n->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

double scalar(const Var& x) {
    if (x->value.size() != 1) throw std::invalid_argument("scalar: tensor is not 0-d");
    return x->value[0];
}

// ---------------------------------------------------------------------------
// arithmetic

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a->value.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            Var& p = n.parents[k];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a->value.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.size(); ++i) n.parents[1]->grad[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->value.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i] * bv[i];
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.size(); ++i) n.parents[1]->grad[i] += n.grad[i] * av[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out(a->value.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * s;
    return make(std::move(out), {a}, [s](Node& n) {
        n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i] * s;
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out(a->value.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + s;
    return make(std::move(out), {a}, [](Node& n) {
        n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
    });
}

Var exp_(const Var& a) {
    Tensor out(a->value.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(a->value[i]);
    return make(std::move(out), {a}, [](Node& n) {
        n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i] * n.value[i];
    });
}

// ---------------------------------------------------------------------------
// shape

Var reshape(const Var& x, std::vector<int> shape) {
    Tensor out = x->value.reshaped(std::move(shape));
    return make(std::move(out), {x}, [](Node& n) {
        n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
    });
}

namespace {
std::vector<std::int64_t> strides_of(const std::vector<int>& shape) {
    std::vector<std::int64_t> s(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        s[i] = s[i + 1] * shape[i + 1];
    return s;
}

// Flat index into the source tensor for a flat index of the permuted output.
std::int64_t permute_src_index(std::int64_t flat, const std::vector<std::int64_t>& ostr,
                               const std::vector<std::int64_t>& istr,
                               const std::vector<int>& perm) {
    std::int64_t src = 0;
    for (size_t i = 0; i < ostr.size(); ++i) {
        const std::int64_t q = flat / ostr[i];
        flat -= q * ostr[i];
        src += q * istr[static_cast<size_t>(perm[i])];
    }
    return src;
}
}  // namespace

Var permute(const Var& x, const std::vector<int>& perm) {
    const auto& ish = x->value.shape();
    if (perm.size() != ish.size()) throw std::invalid_argument("permute: rank mismatch");
    std::vector<int> osh(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) osh[i] = ish[perm[i]];
    const auto istr = strides_of(ish);
    const auto ostr = strides_of(osh);
    Tensor out(osh);
    for (std::int64_t flat = 0; flat < out.size(); ++flat)
        out[flat] = x->value[permute_src_index(flat, ostr, istr, perm)];
    return make(std::move(out), {x}, [perm, istr, ostr](Node& n) {
        n.parents[0]->ensure_grad();
        for (std::int64_t flat = 0; flat < n.grad.size(); ++flat)
            n.parents[0]->grad[permute_src_index(flat, ostr, istr, perm)] += n.grad[flat];
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const auto& as = a->value.shape();
    const auto& bs = b->value.shape();
    if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
        throw std::invalid_argument("concat_channels: incompatible shapes");
    int N = as[0], Ca = as[1], Cb = bs[1], H = as[2], W = as[3];
    Tensor out({N, Ca + Cb, H, W});
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::memcpy(out.data() + (static_cast<std::int64_t>(n) * (Ca + Cb)) * hw,
                    a->value.data() + static_cast<std::int64_t>(n) * Ca * hw,
                    sizeof(double) * Ca * hw);
        std::memcpy(out.data() + (static_cast<std::int64_t>(n) * (Ca + Cb) + Ca) * hw,
                    b->value.data() + static_cast<std::int64_t>(n) * Cb * hw,
                    sizeof(double) * Cb * hw);
    }
    return make(std::move(out), {a, b}, [N, Ca, Cb, hw](Node& n) {
        for (int k = 0; k < 2; ++k) {
            Var& p = n.parents[k];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            int C = (k == 0) ? Ca : Cb;
            int off = (k == 0) ? 0 : Ca;
            for (int i = 0; i < N; ++i) {
                const double* g = n.grad.data() + (static_cast<std::int64_t>(i) * (Ca + Cb) + off) * hw;
                double* d = p->grad.data() + static_cast<std::int64_t>(i) * C * hw;
                for (std::int64_t j = 0; j < C * hw; ++j) d[j] += g[j];
            }
        }
    });
}

Var slice_channels(const Var& x, int c0, int c1) {
    const auto& s = x->value.shape();
    if (s.size() != 4 || c0 < 0 || c1 > s[1] || c0 >= c1)
        throw std::invalid_argument("slice_channels: bad range");
    int N = s[0], C = s[1], H = s[2], W = s[3], Co = c1 - c0;
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    Tensor out({N, Co, H, W});
    for (int n = 0; n < N; ++n)
        std::memcpy(out.data() + static_cast<std::int64_t>(n) * Co * hw,
                    x->value.data() + (static_cast<std::int64_t>(n) * C + c0) * hw,
                    sizeof(double) * Co * hw);
    return make(std::move(out), {x}, [N, C, Co, c0, hw](Node& n) {
        n.parents[0]->ensure_grad();
        for (int i = 0; i < N; ++i) {
            const double* g = n.grad.data() + static_cast<std::int64_t>(i) * Co * hw;
            double* d = n.parents[0]->grad.data() + (static_cast<std::int64_t>(i) * C + c0) * hw;
            for (std::int64_t j = 0; j < Co * hw; ++j) d[j] += g[j];
        }
    });
}

Var pad_hw(const Var& x, int pad_h, int pad_w) {
    const auto& s = x->value.shape();
    if (s.size() != 4) throw std::invalid_argument("pad_hw: expects NCHW");
    int N = s[0], C = s[1], H = s[2], W = s[3];
    int OH = H + pad_h, OW = W + pad_w;
    Tensor out({N, C, OH, OW});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                std::memcpy(&out.at(n, c, h, 0), &x->value.at(n, c, h, 0), sizeof(double) * W);
    return make(std::move(out), {x}, [N, C, H, W](Node& n) {
        n.parents[0]->ensure_grad();
        for (int i = 0; i < N; ++i)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < H; ++h) {
                    const double* g = &n.grad.at(i, c, h, 0);
                    double* d = &n.parents[0]->grad.at(i, c, h, 0);
                    for (int w = 0; w < W; ++w) d[w] += g[w];
                }
    });
}

Var crop_hw(const Var& x, int out_h, int out_w) {
    const auto& s = x->value.shape();
    if (s.size() != 4 || out_h > s[2] || out_w > s[3])
        throw std::invalid_argument("crop_hw: bad size");
    int N = s[0], C = s[1];
    Tensor out({N, C, out_h, out_w});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < out_h; ++h)
                std::memcpy(&out.at(n, c, h, 0), &x->value.at(n, c, h, 0), sizeof(double) * out_w);
    return make(std::move(out), {x}, [N, C, out_h, out_w](Node& n) {
        n.parents[0]->ensure_grad();
        for (int i = 0; i < N; ++i)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < out_h; ++h) {
                    const double* g = &n.grad.at(i, c, h, 0);
                    double* d = &n.parents[0]->grad.at(i, c, h, 0);
                    for (int w = 0; w < out_w; ++w) d[w] += g[w];
                }
    });
}

// ---------------------------------------------------------------------------
// linear algebra

Var matmul(const Var& a, const Var& b) {
    const auto& as = a->value.shape();
    const auto& bs = b->value.shape();
    if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
        throw std::invalid_argument("matmul: incompatible shapes");
    int M = as[0], K = as[1], N = bs[1];
    Tensor out({M, N});
    MapM(out.data(), M, N).noalias() =
        MapCM(a->value.data(), M, K) * MapCM(b->value.data(), K, N);
    return make(std::move(out), {a, b}, [M, K, N](Node& n) {
        MapCM g(n.grad.data(), M, N);
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            MapM(n.parents[0]->grad.data(), M, K).noalias() +=
                g * MapCM(n.parents[1]->value.data(), K, N).transpose();
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            MapM(n.parents[1]->grad.data(), K, N).noalias() +=
                MapCM(n.parents[0]->value.data(), M, K).transpose() * g;
        }
    });
}

Var bmm(const Var& a, const Var& b, bool sorted_inner) {
    const auto& as = a->value.shape();
    const auto& bs = b->value.shape();
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1])
        throw std::invalid_argument("bmm: incompatible shapes");
    int B = as[0], M = as[1], K = as[2], N = bs[2];
    Tensor out({B, M, N});
    if (sorted_inner) {
        std::vector<double> buf(static_cast<size_t>(K));
        for (int bi = 0; bi < B; ++bi)
            for (int m = 0; m < M; ++m)
                for (int nn = 0; nn < N; ++nn) {
                    for (int k = 0; k < K; ++k)
                        buf[static_cast<size_t>(k)] = a->value.at(bi, m, k) * b->value.at(bi, k, nn);
                    out.at(bi, m, nn) = sorted_sum(buf.data(), K);
                }
    } else {
        // Cell-wise dots rather than a packed GEMM: every output cell runs the
        // identical accumulation code, so results do not depend on the cell's
        // position within the matrix (bitwise permutation equivariance along
        // the batch/row axes).
        for (int bi = 0; bi < B; ++bi) {
            const double* pa = a->value.data() + static_cast<std::int64_t>(bi) * M * K;
            const double* pb = b->value.data() + static_cast<std::int64_t>(bi) * K * N;
            double* po = out.data() + static_cast<std::int64_t>(bi) * M * N;
            for (int m = 0; m < M; ++m)
                for (int nn = 0; nn < N; ++nn) {
                    double acc = 0.0;
                    for (int k = 0; k < K; ++k) acc += pa[m * K + k] * pb[k * N + nn];
                    po[m * N + nn] = acc;
                }
        }
    }
    return make(std::move(out), {a, b}, [B, M, K, N](Node& n) {
        for (int bi = 0; bi < B; ++bi) {
            MapCM g(n.grad.data() + static_cast<std::int64_t>(bi) * M * N, M, N);
            if (n.parents[0]->requires_grad) {
                n.parents[0]->ensure_grad();
                MapM(n.parents[0]->grad.data() + static_cast<std::int64_t>(bi) * M * K, M, K)
                    .noalias() +=
                    g * MapCM(n.parents[1]->value.data() + static_cast<std::int64_t>(bi) * K * N, K, N)
                            .transpose();
            }
            if (n.parents[1]->requires_grad) {
                n.parents[1]->ensure_grad();
                MapM(n.parents[1]->grad.data() + static_cast<std::int64_t>(bi) * K * N, K, N)
                    .noalias() +=
                    MapCM(n.parents[0]->value.data() + static_cast<std::int64_t>(bi) * M * K, M, K)
                        .transpose() *
                    g;
            }
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1])
        throw std::invalid_argument("linear: incompatible shapes");
    int N = xs[0], Ci = xs[1], Co = ws[0];
    Tensor out({N, Co});
    // Row-wise dots (not a packed GEMM) keep each row's arithmetic independent
    // of its position, preserving bitwise equivariance for token batches.
    for (int i = 0; i < N; ++i) {
        const double* xr = x->value.data() + static_cast<std::int64_t>(i) * Ci;
        double* o = out.data() + static_cast<std::int64_t>(i) * Co;
        for (int j = 0; j < Co; ++j) {
            const double* wr = w->value.data() + static_cast<std::int64_t>(j) * Ci;
            double acc = 0.0;
            for (int k = 0; k < Ci; ++k) acc += xr[k] * wr[k];
            o[j] = b ? acc + b->value[j] : acc;
        }
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make(std::move(out), std::move(parents), [N, Ci, Co](Node& n) {
        MapCM g(n.grad.data(), N, Co);
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            MapM(n.parents[0]->grad.data(), N, Ci).noalias() +=
                g * MapCM(n.parents[1]->value.data(), Co, Ci);
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            MapM(n.parents[1]->grad.data(), Co, Ci).noalias() +=
                g.transpose() * MapCM(n.parents[0]->value.data(), N, Ci);
        }
        if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
            n.parents[2]->ensure_grad();
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < Co; ++j) n.parents[2]->grad[j] += n.grad.at(i, j);
        }
    });
}

// ---------------------------------------------------------------------------
// convolution

namespace {

void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad, int OH,
            int OW, double* cols) {
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                const int row = (c * kh + ki) * kw + kj;
                double* dst = cols + static_cast<std::int64_t>(row) * OH * OW;
                for (int oh = 0; oh < OH; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= H) {
                        std::fill(dst + static_cast<std::int64_t>(oh) * OW,
                                  dst + static_cast<std::int64_t>(oh + 1) * OW, 0.0);
                        continue;
                    }
                    const double* src = x + (static_cast<std::int64_t>(c) * H + ih) * W;
                    double* d = dst + static_cast<std::int64_t>(oh) * OW;
                    for (int ow = 0; ow < OW; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        d[ow] = (iw >= 0 && iw < W) ? src[iw] : 0.0;
                    }
                }
            }
}

void col2im(const double* cols, int C, int H, int W, int kh, int kw, int stride, int pad, int OH,
            int OW, double* x) {
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                const int row = (c * kh + ki) * kw + kj;
                const double* src = cols + static_cast<std::int64_t>(row) * OH * OW;
                for (int oh = 0; oh < OH; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= H) continue;
                    double* dst = x + (static_cast<std::int64_t>(c) * H + ih) * W;
                    const double* s = src + static_cast<std::int64_t>(oh) * OW;
                    for (int ow = 0; ow < OW; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        if (iw >= 0 && iw < W) dst[iw] += s[ow];
                    }
                }
            }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1])
        throw std::invalid_argument("conv2d: incompatible shapes");
    const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int O = ws[0], kh = ws[2], kw = ws[3];
    const int OH = (H + 2 * pad - kh) / stride + 1;
    const int OW = (W + 2 * pad - kw) / stride + 1;
    if (OH <= 0 || OW <= 0) throw std::invalid_argument("conv2d: output would be empty");
    const int CKK = C * kh * kw;
    const std::int64_t ohw = static_cast<std::int64_t>(OH) * OW;

    Tensor out({N, O, OH, OW});
    parallel_chunks(N, [&](int, std::int64_t nb, std::int64_t ne) {
        std::vector<double> cols(static_cast<size_t>(CKK) * ohw);
        for (std::int64_t n = nb; n < ne; ++n) {
            im2col(x->value.data() + n * C * H * W, C, H, W, kh, kw, stride, pad, OH, OW,
                   cols.data());
            MapM o(out.data() + n * O * ohw, O, ohw);
            o.noalias() = MapCM(w->value.data(), O, CKK) * MapCM(cols.data(), CKK, ohw);
        }
    });
    if (b) {
        for (int n = 0; n < N; ++n)
            for (int o = 0; o < O; ++o) {
                double* d = out.data() + (static_cast<std::int64_t>(n) * O + o) * ohw;
                const double bv = b->value[o];
                for (std::int64_t i = 0; i < ohw; ++i) d[i] += bv;
            }
    }

    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make(std::move(out), std::move(parents),
                [N, C, H, W, O, kh, kw, stride, pad, OH, OW, CKK, ohw](Node& n) {
                    Var& px = n.parents[0];
                    Var& pw = n.parents[1];
                    const bool need_x = px->requires_grad;
                    const bool need_w = pw->requires_grad;
                    if (need_x) px->ensure_grad();
                    if (need_w) pw->ensure_grad();

                    std::vector<Tensor> dw_chunks(kParallelChunks);
                    parallel_chunks(N, [&](int chunk, std::int64_t nb, std::int64_t ne) {
                        std::vector<double> cols(static_cast<size_t>(CKK) * ohw);
                        std::vector<double> dcols(need_x ? static_cast<size_t>(CKK) * ohw : 0);
                        if (need_w) dw_chunks[chunk] = Tensor({O, CKK});
                        for (std::int64_t i = nb; i < ne; ++i) {
                            im2col(px->value.data() + i * C * H * W, C, H, W, kh, kw, stride, pad,
                                   OH, OW, cols.data());
                            MapCM g(n.grad.data() + i * O * ohw, O, ohw);
                            if (need_w) {
                                MapM dw(dw_chunks[chunk].data(), O, CKK);
                                dw.noalias() += g * MapCM(cols.data(), CKK, ohw).transpose();
                            }
                            if (need_x) {
                                MapM dc(dcols.data(), CKK, ohw);
                                dc.noalias() =
                                    MapCM(pw->value.data(), O, CKK).transpose() * g;
                                col2im(dcols.data(), C, H, W, kh, kw, stride, pad, OH, OW,
                                       px->grad.data() + i * C * H * W);
                            }
                        }
                    });
                    if (need_w) {
                        for (const Tensor& t : dw_chunks) {
                            if (t.size() == 0) continue;
                            for (std::int64_t i = 0; i < t.size(); ++i) pw->grad[i] += t[i];
                        }
                    }
                    if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
                        Var& pb = n.parents[2];
                        pb->ensure_grad();
                        for (int i = 0; i < N; ++i)
                            for (int o = 0; o < O; ++o) {
                                const double* g =
                                    n.grad.data() + (static_cast<std::int64_t>(i) * O + o) * ohw;
                                double s = 0.0;
                                for (std::int64_t j = 0; j < ohw; ++j) s += g[j];
                                pb->grad[o] += s;
                            }
                    }
                });
}

// ---------------------------------------------------------------------------
// pooling / resampling

Var avg_pool2d(const Var& x, int k) {
    const auto& s = x->value.shape();
    if (s.size() != 4 || s[2] % k != 0 || s[3] % k != 0)
        throw std::invalid_argument("avg_pool2d: size not divisible by kernel");
    if (k == 1) return x;
    int N = s[0], C = s[1], H = s[2], W = s[3], OH = H / k, OW = W / k;
    Tensor out({N, C, OH, OW});
    const double inv = 1.0 / (k * k);
    parallel_chunks(static_cast<std::int64_t>(N) * C, [&](int, std::int64_t b, std::int64_t e) {
        for (std::int64_t nc = b; nc < e; ++nc) {
            const double* src = x->value.data() + nc * H * W;
            double* dst = out.data() + nc * OH * OW;
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = 0.0;
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < k; ++j)
                            acc += src[(oh * k + i) * W + ow * k + j];
                    dst[oh * OW + ow] = acc * inv;
                }
        }
    });
    return make(std::move(out), {x}, [N, C, H, W, OH, OW, k, inv](Node& n) {
        n.parents[0]->ensure_grad();
        for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
            const double* g = n.grad.data() + nc * OH * OW;
            double* d = n.parents[0]->grad.data() + nc * H * W;
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    const double gv = g[oh * OW + ow] * inv;
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < k; ++j)
                            d[(oh * k + i) * W + ow * k + j] += gv;
                }
        }
    });
}

namespace {
struct LerpAxis {
    std::vector<int> i0, i1;
    std::vector<double> w1;  // weight of i1; weight of i0 is 1-w1
};

LerpAxis make_lerp(int in, int out) {
    LerpAxis a;
    a.i0.resize(out);
    a.i1.resize(out);
    a.w1.resize(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        int lo = static_cast<int>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        int hi = std::min(lo + 1, in - 1);
        a.i0[o] = lo;
        a.i1[o] = hi;
        a.w1[o] = src - lo;
    }
    return a;
}
}  // namespace

Var bilinear_upsample(const Var& x, int out_h, int out_w) {
    const auto& s = x->value.shape();
    if (s.size() != 4) throw std::invalid_argument("bilinear_upsample: expects NCHW");
    int N = s[0], C = s[1], H = s[2], W = s[3];
    if (H == out_h && W == out_w) return x;
    auto ay = make_lerp(H, out_h);
    auto ax = make_lerp(W, out_w);
    Tensor out({N, C, out_h, out_w});
    parallel_chunks(static_cast<std::int64_t>(N) * C, [&](int, std::int64_t b, std::int64_t e) {
        for (std::int64_t nc = b; nc < e; ++nc) {
            const double* src = x->value.data() + nc * H * W;
            double* dst = out.data() + nc * out_h * out_w;
            for (int oh = 0; oh < out_h; ++oh) {
                const double wy = ay.w1[oh];
                const double* r0 = src + static_cast<std::int64_t>(ay.i0[oh]) * W;
                const double* r1 = src + static_cast<std::int64_t>(ay.i1[oh]) * W;
                for (int ow = 0; ow < out_w; ++ow) {
                    const double wx = ax.w1[ow];
                    const double top = r0[ax.i0[ow]] * (1 - wx) + r0[ax.i1[ow]] * wx;
                    const double bot = r1[ax.i0[ow]] * (1 - wx) + r1[ax.i1[ow]] * wx;
                    dst[oh * out_w + ow] = top * (1 - wy) + bot * wy;
                }
            }
        }
    });
    return make(std::move(out), {x}, [N, C, H, W, out_h, out_w, ay, ax](Node& n) {
        n.parents[0]->ensure_grad();
        for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
            const double* g = n.grad.data() + nc * out_h * out_w;
            double* d = n.parents[0]->grad.data() + nc * H * W;
            for (int oh = 0; oh < out_h; ++oh) {
                const double wy = ay.w1[oh];
                for (int ow = 0; ow < out_w; ++ow) {
                    const double wx = ax.w1[ow];
                    const double gv = g[oh * out_w + ow];
                    d[ay.i0[oh] * W + ax.i0[ow]] += gv * (1 - wy) * (1 - wx);
                    d[ay.i0[oh] * W + ax.i1[ow]] += gv * (1 - wy) * wx;
                    d[ay.i1[oh] * W + ax.i0[ow]] += gv * wy * (1 - wx);
                    d[ay.i1[oh] * W + ax.i1[ow]] += gv * wy * wx;
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// activations

Var relu(const Var& x) {
    Tensor out(x->value.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = x->value[i] > 0 ? x->value[i] : 0.0;
    return make(std::move(out), {x}, [](Node& n) {
        n.parents[0]->ensure_grad();
        const Tensor& v = n.parents[0]->value;
        for (std::int64_t i = 0; i < n.grad.size(); ++i)
            if (v[i] > 0) n.parents[0]->grad[i] += n.grad[i];
    });
}

Var silu(const Var& x) {
    Tensor out(x->value.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) {
        const double v = x->value[i];
        out[i] = v / (1.0 + std::exp(-v));
    }
    return make(std::move(out), {x}, [](Node& n) {
        n.parents[0]->ensure_grad();
        const Tensor& v = n.parents[0]->value;
        for (std::int64_t i = 0; i < n.grad.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-v[i]));
            n.parents[0]->grad[i] += n.grad[i] * s * (1.0 + v[i] * (1.0 - s));
        }
    });
}

Var sigmoid(const Var& x) {
    Tensor out(x->value.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
    return make(std::move(out), {x}, [](Node& n) {
        n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.size(); ++i) {
            const double y = n.value[i];
            n.parents[0]->grad[i] += n.grad[i] * y * (1.0 - y);
        }
    });
}

// ---------------------------------------------------------------------------
// normalization

namespace {

// Shared normalization backward over contiguous rows of length m.
// xhat is recomputed from stored inputs.
struct NormStats {
    std::vector<double> mean, inv_std;
};

}  // namespace

Var layer_norm_lastdim(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const auto& s = x->value.shape();
    const int m = s.back();
    const std::int64_t rows = x->value.size() / m;
    if (gamma->value.size() != m || beta->value.size() != m)
        throw std::invalid_argument("layer_norm: affine size mismatch");
    Tensor out(s);
    auto stats = std::make_shared<NormStats>();
    stats->mean.resize(static_cast<size_t>(rows));
    stats->inv_std.resize(static_cast<size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x->value.data() + r * m;
        double mu = 0;
        for (int i = 0; i < m; ++i) mu += xr[i];
        mu /= m;
        double var = 0;
        for (int i = 0; i < m; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= m;
        const double inv = 1.0 / std::sqrt(var + eps);
        stats->mean[static_cast<size_t>(r)] = mu;
        stats->inv_std[static_cast<size_t>(r)] = inv;
        double* o = out.data() + r * m;
        for (int i = 0; i < m; ++i)
            o[i] = (xr[i] - mu) * inv * gamma->value[i] + beta->value[i];
    }
    return make(std::move(out), {x, gamma, beta}, [m, rows, stats](Node& n) {
        Var& px = n.parents[0];
        Var& pg = n.parents[1];
        Var& pb = n.parents[2];
        if (px->requires_grad) px->ensure_grad();
        if (pg->requires_grad) pg->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* xr = px->value.data() + r * m;
            const double* gr = n.grad.data() + r * m;
            const double mu = stats->mean[static_cast<size_t>(r)];
            const double inv = stats->inv_std[static_cast<size_t>(r)];
            double sum_dxhat = 0, sum_dxhat_xhat = 0;
            for (int i = 0; i < m; ++i) {
                const double xhat = (xr[i] - mu) * inv;
                const double dxhat = gr[i] * pg->value[i];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
                if (pg->requires_grad) pg->grad[i] += gr[i] * xhat;
                if (pb->requires_grad) pb->grad[i] += gr[i];
            }
            if (px->requires_grad) {
                double* dx = px->grad.data() + r * m;
                for (int i = 0; i < m; ++i) {
                    const double xhat = (xr[i] - mu) * inv;
                    const double dxhat = gr[i] * pg->value[i];
                    dx[i] += inv * (dxhat - sum_dxhat / m - xhat * sum_dxhat_xhat / m);
                }
            }
        }
    });
}

Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps) {
    const auto& s = x->value.shape();
    if (s.size() != 4 || s[1] % groups != 0)
        throw std::invalid_argument("group_norm: channels not divisible by groups");
    const int N = s[0], C = s[1], H = s[2], W = s[3];
    const int cg = C / groups;
    const std::int64_t m = static_cast<std::int64_t>(cg) * H * W;
    Tensor out(s);
    auto stats = std::make_shared<NormStats>();
    stats->mean.resize(static_cast<size_t>(N) * groups);
    stats->inv_std.resize(static_cast<size_t>(N) * groups);
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < groups; ++g) {
            const double* xr = x->value.data() + (static_cast<std::int64_t>(n) * C + g * cg) * H * W;
            double mu = 0;
            for (std::int64_t i = 0; i < m; ++i) mu += xr[i];
            mu /= static_cast<double>(m);
            double var = 0;
            for (std::int64_t i = 0; i < m; ++i) var += (xr[i] - mu) * (xr[i] - mu);
            var /= static_cast<double>(m);
            const double inv = 1.0 / std::sqrt(var + eps);
            stats->mean[static_cast<size_t>(n) * groups + g] = mu;
            stats->inv_std[static_cast<size_t>(n) * groups + g] = inv;
            double* o = out.data() + (static_cast<std::int64_t>(n) * C + g * cg) * H * W;
            for (int c = 0; c < cg; ++c) {
                const double ga = gamma->value[g * cg + c];
                const double be = beta->value[g * cg + c];
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i) {
                    const std::int64_t k = static_cast<std::int64_t>(c) * H * W + i;
                    o[k] = (xr[k] - mu) * inv * ga + be;
                }
            }
        }
    return make(std::move(out), {x, gamma, beta}, [N, C, H, W, groups, cg, m, stats](Node& n) {
        Var& px = n.parents[0];
        Var& pg = n.parents[1];
        Var& pb = n.parents[2];
        if (px->requires_grad) px->ensure_grad();
        if (pg->requires_grad) pg->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        const std::int64_t hw = static_cast<std::int64_t>(H) * W;
        for (int i = 0; i < N; ++i)
            for (int g = 0; g < groups; ++g) {
                const std::int64_t base = (static_cast<std::int64_t>(i) * C + g * cg) * hw;
                const double* xr = px->value.data() + base;
                const double* gr = n.grad.data() + base;
                const double mu = stats->mean[static_cast<size_t>(i) * groups + g];
                const double inv = stats->inv_std[static_cast<size_t>(i) * groups + g];
                double sum_dxhat = 0, sum_dxhat_xhat = 0;
                for (int c = 0; c < cg; ++c) {
                    const double ga = pg->value[g * cg + c];
                    for (std::int64_t j = 0; j < hw; ++j) {
                        const std::int64_t k = static_cast<std::int64_t>(c) * hw + j;
                        const double xhat = (xr[k] - mu) * inv;
                        const double dxhat = gr[k] * ga;
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                        if (pg->requires_grad) pg->grad[g * cg + c] += gr[k] * xhat;
                        if (pb->requires_grad) pb->grad[g * cg + c] += gr[k];
                    }
                }
                if (px->requires_grad) {
                    double* dx = px->grad.data() + base;
                    const double im = 1.0 / static_cast<double>(m);
                    for (int c = 0; c < cg; ++c) {
                        const double ga = pg->value[g * cg + c];
                        for (std::int64_t j = 0; j < hw; ++j) {
                            const std::int64_t k = static_cast<std::int64_t>(c) * hw + j;
                            const double xhat = (xr[k] - mu) * inv;
                            const double dxhat = gr[k] * ga;
                            dx[k] += inv * (dxhat - sum_dxhat * im - xhat * sum_dxhat_xhat * im);
                        }
                    }
                }
            }
    });
}

// ---------------------------------------------------------------------------
// bias helpers

Var add_bias_nchw(const Var& x, const Var& bias) {
    const auto& s = x->value.shape();
    if (s.size() != 4 || bias->value.size() != s[1])
        throw std::invalid_argument("add_bias_nchw: bias size mismatch");
    int N = s[0], C = s[1];
    const std::int64_t hw = static_cast<std::int64_t>(s[2]) * s[3];
    Tensor out(s);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* src = x->value.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
            double* dst = out.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
            const double b = bias->value[c];
            for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] + b;
        }
    return make(std::move(out), {x, bias}, [N, C, hw](Node& n) {
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            for (int i = 0; i < N; ++i)
                for (int c = 0; c < C; ++c) {
                    const double* g = n.grad.data() + (static_cast<std::int64_t>(i) * C + c) * hw;
                    double s = 0;
                    for (std::int64_t j = 0; j < hw; ++j) s += g[j];
                    n.parents[1]->grad[c] += s;
                }
        }
    });
}

Var add_rowbias_nchw(const Var& x, const Var& rowbias) {
    const auto& s = x->value.shape();
    const auto& bs = rowbias->value.shape();
    if (s.size() != 4 || bs.size() != 2 || bs[0] != s[0] || bs[1] != s[1])
        throw std::invalid_argument("add_rowbias_nchw: shape mismatch");
    int N = s[0], C = s[1];
    const std::int64_t hw = static_cast<std::int64_t>(s[2]) * s[3];
    Tensor out(s);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* src = x->value.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
            double* dst = out.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
            const double b = rowbias->value.at(n, c);
            for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] + b;
        }
    return make(std::move(out), {x, rowbias}, [N, C, hw](Node& n) {
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            for (int i = 0; i < N; ++i)
                for (int c = 0; c < C; ++c) {
                    const double* g = n.grad.data() + (static_cast<std::int64_t>(i) * C + c) * hw;
                    double s = 0;
                    for (std::int64_t j = 0; j < hw; ++j) s += g[j];
                    n.parents[1]->grad.at(i, c) += s;
                }
        }
    });
}

// ---------------------------------------------------------------------------
// softmax / losses

Var softmax_lastdim(const Var& x) {
    const auto& s = x->value.shape();
    const int m = s.back();
    const std::int64_t rows = x->value.size() / m;
    Tensor out(s);
    std::vector<double> buf(static_cast<size_t>(m));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x->value.data() + r * m;
        double mx = xr[0];
        for (int i = 1; i < m; ++i) mx = std::max(mx, xr[i]);
        double* o = out.data() + r * m;
        for (int i = 0; i < m; ++i) {
            o[i] = std::exp(xr[i] - mx);
            buf[static_cast<size_t>(i)] = o[i];
        }
        const double denom = sorted_sum(buf.data(), m);
        for (int i = 0; i < m; ++i) o[i] /= denom;
    }
    return make(std::move(out), {x}, [m, rows](Node& n) {
        n.parents[0]->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* y = n.value.data() + r * m;
            const double* g = n.grad.data() + r * m;
            double dot = 0;
            for (int i = 0; i < m; ++i) dot += y[i] * g[i];
            double* dx = n.parents[0]->grad.data() + r * m;
            for (int i = 0; i < m; ++i) dx[i] += y[i] * (g[i] - dot);
        }
    });
}

Var cross_entropy_rows(const Var& logits, const std::vector<int>& targets) {
    const auto& s = logits->value.shape();
    if (s.size() != 2 || static_cast<std::int64_t>(targets.size()) != s[0])
        throw std::invalid_argument("cross_entropy_rows: shape mismatch");
    const int N = s[0], L = s[1];
    double loss = 0;
    for (int r = 0; r < N; ++r) {
        const double* xr = logits->value.data() + static_cast<std::int64_t>(r) * L;
        double mx = xr[0];
        for (int i = 1; i < L; ++i) mx = std::max(mx, xr[i]);
        double se = 0;
        for (int i = 0; i < L; ++i) se += std::exp(xr[i] - mx);
        loss += mx + std::log(se) - xr[targets[static_cast<size_t>(r)]];
    }
    Tensor out({1});
    out[0] = loss / N;
    return make(std::move(out), {logits}, [N, L, targets](Node& n) {
        n.parents[0]->ensure_grad();
        const double g = n.grad[0] / N;
        for (int r = 0; r < N; ++r) {
            const double* xr = n.parents[0]->value.data() + static_cast<std::int64_t>(r) * L;
            double mx = xr[0];
            for (int i = 1; i < L; ++i) mx = std::max(mx, xr[i]);
            double se = 0;
            for (int i = 0; i < L; ++i) se += std::exp(xr[i] - mx);
            double* dx = n.parents[0]->grad.data() + static_cast<std::int64_t>(r) * L;
            for (int i = 0; i < L; ++i) {
                const double p = std::exp(xr[i] - mx) / se;
                dx[i] += g * (p - (i == targets[static_cast<size_t>(r)] ? 1.0 : 0.0));
            }
        }
    });
}

Var weighted_layer_sum(const Var& probs, const Var& layers) {
    const auto& ps = probs->value.shape();
    const auto& ls = layers->value.shape();
    if (ps.size() != 2 || ls.size() != 4 || ps[1] != ls[0] ||
        static_cast<std::int64_t>(ps[0]) != static_cast<std::int64_t>(ls[2]) * ls[3])
        throw std::invalid_argument("weighted_layer_sum: shape mismatch");
    const int P = ps[0], L = ps[1], C = ls[1], H = ls[2], W = ls[3];
    Tensor out({C, H, W});
    std::vector<double> buf(static_cast<size_t>(L));
    for (int p = 0; p < P; ++p) {
        const double* pw = probs->value.data() + static_cast<std::int64_t>(p) * L;
        for (int c = 0; c < C; ++c) {
            for (int l = 0; l < L; ++l)
                buf[static_cast<size_t>(l)] =
                    pw[l] * layers->value[(static_cast<std::int64_t>(l) * C + c) * P + p];
            out[static_cast<std::int64_t>(c) * P + p] = sorted_sum(buf.data(), L);
        }
    }
    return make(std::move(out), {probs, layers}, [P, L, C](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        n.parents[0]->ensure_grad();
        const Tensor& lay = n.parents[1]->value;
        for (int p = 0; p < P; ++p) {
            double* dp = n.parents[0]->grad.data() + static_cast<std::int64_t>(p) * L;
            for (int l = 0; l < L; ++l) {
                double s = 0;
                for (int c = 0; c < C; ++c)
                    s += n.grad[static_cast<std::int64_t>(c) * P + p] *
                         lay[(static_cast<std::int64_t>(l) * C + c) * P + p];
                dp[l] += s;
            }
        }
    });
}

Var mean_all(const Var& x) {
    const std::int64_t n = x->value.size();
    Tensor out({1});
    double s = 0;
    for (std::int64_t i = 0; i < n; ++i) s += x->value[i];
    out[0] = s / static_cast<double>(n);
    return make(std::move(out), {x}, [n](Node& nd) {
        nd.parents[0]->ensure_grad();
        const double g = nd.grad[0] / static_cast<double>(n);
        for (std::int64_t i = 0; i < n; ++i) nd.parents[0]->grad[i] += g;
    });
}

Var sum_all(const Var& x) {
    const std::int64_t n = x->value.size();
    Tensor out({1});
    double s = 0;
    for (std::int64_t i = 0; i < n; ++i) s += x->value[i];
    out[0] = s;
    return make(std::move(out), {x}, [n](Node& nd) {
        nd.parents[0]->ensure_grad();
        const double g = nd.grad[0];
        for (std::int64_t i = 0; i < n; ++i) nd.parents[0]->grad[i] += g;
    });
}

Var l1_loss(const Var& a, const Var& b) {
    check_same_shape(a, b, "l1_loss");
    const std::int64_t n = a->value.size();
    Tensor out({1});
    double s = 0;
    for (std::int64_t i = 0; i < n; ++i) s += std::abs(a->value[i] - b->value[i]);
    out[0] = s / static_cast<double>(n);
    return make(std::move(out), {a, b}, [n](Node& nd) {
        const Tensor& av = nd.parents[0]->value;
        const Tensor& bv = nd.parents[1]->value;
        const double g = nd.grad[0] / static_cast<double>(n);
        for (int k = 0; k < 2; ++k) {
            Var& p = nd.parents[k];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            const double sgnmul = (k == 0) ? 1.0 : -1.0;
            for (std::int64_t i = 0; i < n; ++i) {
                const double d = av[i] - bv[i];
                const double sg = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                p->grad[i] += g * sg * sgnmul;
            }
        }
    });
}

Var mse_loss(const Var& a, const Var& b) {
    check_same_shape(a, b, "mse_loss");
    const std::int64_t n = a->value.size();
    Tensor out({1});
    double s = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = a->value[i] - b->value[i];
        s += d * d;
    }
    out[0] = s / static_cast<double>(n);
    return make(std::move(out), {a, b}, [n](Node& nd) {
        const Tensor& av = nd.parents[0]->value;
        const Tensor& bv = nd.parents[1]->value;
        const double g = 2.0 * nd.grad[0] / static_cast<double>(n);
        for (int k = 0; k < 2; ++k) {
            Var& p = nd.parents[k];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            const double sgnmul = (k == 0) ? 1.0 : -1.0;
            for (std::int64_t i = 0; i < n; ++i) p->grad[i] += g * (av[i] - bv[i]) * sgnmul;
        }
    });
}

}  // namespace focalforge::ag
