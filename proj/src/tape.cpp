#include "vat/tape.hpp"

#include <cmath>
#include <cstring>
#include <utility>

namespace vat {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw ContractError(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str() +
                             " do not match");
    }
}

// Zero-padded copy for 'same' convolution; pt/pl are top/left pad sizes.
Tensor pad_nchw(const Tensor& x, std::size_t pt, std::size_t pb, std::size_t pl, std::size_t pr) {
    const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    Tensor out({n, c, h + pt + pb, w + pl + pr});
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t ih = 0; ih < h; ++ih)
                std::memcpy(&out.at(in, ic, ih + pt, pl), &x.at(in, ic, ih, 0), w * sizeof(double));
    return out;
}

}  // namespace

NodeId Tape::push(const char* kind, Tensor value, std::function<void(Tape&, const Tensor&)> backprop,
                  Parameter* bound) {
    require(!backward_done_, "tape is frozen after backward(); use a fresh tape");
    nodes_.push_back(Node{kind, std::move(value), std::move(backprop), bound});
    return nodes_.size() - 1;
}

void Tape::add_grad(NodeId id, const Tensor& delta) {
    Tensor& g = grads_[id];
    if (g.numel() == 0) {
        g = delta;
        return;
    }
    double* gd = g.data();
    const double* dd = delta.data();
    for (std::size_t i = 0, n = g.numel(); i < n; ++i) gd[i] += dd[i];
}

const Tensor& Tape::grad(NodeId id) const {
    require(backward_done_, "grad() queried before backward()");
    Tensor& g = grads_[id];
    if (g.numel() == 0) g = Tensor(nodes_[id].value.shape());
    return g;
}

void Tape::backward(NodeId root) {
    require(!backward_done_, "backward() may run exactly once per tape");
    const Tensor& rv = nodes_[root].value;
    if (!rv.is_scalar()) {
        throw ContractError("backward root must be scalar, got " + rv.shape_str());
    }
    grads_.assign(nodes_.size(), Tensor{});
    grads_[root] = Tensor::ones(rv.shape());
    backward_done_ = true;
    for (std::size_t i = root + 1; i-- > 0;) {
        Node& node = nodes_[i];
        const Tensor& g = grads_[i];
        if (g.numel() == 0) continue;  // not reachable from root
        if (node.backprop) node.backprop(*this, g);
        if (node.bound) {
            double* pd = node.bound->grad.data();
            const double* gd = g.data();
            for (std::size_t k = 0, n = g.numel(); k < n; ++k) pd[k] += gd[k];
        }
    }
}

// ---------------------------------------------------------------- leaves

NodeId Tape::constant(Tensor v) { return push("constant", std::move(v), nullptr); }

NodeId Tape::param(Parameter& p) { return push("param", p.value, nullptr, &p); }

// ---------------------------------------------------- linear algebra / conv

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& av = checked(a);
    const Tensor& bv = checked(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.extent(1) != bv.extent(0)) {
        throw DimensionError("matmul: incompatible shapes " + av.shape_str() + " and " + bv.shape_str());
    }
    const std::size_t m = av.extent(0), k = av.extent(1), n = bv.extent(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double x = av.at(i, p);
            const double* brow = &bv.at(p, 0);
            double* orow = &out.at(i, 0);
            for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
        }
    }
    return push("matmul", std::move(out), [a, b, m, k, n](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        Tensor da({m, k});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const double* grow = &g.at(i, 0);
                const double* brow = &bv.at(p, 0);
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                da.at(i, p) = acc;
            }
        Tensor db({k, n});
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < m; ++i) {
                const double x = av.at(i, p);
                const double* grow = &g.at(i, 0);
                double* drow = &db.at(p, 0);
                for (std::size_t j = 0; j < n; ++j) drow[j] += x * grow[j];
            }
        t.add_grad(a, da);
        t.add_grad(b, db);
    });
}

NodeId Tape::conv2d(NodeId x, NodeId w, Padding pad) {
    const Tensor& xv = checked(x);
    const Tensor& wv = checked(w);
    if (xv.rank() != 4 || wv.rank() != 4) {
        throw DimensionError("conv2d: expected rank-4 input and kernel, got " + xv.shape_str() + " and " +
                             wv.shape_str());
    }
    if (xv.extent(1) != wv.extent(1)) {
        throw DimensionError("conv2d: channel mismatch between input " + xv.shape_str() + " and kernel " +
                             wv.shape_str());
    }
    const std::size_t n = xv.extent(0), c = xv.extent(1), h = xv.extent(2), ww = xv.extent(3);
    const std::size_t f = wv.extent(0), kh = wv.extent(2), kw = wv.extent(3);
    std::size_t pt = 0, pb = 0, pl = 0, pr = 0;
    if (pad == Padding::same) {
        pt = (kh - 1) / 2;
        pb = kh - 1 - pt;
        pl = (kw - 1) / 2;
        pr = kw - 1 - pl;
    }
    const std::size_t hp = h + pt + pb, wp = ww + pl + pr;
    if (kh > hp || kw > wp) {
        throw DimensionError("conv2d: kernel " + wv.shape_str() + " larger than padded input " +
                             shape_str({n, c, hp, wp}));
    }
    const std::size_t ho = hp - kh + 1, wo = wp - kw + 1;
    Tensor xp = (pt || pb || pl || pr) ? pad_nchw(xv, pt, pb, pl, pr) : xv;
    Tensor out({n, f, ho, wo});
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t jf = 0; jf < f; ++jf)
            for (std::size_t ic = 0; ic < c; ++ic)
                for (std::size_t u = 0; u < kh; ++u)
                    for (std::size_t v = 0; v < kw; ++v) {
                        const double kv = wv.at(jf, ic, u, v);
                        if (kv == 0.0) continue;
                        for (std::size_t i = 0; i < ho; ++i) {
                            const double* xrow = &xp.at(in, ic, i + u, v);
                            double* orow = &out.at(in, jf, i, 0);
                            for (std::size_t j = 0; j < wo; ++j) orow[j] += kv * xrow[j];
                        }
                    }

    auto backprop = [x, w, n, c, h, ww, f, kh, kw, pt, pb, pl, pr, hp, wp, ho, wo](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(x);
        const Tensor& wv = t.value(w);
        Tensor xp = (pt || pb || pl || pr) ? pad_nchw(xv, pt, pb, pl, pr) : xv;
        Tensor dxp({n, c, hp, wp});
        Tensor dw({f, c, kh, kw});
        for (std::size_t in = 0; in < n; ++in)
            for (std::size_t jf = 0; jf < f; ++jf)
                for (std::size_t ic = 0; ic < c; ++ic)
                    for (std::size_t u = 0; u < kh; ++u)
                        for (std::size_t v = 0; v < kw; ++v) {
                            const double kv = wv.at(jf, ic, u, v);
                            double acc = 0.0;
                            for (std::size_t i = 0; i < ho; ++i) {
                                const double* grow = &g.at(in, jf, i, 0);
                                const double* xrow = &xp.at(in, ic, i + u, v);
                                double* drow = &dxp.at(in, ic, i + u, v);
                                for (std::size_t j = 0; j < wo; ++j) {
                                    acc += grow[j] * xrow[j];
                                    drow[j] += kv * grow[j];
                                }
                            }
                            dw.at(jf, ic, u, v) += acc;
                        }
        Tensor dx({n, c, h, ww});
        for (std::size_t in = 0; in < n; ++in)
            for (std::size_t ic = 0; ic < c; ++ic)
                for (std::size_t ih = 0; ih < h; ++ih)
                    std::memcpy(&dx.at(in, ic, ih, 0), &dxp.at(in, ic, ih + pt, pl), ww * sizeof(double));
        t.add_grad(x, dx);
        t.add_grad(w, dw);
    };
    return push("conv2d", std::move(out), std::move(backprop));
}

NodeId Tape::maxpool2(NodeId x) {
    const Tensor& xv = checked(x);
    if (xv.rank() != 4) throw DimensionError("maxpool2: expected rank-4 input, got " + xv.shape_str());
    const std::size_t n = xv.extent(0), c = xv.extent(1), h = xv.extent(2), w = xv.extent(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw DimensionError("maxpool2: spatial extents must be even, got " + xv.shape_str());
    }
    const std::size_t ho = h / 2, wo = w / 2;
    Tensor out({n, c, ho, wo});
    std::vector<std::size_t> argmax(out.numel());
    std::size_t o = 0;
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t i = 0; i < ho; ++i)
                for (std::size_t j = 0; j < wo; ++j, ++o) {
                    double best = -1e308;
                    std::size_t best_idx = 0;
                    for (std::size_t di = 0; di < 2; ++di)
                        for (std::size_t dj = 0; dj < 2; ++dj) {
                            std::size_t flat =
                                ((in * c + ic) * h + 2 * i + di) * w + 2 * j + dj;
                            if (xv[flat] > best) {
                                best = xv[flat];
                                best_idx = flat;
                            }
                        }
                    out[o] = best;
                    argmax[o] = best_idx;
                }
    return push("maxpool2", std::move(out),
                [x, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
                    Tensor dx(t.value(x).shape());
                    for (std::size_t i = 0; i < g.numel(); ++i) dx[argmax[i]] += g[i];
                    t.add_grad(x, dx);
                });
}

// ------------------------------------------------------------- elementwise

NodeId Tape::relu(NodeId x) {
    const Tensor& xv = checked(x);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return push("relu", std::move(out), [x](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(x);
        Tensor dx(xv.shape());
        for (std::size_t i = 0; i < xv.numel(); ++i) dx[i] = xv[i] > 0.0 ? g[i] : 0.0;
        t.add_grad(x, dx);
    });
}

NodeId Tape::sigmoid(NodeId x) {
    const Tensor& xv = checked(x);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    NodeId id = push("sigmoid", std::move(out), nullptr);
    nodes_[id].backprop = [x, id](Tape& t, const Tensor& g) {
        const Tensor& y = t.value(id);
        Tensor dx(y.shape());
        for (std::size_t i = 0; i < y.numel(); ++i) dx[i] = g[i] * y[i] * (1.0 - y[i]);
        t.add_grad(x, dx);
    };
    return id;
}

NodeId Tape::log(NodeId x) {
    const Tensor& xv = checked(x);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = std::log(xv[i]);
    return push("log", std::move(out), [x](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(x);
        Tensor dx(xv.shape());
        for (std::size_t i = 0; i < xv.numel(); ++i) dx[i] = g[i] / xv[i];
        t.add_grad(x, dx);
    });
}

NodeId Tape::sqrt(NodeId x) {
    const Tensor& xv = checked(x);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = std::sqrt(xv[i] > 0.0 ? xv[i] : 0.0);
    NodeId id = push("sqrt", std::move(out), nullptr);
    // Derivative forced to 0 near 0 so constant inputs (variance 0) stay finite.
    nodes_[id].backprop = [x, id](Tape& t, const Tensor& g) {
        const Tensor& y = t.value(id);
        Tensor dx(y.shape());
        for (std::size_t i = 0; i < y.numel(); ++i) dx[i] = y[i] > 1e-9 ? g[i] / (2.0 * y[i]) : 0.0;
        t.add_grad(x, dx);
    };
    return id;
}

NodeId Tape::abs(NodeId x) {
    const Tensor& xv = checked(x);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = std::fabs(xv[i]);
    return push("abs", std::move(out), [x](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(x);
        Tensor dx(xv.shape());
        for (std::size_t i = 0; i < xv.numel(); ++i)
            dx[i] = xv[i] > 0.0 ? g[i] : (xv[i] < 0.0 ? -g[i] : 0.0);
        t.add_grad(x, dx);
    });
}

NodeId Tape::clamp(NodeId x, double lo, double hi) {
    const Tensor& xv = checked(x);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] < lo ? lo : (xv[i] > hi ? hi : xv[i]);
    return push("clamp", std::move(out), [x, lo, hi](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(x);
        Tensor dx(xv.shape());
        for (std::size_t i = 0; i < xv.numel(); ++i) dx[i] = (xv[i] > lo && xv[i] < hi) ? g[i] : 0.0;
        t.add_grad(x, dx);
    });
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& av = checked(a);
    const Tensor& bv = checked(b);
    require_same_shape(av, bv, "add");
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i];
    return push("add", std::move(out), [a, b](Tape& t, const Tensor& g) {
        t.add_grad(a, g);
        t.add_grad(b, g);
    });
}

NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& av = checked(a);
    const Tensor& bv = checked(b);
    require_same_shape(av, bv, "sub");
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] - bv[i];
    return push("sub", std::move(out), [a, b](Tape& t, const Tensor& g) {
        t.add_grad(a, g);
        Tensor neg(g.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) neg[i] = -g[i];
        t.add_grad(b, neg);
    });
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& av = checked(a);
    const Tensor& bv = checked(b);
    require_same_shape(av, bv, "mul");
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] * bv[i];
    return push("mul", std::move(out), [a, b](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        Tensor da(av.shape()), db(bv.shape());
        for (std::size_t i = 0; i < av.numel(); ++i) {
            da[i] = g[i] * bv[i];
            db[i] = g[i] * av[i];
        }
        t.add_grad(a, da);
        t.add_grad(b, db);
    });
}

NodeId Tape::div(NodeId a, NodeId b) {
    const Tensor& av = checked(a);
    const Tensor& bv = checked(b);
    require_same_shape(av, bv, "div");
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] / bv[i];
    return push("div", std::move(out), [a, b](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        Tensor da(av.shape()), db(bv.shape());
        for (std::size_t i = 0; i < av.numel(); ++i) {
            da[i] = g[i] / bv[i];
            db[i] = -g[i] * av[i] / (bv[i] * bv[i]);
        }
        t.add_grad(a, da);
        t.add_grad(b, db);
    });
}

NodeId Tape::affine(NodeId x, double a, double b) {
    const Tensor& xv = checked(x);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = a * xv[i] + b;
    return push("affine", std::move(out), [x, a](Tape& t, const Tensor& g) {
        Tensor dx(g.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) dx[i] = a * g[i];
        t.add_grad(x, dx);
    });
}

NodeId Tape::mul_const(NodeId x, Tensor c) {
    const Tensor& xv = checked(x);
    require_same_shape(xv, c, "mul_const");
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] * c[i];
    return push("mul_const", std::move(out), [x, c = std::move(c)](Tape& t, const Tensor& g) {
        Tensor dx(g.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) dx[i] = g[i] * c[i];
        t.add_grad(x, dx);
    });
}

NodeId Tape::add_rowvec(NodeId x, NodeId b) {
    const Tensor& xv = checked(x);
    const Tensor& bv = checked(b);
    if (xv.rank() != 2 || bv.rank() != 1 || bv.extent(0) != xv.extent(1)) {
        throw DimensionError("add_rowvec: incompatible shapes " + xv.shape_str() + " and " + bv.shape_str());
    }
    const std::size_t rows = xv.extent(0), cols = xv.extent(1);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = xv.at(i, j) + bv[j];
    return push("add_rowvec", std::move(out), [x, b, rows, cols](Tape& t, const Tensor& g) {
        t.add_grad(x, g);
        Tensor db({cols});
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) db[j] += g.at(i, j);
        t.add_grad(b, db);
    });
}

NodeId Tape::add_chanvec(NodeId x, NodeId b) {
    const Tensor& xv = checked(x);
    const Tensor& bv = checked(b);
    if (xv.rank() != 4 || bv.rank() != 1 || bv.extent(0) != xv.extent(1)) {
        throw DimensionError("add_chanvec: incompatible shapes " + xv.shape_str() + " and " + bv.shape_str());
    }
    const std::size_t n = xv.extent(0), c = xv.extent(1), hw = xv.extent(2) * xv.extent(3);
    Tensor out(xv.shape());
    std::size_t o = 0;
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t k = 0; k < hw; ++k, ++o) out[o] = xv[o] + bv[ic];
    return push("add_chanvec", std::move(out), [x, b, n, c, hw](Tape& t, const Tensor& g) {
        t.add_grad(x, g);
        Tensor db({c});
        std::size_t o = 0;
        for (std::size_t in = 0; in < n; ++in)
            for (std::size_t ic = 0; ic < c; ++ic)
                for (std::size_t k = 0; k < hw; ++k, ++o) db[ic] += g[o];
        t.add_grad(b, db);
    });
}

// -------------------------------------------------------------- reductions

NodeId Tape::spatial_mean(NodeId x) {
    const Tensor& xv = checked(x);
    if (xv.rank() != 4) throw DimensionError("spatial_mean: expected rank-4 input, got " + xv.shape_str());
    const std::size_t n = xv.extent(0), c = xv.extent(1), hw = xv.extent(2) * xv.extent(3);
    Tensor out({n, c});
    std::size_t o = 0;
    for (std::size_t i = 0; i < n * c; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < hw; ++k, ++o) acc += xv[o];
        out[i] = acc / static_cast<double>(hw);
    }
    return push("spatial_mean", std::move(out), [x, n, c, hw](Tape& t, const Tensor& g) {
        Tensor dx(t.value(x).shape());
        std::size_t o = 0;
        for (std::size_t i = 0; i < n * c; ++i) {
            const double gv = g[i] / static_cast<double>(hw);
            for (std::size_t k = 0; k < hw; ++k, ++o) dx[o] = gv;
        }
        t.add_grad(x, dx);
    });
}

NodeId Tape::spatial_var(NodeId x) {
    const Tensor& xv = checked(x);
    if (xv.rank() != 4) throw DimensionError("spatial_var: expected rank-4 input, got " + xv.shape_str());
    const std::size_t n = xv.extent(0), c = xv.extent(1), hw = xv.extent(2) * xv.extent(3);
    if (hw < 2) {
        throw DegenerateReductionError("spatial_var: variance over a single element, input " + xv.shape_str());
    }
    Tensor out({n, c});
    Tensor means({n, c});
    std::size_t o = 0;
    for (std::size_t i = 0; i < n * c; ++i) {
        double acc = 0.0;
        const std::size_t base = o;
        for (std::size_t k = 0; k < hw; ++k, ++o) acc += xv[o];
        const double mu = acc / static_cast<double>(hw);
        means[i] = mu;
        double ss = 0.0;
        for (std::size_t k = 0; k < hw; ++k) {
            const double d = xv[base + k] - mu;
            ss += d * d;
        }
        out[i] = ss / static_cast<double>(hw - 1);
    }
    return push("spatial_var", std::move(out),
                [x, n, c, hw, means = std::move(means)](Tape& t, const Tensor& g) {
                    const Tensor& xv = t.value(x);
                    Tensor dx(xv.shape());
                    std::size_t o = 0;
                    for (std::size_t i = 0; i < n * c; ++i) {
                        const double s = 2.0 * g[i] / static_cast<double>(hw - 1);
                        for (std::size_t k = 0; k < hw; ++k, ++o) dx[o] = s * (xv[o] - means[i]);
                    }
                    t.add_grad(x, dx);
                });
}

NodeId Tape::mean_all(NodeId x) {
    const Tensor& xv = checked(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.numel(); ++i) acc += xv[i];
    const std::size_t n = xv.numel();
    return push("mean_all", Tensor::scalar(acc / static_cast<double>(n)),
                [x, n](Tape& t, const Tensor& g) {
                    Tensor dx(t.value(x).shape());
                    const double gv = g[0] / static_cast<double>(n);
                    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] = gv;
                    t.add_grad(x, dx);
                });
}

NodeId Tape::sum_all(NodeId x) {
    const Tensor& xv = checked(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.numel(); ++i) acc += xv[i];
    return push("sum_all", Tensor::scalar(acc), [x](Tape& t, const Tensor& g) {
        Tensor dx(t.value(x).shape());
        for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] = g[0];
        t.add_grad(x, dx);
    });
}

// --------------------------------------------------------------- structure

NodeId Tape::concat(const std::vector<NodeId>& xs, std::size_t axis) {
    require(!xs.empty(), "concat: needs at least one input");
    const Tensor& first = checked(xs[0]);
    const std::size_t rank = first.rank();
    if (axis >= rank) throw DimensionError("concat: axis out of range for " + first.shape_str());
    Shape out_shape = first.shape();
    std::size_t axis_total = 0;
    for (NodeId id : xs) {
        const Tensor& v = checked(id);
        if (v.rank() != rank) {
            throw DimensionError("concat: rank mismatch between " + first.shape_str() + " and " + v.shape_str());
        }
        for (std::size_t d = 0; d < rank; ++d) {
            if (d != axis && v.extent(d) != first.extent(d)) {
                throw DimensionError("concat: extents differ off the concat axis: " + first.shape_str() +
                                     " vs " + v.shape_str());
            }
        }
        axis_total += v.extent(axis);
    }
    out_shape[axis] = axis_total;

    std::size_t outer = 1, tail = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first.extent(d);
    for (std::size_t d = axis + 1; d < rank; ++d) tail *= first.extent(d);

    Tensor out(out_shape);
    const std::size_t out_inner = axis_total * tail;
    std::size_t offset = 0;  // running offset within a concat slab, in elements
    std::vector<std::size_t> offsets;
    for (NodeId id : xs) {
        const Tensor& v = checked(id);
        const std::size_t inner = v.extent(axis) * tail;
        offsets.push_back(offset);
        for (std::size_t o = 0; o < outer; ++o)
            std::memcpy(out.data() + o * out_inner + offset, v.data() + o * inner, inner * sizeof(double));
        offset += inner;
    }
    return push("concat", std::move(out),
                [xs, offsets, outer, tail, out_inner](Tape& t, const Tensor& g) {
                    for (std::size_t k = 0; k < xs.size(); ++k) {
                        const Tensor& v = t.value(xs[k]);
                        Tensor dx(v.shape());
                        const std::size_t inner = dx.numel() / outer;
                        for (std::size_t o = 0; o < outer; ++o)
                            std::memcpy(dx.data() + o * inner, g.data() + o * out_inner + offsets[k],
                                        inner * sizeof(double));
                        t.add_grad(xs[k], dx);
                    }
                });
}

NodeId Tape::reshape(NodeId x, Shape shape) {
    const Tensor& xv = checked(x);
    if (shape_numel(shape) != xv.numel()) {
        throw DimensionError("reshape: cannot view " + xv.shape_str() + " as " + shape_str(shape));
    }
    Tensor out(std::move(shape), xv.vec());
    return push("reshape", std::move(out), [x](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(x);
        t.add_grad(x, Tensor(xv.shape(), g.vec()));
    });
}

NodeId Tape::segment(NodeId x, std::size_t offset, std::size_t len) {
    const Tensor& xv = checked(x);
    if (xv.rank() != 1 || offset + len > xv.numel()) {
        throw DimensionError("segment: [" + std::to_string(offset) + "," + std::to_string(offset + len) +
                             ") out of range for " + xv.shape_str());
    }
    Tensor out({len});
    std::memcpy(out.data(), xv.data() + offset, len * sizeof(double));
    return push("segment", std::move(out), [x, offset, len](Tape& t, const Tensor& g) {
        Tensor dx(t.value(x).shape());
        std::memcpy(dx.data() + offset, g.data(), len * sizeof(double));
        t.add_grad(x, dx);
    });
}

NodeId Tape::grl(NodeId x) {
    // Forward is the bit-exact identity; backward multiplies by exactly -1.
    return push("grl", checked(x), [x](Tape& t, const Tensor& g) {
        Tensor dx(g.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) dx[i] = -g[i];
        t.add_grad(x, dx);
    });
}

}  // namespace vat
