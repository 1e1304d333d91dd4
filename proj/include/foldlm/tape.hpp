#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "foldlm/mat.hpp"

namespace foldlm {

struct VarId {
    std::uint32_t idx = UINT32_MAX;
    bool valid() const { return idx != UINT32_MAX; }
};

/// Reverse-mode autodiff over dense matrices. Operations append nodes that
/// record their inputs and a backward rule; backward() walks the tape in
/// reverse creation order, which is a valid topological order because ops
/// only ever reference earlier nodes.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    VarId leaf(Mat value) { return push(std::move(value), {}); }

    const Mat& val(VarId v) const { return nodes_[v.idx].value; }
    const Mat& grad(VarId v) const { return nodes_[v.idx].grad; }
    Mat& grad_mut(VarId v) { return nodes_[v.idx].grad; }
    std::size_t size() const { return nodes_.size(); }
    bool grad_enabled() const { return grad_enabled_; }

    void backward(VarId loss) {
        if (!grad_enabled_) throw NumericError("backward on a forward-only tape");
        Node& top = nodes_[loss.idx];
        if (top.value.size() != 1) throw ShapeError("backward: loss must be 1x1");
        top.grad(0, 0) = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].back) nodes_[i].back();
        }
    }

    VarId matmul(VarId a, VarId b) {
        Mat y = foldlm::matmul(val(a), val(b));
        return push(std::move(y), [this, a, b](VarId out) {
            const Mat& g = grad(out);
            axpy_into(a, foldlm::matmul_nt(g, val(b)));
            axpy_into(b, foldlm::matmul_tn(val(a), g));
        });
    }

    /// y = a * b^T
    VarId matmul_nt(VarId a, VarId b) {
        Mat y = foldlm::matmul_nt(val(a), val(b));
        return push(std::move(y), [this, a, b](VarId out) {
            const Mat& g = grad(out);
            axpy_into(a, foldlm::matmul(g, val(b)));
            axpy_into(b, foldlm::matmul_tn(g, val(a)));
        });
    }

    VarId add(VarId a, VarId b) {
        Mat y = foldlm::add(val(a), val(b));
        return push(std::move(y), [this, a, b](VarId out) {
            axpy_into(a, grad(out));
            axpy_into(b, grad(out));
        });
    }

    VarId sub(VarId a, VarId b) {
        Mat y = foldlm::sub(val(a), val(b));
        return push(std::move(y), [this, a, b](VarId out) {
            axpy_into(a, grad(out));
            Mat neg = grad(out);
            for (double& v : neg.raw()) v = -v;
            axpy_into(b, neg);
        });
    }

    VarId scale(VarId a, double c) {
        Mat y = foldlm::scale(val(a), c);
        return push(std::move(y), [this, a, c](VarId out) {
            Mat g = grad(out);
            for (double& v : g.raw()) v *= c;
            axpy_into(a, g);
        });
    }

    /// y = s * a with s a 1x1 node.
    VarId scale_by_scalar(VarId a, VarId s) {
        if (val(s).size() != 1) throw ShapeError("scale_by_scalar: scalar must be 1x1");
        const double sv = val(s)(0, 0);
        Mat y = foldlm::scale(val(a), sv);
        return push(std::move(y), [this, a, s, sv](VarId out) {
            const Mat& g = grad(out);
            Mat ga = g;
            for (double& v : ga.raw()) v *= sv;
            axpy_into(a, ga);
            double ds = 0.0;
            const Mat& av = val(a);
            for (std::size_t i = 0; i < av.size(); ++i) ds += g.raw()[i] * av.raw()[i];
            grad_mut(s)(0, 0) += ds;
        });
    }

    VarId add_const(VarId a, const Mat& c) {
        Mat y = foldlm::add(val(a), c);
        return push(std::move(y), [this, a](VarId out) { axpy_into(a, grad(out)); });
    }

    /// Broadcast-add a 1 x d row vector to every row.
    VarId add_rowvec(VarId a, VarId b) {
        const Mat& av = val(a);
        const Mat& bv = val(b);
        if (bv.rows() != 1 || bv.cols() != av.cols())
            throw ShapeError("add_rowvec: " + shape_str(av) + " + " + shape_str(bv));
        Mat y = av;
        for (std::size_t i = 0; i < y.rows(); ++i)
            for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += bv(0, j);
        return push(std::move(y), [this, a, b](VarId out) {
            const Mat& g = grad(out);
            axpy_into(a, g);
            Mat& gb = grad_mut(b);
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
        });
    }

    /// Per-column affine map y_ij = a_ij * g_j + b_j (g, b are 1 x d).
    VarId affine_cols(VarId a, VarId gvar, VarId bvar) {
        const Mat& av = val(a);
        const Mat& gv = val(gvar);
        const Mat& bv = val(bvar);
        if (gv.rows() != 1 || gv.cols() != av.cols() || bv.rows() != 1 || bv.cols() != av.cols())
            throw ShapeError("affine_cols: bad scale/shift shapes");
        Mat y = av;
        for (std::size_t i = 0; i < y.rows(); ++i)
            for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) = av(i, j) * gv(0, j) + bv(0, j);
        return push(std::move(y), [this, a, gvar, bvar](VarId out) {
            const Mat& g = grad(out);
            const Mat& av = val(a);
            const Mat& gv = val(gvar);
            Mat& ga = grad_mut(a);
            Mat& gg = grad_mut(gvar);
            Mat& gb = grad_mut(bvar);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    ga(i, j) += g(i, j) * gv(0, j);
                    gg(0, j) += g(i, j) * av(i, j);
                    gb(0, j) += g(i, j);
                }
            }
        });
    }

    VarId relu(VarId a) {
        Mat y = val(a);
        for (double& v : y.raw()) v = v > 0.0 ? v : 0.0;
        return push(std::move(y), [this, a](VarId out) {
            const Mat& g = grad(out);
            const Mat& av = val(a);
            Mat& ga = grad_mut(a);
            for (std::size_t i = 0; i < g.size(); ++i)
                if (av.raw()[i] > 0.0) ga.raw()[i] += g.raw()[i];
        });
    }

    /// Row-wise layer normalization with learnable scale and shift.
    VarId layer_norm(VarId a, VarId gain, VarId bias, double eps = 1e-5) {
        const Mat& x = val(a);
        const Mat& gv = val(gain);
        const Mat& bv = val(bias);
        const std::size_t n = x.rows();
        const std::size_t d = x.cols();
        if (gv.rows() != 1 || gv.cols() != d || bv.rows() != 1 || bv.cols() != d)
            throw ShapeError("layer_norm: bad gain/bias shapes");
        Mat y(n, d);
        Mat xhat(n, d);
        std::vector<double> inv_std(n);
        for (std::size_t i = 0; i < n; ++i) {
            double mu = 0.0;
            for (std::size_t j = 0; j < d; ++j) mu += x(i, j);
            mu /= static_cast<double>(d);
            double var = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double c = x(i, j) - mu;
                var += c * c;
            }
            var /= static_cast<double>(d);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[i] = is;
            for (std::size_t j = 0; j < d; ++j) {
                xhat(i, j) = (x(i, j) - mu) * is;
                y(i, j) = xhat(i, j) * gv(0, j) + bv(0, j);
            }
        }
        return push(std::move(y),
                    [this, a, gain, bias, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)](VarId out) {
                        const Mat& g = grad(out);
                        const Mat& gv = val(gain);
                        Mat& ga = grad_mut(a);
                        Mat& gg = grad_mut(gain);
                        Mat& gb = grad_mut(bias);
                        const std::size_t n = g.rows();
                        const std::size_t d = g.cols();
                        for (std::size_t i = 0; i < n; ++i) {
                            double mean_h = 0.0;
                            double mean_hx = 0.0;
                            for (std::size_t j = 0; j < d; ++j) {
                                const double h = g(i, j) * gv(0, j);
                                mean_h += h;
                                mean_hx += h * xhat(i, j);
                                gg(0, j) += g(i, j) * xhat(i, j);
                                gb(0, j) += g(i, j);
                            }
                            mean_h /= static_cast<double>(d);
                            mean_hx /= static_cast<double>(d);
                            for (std::size_t j = 0; j < d; ++j) {
                                const double h = g(i, j) * gv(0, j);
                                ga(i, j) += inv_std[i] * (h - mean_h - xhat(i, j) * mean_hx);
                            }
                        }
                    });
    }

    /// Row-wise softmax over the causal prefix j <= i; future positions get
    /// exactly zero weight.
    VarId causal_softmax(VarId a) {
        const Mat& s = val(a);
        const std::size_t n = s.rows();
        if (s.cols() != n) throw ShapeError("causal_softmax: matrix must be square");
        Mat y(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            double m = s(i, 0);
            for (std::size_t j = 1; j <= i; ++j) m = std::max(m, s(i, j));
            double z = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                y(i, j) = std::exp(s(i, j) - m);
                z += y(i, j);
            }
            for (std::size_t j = 0; j <= i; ++j) y(i, j) /= z;
        }
        return push(std::move(y), [this, a](VarId out) {
            const Mat& g = grad(out);
            const Mat& y = val(out);
            Mat& ga = grad_mut(a);
            const std::size_t n = g.rows();
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j <= i; ++j) dot += g(i, j) * y(i, j);
                for (std::size_t j = 0; j <= i; ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
            }
        });
    }

    VarId col_slice(VarId a, std::size_t c0, std::size_t c1) {
        const Mat& av = val(a);
        if (c0 >= c1 || c1 > av.cols()) throw ShapeError("col_slice: bad range");
        Mat y(av.rows(), c1 - c0);
        for (std::size_t i = 0; i < av.rows(); ++i)
            for (std::size_t j = c0; j < c1; ++j) y(i, j - c0) = av(i, j);
        return push(std::move(y), [this, a, c0](VarId out) {
            const Mat& g = grad(out);
            Mat& ga = grad_mut(a);
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) ga(i, c0 + j) += g(i, j);
        });
    }

    VarId concat_cols(const std::vector<VarId>& parts) {
        if (parts.empty()) throw ShapeError("concat_cols: empty");
        const std::size_t n = val(parts[0]).rows();
        std::size_t total = 0;
        for (VarId p : parts) {
            if (val(p).rows() != n) throw ShapeError("concat_cols: row mismatch");
            total += val(p).cols();
        }
        Mat y(n, total);
        std::size_t off = 0;
        for (VarId p : parts) {
            const Mat& pv = val(p);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < pv.cols(); ++j) y(i, off + j) = pv(i, j);
            off += pv.cols();
        }
        return push(std::move(y), [this, parts](VarId out) {
            const Mat& g = grad(out);
            std::size_t off = 0;
            for (VarId p : parts) {
                Mat& gp = grad_mut(p);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, off + j);
                off += gp.cols();
            }
        });
    }

    /// Row gather: y_i = table[ids[i]]. Backward scatter-adds into the table.
    VarId gather_rows(VarId table, std::vector<std::size_t> ids) {
        const Mat& t = val(table);
        Mat y(ids.size(), t.cols());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] >= t.rows()) throw ShapeError("gather_rows: id out of range");
            for (std::size_t j = 0; j < t.cols(); ++j) y(i, j) = t(ids[i], j);
        }
        return push(std::move(y), [this, table, ids = std::move(ids)](VarId out) {
            const Mat& g = grad(out);
            Mat& gt = grad_mut(table);
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gt(ids[i], j) += g(i, j);
        });
    }

    /// Pairwise squared distances d_ij = ||x_i - x_j||^2 of the rows.
    VarId pairwise_sqdist(VarId a) {
        const Mat& x = val(a);
        const std::size_t n = x.rows();
        Mat y(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d2 = sqdist_rows(x, i, x, j);
                y(i, j) = d2;
                y(j, i) = d2;
            }
        }
        return push(std::move(y), [this, a](VarId out) {
            const Mat& g = grad(out);
            const Mat& x = val(a);
            Mat& ga = grad_mut(a);
            const std::size_t n = x.rows();
            const std::size_t d = x.cols();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) {
                    const double c = 2.0 * (g(i, j) + g(j, i));
                    if (c == 0.0) continue;
                    const double* xi = x.row(i);
                    const double* xj = x.row(j);
                    double* gi = ga.row(i);
                    double* gj = ga.row(j);
                    for (std::size_t k = 0; k < d; ++k) {
                        const double diff = c * (xi[k] - xj[k]);
                        gi[k] += diff;
                        gj[k] -= diff;
                    }
                }
            }
        });
    }

    /// w_ij = exp(-a_ij) with a zero diagonal. With `causal` set, only
    /// entries j < i are kept; the rest are exactly zero.
    VarId exp_neg_masked(VarId a, bool causal) {
        const Mat& s = val(a);
        const std::size_t n = s.rows();
        if (s.cols() != n) throw ShapeError("exp_neg_masked: matrix must be square");
        Mat y(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t jmax = causal ? i : n;
            for (std::size_t j = 0; j < jmax; ++j) {
                if (j == i) continue;
                y(i, j) = std::exp(-s(i, j));
            }
        }
        return push(std::move(y), [this, a](VarId out) {
            const Mat& g = grad(out);
            const Mat& y = val(out);
            Mat& ga = grad_mut(a);
            for (std::size_t i = 0; i < g.size(); ++i)
                ga.raw()[i] -= g.raw()[i] * y.raw()[i];
        });
    }

    /// Row sums as an n x 1 column.
    VarId row_sums(VarId a) {
        const Mat& av = val(a);
        Mat y(av.rows(), 1);
        for (std::size_t i = 0; i < av.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < av.cols(); ++j) s += av(i, j);
            y(i, 0) = s;
        }
        return push(std::move(y), [this, a](VarId out) {
            const Mat& g = grad(out);
            Mat& ga = grad_mut(a);
            for (std::size_t i = 0; i < ga.rows(); ++i)
                for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
        });
    }

    /// y_ij = v_i * a_ij with v an n x 1 column.
    VarId scale_rows(VarId a, VarId v) {
        const Mat& av = val(a);
        const Mat& vv = val(v);
        if (vv.cols() != 1 || vv.rows() != av.rows()) throw ShapeError("scale_rows: bad v shape");
        Mat y = av;
        for (std::size_t i = 0; i < y.rows(); ++i)
            for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) *= vv(i, 0);
        return push(std::move(y), [this, a, v](VarId out) {
            const Mat& g = grad(out);
            const Mat& av = val(a);
            const Mat& vv = val(v);
            Mat& ga = grad_mut(a);
            Mat& gv = grad_mut(v);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                double dv = 0.0;
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    ga(i, j) += g(i, j) * vv(i, 0);
                    dv += g(i, j) * av(i, j);
                }
                gv(i, 0) += dv;
            }
        });
    }

    /// Guarded row normalization (rows below the norm guard pass through).
    VarId row_normalize_g(VarId a) {
        const Mat& x = val(a);
        Mat y = foldlm::row_normalize(x);
        return push(std::move(y), [this, a](VarId out) {
            const Mat& g = grad(out);
            const Mat& x = val(a);
            const Mat& y = val(out);
            Mat& ga = grad_mut(a);
            for (std::size_t i = 0; i < x.rows(); ++i) {
                const double norm = std::sqrt(row_sqnorm(x, i));
                if (norm < kRowNormGuard) {
                    for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) += g(i, j);
                    continue;
                }
                double dot = 0.0;
                for (std::size_t j = 0; j < x.cols(); ++j) dot += g(i, j) * y(i, j);
                for (std::size_t j = 0; j < x.cols(); ++j)
                    ga(i, j) += (g(i, j) - y(i, j) * dot) / norm;
            }
        });
    }

    /// Mean next-token negative log-likelihood in nats. targets[i] is the
    /// class index for row i of the logits.
    VarId cross_entropy_mean(VarId logits, std::vector<std::size_t> targets) {
        const Mat& l = val(logits);
        if (targets.size() != l.rows()) throw ShapeError("cross_entropy_mean: target count");
        const std::size_t n = l.rows();
        const std::size_t v = l.cols();
        Mat probs(n, v);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (targets[i] >= v) throw ShapeError("cross_entropy_mean: target out of range");
            double m = l(i, 0);
            for (std::size_t j = 1; j < v; ++j) m = std::max(m, l(i, j));
            double z = 0.0;
            for (std::size_t j = 0; j < v; ++j) {
                probs(i, j) = std::exp(l(i, j) - m);
                z += probs(i, j);
            }
            for (std::size_t j = 0; j < v; ++j) probs(i, j) /= z;
            total += m + std::log(z) - l(i, targets[i]);
        }
        Mat y(1, 1);
        y(0, 0) = total / static_cast<double>(n);
        if (!grad_enabled_) return push(std::move(y), {});
        return push(std::move(y), [this, logits, targets = std::move(targets),
                                   probs = std::move(probs)](VarId out) {
            const double go = grad(out)(0, 0);
            Mat& gl = grad_mut(logits);
            const std::size_t n = probs.rows();
            const std::size_t v = probs.cols();
            const double scale = go / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < v; ++j)
                    gl(i, j) += scale * (probs(i, j) - (j == targets[i] ? 1.0 : 0.0));
            }
        });
    }

    /// Sum of all entries as 1x1 (test utility).
    VarId sum_all(VarId a) {
        double s = 0.0;
        for (double v : val(a).raw()) s += v;
        Mat y(1, 1);
        y(0, 0) = s;
        return push(std::move(y), [this, a](VarId out) {
            const double go = grad(out)(0, 0);
            Mat& ga = grad_mut(a);
            for (double& v : ga.raw()) v += go;
        });
    }

private:
    struct Node {
        Mat value;
        Mat grad;
        std::function<void()> back;
    };

    VarId push(Mat value, std::function<void(VarId)> back) {
        Node n;
        n.value = std::move(value);
        const VarId id{static_cast<std::uint32_t>(nodes_.size())};
        if (grad_enabled_) {
            n.grad = Mat(n.value.rows(), n.value.cols());
            if (back) n.back = [f = std::move(back), id]() { f(id); };
        }
        nodes_.push_back(std::move(n));
        return id;
    }

    void axpy_into(VarId v, const Mat& g) {
        Mat& dst = grad_mut(v);
        for (std::size_t i = 0; i < dst.size(); ++i) dst.raw()[i] += g.raw()[i];
    }

    bool grad_enabled_;
    std::vector<Node> nodes_;
};

}  // namespace foldlm
