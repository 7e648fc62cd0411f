#include "pemsbench/tape.hpp"

#include "pemsbench/errors.hpp"
#include "pemsbench/kernels.hpp"

#include <cmath>

namespace pemsbench {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::int64_t shape_size(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

void require(bool ok, const char* what) {
    if (!ok) throw NumericError(std::string("tape: ") + what);
}

} // namespace

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    const std::int64_t n = shape_size(shape);
    t.shape = std::move(shape);
    t.data.assign(static_cast<size_t>(n), 0.0);
    return t;
}

std::int64_t Tensor::rows() const {
    if (shape.empty()) return 1;
    std::int64_t n = 1;
    for (size_t i = 0; i + 1 < shape.size(); ++i) n *= shape[i];
    return n;
}

void Tensor::fill(double v) {
    for (auto& x : data) x = v;
}

const Tensor& Tape::value(Id id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.param ? n.param->value : n.owned_value;
}

const Tensor& Tape::grad(Id id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.param ? n.param->grad : n.owned_grad;
}

Tensor& Tape::grad_mut(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    return n.param ? n.param->grad : n.owned_grad;
}

Tape::Id Tape::push(Tensor value, std::function<void(Tape&, Id)> back) {
    Node node;
    node.owned_value = std::move(value);
    node.owned_grad = Tensor::zeros(node.owned_value.shape);
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::constant(Tensor v) { return push(std::move(v), nullptr); }

Tape::Id Tape::leaf(Parameter& p) {
    Node node;
    node.param = &p;
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::matmul(Id a, Id b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require(av.ndim() == 2 && bv.ndim() == 2, "matmul expects 2-D operands");
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    require(bv.dim(0) == k, "matmul inner dimension mismatch");
    Tensor out = Tensor::zeros({m, n});
    kernels::active().matmul_nn(av.data.data(), bv.data.data(),
                                out.data.data(), m, k, n);
    return push(std::move(out), [a, b, m, k, n](Tape& t, Id self) {
        const auto& ks = kernels::active();
        const Tensor& gc = t.grad(self);
        const Tensor& av2 = t.value(a);
        const Tensor& bv2 = t.value(b);
        Tensor tmp = Tensor::zeros({m, k});
        ks.matmul_nt(gc.data.data(), bv2.data.data(), tmp.data.data(), m, n, k);
        ks.axpy(1.0, tmp.data.data(), t.grad_mut(a).data.data(), tmp.size());
        Tensor tmp2 = Tensor::zeros({k, n});
        ks.matmul_tn(av2.data.data(), gc.data.data(), tmp2.data.data(), k, m,
                     n);
        ks.axpy(1.0, tmp2.data.data(), t.grad_mut(b).data.data(), tmp2.size());
    });
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require(av.ndim() == 2 && bv.ndim() == 2, "matmul_nt expects 2-D operands");
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(0);
    require(bv.dim(1) == k, "matmul_nt inner dimension mismatch");
    Tensor out = Tensor::zeros({m, n});
    kernels::active().matmul_nt(av.data.data(), bv.data.data(),
                                out.data.data(), m, k, n);
    return push(std::move(out), [a, b, m, k, n](Tape& t, Id self) {
        const auto& ks = kernels::active();
        const Tensor& gc = t.grad(self); // [m,n]
        const Tensor& av2 = t.value(a);
        const Tensor& bv2 = t.value(b);
        Tensor tmp = Tensor::zeros({m, k});
        ks.matmul_nn(gc.data.data(), bv2.data.data(), tmp.data.data(), m, n, k);
        ks.axpy(1.0, tmp.data.data(), t.grad_mut(a).data.data(), tmp.size());
        Tensor tmp2 = Tensor::zeros({n, k});
        ks.matmul_tn(gc.data.data(), av2.data.data(), tmp2.data.data(), n, m,
                     k);
        ks.axpy(1.0, tmp2.data.data(), t.grad_mut(b).data.data(), tmp2.size());
    });
}

Tape::Id Tape::bmm_nt(Id a, Id b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require(av.ndim() == 3 && bv.ndim() == 3, "bmm_nt expects 3-D operands");
    const int batches = av.dim(0), m = av.dim(1), k = av.dim(2);
    const int n = bv.dim(1);
    require(bv.dim(0) == batches && bv.dim(2) == k, "bmm_nt shape mismatch");
    Tensor out = Tensor::zeros({batches, m, n});
    const auto& ks = kernels::active();
    for (int i = 0; i < batches; ++i) {
        ks.matmul_nt(av.data.data() + static_cast<std::int64_t>(i) * m * k,
                     bv.data.data() + static_cast<std::int64_t>(i) * n * k,
                     out.data.data() + static_cast<std::int64_t>(i) * m * n, m,
                     k, n);
    }
    return push(std::move(out), [a, b, batches, m, k, n](Tape& t, Id self) {
        const auto& ks = kernels::active();
        const Tensor& gc = t.grad(self);
        const Tensor& av2 = t.value(a);
        const Tensor& bv2 = t.value(b);
        Tensor tmp = Tensor::zeros({m, k});
        Tensor tmp2 = Tensor::zeros({n, k});
        for (int i = 0; i < batches; ++i) {
            const double* gci =
                gc.data.data() + static_cast<std::int64_t>(i) * m * n;
            ks.matmul_nn(gci,
                         bv2.data.data() + static_cast<std::int64_t>(i) * n * k,
                         tmp.data.data(), m, n, k);
            ks.axpy(1.0, tmp.data.data(),
                    t.grad_mut(a).data.data() +
                        static_cast<std::int64_t>(i) * m * k,
                    tmp.size());
            ks.matmul_tn(gci,
                         av2.data.data() + static_cast<std::int64_t>(i) * m * k,
                         tmp2.data.data(), n, m, k);
            ks.axpy(1.0, tmp2.data.data(),
                    t.grad_mut(b).data.data() +
                        static_cast<std::int64_t>(i) * n * k,
                    tmp2.size());
        }
    });
}

Tape::Id Tape::bmm_nn(Id a, Id b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require(av.ndim() == 3 && bv.ndim() == 3, "bmm_nn expects 3-D operands");
    const int batches = av.dim(0), m = av.dim(1), k = av.dim(2);
    const int n = bv.dim(2);
    require(bv.dim(0) == batches && bv.dim(1) == k, "bmm_nn shape mismatch");
    Tensor out = Tensor::zeros({batches, m, n});
    const auto& ks = kernels::active();
    for (int i = 0; i < batches; ++i) {
        ks.matmul_nn(av.data.data() + static_cast<std::int64_t>(i) * m * k,
                     bv.data.data() + static_cast<std::int64_t>(i) * k * n,
                     out.data.data() + static_cast<std::int64_t>(i) * m * n, m,
                     k, n);
    }
    return push(std::move(out), [a, b, batches, m, k, n](Tape& t, Id self) {
        const auto& ks = kernels::active();
        const Tensor& gc = t.grad(self);
        const Tensor& av2 = t.value(a);
        const Tensor& bv2 = t.value(b);
        Tensor tmp = Tensor::zeros({m, k});
        Tensor tmp2 = Tensor::zeros({k, n});
        for (int i = 0; i < batches; ++i) {
            const double* gci =
                gc.data.data() + static_cast<std::int64_t>(i) * m * n;
            ks.matmul_nt(gci,
                         bv2.data.data() + static_cast<std::int64_t>(i) * k * n,
                         tmp.data.data(), m, n, k);
            ks.axpy(1.0, tmp.data.data(),
                    t.grad_mut(a).data.data() +
                        static_cast<std::int64_t>(i) * m * k,
                    tmp.size());
            ks.matmul_tn(av2.data.data() + static_cast<std::int64_t>(i) * m * k,
                         gci, tmp2.data.data(), k, m, n);
            ks.axpy(1.0, tmp2.data.data(),
                    t.grad_mut(b).data.data() +
                        static_cast<std::int64_t>(i) * k * n,
                    tmp2.size());
        }
    });
}

Tape::Id Tape::add(Id a, Id b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require(av.shape == bv.shape, "add shape mismatch");
    Tensor out = av;
    kernels::active().axpy(1.0, bv.data.data(), out.data.data(), out.size());
    return push(std::move(out), [a, b](Tape& t, Id self) {
        const Tensor& gc = t.grad(self);
        const auto& ks = kernels::active();
        ks.axpy(1.0, gc.data.data(), t.grad_mut(a).data.data(), gc.size());
        ks.axpy(1.0, gc.data.data(), t.grad_mut(b).data.data(), gc.size());
    });
}

Tape::Id Tape::add_rowvec(Id a, Id bias) {
    const Tensor& av = value(a);
    const Tensor& bv = value(bias);
    const int d = av.last_dim();
    require(bv.ndim() == 1 && bv.dim(0) == d, "add_rowvec bias width mismatch");
    Tensor out = av;
    const std::int64_t rows = av.rows();
    for (std::int64_t r = 0; r < rows; ++r) {
        kernels::active().axpy(1.0, bv.data.data(),
                               out.data.data() + r * d, d);
    }
    return push(std::move(out), [a, bias, d](Tape& t, Id self) {
        const Tensor& gc = t.grad(self);
        const auto& ks = kernels::active();
        ks.axpy(1.0, gc.data.data(), t.grad_mut(a).data.data(), gc.size());
        Tensor& gb = t.grad_mut(bias);
        const std::int64_t rows = gc.size() / d;
        for (std::int64_t r = 0; r < rows; ++r) {
            ks.axpy(1.0, gc.data.data() + r * d, gb.data.data(), d);
        }
    });
}

Tape::Id Tape::mul_scalar(Id a, double s) {
    Tensor out = value(a);
    for (auto& x : out.data) x *= s;
    return push(std::move(out), [a, s](Tape& t, Id self) {
        const Tensor& gc = t.grad(self);
        kernels::active().axpy(s, gc.data.data(), t.grad_mut(a).data.data(),
                               gc.size());
    });
}

Tape::Id Tape::relu(Id a) {
    Tensor out = value(a);
    for (auto& x : out.data) {
        if (x < 0.0) x = 0.0;
    }
    return push(std::move(out), [a](Tape& t, Id self) {
        const Tensor& gc = t.grad(self);
        const Tensor& av = t.value(a);
        Tensor& ga = t.grad_mut(a);
        for (std::int64_t i = 0; i < gc.size(); ++i) {
            if (av.data[static_cast<size_t>(i)] > 0.0) {
                ga.data[static_cast<size_t>(i)] +=
                    gc.data[static_cast<size_t>(i)];
            }
        }
    });
}

Tape::Id Tape::gelu(Id a) {
    const Tensor& av = value(a);
    Tensor out = av;
    for (auto& x : out.data) {
        x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    return push(std::move(out), [a](Tape& t, Id self) {
        const Tensor& gc = t.grad(self);
        const Tensor& av2 = t.value(a);
        Tensor& ga = t.grad_mut(a);
        for (std::int64_t i = 0; i < gc.size(); ++i) {
            const double x = av2.data[static_cast<size_t>(i)];
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            ga.data[static_cast<size_t>(i)] +=
                gc.data[static_cast<size_t>(i)] * (cdf + x * pdf);
        }
    });
}

Tape::Id Tape::softmax_lastdim(Id a) {
    const Tensor& av = value(a);
    Tensor out = av;
    const int d = av.last_dim();
    require(d >= 1, "softmax over empty dim");
    const std::int64_t rows = av.rows();
    for (std::int64_t r = 0; r < rows; ++r) {
        double* row = out.data.data() + r * d;
        double mx = row[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < d; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < d; ++j) row[j] /= sum;
    }
    return push(std::move(out), [a, d](Tape& t, Id self) {
        const Tensor& gc = t.grad(self);
        const Tensor& y = t.value(self);
        Tensor& ga = t.grad_mut(a);
        const std::int64_t rows = y.size() / d;
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* yr = y.data.data() + r * d;
            const double* gr = gc.data.data() + r * d;
            double dotv = 0.0;
            for (int j = 0; j < d; ++j) dotv += yr[j] * gr[j];
            double* gar = ga.data.data() + r * d;
            for (int j = 0; j < d; ++j) gar[j] += yr[j] * (gr[j] - dotv);
        }
    });
}

Tape::Id Tape::layer_norm(Id a, Id gain, Id bias, double eps) {
    const Tensor& av = value(a);
    const Tensor& gv = value(gain);
    const Tensor& bv = value(bias);
    const int d = av.last_dim();
    require(gv.ndim() == 1 && gv.dim(0) == d && bv.ndim() == 1 &&
                bv.dim(0) == d,
            "layer_norm gain/bias width mismatch");
    const std::int64_t rows = av.rows();
    Tensor out = Tensor::zeros(av.shape);
    Tensor xhat = Tensor::zeros(av.shape);
    Tensor inv_std = Tensor::zeros({static_cast<int>(rows)});
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = av.data.data() + r * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += x[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = x[j] - mean;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std.data[static_cast<size_t>(r)] = is;
        double* xh = xhat.data.data() + r * d;
        double* o = out.data.data() + r * d;
        for (int j = 0; j < d; ++j) {
            xh[j] = (x[j] - mean) * is;
            o[j] = gv.data[static_cast<size_t>(j)] * xh[j] +
                   bv.data[static_cast<size_t>(j)];
        }
    }
    return push(std::move(out), [a, gain, bias, d, xhat = std::move(xhat),
                                 inv_std = std::move(inv_std)](Tape& t,
                                                               Id self) {
        const Tensor& gc = t.grad(self);
        const Tensor& gv2 = t.value(gain);
        Tensor& ga = t.grad_mut(a);
        Tensor& gg = t.grad_mut(gain);
        Tensor& gb = t.grad_mut(bias);
        const std::int64_t rows = gc.size() / d;
        std::vector<double> q(static_cast<size_t>(d));
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* gr = gc.data.data() + r * d;
            const double* xh = xhat.data.data() + r * d;
            const double is = inv_std.data[static_cast<size_t>(r)];
            double mq = 0.0, mqx = 0.0;
            for (int j = 0; j < d; ++j) {
                gg.data[static_cast<size_t>(j)] += gr[j] * xh[j];
                gb.data[static_cast<size_t>(j)] += gr[j];
                q[static_cast<size_t>(j)] =
                    gv2.data[static_cast<size_t>(j)] * gr[j];
                mq += q[static_cast<size_t>(j)];
                mqx += q[static_cast<size_t>(j)] * xh[j];
            }
            mq /= d;
            mqx /= d;
            double* gar = ga.data.data() + r * d;
            for (int j = 0; j < d; ++j) {
                gar[j] += (q[static_cast<size_t>(j)] - mq - xh[j] * mqx) * is;
            }
        }
    });
}

Tape::Id Tape::dropout(Id a, std::vector<std::uint8_t> keep_mask,
                       double keep_prob) {
    const Tensor& av = value(a);
    require(static_cast<std::int64_t>(keep_mask.size()) == av.size(),
            "dropout mask size mismatch");
    require(keep_prob > 0.0 && keep_prob <= 1.0, "dropout keep_prob range");
    Tensor out = av;
    const double scale = 1.0 / keep_prob;
    for (std::int64_t i = 0; i < out.size(); ++i) {
        out.data[static_cast<size_t>(i)] =
            keep_mask[static_cast<size_t>(i)]
                ? out.data[static_cast<size_t>(i)] * scale
                : 0.0;
    }
    return push(std::move(out), [a, mask = std::move(keep_mask),
                                 scale](Tape& t, Id self) {
        const Tensor& gc = t.grad(self);
        Tensor& ga = t.grad_mut(a);
        for (std::int64_t i = 0; i < gc.size(); ++i) {
            if (mask[static_cast<size_t>(i)]) {
                ga.data[static_cast<size_t>(i)] +=
                    gc.data[static_cast<size_t>(i)] * scale;
            }
        }
    });
}

Tape::Id Tape::reshape(Id a, std::vector<int> shape) {
    const Tensor& av = value(a);
    require(shape_size(shape) == av.size(), "reshape size mismatch");
    Tensor out(std::move(shape), av.data);
    return push(std::move(out), [a](Tape& t, Id self) {
        const Tensor& gc = t.grad(self);
        kernels::active().axpy(1.0, gc.data.data(), t.grad_mut(a).data.data(),
                               gc.size());
    });
}

Tape::Id Tape::slice_lastdim(Id a, int start, int len) {
    const Tensor& av = value(a);
    const int d = av.last_dim();
    require(start >= 0 && len >= 1 && start + len <= d,
            "slice_lastdim out of range");
    std::vector<int> shape = av.shape;
    shape.back() = len;
    Tensor out = Tensor::zeros(shape);
    const std::int64_t rows = av.rows();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* src = av.data.data() + r * d + start;
        double* dst = out.data.data() + r * len;
        for (int j = 0; j < len; ++j) dst[j] = src[j];
    }
    return push(std::move(out), [a, start, len, d](Tape& t, Id self) {
        const Tensor& gc = t.grad(self);
        Tensor& ga = t.grad_mut(a);
        const std::int64_t rows = gc.size() / len;
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* src = gc.data.data() + r * len;
            double* dst = ga.data.data() + r * d + start;
            for (int j = 0; j < len; ++j) dst[j] += src[j];
        }
    });
}

Tape::Id Tape::concat_lastdim(const std::vector<Id>& parts) {
    require(!parts.empty(), "concat of zero parts");
    const Tensor& first = value(parts[0]);
    std::int64_t rows = first.rows();
    int total = 0;
    for (Id p : parts) {
        const Tensor& pv = value(p);
        require(pv.rows() == rows, "concat row mismatch");
        total += pv.last_dim();
    }
    std::vector<int> shape = first.shape;
    shape.back() = total;
    Tensor out = Tensor::zeros(shape);
    int offset = 0;
    for (Id p : parts) {
        const Tensor& pv = value(p);
        const int d = pv.last_dim();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* src = pv.data.data() + r * d;
            double* dst = out.data.data() + r * total + offset;
            for (int j = 0; j < d; ++j) dst[j] = src[j];
        }
        offset += d;
    }
    return push(std::move(out),
                [parts, total](Tape& t, Id self) {
                    const Tensor& gc = t.grad(self);
                    const std::int64_t rows = gc.size() / total;
                    int offset = 0;
                    for (Id p : parts) {
                        Tensor& gp = t.grad_mut(p);
                        const int d = t.value(p).last_dim();
                        for (std::int64_t r = 0; r < rows; ++r) {
                            const double* src =
                                gc.data.data() + r * total + offset;
                            double* dst = gp.data.data() + r * d;
                            for (int j = 0; j < d; ++j) dst[j] += src[j];
                        }
                        offset += d;
                    }
                });
}

Tape::Id Tape::broadcast_rows(Id v, int rows) {
    const Tensor& vv = value(v);
    require(vv.ndim() == 1, "broadcast_rows expects a vector");
    const int d = vv.dim(0);
    Tensor out = Tensor::zeros({rows, d});
    for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < d; ++j) {
            out.data[static_cast<size_t>(r) * d + j] =
                vv.data[static_cast<size_t>(j)];
        }
    }
    return push(std::move(out), [v, d](Tape& t, Id self) {
        const Tensor& gc = t.grad(self);
        Tensor& gv = t.grad_mut(v);
        const std::int64_t rows = gc.size() / d;
        for (std::int64_t r = 0; r < rows; ++r) {
            kernels::active().axpy(1.0, gc.data.data() + r * d,
                                   gv.data.data(), d);
        }
    });
}

Tape::Id Tape::mse_loss(Id pred, Id target) {
    const Tensor& pv = value(pred);
    const Tensor& tv = value(target);
    require(pv.shape == tv.shape, "mse shape mismatch");
    require(pv.size() >= 1, "mse over empty tensor");
    const double sse = kernels::active().sq_err_sum(pv.data.data(),
                                                    tv.data.data(), pv.size());
    Tensor out = Tensor::scalar(sse / static_cast<double>(pv.size()));
    return push(std::move(out), [pred, target](Tape& t, Id self) {
        const double go = t.grad(self).data[0];
        const Tensor& pv2 = t.value(pred);
        const Tensor& tv2 = t.value(target);
        Tensor& gp = t.grad_mut(pred);
        const double scale = 2.0 * go / static_cast<double>(pv2.size());
        for (std::int64_t i = 0; i < pv2.size(); ++i) {
            gp.data[static_cast<size_t>(i)] +=
                scale * (pv2.data[static_cast<size_t>(i)] -
                         tv2.data[static_cast<size_t>(i)]);
        }
    });
}

void Tape::backward(Id root) {
    require(value(root).size() == 1, "backward root must be scalar");
    grad_mut(root).data[0] = 1.0;
    for (Id i = static_cast<Id>(nodes_.size()) - 1; i >= 0; --i) {
        auto& node = nodes_[static_cast<size_t>(i)];
        if (node.back) node.back(*this, i);
    }
}

} // namespace pemsbench
