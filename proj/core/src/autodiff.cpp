#include "whvi/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "whvi/error.hpp"

namespace whvi::ad {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape(), 0.0) {}

const Tensor& Variable::value() const { return tape().value(id_); }
const Tensor& Variable::grad() const { return tape().grad(id_); }

Tape& Variable::tape() const {
    if (tape_ == nullptr) throw Error("use of an unbound Variable");
    return *tape_;
}

Tape::Node& Tape::node_of(const Variable& v) {
    if (v.tape_ != this) throw Error("Variable belongs to a different tape");
    return nodes_[v.id_];
}

Variable Tape::constant(Tensor value) {
    if (!value.all_finite()) {
        throw NonFiniteError("constant", "non-finite constant tensor " + to_string(value.shape()));
    }
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Variable(this, nodes_.size() - 1);
}

Variable Tape::leaf(Parameter& param) {
    if (!param.value.all_finite()) {
        throw NonFiniteError("leaf", "parameter '" + param.name + "' is not finite");
    }
    Node n;
    n.op = "leaf";
    n.value = param.value;
    n.requires_grad = true;
    n.param = &param;
    nodes_.push_back(std::move(n));
    if (std::find(params_.begin(), params_.end(), &param) == params_.end()) {
        params_.push_back(&param);
    }
    return Variable(this, nodes_.size() - 1);
}

Variable Tape::record(const char* op, Tensor value, const std::vector<Variable>& inputs,
                      Adjoint adjoint) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || node_of(in).requires_grad;
    if (!value.all_finite()) {
        throw NonFiniteError(op, std::string("non-finite result in '") + op + "' of shape " +
                                     to_string(value.shape()));
    }
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) n.adjoint = std::move(adjoint);
    nodes_.push_back(std::move(n));
    return Variable(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(std::size_t id) const { return nodes_[id].grad; }

void Tape::accumulate(std::size_t id, const Tensor& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (g.size() != n.value.size()) {
        throw ShapeError(std::string("adjoint of '") + n.op + "' has shape " +
                         to_string(g.shape()) + ", value has " + to_string(n.value.shape()));
    }
    auto dst = n.grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    n.has_grad = true;
}

void Tape::backward(const Variable& objective, std::vector<std::size_t>* visit_order) {
    Node& top = node_of(objective);
    if (top.value.size() != 1) {
        throw ShapeError("backward() needs a scalar objective, got " +
                         to_string(top.value.shape()));
    }
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad = n.requires_grad ? Tensor(n.value.shape(), 0.0) : Tensor();
    }
    if (!top.requires_grad) return;
    top.grad.fill(1.0);
    top.has_grad = true;

    for (std::size_t id = objective.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.has_grad) continue;
        if (visit_order != nullptr) visit_order->push_back(id);
        if (!n.grad.all_finite()) {
            throw NonFiniteError(n.op, std::string("non-finite adjoint at '") + n.op + "'");
        }
        if (n.param != nullptr) {
            auto dst = n.param->grad.data();
            auto src = n.grad.data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
        if (n.adjoint) n.adjoint(*this, id);
    }
}

void Tape::reset() {
    nodes_.clear();
    for (Parameter* p : params_) p->zero_grad();
    params_.clear();
}

namespace {

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    if (a == b) return a;
    if (is_suffix(b, a)) return a;
    if (is_suffix(a, b)) return b;
    throw ShapeError(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                     " do not broadcast");
}

// Elementwise binary op. `f(x, y)` computes the value, `dfdx`/`dfdy` the
// partials given (x, y, out).
template <class F, class DX, class DY>
Variable binary(const char* op, const Variable& a, const Variable& b, F f, DX dfdx, DY dfdy) {
    Tape& tape = a.tape();
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Shape out_shape = broadcast_shape(av.shape(), bv.shape(), op);
    const std::size_t n = numel(out_shape);
    const std::size_t na = av.size();
    const std::size_t nb = bv.size();
    Tensor out(out_shape);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i % na], bv[i % nb]);

    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return tape.record(op, std::move(out), {a, b},
                       [ia, ib, n, dfdx, dfdy](Tape& t, std::size_t self) {
                           const Tensor& x = t.value(ia);
                           const Tensor& y = t.value(ib);
                           const Tensor& o = t.value(self);
                           const Tensor& g = t.grad(self);
                           const std::size_t nx = x.size();
                           const std::size_t ny = y.size();
                           if (t.requires_grad(ia)) {
                               Tensor gx(x.shape(), 0.0);
                               for (std::size_t i = 0; i < n; ++i)
                                   gx[i % nx] += g[i] * dfdx(x[i % nx], y[i % ny], o[i]);
                               t.accumulate(ia, gx);
                           }
                           if (t.requires_grad(ib)) {
                               Tensor gy(y.shape(), 0.0);
                               for (std::size_t i = 0; i < n; ++i)
                                   gy[i % ny] += g[i] * dfdy(x[i % nx], y[i % ny], o[i]);
                               t.accumulate(ib, gy);
                           }
                       });
}

template <class F, class D>
Variable unary(const char* op, const Variable& a, F f, D dfdx) {
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    const std::size_t ia = a.id();
    return a.tape().record(op, std::move(out), {a}, [ia, dfdx](Tape& t, std::size_t self) {
        const Tensor& x = t.value(ia);
        const Tensor& o = t.value(self);
        const Tensor& g = t.grad(self);
        Tensor gx(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] = g[i] * dfdx(x[i], o[i]);
        t.accumulate(ia, gx);
    });
}

std::size_t last_dim(const Tensor& t, const char* op) {
    if (t.rank() == 0) throw ShapeError(std::string(op) + " needs rank >= 1");
    return t.shape().back();
}

}  // namespace

Variable add(const Variable& a, const Variable& b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Variable sub(const Variable& a, const Variable& b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Variable mul(const Variable& a, const Variable& b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Variable div(const Variable& a, const Variable& b) {
    return binary(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double o) { return -o / y; });
}

Variable add(const Variable& a, const Tensor& b) { return add(a, a.tape().constant(b)); }
Variable mul(const Variable& a, const Tensor& b) { return mul(a, a.tape().constant(b)); }

Variable scale(const Variable& a, double c) {
    return unary(
        "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Variable add_scalar(const Variable& a, double c) {
    return unary(
        "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Variable neg(const Variable& a) { return scale(a, -1.0); }

Variable relu(const Variable& a) {
    return unary(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Variable exp(const Variable& a) {
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

Variable log(const Variable& a) {
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Variable square(const Variable& a) {
    return unary(
        "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Variable sqrt(const Variable& a) {
    return unary(
        "sqrt", a, [](double x) { return std::sqrt(x); },
        [](double, double o) { return 0.5 / o; });
}

Variable cos(const Variable& a) {
    return unary(
        "cos", a, [](double x) { return std::cos(x); },
        [](double x, double) { return -std::sin(x); });
}

Variable sum(const Variable& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const std::size_t ia = a.id();
    return a.tape().record("sum", Tensor::scalar(s), {a}, [ia](Tape& t, std::size_t self) {
        t.accumulate(ia, Tensor(t.value(ia).shape(), t.grad(self).item()));
    });
}

Variable mean(const Variable& a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Variable sum_last(const Variable& a) {
    const Tensor& av = a.value();
    const std::size_t n = last_dim(av, "sum_last");
    Shape out_shape(av.shape().begin(), av.shape().end() - 1);
    Tensor out(out_shape, 0.0);
    for (std::size_t r = 0; r < out.size(); ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += av[r * n + j];
        out[r] = s;
    }
    const std::size_t ia = a.id();
    return a.tape().record("sum_last", std::move(out), {a}, [ia, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor gx(t.value(ia).shape());
        for (std::size_t r = 0; r < g.size(); ++r)
            for (std::size_t j = 0; j < n; ++j) gx[r * n + j] = g[r];
        t.accumulate(ia, gx);
    });
}

Variable reshape(const Variable& a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    const std::size_t ia = a.id();
    return a.tape().record("reshape", std::move(out), {a}, [ia](Tape& t, std::size_t self) {
        t.accumulate(ia, t.grad(self).reshaped(t.value(ia).shape()));
    });
}

Variable transpose(const Variable& a) {
    Tensor out = a.value().transposed();
    const std::size_t ia = a.id();
    return a.tape().record("transpose", std::move(out), {a}, [ia](Tape& t, std::size_t self) {
        t.accumulate(ia, t.grad(self).transposed());
    });
}

namespace {

Tensor swap_last2(const Tensor& x) {
    const Shape& s = x.shape();
    const std::size_t n = s[s.size() - 2];
    const std::size_t m = s[s.size() - 1];
    Shape out_shape = s;
    std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
    Tensor out(out_shape);
    const std::size_t batches = x.size() / (n * m);
    for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t off = b * n * m;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) out[off + j * n + i] = x[off + i * m + j];
    }
    return out;
}

}  // namespace

Variable transpose_last2(const Variable& a) {
    if (a.shape().size() < 2) {
        throw ShapeError("transpose_last2 needs rank >= 2, got " + to_string(a.shape()));
    }
    const std::size_t ia = a.id();
    return a.tape().record("transpose_last2", swap_last2(a.value()), {a},
                           [ia](Tape& t, std::size_t self) {
                               t.accumulate(ia, swap_last2(t.grad(self)));
                           });
}

Variable matmul(const Variable& a, const Variable& b) {
    Tensor out = whvi::matmul(a.value(), b.value());
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.tape().record("matmul", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ia)) t.accumulate(ia, whvi::matmul(g, t.value(ib).transposed()));
        if (t.requires_grad(ib)) t.accumulate(ib, whvi::matmul(t.value(ia).transposed(), g));
    });
}

Variable pad_last(const Variable& a, std::size_t width) {
    const Tensor& av = a.value();
    const std::size_t n = last_dim(av, "pad_last");
    if (width < n) {
        throw ShapeError("pad_last: width " + std::to_string(width) + " < last dim of " +
                         to_string(av.shape()));
    }
    if (width == n) return a;
    Shape out_shape = av.shape();
    out_shape.back() = width;
    Tensor out(out_shape, 0.0);
    const std::size_t rows = av.size() / n;
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(r * n), n,
                    out.data().begin() + static_cast<std::ptrdiff_t>(r * width));
    const std::size_t ia = a.id();
    return a.tape().record("pad_last", std::move(out), {a},
                           [ia, n, width, rows](Tape& t, std::size_t self) {
                               const Tensor& g = t.grad(self);
                               Tensor gx(t.value(ia).shape());
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < n; ++j)
                                       gx[r * n + j] = g[r * width + j];
                               t.accumulate(ia, gx);
                           });
}

Variable slice_last(const Variable& a, std::size_t begin, std::size_t end) {
    const Tensor& av = a.value();
    const std::size_t n = last_dim(av, "slice_last");
    if (begin > end || end > n) {
        throw ShapeError("slice_last: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of bounds for " + to_string(av.shape()));
    }
    if (begin == 0 && end == n) return a;
    const std::size_t w = end - begin;
    Shape out_shape = av.shape();
    out_shape.back() = w;
    Tensor out(out_shape);
    const std::size_t rows = av.size() / n;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j) out[r * w + j] = av[r * n + begin + j];
    const std::size_t ia = a.id();
    return a.tape().record("slice_last", std::move(out), {a},
                           [ia, n, w, begin, rows](Tape& t, std::size_t self) {
                               const Tensor& g = t.grad(self);
                               Tensor gx(t.value(ia).shape(), 0.0);
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < w; ++j)
                                       gx[r * n + begin + j] = g[r * w + j];
                               t.accumulate(ia, gx);
                           });
}

Variable concat_last(const std::vector<Variable>& parts) {
    if (parts.empty()) throw ShapeError("concat_last of zero tensors");
    if (parts.size() == 1) return parts.front();
    const Shape& first = parts.front().shape();
    Shape lead(first.begin(), first.end() - 1);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.empty() || Shape(s.begin(), s.end() - 1) != lead) {
            throw ShapeError("concat_last: leading shapes differ: " + to_string(first) + " vs " +
                             to_string(s));
        }
        widths.push_back(s.back());
        total += s.back();
    }
    const std::size_t rows = numel(lead);
    Shape out_shape = lead;
    out_shape.push_back(total);
    Tensor out(out_shape);
    std::size_t offset = 0;
    std::vector<std::size_t> ids;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < widths[k]; ++j)
                out[r * total + offset + j] = v[r * widths[k] + j];
        offset += widths[k];
        ids.push_back(parts[k].id());
    }
    return parts.front().tape().record(
        "concat_last", std::move(out), parts,
        [ids, widths, total, rows](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            std::size_t off = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (t.requires_grad(ids[k])) {
                    Tensor gk(t.value(ids[k]).shape());
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < widths[k]; ++j)
                            gk[r * widths[k] + j] = g[r * total + off + j];
                    t.accumulate(ids[k], gk);
                }
                off += widths[k];
            }
        });
}

Variable lower_triangular(const Variable& strict_lower, const Variable& diagonal) {
    const std::size_t n = diagonal.size();
    if (strict_lower.size() != n * (n - 1) / 2) {
        throw ShapeError("lower_triangular: strict part " + to_string(strict_lower.shape()) +
                         " does not match diagonal " + to_string(diagonal.shape()));
    }
    const Tensor& sv = strict_lower.value();
    const Tensor& dv = diagonal.value();
    Tensor out(Shape{n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) out[i * n + j] = sv[i * (i - 1) / 2 + j];
        out[i * n + i] = dv[i];
    }
    const std::size_t is = strict_lower.id();
    const std::size_t id = diagonal.id();
    return diagonal.tape().record(
        "lower_triangular", std::move(out), {strict_lower, diagonal},
        [is, id, n](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            Tensor gs(t.value(is).shape());
            Tensor gd(t.value(id).shape());
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < i; ++j) gs[i * (i - 1) / 2 + j] = g[i * n + j];
                gd[i] = g[i * n + i];
            }
            t.accumulate(is, gs);
            t.accumulate(id, gd);
        });
}

Variable gaussian_nll(const Tensor& y, const Variable& mean, const Variable& log_var) {
    const Tensor& mv = mean.value();
    const Tensor& lv = log_var.value();
    if (y.shape() != mv.shape()) {
        throw ShapeError("gaussian_nll: targets " + to_string(y.shape()) + " vs mean " +
                         to_string(mv.shape()));
    }
    broadcast_shape(mv.shape(), lv.shape(), "gaussian_nll");
    if (lv.size() > mv.size()) {
        throw ShapeError("gaussian_nll: log_var " + to_string(lv.shape()) +
                         " larger than mean " + to_string(mv.shape()));
    }
    if (!y.all_finite()) throw NonFiniteError("gaussian_nll", "non-finite targets");

    const double log2pi = std::log(2.0 * std::numbers::pi);
    const std::size_t n = mv.size();
    const std::size_t nl = lv.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double l = lv[i % nl];
        const double r = y[i] - mv[i];
        total += log2pi + l + r * r * std::exp(-l);
    }
    const std::size_t im = mean.id();
    const std::size_t il = log_var.id();
    return mean.tape().record(
        "gaussian_nll", Tensor::scalar(0.5 * total), {mean, log_var},
        [y, im, il, n, nl](Tape& t, std::size_t self) {
            const double g = t.grad(self).item();
            const Tensor& m = t.value(im);
            const Tensor& l = t.value(il);
            Tensor gm(m.shape());
            Tensor gl(l.shape(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double prec = std::exp(-l[i % nl]);
                const double r = y[i] - m[i];
                gm[i] = -g * r * prec;
                gl[i % nl] += 0.5 * g * (1.0 - r * r * prec);
            }
            t.accumulate(im, gm);
            t.accumulate(il, gl);
        });
}

}  // namespace whvi::ad
