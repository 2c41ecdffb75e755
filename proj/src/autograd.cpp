#include "dpalign/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dpalign {

namespace {

[[noreturn]] void fail_shape(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                                shape_to_string(a.shape) + " and " + shape_to_string(b.shape));
}

void check_finite(const char* op, const Tensor& t) {
    if (!t.all_finite()) {
        throw std::runtime_error(std::string(op) + ": produced a non-finite value (shape " +
                                 shape_to_string(t.shape) + ")");
    }
}

bool same_tape(Var a, Var b) { return a.tape != nullptr && a.tape == b.tape; }

}  // namespace

Var Tape::record(const char* op, Tensor value, std::vector<int> parents,
                 std::function<void(Tape&, const Node&)> backward) {
    check_finite(op, value);
    Node n;
    n.grad = Tensor::zeros(value.shape);
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) {
    return record("leaf", std::move(value), {}, nullptr);
}

Var Tape::constant(Tensor value) {
    return record("constant", std::move(value), {}, nullptr);
}

const Tensor& Tape::value(Var v) const { return node(v.id).value; }

double Tape::scalar_value(Var v) const {
    const Tensor& t = node(v.id).value;
    if (t.numel() != 1) {
        throw std::logic_error("scalar_value: tensor has shape " + shape_to_string(t.shape));
    }
    return t.values[0];
}

const Tensor& Tape::grad(Var v) const { return node(v.id).grad; }

void Tape::backward(Var loss) {
    if (loss.tape != this) throw std::logic_error("backward: var belongs to another tape");
    Node& root = node(loss.id);
    if (root.value.numel() != 1) {
        throw std::logic_error("backward: loss is not scalar, shape " +
                               shape_to_string(root.value.shape));
    }
    for (Node& n : nodes_) std::fill(n.grad.values.begin(), n.grad.values.end(), 0.0);
    root.grad.values[0] = 1.0;
    // Nodes are recorded in topological order, so a reverse sweep suffices.
    for (int id = loss.id; id >= 0; --id) {
        const Node& n = node(id);
        if (n.backward) n.backward(*this, n);
    }
}

namespace {

// Elementwise binary op helper.
template <typename Fwd, typename Bwd>
Var elementwise2(const char* op, Var a, Var b, Fwd fwd, Bwd bwd) {
    if (!same_tape(a, b)) throw std::logic_error(std::string(op) + ": vars on different tapes");
    Tape& tp = *a.tape;
    const Tensor& ta = tp.value(a);
    const Tensor& tb = tp.value(b);
    if (!ta.same_shape(tb)) fail_shape(op, ta, tb);
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] = fwd(ta.values[i], tb.values[i]);
    int ida = a.id, idb = b.id;
    return tp.record(op, std::move(out), {ida, idb}, [ida, idb, bwd](Tape& t, const Tape::Node& n) {
        Tensor& ga = t.node(ida).grad;
        Tensor& gb = t.node(idb).grad;
        const Tensor& va = t.node(ida).value;
        const Tensor& vb = t.node(idb).value;
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            auto [da, db] = bwd(va.values[i], vb.values[i]);
            ga.values[i] += n.grad.values[i] * da;
            gb.values[i] += n.grad.values[i] * db;
        }
    });
}

// Elementwise unary op helper; bwd receives (input, output) and returns d out / d in.
template <typename Fwd, typename Bwd>
Var elementwise1(const char* op, Var a, Fwd fwd, Bwd bwd) {
    Tape& tp = *a.tape;
    const Tensor& ta = tp.value(a);
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] = fwd(ta.values[i]);
    int ida = a.id;
    return tp.record(op, std::move(out), {ida}, [ida, bwd](Tape& t, const Tape::Node& n) {
        Tensor& ga = t.node(ida).grad;
        const Tensor& va = t.node(ida).value;
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            ga.values[i] += n.grad.values[i] * bwd(va.values[i], n.value.values[i]);
        }
    });
}

}  // namespace

Var add(Var a, Var b) {
    return elementwise2("add", a, b, [](double x, double y) { return x + y; },
                        [](double, double) { return std::pair<double, double>{1.0, 1.0}; });
}

Var sub(Var a, Var b) {
    return elementwise2("sub", a, b, [](double x, double y) { return x - y; },
                        [](double, double) { return std::pair<double, double>{1.0, -1.0}; });
}

Var mul(Var a, Var b) {
    return elementwise2("mul", a, b, [](double x, double y) { return x * y; },
                        [](double x, double y) { return std::pair<double, double>{y, x}; });
}

Var minimum(Var a, Var b) {
    return elementwise2("minimum", a, b, [](double x, double y) { return std::min(x, y); },
                        [](double x, double y) {
                            return x <= y ? std::pair<double, double>{1.0, 0.0}
                                          : std::pair<double, double>{0.0, 1.0};
                        });
}

Var scale(Var a, double c) {
    return elementwise1("scale", a, [c](double x) { return c * x; },
                        [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
    return elementwise1("add_scalar", a, [c](double x) { return x + c; },
                        [](double, double) { return 1.0; });
}

Var relu(Var a) {
    return elementwise1("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh_act(Var a) {
    return elementwise1("tanh", a, [](double x) { return std::tanh(x); },
                        [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    return elementwise1("sigmoid", a,
                        [](double x) {
                            // stable in both tails
                            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                            double e = std::exp(x);
                            return e / (1.0 + e);
                        },
                        [](double, double y) { return y * (1.0 - y); });
}

Var exp_elem(Var a) {
    return elementwise1("exp", a, [](double x) { return std::exp(x); },
                        [](double, double y) { return y; });
}

Var log_elem(Var a) {
    return elementwise1("log", a, [](double x) { return std::log(x); },
                        [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
    return elementwise1("square", a, [](double x) { return x * x; },
                        [](double x, double) { return 2.0 * x; });
}

Var softplus(Var a) {
    return elementwise1("softplus", a,
                        [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
                        [](double x, double) {
                            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                            double e = std::exp(x);
                            return e / (1.0 + e);
                        });
}

Var clamp(Var a, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
    return elementwise1("clamp", a,
                        [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
                        [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var matmul(Var a, Var b) {
    if (!same_tape(a, b)) throw std::logic_error("matmul: vars on different tapes");
    Tape& tp = *a.tape;
    const Tensor& ta = tp.value(a);
    const Tensor& tb = tp.value(b);
    if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0]) {
        fail_shape("matmul", ta, tb);
    }
    const std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ta.values[i * k + p];
            if (av == 0.0) continue;
            const double* brow = &tb.values[p * n];
            double* orow = &out.values[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    int ida = a.id, idb = b.id;
    return tp.record("matmul", std::move(out), {ida, idb},
                     [ida, idb, m, k, n](Tape& t, const Tape::Node& nd) {
                         const Tensor& va = t.node(ida).value;
                         const Tensor& vb = t.node(idb).value;
                         Tensor& ga = t.node(ida).grad;
                         Tensor& gb = t.node(idb).grad;
                         // dA = dOut * B^T ; dB = A^T * dOut
                         for (std::size_t i = 0; i < m; ++i) {
                             for (std::size_t j = 0; j < n; ++j) {
                                 const double go = nd.grad.values[i * n + j];
                                 if (go == 0.0) continue;
                                 for (std::size_t p = 0; p < k; ++p) {
                                     ga.values[i * k + p] += go * vb.values[p * n + j];
                                     gb.values[p * n + j] += go * va.values[i * k + p];
                                 }
                             }
                         }
                     });
}

Var add_rowvec(Var m, Var bias) {
    if (!same_tape(m, bias)) throw std::logic_error("add_rowvec: vars on different tapes");
    Tape& tp = *m.tape;
    const Tensor& tm = tp.value(m);
    const Tensor& tb = tp.value(bias);
    if (tm.shape.size() != 2 || tb.shape.size() != 1 || tm.shape[1] != tb.shape[0]) {
        fail_shape("add_rowvec", tm, tb);
    }
    const std::size_t r = tm.shape[0], c = tm.shape[1];
    Tensor out = tm;
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out.values[i * c + j] += tb.values[j];
    }
    int idm = m.id, idb = bias.id;
    return tp.record("add_rowvec", std::move(out), {idm, idb},
                     [idm, idb, r, c](Tape& t, const Tape::Node& nd) {
                         Tensor& gm = t.node(idm).grad;
                         Tensor& gb = t.node(idb).grad;
                         for (std::size_t i = 0; i < r; ++i) {
                             for (std::size_t j = 0; j < c; ++j) {
                                 const double go = nd.grad.values[i * c + j];
                                 gm.values[i * c + j] += go;
                                 gb.values[j] += go;
                             }
                         }
                     });
}

namespace {

// Rows view: a vector is one row; a matrix is its rows.
std::pair<std::size_t, std::size_t> rows_and_cols(const char* op, const Tensor& t) {
    if (t.shape.size() == 1) return {1, t.shape[0]};
    if (t.shape.size() == 2) return {t.shape[0], t.shape[1]};
    throw std::invalid_argument(std::string(op) + ": expected rank 1 or 2, got shape " +
                                shape_to_string(t.shape));
}

}  // namespace

Var softmax_rows(Var a) {
    Tape& tp = *a.tape;
    const Tensor& ta = tp.value(a);
    auto [r, c] = rows_and_cols("softmax", ta);
    if (c == 0) throw std::invalid_argument("softmax: empty rows");
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < r; ++i) {
        const double* x = &ta.values[i * c];
        double* y = &out.values[i * c];
        double mx = x[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (std::size_t j = 0; j < c; ++j) y[j] /= z;
    }
    int ida = a.id;
    std::size_t rr = r, cc = c;
    return tp.record("softmax", std::move(out), {ida}, [ida, rr, cc](Tape& t, const Tape::Node& nd) {
        Tensor& ga = t.node(ida).grad;
        for (std::size_t i = 0; i < rr; ++i) {
            const double* s = &nd.value.values[i * cc];
            const double* gy = &nd.grad.values[i * cc];
            double dot = 0.0;
            for (std::size_t j = 0; j < cc; ++j) dot += gy[j] * s[j];
            for (std::size_t j = 0; j < cc; ++j) ga.values[i * cc + j] += s[j] * (gy[j] - dot);
        }
    });
}

Var log_softmax_rows(Var a) {
    Tape& tp = *a.tape;
    const Tensor& ta = tp.value(a);
    auto [r, c] = rows_and_cols("log_softmax", ta);
    if (c == 0) throw std::invalid_argument("log_softmax: empty rows");
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < r; ++i) {
        const double* x = &ta.values[i * c];
        double* y = &out.values[i * c];
        double mx = x[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < c; ++j) y[j] = x[j] - lse;
    }
    int ida = a.id;
    std::size_t rr = r, cc = c;
    return tp.record("log_softmax", std::move(out), {ida},
                     [ida, rr, cc](Tape& t, const Tape::Node& nd) {
                         Tensor& ga = t.node(ida).grad;
                         for (std::size_t i = 0; i < rr; ++i) {
                             const double* ls = &nd.value.values[i * cc];
                             const double* gy = &nd.grad.values[i * cc];
                             double gsum = 0.0;
                             for (std::size_t j = 0; j < cc; ++j) gsum += gy[j];
                             for (std::size_t j = 0; j < cc; ++j) {
                                 ga.values[i * cc + j] += gy[j] - std::exp(ls[j]) * gsum;
                             }
                         }
                     });
}

Var logsumexp_rows(Var a) {
    Tape& tp = *a.tape;
    const Tensor& ta = tp.value(a);
    auto [r, c] = rows_and_cols("logsumexp", ta);
    if (c == 0) throw std::invalid_argument("logsumexp: empty rows");
    Shape out_shape = ta.shape.size() == 1 ? Shape{} : Shape{r};
    Tensor out = Tensor::zeros(out_shape);
    for (std::size_t i = 0; i < r; ++i) {
        const double* x = &ta.values[i * c];
        double mx = x[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
        out.values[i] = mx + std::log(z);
    }
    int ida = a.id;
    std::size_t rr = r, cc = c;
    return tp.record("logsumexp", std::move(out), {ida},
                     [ida, rr, cc](Tape& t, const Tape::Node& nd) {
                         Tensor& ga = t.node(ida).grad;
                         const Tensor& va = t.node(ida).value;
                         for (std::size_t i = 0; i < rr; ++i) {
                             const double lse = nd.value.values[i];
                             const double go = nd.grad.values[i];
                             if (go == 0.0) continue;
                             for (std::size_t j = 0; j < cc; ++j) {
                                 ga.values[i * cc + j] += go * std::exp(va.values[i * cc + j] - lse);
                             }
                         }
                     });
}

Var sum_all(Var a) {
    Tape& tp = *a.tape;
    const Tensor& ta = tp.value(a);
    double s = 0.0;
    for (double v : ta.values) s += v;
    int ida = a.id;
    return tp.record("sum", Tensor::scalar(s), {ida}, [ida](Tape& t, const Tape::Node& nd) {
        Tensor& ga = t.node(ida).grad;
        const double go = nd.grad.values[0];
        for (double& g : ga.values) g += go;
    });
}

Var mean_all(Var a) {
    Tape& tp = *a.tape;
    const Tensor& ta = tp.value(a);
    if (ta.numel() == 0) throw std::invalid_argument("mean: empty tensor");
    double s = 0.0;
    for (double v : ta.values) s += v;
    const double inv_n = 1.0 / static_cast<double>(ta.numel());
    int ida = a.id;
    return tp.record("mean", Tensor::scalar(s * inv_n), {ida},
                     [ida, inv_n](Tape& t, const Tape::Node& nd) {
                         Tensor& ga = t.node(ida).grad;
                         const double go = nd.grad.values[0] * inv_n;
                         for (double& g : ga.values) g += go;
                     });
}

Var gather(Var a, const std::vector<std::size_t>& indices, const Shape& out_shape) {
    Tape& tp = *a.tape;
    const Tensor& ta = tp.value(a);
    if (shape_numel(out_shape) != indices.size()) {
        throw std::invalid_argument("gather: output shape " + shape_to_string(out_shape) +
                                    " does not match " + std::to_string(indices.size()) + " indices");
    }
    Tensor out = Tensor::zeros(out_shape);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= ta.numel()) {
            throw std::out_of_range("gather: index " + std::to_string(indices[i]) +
                                    " out of range for shape " + shape_to_string(ta.shape));
        }
        out.values[i] = ta.values[indices[i]];
    }
    int ida = a.id;
    auto idx = indices;
    return tp.record("gather", std::move(out), {ida},
                     [ida, idx = std::move(idx)](Tape& t, const Tape::Node& nd) {
                         Tensor& ga = t.node(ida).grad;
                         for (std::size_t i = 0; i < idx.size(); ++i) {
                             ga.values[idx[i]] += nd.grad.values[i];
                         }
                     });
}

Var reshape(Var a, const Shape& new_shape) {
    Tape& tp = *a.tape;
    const Tensor& ta = tp.value(a);
    if (shape_numel(new_shape) != ta.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_to_string(ta.shape) + " as " +
                                    shape_to_string(new_shape));
    }
    Tensor out(new_shape, ta.values);
    int ida = a.id;
    return tp.record("reshape", std::move(out), {ida}, [ida](Tape& t, const Tape::Node& nd) {
        Tensor& ga = t.node(ida).grad;
        for (std::size_t i = 0; i < nd.grad.numel(); ++i) ga.values[i] += nd.grad.values[i];
    });
}

std::pair<double, GradSet> gradient(const ParamSet& params, const LossFn& loss_fn) {
    Tape tape;
    VarMap vars;
    for (const auto& [name, t] : params) vars.emplace(name, tape.leaf(t));
    Var loss = loss_fn(tape, vars);
    const Tensor& lv = tape.value(loss);
    if (lv.numel() != 1) {
        throw std::logic_error("gradient: loss function returned non-scalar shape " +
                               shape_to_string(lv.shape));
    }
    if (!lv.all_finite()) throw std::runtime_error("gradient: non-finite loss value");
    tape.backward(loss);
    GradSet grads;
    for (const auto& [name, var] : vars) {
        const Tensor& g = tape.grad(var);
        if (!g.all_finite()) {
            throw std::runtime_error("gradient: non-finite gradient for parameter '" + name + "'");
        }
        grads.insert(name, g);
    }
    return {lv.values[0], std::move(grads)};
}

double evaluate(const ParamSet& params, const LossFn& loss_fn) {
    Tape tape;
    VarMap vars;
    for (const auto& [name, t] : params) vars.emplace(name, tape.leaf(t));
    Var loss = loss_fn(tape, vars);
    return tape.scalar_value(loss);
}

}  // namespace dpalign
