#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dpalign/tensor.hpp"

namespace dpalign {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
};

using VarMap = std::map<std::string, Var>;

// Reverse-mode tape. Every primitive records its output value, its parent
// ids and a backward closure; backward() replays the tape in reverse and
// accumulates gradients into the recorded nodes. Single-threaded by design.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Differentiable root (model parameter).
    Var leaf(Tensor value);
    // Non-differentiable input (data, constants).
    Var constant(Tensor value);

    const Tensor& value(Var v) const;
    double scalar_value(Var v) const;

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients for every node.
    // `loss` must be a scalar.
    void backward(Var loss);

    // Gradient accumulated for `v` by the last backward() call.
    const Tensor& grad(Var v) const;

    std::size_t node_count() const { return nodes_.size(); }

    // Internal surface used by the primitive implementations.
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<int> parents;
        // Accumulates into parents' grads given this node's grad.
        std::function<void(Tape&, const Node&)> backward;
    };

    Var record(const char* op, Tensor value, std::vector<int> parents,
               std::function<void(Tape&, const Node&)> backward);
    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  private:
    std::vector<Node> nodes_;
};

// Primitives. All results are checked finite; a non-finite output raises
// std::runtime_error naming the primitive and the operand shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);        // elementwise
Var minimum(Var a, Var b);    // elementwise min; ties route gradient to a
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
Var add_rowvec(Var m, Var bias);  // [r,c] + [c], broadcast over rows
Var relu(Var a);
Var tanh_act(Var a);
Var sigmoid(Var a);
Var exp_elem(Var a);
Var log_elem(Var a);
Var square(Var a);
Var softplus(Var a);  // log(1 + e^x), stable for large |x|
Var clamp(Var a, double lo, double hi);
Var softmax_rows(Var a);       // last dim: rows of a matrix, or a whole vector
Var log_softmax_rows(Var a);   // max-shift stabilized
Var logsumexp_rows(Var a);     // [r,c] -> [r], or [n] -> scalar
Var sum_all(Var a);
Var mean_all(Var a);
// out[i] = a.values[indices[i]]; backward scatter-adds.
Var gather(Var a, const std::vector<std::size_t>& indices, const Shape& out_shape);
Var reshape(Var a, const Shape& new_shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Scalar loss over a ParamSet. The callback builds the loss from leaf vars
// registered for every parameter; any data batch is captured in the closure.
using LossFn = std::function<Var(Tape&, const VarMap&)>;

// Evaluates loss_fn at `params` and returns (loss, d loss / d params).
// Deterministic for fixed inputs. Throws if the loss or any gradient is
// non-finite, naming the offender.
std::pair<double, GradSet> gradient(const ParamSet& params, const LossFn& loss_fn);

// Forward evaluation only (no backward pass).
double evaluate(const ParamSet& params, const LossFn& loss_fn);

}  // namespace dpalign
