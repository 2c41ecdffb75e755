#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpalign {

using Shape = std::vector<std::size_t>;

// Dense row-major tensor of doubles. Rank 0 (scalar), 1 and 2 are the
// cases that actually occur; the representation is rank-agnostic.
struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> v);

    static Tensor zeros(const Shape& s);
    static Tensor full(const Shape& s, double fill);
    static Tensor scalar(double v);

    std::size_t numel() const { return values.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t i) { return values[i]; }
    double at(std::size_t i) const { return values[i]; }
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
};

std::size_t shape_numel(const Shape& s);
std::string shape_to_string(const Shape& s);

// Named tensor collection, sorted by name. Used both for model parameters
// and for gradients; a GradSet mirrors the key set and shapes of its ParamSet.
class NamedTensors {
  public:
    using Map = std::map<std::string, Tensor>;

    NamedTensors() = default;

    void insert(const std::string& name, Tensor t);
    bool contains(const std::string& name) const { return items_.count(name) > 0; }
    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);

    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    std::size_t total_elements() const;

    Map::const_iterator begin() const { return items_.begin(); }
    Map::const_iterator end() const { return items_.end(); }
    Map::iterator begin() { return items_.begin(); }
    Map::iterator end() { return items_.end(); }

    // True when key sets and per-key shapes match.
    bool same_structure(const NamedTensors& other) const;

    static NamedTensors zeros_like(const NamedTensors& ref);

  private:
    Map items_;
};

using ParamSet = NamedTensors;
using GradSet = NamedTensors;

// Euclidean norm over the concatenation of all tensors.
double global_l2_norm(const GradSet& g);

}  // namespace dpalign
