#include "dpalign/tensor.hpp"

#include <sstream>

namespace dpalign {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_to_string(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i > 0) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (shape_numel(shape) != values.size()) {
        throw std::invalid_argument("Tensor: shape " + shape_to_string(shape) + " does not match " +
                                    std::to_string(values.size()) + " values");
    }
}

Tensor Tensor::zeros(const Shape& s) { return Tensor(s, std::vector<double>(shape_numel(s), 0.0)); }

Tensor Tensor::full(const Shape& s, double fill) {
    return Tensor(s, std::vector<double>(shape_numel(s), fill));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

std::size_t Tensor::rows() const {
    if (shape.size() != 2) throw std::logic_error("Tensor::rows: not a matrix, shape " + shape_to_string(shape));
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (shape.size() != 2) throw std::logic_error("Tensor::cols: not a matrix, shape " + shape_to_string(shape));
    return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }

double Tensor::at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

bool Tensor::all_finite() const {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void NamedTensors::insert(const std::string& name, Tensor t) {
    auto [it, inserted] = items_.emplace(name, std::move(t));
    if (!inserted) throw std::invalid_argument("NamedTensors: duplicate name '" + name + "'");
}

const Tensor& NamedTensors::at(const std::string& name) const {
    auto it = items_.find(name);
    if (it == items_.end()) throw std::out_of_range("NamedTensors: no tensor named '" + name + "'");
    return it->second;
}

Tensor& NamedTensors::at(const std::string& name) {
    auto it = items_.find(name);
    if (it == items_.end()) throw std::out_of_range("NamedTensors: no tensor named '" + name + "'");
    return it->second;
}

std::size_t NamedTensors::total_elements() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
}

bool NamedTensors::same_structure(const NamedTensors& other) const {
    if (items_.size() != other.items_.size()) return false;
    auto a = items_.begin();
    auto b = other.items_.begin();
    for (; a != items_.end(); ++a, ++b) {
        if (a->first != b->first || a->second.shape != b->second.shape) return false;
    }
    return true;
}

NamedTensors NamedTensors::zeros_like(const NamedTensors& ref) {
    NamedTensors out;
    for (const auto& [name, t] : ref) out.insert(name, Tensor::zeros(t.shape));
    return out;
}

double global_l2_norm(const GradSet& g) {
    double sumsq = 0.0;
    for (const auto& [name, t] : g) {
        for (double v : t.values) sumsq += v * v;
    }
    return std::sqrt(sumsq);
}

}  // namespace dpalign
