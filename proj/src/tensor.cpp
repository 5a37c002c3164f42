#include "purecc/tensor.hpp"

#include <cmath>
#include <utility>

#include "purecc/errors.hpp"

namespace purecc {

Tensor::Tensor(std::string n, std::vector<std::size_t> s)
    : name(std::move(n)), shape(std::move(s)), values(shape_size(shape), 0.0) {}

std::size_t shape_size(const std::vector<std::size_t>& shape) noexcept {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double squared_norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

bool all_finite(std::span<const double> a) noexcept {
    for (double v : a) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace purecc
