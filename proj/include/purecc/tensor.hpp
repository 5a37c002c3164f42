#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace purecc {

using Vec = std::vector<double>;

// Named dense array, row-major.
struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;
    Tensor(std::string n, std::vector<std::size_t> s);

    std::size_t size() const noexcept { return values.size(); }
    std::size_t rows() const noexcept { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const noexcept { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    std::span<double> row(std::size_t r) { return {values.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols(), cols()}; }

    bool operator==(const Tensor&) const = default;
};

std::size_t shape_size(const std::vector<std::size_t>& shape) noexcept;

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
bool all_finite(std::span<const double> a) noexcept;

}  // namespace purecc
