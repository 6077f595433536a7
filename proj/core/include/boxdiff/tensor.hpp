#pragma once

#include <cstdint>
#include <vector>

namespace boxdiff {

/// Dense row-major tensor of 64-bit reals. Everything in this project is
/// small enough that a flat vector plus a shape is the right level of
/// machinery.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::int64_t> s, double fill = 0.0);

    static Tensor scalar(double v);
    static Tensor matrix(std::int64_t rows, std::int64_t cols, double fill = 0.0);

    std::int64_t numel() const;
    std::int64_t rows() const;  // first dim (requires ndim >= 1)
    std::int64_t cols() const;  // second dim (requires ndim == 2)

    double& at(std::int64_t r, std::int64_t c);
    double at(std::int64_t r, std::int64_t c) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

}  // namespace boxdiff
