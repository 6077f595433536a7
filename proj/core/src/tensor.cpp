#include "boxdiff/tensor.hpp"

#include <stdexcept>

namespace boxdiff {

Tensor::Tensor(std::vector<std::int64_t> s, double fill) : shape(std::move(s)) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
        n *= d;
    }
    data.assign(static_cast<std::size_t>(n), fill);
}

Tensor Tensor::scalar(double v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
}

Tensor Tensor::matrix(std::int64_t rows, std::int64_t cols, double fill) {
    return Tensor({rows, cols}, fill);
}

std::int64_t Tensor::numel() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

std::int64_t Tensor::rows() const {
    if (shape.empty()) throw std::logic_error("Tensor::rows on empty shape");
    return shape[0];
}

std::int64_t Tensor::cols() const {
    if (shape.size() != 2) throw std::logic_error("Tensor::cols requires 2-d shape");
    return shape[1];
}

double& Tensor::at(std::int64_t r, std::int64_t c) {
    return data[static_cast<std::size_t>(r * cols() + c)];
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
    return data[static_cast<std::size_t>(r * cols() + c)];
}

}  // namespace boxdiff
