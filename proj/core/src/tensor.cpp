#include "ppap/tensor.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace ppap {

namespace {
int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("tensor: negative dimension");
        n *= d;
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t({1});
    t[0] = v;
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
    Tensor t(std::move(shape));
    if (static_cast<int64_t>(values.size()) != t.numel())
        throw std::invalid_argument("tensor: value count does not match shape");
    std::memcpy(t.data(), values.data(), values.size() * sizeof(double));
    return t;
}

void Tensor::fill(double v) {
    for (auto& x : data_) x = v;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_numel(shape) != numel())
        throw std::invalid_argument("tensor: reshape changes element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

double Tensor::min() const {
    double m = std::numeric_limits<double>::infinity();
    for (double x : data_) m = std::min(m, x);
    return m;
}

double Tensor::max() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : data_) m = std::max(m, x);
    return m;
}

uint64_t fingerprint_bytes(const void* data, size_t n, uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t fingerprint_tensor(const Tensor& t, uint64_t h) {
    for (int d : t.shape()) {
        int64_t d64 = d;
        h = fingerprint_bytes(&d64, sizeof(d64), h);
    }
    return fingerprint_bytes(t.data(), static_cast<size_t>(t.numel()) * sizeof(double), h);
}

}  // namespace ppap
