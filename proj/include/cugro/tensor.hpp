#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cugro/error.hpp"

namespace cugro {

/// Dense row-major real array. Carrier for activations, parameters and
/// gradients. 64-bit values throughout so test expectations stay exact.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(count(shape), 0.0);
    }

    static Tensor zeros(std::initializer_list<std::size_t> s) {
        return Tensor(std::vector<std::size_t>(s));
    }

    static Tensor full(std::initializer_list<std::size_t> s, double value) {
        Tensor t{std::vector<std::size_t>(s)};
        for (double& v : t.data) v = value;
        return t;
    }

    static Tensor row_vector(std::vector<double> values) {
        Tensor t;
        t.shape = {1, values.size()};
        t.data = std::move(values);
        return t;
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    std::size_t rank() const { return shape.size(); }

    std::size_t dim(std::size_t i) const { return shape.at(i); }

    /// Leading extent for batched [B, D] tensors.
    std::size_t rows() const { return rank() == 1 ? 1 : shape[0]; }
    std::size_t cols() const { return rank() == 1 ? shape[0] : shape[1]; }

    double& operator()(std::size_t i) { return data[i]; }
    double operator()(std::size_t i) const { return data[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols(), cols()}; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline bool all_finite(const Tensor& t) {
    for (double v : t.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

/// Errors out on NaN/Inf; non-finite values are an error surface, never a
/// silent state.
inline void check_finite(const Tensor& t, const char* what) {
    if (!all_finite(t)) {
        throw NumericError(std::string("non-finite values in ") + what);
    }
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string("shape mismatch in ") + what);
    }
}

}  // namespace cugro
