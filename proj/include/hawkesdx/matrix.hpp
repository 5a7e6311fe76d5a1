#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "hawkesdx/error.hpp"

namespace hawkesdx {

// Dense row-major matrix of doubles. Sizes here are K x K with K <= 25,
// so nothing fancier is needed.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) throw Error("Matrix: ragged initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix square(std::size_t n, double fill = 0.0) { return Matrix(n, n, fill); }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept {
        assert(i < rows_ && j < cols_);
        return data_[i * cols_ + j];
    }
    double operator()(std::size_t i, std::size_t j) const noexcept {
        assert(i < rows_ && j < cols_);
        return data_[i * cols_ + j];
    }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }

    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw Error("Matrix product: shape mismatch");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

inline Matrix scaled(Matrix m, double c) {
    for (double& v : m.flat()) v *= c;
    return m;
}

// Spectral radius of an entrywise nonnegative square matrix via Gelfand's
// formula rho = lim ||A^k||^(1/k), evaluated with k = 2^60 by repeated
// squaring and renormalisation.
inline double spectral_radius_nonnegative(const Matrix& a) {
    if (a.rows() != a.cols()) throw Error("spectral_radius: matrix not square");
    if (a.empty()) return 0.0;
    auto norm_inf = [](const Matrix& m) {
        double best = 0.0;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            double s = 0.0;
            for (double v : m.row(i)) s += std::abs(v);
            best = std::max(best, s);
        }
        return best;
    };
    Matrix p = a;
    double log_scale = 0.0;  // log of the factor divided out of A^(2^s), divided by 2^s
    double weight = 1.0;
    for (int s = 0; s < 60; ++s) {
        const double n = norm_inf(p);
        if (n == 0.0) return 0.0;
        for (double& v : p.flat()) v /= n;
        log_scale += weight * std::log(n);
        p = p * p;
        weight *= 0.5;
    }
    const double n = norm_inf(p);
    if (n == 0.0) return 0.0;
    return std::exp(log_scale + weight * std::log(n));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

} // namespace hawkesdx
