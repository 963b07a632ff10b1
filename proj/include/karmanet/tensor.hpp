#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace karmanet {

// Dense row-major tensor. Vectors are tensors with cols == 1.
// Sized for models with a few tens of thousands of parameters; kernels are
// plain loops that the compiler vectorizes.
template <typename Real>
struct Tensor {
    int rows = 0;
    int cols = 1;
    std::vector<Real> a;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, Real(0)) {}
    static Tensor vec(int n) { return Tensor(n, 1); }

    int size() const { return rows * cols; }
    Real& operator[](int i) { return a[static_cast<std::size_t>(i)]; }
    Real operator[](int i) const { return a[static_cast<std::size_t>(i)]; }
    Real& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    Real operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
    Real* row_ptr(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
    const Real* row_ptr(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }

    void fill(Real v) { std::fill(a.begin(), a.end(), v); }
};

using Tensor1 = Tensor<double>;  // shape (n, 1)
using Tensor2 = Tensor<double>;

// out = M x
template <typename Real>
void matvec(const Tensor<Real>& m, const Real* x, Real* out) {
    for (int r = 0; r < m.rows; ++r) {
        const Real* row = m.row_ptr(r);
        Real s = 0;
        for (int c = 0; c < m.cols; ++c) s += row[c] * x[c];
        out[r] = s;
    }
}

// out += M^T x  (caller zeroes out when accumulation is not wanted)
template <typename Real>
void matvec_t_acc(const Tensor<Real>& m, const Real* x, Real* out) {
    for (int r = 0; r < m.rows; ++r) {
        const Real* row = m.row_ptr(r);
        Real xr = x[r];
        for (int c = 0; c < m.cols; ++c) out[c] += row[c] * xr;
    }
}

// G += dy x^T
template <typename Real>
void outer_acc(Tensor<Real>& g, const Real* dy, const Real* x) {
    for (int r = 0; r < g.rows; ++r) {
        Real* row = g.row_ptr(r);
        Real d = dy[r];
        for (int c = 0; c < g.cols; ++c) row[c] += d * x[c];
    }
}

template <typename Real>
Real dot(const Real* x, const Real* y, int n) {
    Real s = 0;
    for (int i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

template <typename Real>
void axpy(Real alpha, const Real* x, Real* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace karmanet
