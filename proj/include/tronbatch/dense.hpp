#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tronbatch {

using Vector = std::vector<double>;

/// Raised when the shifted Cholesky factorization gives up.
class FactorizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by triangular solves on a zero diagonal entry.
class SingularFactorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Column-ordered dense n-by-n matrix. Factorization routines read only the
// lower triangle; code evaluating symmetric Hessians fills both triangles.
class DenseMatrix {
public:
    DenseMatrix() = default;

    explicit DenseMatrix(int n, double value = 0.0)
        : n_(n), data_(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), value) {
        if (n < 1) throw std::invalid_argument("DenseMatrix: dimension must be >= 1");
    }

    static DenseMatrix identity(int n) {
        DenseMatrix a(n);
        for (int i = 0; i < n; ++i) a(i, i) = 1.0;
        return a;
    }

    int dim() const { return n_; }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) + static_cast<std::size_t>(j) * n_]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) + static_cast<std::size_t>(j) * n_]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    int n_ = 0;
    std::vector<double> data_;
};

namespace detail {

inline void require_same_size(const Vector& x, const Vector& y, const char* where) {
    if (x.size() != y.size())
        throw std::invalid_argument(std::string(where) + ": dimension mismatch (" +
                                    std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
}

}  // namespace detail

// y <- y + alpha*x
inline Vector axpy(double alpha, const Vector& x, Vector y) {
    detail::require_same_size(x, y, "axpy");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
    return y;
}

inline double dot(const Vector& x, const Vector& y) {
    detail::require_same_size(x, y, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double nrm2(const Vector& x) {
    return std::sqrt(dot(x, x));
}

// x <- alpha*x
inline Vector scal(double alpha, Vector x) {
    for (double& v : x) v *= alpha;
    return x;
}

inline Vector copy(const Vector& x) { return x; }

// y <- alpha*A*x + beta*y (or A^T x when transpose is set)
inline Vector gemv(double alpha, const DenseMatrix& A, const Vector& x, double beta, Vector y,
                   bool transpose = false) {
    const int n = A.dim();
    if (static_cast<int>(x.size()) != n || static_cast<int>(y.size()) != n)
        throw std::invalid_argument("gemv: dimension mismatch");
    for (double& v : y) v *= beta;
    if (alpha == 0.0) return y;
    if (!transpose) {
        // accumulate column by column; A is stored column-ordered
        for (int j = 0; j < n; ++j) {
            const double axj = alpha * x[j];
            if (axj == 0.0) continue;
            for (int i = 0; i < n; ++i) y[i] += axj * A(i, j);
        }
    } else {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += A(i, j) * x[i];
            y[j] += alpha * s;
        }
    }
    return y;
}

// A <- A + alpha*I
inline DenseMatrix ccfs(DenseMatrix A, double alpha) {
    for (int i = 0; i < A.dim(); ++i) A(i, i) += alpha;
    return A;
}

struct CholeskyResult {
    DenseMatrix L;   // lower triangular, strictly positive diagonal
    double shift;    // alpha with A + alpha*I = L*L^T
};

namespace detail {

// Lazy update ordering: previously factored columns are folded into column j
// right before it is factorized. Returns false on a nonpositive (or NaN) pivot.
inline bool cholesky_left_looking(const DenseMatrix& A, double shift, DenseMatrix& L) {
    const int n = A.dim();
    L = DenseMatrix(n);
    for (int j = 0; j < n; ++j) {
        for (int i = j; i < n; ++i) L(i, j) = A(i, j);
        L(j, j) += shift;
        for (int k = 0; k < j; ++k) {
            const double ljk = L(j, k);
            if (ljk == 0.0) continue;
            for (int i = j; i < n; ++i) L(i, j) -= ljk * L(i, k);
        }
        const double pivot = L(j, j);
        if (!(pivot > 0.0)) return false;
        const double d = std::sqrt(pivot);
        L(j, j) = d;
        for (int i = j + 1; i < n; ++i) L(i, j) /= d;
    }
    return true;
}

// Eager ordering: the trailing submatrix is updated as soon as a column is
// factorized.
inline bool cholesky_right_looking(const DenseMatrix& A, double shift, DenseMatrix& L) {
    const int n = A.dim();
    L = DenseMatrix(n);
    for (int j = 0; j < n; ++j) {
        for (int i = j; i < n; ++i) L(i, j) += A(i, j);
        L(j, j) += shift;
    }
    for (int j = 0; j < n; ++j) {
        const double pivot = L(j, j);
        if (!(pivot > 0.0)) return false;
        const double d = std::sqrt(pivot);
        L(j, j) = d;
        for (int i = j + 1; i < n; ++i) L(i, j) /= d;
        for (int k = j + 1; k < n; ++k) {
            const double lkj = L(k, j);
            if (lkj == 0.0) continue;
            for (int i = k; i < n; ++i) L(i, k) -= L(i, j) * lkj;
        }
    }
    return true;
}

template <typename Kernel>
CholeskyResult shifted_factorize(const DenseMatrix& A, Kernel kernel) {
    const int n = A.dim();
    double max_diag = 0.0;
    for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(A(i, i)));
    const double alpha0 = std::max(1e-3 * max_diag, 1e-8);
    const double cap = 1e8 * std::max(1.0, A.max_abs());

    CholeskyResult res;
    double alpha = 0.0;
    while (true) {
        if (kernel(A, alpha, res.L)) {
            res.shift = alpha;
            return res;
        }
        alpha = std::max(2.0 * alpha, alpha0);
        if (!(alpha <= cap))
            throw FactorizationError("ccf: factorization failed, shift exceeded " + std::to_string(cap));
    }
}

}  // namespace detail

// Complete Cholesky factorization with diagonal shifting: finds the smallest
// alpha in the escalation schedule with A + alpha*I = L*L^T. Only the lower
// triangle of A is read.
inline CholeskyResult ccf(const DenseMatrix& A) {
    return detail::shifted_factorize(A, detail::cholesky_left_looking);
}

// Same contract as ccf; kept as an independent update ordering for cross-checks.
inline CholeskyResult ccf_right_looking(const DenseMatrix& A) {
    return detail::shifted_factorize(A, detail::cholesky_right_looking);
}

// Solve L*x = b (forward substitution) or L^T*x = b (backward) in place.
inline Vector trtrs(const DenseMatrix& L, Vector b, bool transpose = false) {
    const int n = L.dim();
    if (static_cast<int>(b.size()) != n) throw std::invalid_argument("trtrs: dimension mismatch");
    for (int i = 0; i < n; ++i)
        if (L(i, i) == 0.0) throw SingularFactorError("trtrs: zero diagonal at " + std::to_string(i));
    if (!transpose) {
        for (int i = 0; i < n; ++i) {
            double s = b[i];
            for (int j = 0; j < i; ++j) s -= L(i, j) * b[j];
            b[i] = s / L(i, i);
        }
    } else {
        for (int i = n - 1; i >= 0; --i) {
            double s = b[i];
            for (int j = i + 1; j < n; ++j) s -= L(j, i) * b[j];
            b[i] = s / L(i, i);
        }
    }
    return b;
}

}  // namespace tronbatch
