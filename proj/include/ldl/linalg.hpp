// linalg.hpp: dense complex linear algebra helpers shared by every module.
//
// Superoperators use column-stacking vectorization: vec(X)[i + d*j] = X(i,j),
// so that vec(A X B) = (B^T ⊗ A) vec(X).

#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldl {

using cplx = std::complex<double>;
using cmat = Eigen::MatrixXcd;
using cvec = Eigen::VectorXcd;
using rvec = Eigen::VectorXd;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr cplx I{0.0, 1.0};

// --------------------------- errors -----------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
    using Error::Error;
};

struct ShapeMismatch : Error {
    using Error::Error;
};

struct InvalidState : Error {
    using Error::Error;
};

// --------------------------- small utilities --------------------------------

inline cmat identity(Eigen::Index d) { return cmat::Identity(d, d); }

inline cmat kron(const cmat& a, const cmat& b) {
    return Eigen::kroneckerProduct(a, b).eval();
}

inline cvec vec(const cmat& x) {
    return Eigen::Map<const cvec>(x.data(), x.size());
}

inline cmat unvec(const cvec& v, Eigen::Index d) {
    if (v.size() != d * d) throw ShapeMismatch("unvec: size is not d*d");
    return Eigen::Map<const cmat>(v.data(), d, d);
}

inline cmat apply_super(const cmat& super, const cmat& x) {
    return unvec(super * vec(x), x.rows());
}

// X ↦ A X B
inline cmat sandwich_super(const cmat& a, const cmat& b) {
    return kron(b.transpose(), a);
}

inline cmat left_super(const cmat& a) {
    return kron(identity(a.rows()), a);
}

inline cmat right_super(const cmat& b) {
    return kron(b.transpose(), identity(b.rows()));
}

// X ↦ i[H, X]
inline cmat commutator_super(const cmat& h) {
    return I * (left_super(h) - right_super(h));
}

inline double max_abs(const cmat& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double hermiticity_defect(const cmat& m) {
    return max_abs(m - m.adjoint());
}

inline bool is_square(const cmat& m) { return m.rows() == m.cols(); }

// Matrix unit E_ab of size d.
inline cmat matrix_unit(Eigen::Index d, Eigen::Index a, Eigen::Index b) {
    cmat e = cmat::Zero(d, d);
    e(a, b) = 1.0;
    return e;
}

// Partial trace over the first tensor factor of C^r ⊗ C^d (index = a*d + s).
inline cmat partial_trace_first(const cmat& m, Eigen::Index r, Eigen::Index d) {
    if (m.rows() != r * d || m.cols() != r * d) {
        throw ShapeMismatch("partial_trace_first: dimension mismatch");
    }
    cmat out = cmat::Zero(d, d);
    for (Eigen::Index a = 0; a < r; ++a) out += m.block(a * d, a * d, d, d);
    return out;
}

inline double condition_number(const cmat& m) {
    Eigen::JacobiSVD<cmat> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0) return 1.0;
    const double smin = s(s.size() - 1);
    if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
    return s(0) / smin;
}

inline double min_hermitian_eigenvalue(const cmat& m) {
    const cmat h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<cmat> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Choi matrix Σ_ab E_ab ⊗ Φ(E_ab) of a map given as a superoperator.
inline cmat choi_matrix(const cmat& super, Eigen::Index d) {
    cmat c = cmat::Zero(d * d, d * d);
    for (Eigen::Index a = 0; a < d; ++a) {
        for (Eigen::Index b = 0; b < d; ++b) {
            c.block(a * d, b * d, d, d) = apply_super(super, matrix_unit(d, a, b));
        }
    }
    return c;
}

// Best Hermitian H (traceless) with super ≈ i[H,·]; returns the residual norm.
struct CommutatorFit {
    cmat hamiltonian;
    double residual{0.0};
    double hermiticity_defect{0.0};
};

inline CommutatorFit fit_commutator(const cmat& super, Eigen::Index d) {
    // vec(i[H,X]) = i (I⊗H − X-side) vec X is linear in H: build the d^4 × d^2 design.
    const Eigen::Index n = d * d;
    cmat design(n * n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const cmat hk = matrix_unit(d, k % d, k / d);
        const cmat col = commutator_super(hk);
        design.col(k) = Eigen::Map<const cvec>(col.data(), col.size());
    }
    const cvec target = Eigen::Map<const cvec>(super.data(), super.size());
    Eigen::CompleteOrthogonalDecomposition<cmat> cod(design);
    const cvec hv = cod.solve(target);
    CommutatorFit fit;
    fit.hamiltonian = unvec(hv, d);
    // Remove the unidentifiable identity component.
    fit.hamiltonian -= (fit.hamiltonian.trace() / static_cast<double>(d)) * identity(d);
    fit.residual = max_abs(super - commutator_super(fit.hamiltonian));
    fit.hermiticity_defect = ldl::hermiticity_defect(fit.hamiltonian);
    return fit;
}

} // namespace ldl
