#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "beamforge/common.hpp"

namespace beamforge {

// Spectrum of a Hermitian matrix: ascending real eigenvalues and the unitary
// matrix of eigenvectors (one per column).
template <typename Real>
struct HermitianEig {
    using real_vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
    using complex_matrix = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;

    real_vector eigenvalues;
    complex_matrix eigenvectors;

    Eigen::Index dim() const { return eigenvalues.size(); }
};

using HermitianEigd = HermitianEig<double>;

// Eigendecomposition of (A + A^H)/2. Raw eigenvalues are returned, no clamping.
template <typename Derived>
HermitianEig<typename Eigen::NumTraits<typename Derived::Scalar>::Real>
herm_eig(const Eigen::MatrixBase<Derived>& a)
{
    using scalar_t = typename Derived::Scalar;
    using real_t = typename Eigen::NumTraits<scalar_t>::Real;
    using matrix_t = Eigen::Matrix<std::complex<real_t>, Eigen::Dynamic, Eigen::Dynamic>;

    if (a.rows() != a.cols()) {
        throw dimension_error("herm_eig: matrix is " + std::to_string(a.rows()) + "x"
                              + std::to_string(a.cols()) + ", expected square");
    }
    const matrix_t m = a.template cast<std::complex<real_t>>();
    const matrix_t sym = (m + m.adjoint()) * real_t(0.5);

    HermitianEig<real_t> out;
    if (sym.size() == 0) return out;

    Eigen::SelfAdjointEigenSolver<matrix_t> solver(sym);
    if (solver.info() != Eigen::Success || !solver.eigenvalues().allFinite()) {
        std::ostringstream msg;
        msg << "herm_eig: eigensolver did not converge (n=" << sym.rows()
            << ", frobenius norm=" << sym.norm()
            << ", finite input=" << (sym.allFinite() ? "yes" : "no") << ")";
        throw numeric_error(msg.str());
    }
    out.eigenvalues = solver.eigenvalues();
    out.eigenvectors = solver.eigenvectors();
    return out;
}

// Computes (A + mu I)^dagger X through the spectrum of A. Negative eigenvalues
// (round-off of a PSD matrix) are clamped to zero first; components whose
// shifted eigenvalue falls below eps * n * max(lambda + mu) are discarded.
template <typename Real, typename Derived>
Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>
shifted_pinv_apply(const HermitianEig<Real>& eig, Real mu, const Eigen::MatrixBase<Derived>& x)
{
    using matrix_t = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;
    const Eigen::Index n = eig.dim();
    if (x.rows() != n) {
        throw dimension_error("shifted_pinv_apply: right-hand side has " + std::to_string(x.rows())
                              + " rows, spectrum has dimension " + std::to_string(n));
    }
    if (n == 0) return matrix_t(0, x.cols());

    Eigen::Matrix<Real, Eigen::Dynamic, 1> shifted = eig.eigenvalues.cwiseMax(Real(0)).array() + mu;
    const Real rank_tol = std::numeric_limits<Real>::epsilon() * Real(n) * shifted.maxCoeff();
    Eigen::Matrix<Real, Eigen::Dynamic, 1> gain(n);
    for (Eigen::Index m = 0; m < n; ++m) {
        gain(m) = shifted(m) > rank_tol ? Real(1) / shifted(m) : Real(0);
    }
    matrix_t coeffs = eig.eigenvectors.adjoint() * x.template cast<std::complex<Real>>();
    coeffs = gain.asDiagonal() * coeffs;
    return eig.eigenvectors * coeffs;
}

// Hermitian part of a square matrix.
template <typename Derived>
typename Derived::PlainObject hermitian_part(const Eigen::MatrixBase<Derived>& a)
{
    return (a + a.adjoint()) * 0.5;
}

// log det of a Hermitian positive definite matrix via Cholesky. Returns
// false when the factorization fails.
template <typename Derived>
bool logdet_hpd(const Eigen::MatrixBase<Derived>& a, double& out)
{
    Eigen::LLT<typename Derived::PlainObject> llt(hermitian_part(a));
    if (llt.info() != Eigen::Success) return false;
    const auto diag = llt.matrixLLT().diagonal();
    double acc = 0.0;
    for (Eigen::Index m = 0; m < diag.size(); ++m) {
        const double d = std::real(diag(m));
        if (!(d > 0.0)) return false;
        acc += std::log(d);
    }
    out = 2.0 * acc;
    return true;
}

} // namespace beamforge
