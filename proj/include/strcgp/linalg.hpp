#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

#include "strcgp/errors.hpp"

namespace strcgp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline Matrix symmetrize(const Matrix& m) {
  return 0.5 * (m + m.transpose());
}

inline Matrix kronecker(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// exp(F*dt) by scaling-and-squaring around a degree-13 Pade approximant.
/// State dimensions here are tiny, so a single high-order approximant with
/// 1-norm scaling is accurate to machine precision without the lower-order
/// branches of the usual implementation.
inline Matrix matrix_exponential(const Matrix& f, double dt) {
  if (f.rows() != f.cols())
    throw InvalidMatrix("matrix_exponential: matrix must be square");
  if (!all_finite(f) || !std::isfinite(dt))
    throw InvalidMatrix("matrix_exponential: non-finite input");
  if (dt < 0.0)
    throw InvalidMatrix("matrix_exponential: negative time step");

  const Eigen::Index n = f.rows();
  const Matrix identity = Matrix::Identity(n, n);
  Matrix a = f * dt;

  const double one_norm = a.cwiseAbs().colwise().sum().maxCoeff();
  const double theta13 = 5.371920351148152;
  int squarings = 0;
  if (one_norm > theta13) {
    squarings = static_cast<int>(std::ceil(std::log2(one_norm / theta13)));
    a *= std::ldexp(1.0, -squarings);
  }

  static const double b[] = {
      64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
      1187353796428800.0,  129060195264000.0,   10559470521600.0,
      670442572800.0,      33522128640.0,       1323241920.0,
      40840800.0,          960960.0,            16380.0,
      182.0,               1.0};

  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix u =
      a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 +
           b[5] * a4 + b[3] * a2 + b[1] * identity);
  const Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 +
                   b[4] * a4 + b[2] * a2 + b[0] * identity;

  Matrix result = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

/// Solves F X + X F^T + Q = 0 for the steady-state covariance X.
///
/// Uses the vectorised linear system (I (x) F + F (x) I) vec(X) = -vec(Q);
/// O(n^6) but n <= 3 for every kernel we support. F must be Hurwitz and Q
/// symmetric PSD, and the result is checked against the residual bound
/// ||F X + X F^T + Q||_F <= 1e-10 (||Q||_F + 1).
inline Matrix solve_lyapunov(const Matrix& f, const Matrix& q) {
  const Eigen::Index n = f.rows();
  if (f.cols() != n || q.rows() != n || q.cols() != n)
    throw InvalidMatrix("solve_lyapunov: dimension mismatch");
  if (!all_finite(f) || !all_finite(q))
    throw InvalidMatrix("solve_lyapunov: non-finite input");

  const Eigen::EigenSolver<Matrix> eigs(f);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (eigs.eigenvalues()[i].real() >= 0.0)
      throw NotHurwitz("solve_lyapunov: drift matrix has an eigenvalue with "
                       "non-negative real part");
  }

  const Matrix identity = Matrix::Identity(n, n);
  const Matrix system = kronecker(identity, f) + kronecker(f, identity);
  const Eigen::Map<const Vector> q_vec(q.data(), n * n);
  const Vector x_vec = system.fullPivLu().solve(-q_vec);
  Matrix x = symmetrize(Eigen::Map<const Matrix>(x_vec.data(), n, n));

  const double residual = (f * x + x * f.transpose() + q).norm();
  if (residual > 1e-10 * (q.norm() + 1.0))
    throw NotHurwitz("solve_lyapunov: residual check failed (near-singular "
                     "Lyapunov operator)");
  return x;
}

/// Cholesky factorisation of a symmetric positive definite matrix with a
/// single retry after adding relative jitter 1e-8 * tr(M)/dim to the
/// diagonal. Throws SingularMatrix if the retry also fails.
class SpdFactor {
 public:
  explicit SpdFactor(const Matrix& m) {
    if (m.rows() != m.cols())
      throw InvalidMatrix("SpdFactor: matrix must be square");
    llt_.compute(m);
    if (llt_.info() != Eigen::Success) {
      const double jitter = 1e-8 * m.trace() / static_cast<double>(m.rows());
      Matrix repaired = m;
      repaired.diagonal().array() += jitter;
      llt_.compute(repaired);
      jittered_ = true;
      if (llt_.info() != Eigen::Success)
        throw SingularMatrix("SpdFactor: factorisation failed after jitter");
    }
  }

  template <typename Derived>
  auto solve(const Eigen::MatrixBase<Derived>& b) const {
    return llt_.solve(b);
  }

  double log_det() const {
    return 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }

  bool jittered() const { return jittered_; }

 private:
  Eigen::LLT<Matrix> llt_;
  bool jittered_ = false;
};

struct PsdSolveResult {
  Matrix solution;
  bool jitter_applied = false;
};

/// M^{-1} B through a symmetric factorisation of M (see SpdFactor).
inline PsdSolveResult psd_solve(const Matrix& m, const Matrix& b) {
  if (m.rows() != b.rows())
    throw InvalidInput("psd_solve: non-conformable right-hand side");
  SpdFactor factor(m);
  return {factor.solve(b), factor.jittered()};
}

/// Repairs small negative eigenvalues of a nominally PSD matrix. Eigenvalues
/// in [-rel_tol * trace, 0) are zeroed; anything below that bound is treated
/// as a genuine failure.
inline Matrix clamp_psd(const Matrix& m, double rel_tol = 1e-8) {
  const Matrix sym = symmetrize(m);
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const double scale = std::max(sym.trace(), 1e-300);
  const double tol = rel_tol * scale;
  Vector lambda = es.eigenvalues();
  bool dirty = false;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < -tol)
      throw NotPositiveSemidefinite(
          "clamp_psd: eigenvalue " + std::to_string(lambda[i]) +
          " below tolerance " + std::to_string(-tol));
    if (lambda[i] < 0.0) {
      lambda[i] = 0.0;
      dirty = true;
    }
  }
  if (!dirty) return sym;
  return symmetrize(es.eigenvectors() * lambda.asDiagonal() *
                    es.eigenvectors().transpose());
}

}  // namespace strcgp
