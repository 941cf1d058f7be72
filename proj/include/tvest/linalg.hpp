#pragma once

#include <complex>
#include <span>
#include <vector>

namespace tvest {

// Dense square matrix, row-major, dimension capped at 8. Everything here is
// sized for short observability chains, so O(n^6) algorithms are acceptable.
class Mat {
 public:
  Mat() = default;
  explicit Mat(int n);
  static Mat identity(int n);

  int size() const { return n_; }
  double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i * n_ + j)]; }
  double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i * n_ + j)]; }

  Mat transposed() const;
  double max_abs() const;
  double norm1() const;  // max column sum
  std::vector<double> apply(std::span<const double> v) const;

  friend Mat operator*(const Mat& a, const Mat& b);
  friend Mat operator+(const Mat& a, const Mat& b);
  friend Mat operator-(const Mat& a, const Mat& b);
  Mat& operator*=(double s);
  friend Mat operator*(double s, Mat m) { m *= s; return m; }

 private:
  int n_ = 0;
  std::vector<double> a_;
};

// Symmetric view: construction rejects asymmetry above 1e-12 (relative to the
// largest entry) and stores the symmetrized average.
class SymMatrix {
 public:
  explicit SymMatrix(const Mat& m);
  int size() const { return m_.size(); }
  double operator()(int i, int j) const { return m_(i, j); }
  const Mat& mat() const { return m_; }

 private:
  Mat m_;
};

// Eigenvalues in ascending order by cyclic Jacobi rotations; iterates until
// the off-diagonal norm falls below 1e-12 (relative to the largest entry).
// Throws std::runtime_error if that takes more than a fixed sweep budget.
std::vector<double> sym_eigs(const SymMatrix& m);

// Solves P F + F'P = -I for symmetric P by eliminating the n(n+1)/2 upper
// triangle unknowns. Throws std::runtime_error when the system is singular
// (eigenvalues of F pair to zero; in particular F not Hurwitz) or when the
// residual max|P F + F'P + I| ends up above 1e-10.
SymMatrix lyapunov_solve(const Mat& f);

// Expands prod (s - r_i) into monic coefficients c with
//   s^n + c[0] s^(n-1) + ... + c[n-1].
// The root set must be closed under conjugation; a leftover imaginary part
// above 1e-10 in any coefficient is an error.
std::vector<double> poly_from_roots(std::span<const std::complex<double>> roots);

// Gaussian elimination with partial pivoting. A is taken by value and
// destroyed. Throws std::runtime_error on a singular pivot.
std::vector<double> solve_linear(Mat a, std::vector<double> b);
Mat solve_linear(Mat a, Mat b);

// Matrix exponential by Pade approximation with scaling and squaring.
Mat expm(const Mat& a);

// det(s I - A) by complex LU; used to confirm assigned spectra.
std::complex<double> char_poly_at(const Mat& a, std::complex<double> s);

}  // namespace tvest
