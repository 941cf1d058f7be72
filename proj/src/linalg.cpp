#include "tvest/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tvest {

namespace {
constexpr int kMaxDim = 8;

void check_dim(int n) {
  if (n < 1 || n > kMaxDim)
    throw std::invalid_argument("matrix dimension must be between 1 and 8, got " +
                                std::to_string(n));
}
}  // namespace

Mat::Mat(int n) : n_(n), a_(static_cast<std::size_t>(n * n), 0.0) { check_dim(n); }

Mat Mat::identity(int n) {
  Mat m(n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::transposed() const {
  Mat r(n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) r(j, i) = (*this)(i, j);
  return r;
}

double Mat::max_abs() const {
  double m = 0.0;
  for (double v : a_) m = std::max(m, std::abs(v));
  return m;
}

double Mat::norm1() const {
  double m = 0.0;
  for (int j = 0; j < n_; ++j) {
    double s = 0.0;
    for (int i = 0; i < n_; ++i) s += std::abs((*this)(i, j));
    m = std::max(m, s);
  }
  return m;
}

std::vector<double> Mat::apply(std::span<const double> v) const {
  if (static_cast<int>(v.size()) != n_)
    throw std::invalid_argument("matrix-vector size mismatch");
  std::vector<double> r(static_cast<std::size_t>(n_), 0.0);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) r[static_cast<std::size_t>(i)] += (*this)(i, j) * v[static_cast<std::size_t>(j)];
  return r;
}

Mat operator*(const Mat& a, const Mat& b) {
  if (a.n_ != b.n_) throw std::invalid_argument("matrix size mismatch");
  Mat r(a.n_);
  for (int i = 0; i < a.n_; ++i)
    for (int k = 0; k < a.n_; ++k) {
      double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < a.n_; ++j) r(i, j) += aik * b(k, j);
    }
  return r;
}

Mat operator+(const Mat& a, const Mat& b) {
  if (a.n_ != b.n_) throw std::invalid_argument("matrix size mismatch");
  Mat r = a;
  for (int i = 0; i < a.n_; ++i)
    for (int j = 0; j < a.n_; ++j) r(i, j) += b(i, j);
  return r;
}

Mat operator-(const Mat& a, const Mat& b) {
  if (a.n_ != b.n_) throw std::invalid_argument("matrix size mismatch");
  Mat r = a;
  for (int i = 0; i < a.n_; ++i)
    for (int j = 0; j < a.n_; ++j) r(i, j) -= b(i, j);
  return r;
}

Mat& Mat::operator*=(double s) {
  for (double& v : a_) v *= s;
  return *this;
}

SymMatrix::SymMatrix(const Mat& m) : m_(m.size()) {
  int n = m.size();
  double scale = std::max(1.0, m.max_abs());
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      if (std::abs(m(i, j) - m(j, i)) > 1e-12 * scale)
        throw std::invalid_argument("matrix is not symmetric");
      double v = 0.5 * (m(i, j) + m(j, i));
      m_(i, j) = v;
      m_(j, i) = v;
    }
}

std::vector<double> sym_eigs(const SymMatrix& sym) {
  Mat a = sym.mat();
  const int n = a.size();
  const double tol = 1e-12 * std::max(1.0, a.max_abs());

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
    off = std::sqrt(off);
    if (off <= tol) {
      std::vector<double> ev(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
      std::sort(ev.begin(), ev.end());
      return ev;
    }
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (std::abs(apq) <= tol / (n * n)) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  throw std::runtime_error("eigenvalue iteration did not converge");
}

SymMatrix lyapunov_solve(const Mat& f) {
  const int n = f.size();
  const int un = n * (n + 1) / 2;
  auto idx = [n](int i, int j) {
    if (i > j) std::swap(i, j);
    // row-major walk over the upper triangle
    return i * n - i * (i - 1) / 2 + (j - i);
  };

  // one equation per upper-triangle position of P F + F'P = -I
  std::vector<double> sys(static_cast<std::size_t>(un * un), 0.0);
  std::vector<double> rhs(static_cast<std::size_t>(un), 0.0);
  for (int r = 0; r < n; ++r)
    for (int c = r; c < n; ++c) {
      int row = idx(r, c);
      for (int k = 0; k < n; ++k) {
        sys[static_cast<std::size_t>(row * un + idx(r, k))] += f(k, c);
        sys[static_cast<std::size_t>(row * un + idx(k, c))] += f(k, r);
      }
      rhs[static_cast<std::size_t>(row)] = (r == c) ? -1.0 : 0.0;
    }

  // partial-pivot elimination on the packed system
  double scale = 0.0;
  for (double v : sys) scale = std::max(scale, std::abs(v));
  scale = std::max(scale, 1.0);
  for (int col = 0; col < un; ++col) {
    int piv = col;
    for (int r = col + 1; r < un; ++r)
      if (std::abs(sys[static_cast<std::size_t>(r * un + col)]) >
          std::abs(sys[static_cast<std::size_t>(piv * un + col)]))
        piv = r;
    double pval = sys[static_cast<std::size_t>(piv * un + col)];
    if (std::abs(pval) <= 1e-13 * scale)
      throw std::runtime_error(
          "Lyapunov system is singular; the closed-loop matrix must be Hurwitz");
    if (piv != col) {
      for (int j = 0; j < un; ++j)
        std::swap(sys[static_cast<std::size_t>(col * un + j)],
                  sys[static_cast<std::size_t>(piv * un + j)]);
      std::swap(rhs[static_cast<std::size_t>(col)], rhs[static_cast<std::size_t>(piv)]);
    }
    for (int r = col + 1; r < un; ++r) {
      double m = sys[static_cast<std::size_t>(r * un + col)] / pval;
      if (m == 0.0) continue;
      for (int j = col; j < un; ++j)
        sys[static_cast<std::size_t>(r * un + j)] -= m * sys[static_cast<std::size_t>(col * un + j)];
      rhs[static_cast<std::size_t>(r)] -= m * rhs[static_cast<std::size_t>(col)];
    }
  }
  std::vector<double> u(static_cast<std::size_t>(un), 0.0);
  for (int r = un - 1; r >= 0; --r) {
    double s = rhs[static_cast<std::size_t>(r)];
    for (int j = r + 1; j < un; ++j)
      s -= sys[static_cast<std::size_t>(r * un + j)] * u[static_cast<std::size_t>(j)];
    u[static_cast<std::size_t>(r)] = s / sys[static_cast<std::size_t>(r * un + r)];
  }

  Mat p(n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      p(i, j) = u[static_cast<std::size_t>(idx(i, j))];
      p(j, i) = p(i, j);
    }

  Mat resid = p * f + f.transposed() * p + Mat::identity(n);
  if (resid.max_abs() > 1e-10)
    throw std::runtime_error("Lyapunov solve residual above 1e-10");
  return SymMatrix(p);
}

std::vector<double> poly_from_roots(std::span<const std::complex<double>> roots) {
  std::vector<std::complex<double>> c = {1.0};
  for (const auto& r : roots) {
    c.push_back(0.0);
    for (std::size_t i = c.size() - 1; i > 0; --i) c[i] -= r * c[i - 1];
  }
  std::vector<double> out;
  out.reserve(roots.size());
  for (std::size_t i = 1; i < c.size(); ++i) {
    if (std::abs(c[i].imag()) > 1e-10)
      throw std::runtime_error("root set is not closed under conjugation");
    out.push_back(c[i].real());
  }
  return out;
}

std::vector<double> solve_linear(Mat a, std::vector<double> b) {
  const int n = a.size();
  if (static_cast<int>(b.size()) != n) throw std::invalid_argument("solve size mismatch");
  double scale = std::max(1.0, a.max_abs());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (std::abs(a(piv, col)) <= 1e-14 * scale)
      throw std::runtime_error("linear solve hit a singular pivot");
    if (piv != col) {
      for (int j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
      std::swap(b[static_cast<std::size_t>(col)], b[static_cast<std::size_t>(piv)]);
    }
    for (int r = col + 1; r < n; ++r) {
      double m = a(r, col) / a(col, col);
      if (m == 0.0) continue;
      for (int j = col; j < n; ++j) a(r, j) -= m * a(col, j);
      b[static_cast<std::size_t>(r)] -= m * b[static_cast<std::size_t>(col)];
    }
  }
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[static_cast<std::size_t>(r)];
    for (int j = r + 1; j < n; ++j) s -= a(r, j) * x[static_cast<std::size_t>(j)];
    x[static_cast<std::size_t>(r)] = s / a(r, r);
  }
  return x;
}

Mat solve_linear(Mat a, Mat b) {
  const int n = a.size();
  if (b.size() != n) throw std::invalid_argument("solve size mismatch");
  Mat x(n);
  // column-by-column reuse of the vector solver keeps this simple; n <= 8
  for (int j = 0; j < n; ++j) {
    std::vector<double> col(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = b(i, j);
    std::vector<double> sol = solve_linear(a, std::move(col));
    for (int i = 0; i < n; ++i) x(i, j) = sol[static_cast<std::size_t>(i)];
  }
  return x;
}

Mat expm(const Mat& a) {
  const int n = a.size();
  // Pade(13) with scaling and squaring
  static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                             1187353796428800.0,  129060195264000.0,   10559470521600.0,
                             670442572800.0,      33522128640.0,       1323241920.0,
                             40840800.0,          960960.0,            16380.0,
                             182.0,               1.0};
  const double theta13 = 5.371920351148152;

  Mat as = a;
  int squarings = 0;
  double nrm = a.norm1();
  if (nrm > theta13) {
    squarings = static_cast<int>(std::ceil(std::log2(nrm / theta13)));
    as *= std::ldexp(1.0, -squarings);
  }

  Mat i = Mat::identity(n);
  Mat a2 = as * as;
  Mat a4 = a2 * a2;
  Mat a6 = a2 * a4;

  Mat u = as * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) +
                (b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * i));
  Mat v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) +
          (b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * i);

  Mat r = solve_linear(v - u, v + u);
  for (int k = 0; k < squarings; ++k) r = r * r;
  return r;
}

std::complex<double> char_poly_at(const Mat& a, std::complex<double> s) {
  const int n = a.size();
  std::vector<std::complex<double>> m(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      m[static_cast<std::size_t>(i * n + j)] = (i == j ? s : 0.0) - a(i, j);

  std::complex<double> det = 1.0;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(m[static_cast<std::size_t>(r * n + col)]) >
          std::abs(m[static_cast<std::size_t>(piv * n + col)]))
        piv = r;
    std::complex<double> pval = m[static_cast<std::size_t>(piv * n + col)];
    if (std::abs(pval) == 0.0) return 0.0;
    if (piv != col) {
      for (int j = col; j < n; ++j)
        std::swap(m[static_cast<std::size_t>(col * n + j)], m[static_cast<std::size_t>(piv * n + j)]);
      det = -det;
    }
    det *= pval;
    for (int r = col + 1; r < n; ++r) {
      std::complex<double> f = m[static_cast<std::size_t>(r * n + col)] / pval;
      if (f == 0.0) continue;
      for (int j = col; j < n; ++j)
        m[static_cast<std::size_t>(r * n + j)] -= f * m[static_cast<std::size_t>(col * n + j)];
    }
  }
  return det;
}

}  // namespace tvest
