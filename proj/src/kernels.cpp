#include "changelens/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "changelens/error.hpp"

namespace changelens::kernels {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

namespace {
void check_dims(std::span<const double> query, const MatrixView& rows) {
  if (query.size() != rows.dim || rows.data.size() != rows.rows * rows.dim)
    throw Error(ErrorCode::DimensionMismatch, "cosine_scores: dimension mismatch");
}
void check_dims(const MatrixView& a, const MatrixView& b) {
  if (a.dim != b.dim || a.data.size() != a.rows * a.dim || b.data.size() != b.rows * b.dim)
    throw Error(ErrorCode::DimensionMismatch, "greedy_maxima: dimension mismatch");
}
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

std::vector<double> cosine_scores_serial(std::span<const double> query, MatrixView rows) {
  check_dims(query, rows);
  std::vector<double> out(rows.rows);
  for (std::size_t i = 0; i < rows.rows; ++i) out[i] = cosine(query, rows.row(i));
  return out;
}

std::vector<double> cosine_scores_parallel(std::span<const double> query, MatrixView rows) {
  check_dims(query, rows);
  std::vector<double> out(rows.rows);
  const auto n = static_cast<long long>(rows.rows);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = cosine(query, rows.row(static_cast<std::size_t>(i)));
  }
  return out;
}

GreedyMaxima greedy_maxima_serial(MatrixView a, MatrixView b) {
  check_dims(a, b);
  GreedyMaxima g{std::vector<double>(a.rows, kNegInf), std::vector<double>(b.rows, kNegInf)};
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double s = cosine(a.row(i), b.row(j));
      if (s > g.row_max[i]) g.row_max[i] = s;
      if (s > g.col_max[j]) g.col_max[j] = s;
    }
  }
  return g;
}

GreedyMaxima greedy_maxima_parallel(MatrixView a, MatrixView b) {
  check_dims(a, b);
  const std::size_t m = a.rows;
  const std::size_t n = b.rows;
  std::vector<double> sim(m * n);
  const auto total = static_cast<long long>(m * n);
#pragma omp parallel for schedule(static)
  for (long long k = 0; k < total; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    sim[uk] = cosine(a.row(uk / n), b.row(uk % n));
  }

  GreedyMaxima g{std::vector<double>(m, kNegInf), std::vector<double>(n, kNegInf)};
  const auto mi = static_cast<long long>(m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < mi; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < n; ++j) g.row_max[ui] = std::max(g.row_max[ui], sim[ui * n + j]);
  }
  const auto nj = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long j = 0; j < nj; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    for (std::size_t i = 0; i < m; ++i) g.col_max[uj] = std::max(g.col_max[uj], sim[i * n + uj]);
  }
  return g;
}

}  // namespace changelens::kernels
