#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Data-parallel hot loops. Each kernel has an OpenMP version used by the
// library and a serial reference kept for tests and the benchmark target.
// Both produce bit-identical results: the per-element reduction order is the
// same, only the outer loop is split across threads.
namespace changelens::kernels {

// Row-major matrix view: rows * dim contiguous doubles.
struct MatrixView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t dim = 0;

  std::span<const double> row(std::size_t i) const { return data.subspan(i * dim, dim); }
};

double dot(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const double> a, std::span<const double> b);

// cosine(query, row_i) for every row.
std::vector<double> cosine_scores_serial(std::span<const double> query, MatrixView rows);
std::vector<double> cosine_scores_parallel(std::span<const double> query, MatrixView rows);

// For the pairwise cosine matrix S[i][j] = cos(a_i, b_j):
// row_max[i] = max_j S[i][j], col_max[j] = max_i S[i][j].
struct GreedyMaxima {
  std::vector<double> row_max;
  std::vector<double> col_max;
};

GreedyMaxima greedy_maxima_serial(MatrixView a, MatrixView b);
GreedyMaxima greedy_maxima_parallel(MatrixView a, MatrixView b);

}  // namespace changelens::kernels
