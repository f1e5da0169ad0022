#pragma once

#include <cstddef>
#include <vector>

#include "errors.hpp"

namespace negprompt {

// All internal arithmetic is double precision; file formats quantize to f32.
using Vec = std::vector<double>;

double norm2(const Vec& v);
double dot(const Vec& a, const Vec& b);

// Unit-norm copy of v. Throws InvalidArgument("degenerate vector") when the
// norm is zero (or not a positive finite number).
Vec l2_normalize(const Vec& v);

// Dot product of two unit vectors, clamped to [-1, 1].
double cosine_sim(const Vec& a, const Vec& b);

// Shift-invariant softmax: exp(x_i - max) / sum_j exp(x_j - max).
// The result sums to 1 and every entry is in [0, 1].
Vec softmax_stable(const Vec& logits);

// log(sum_j exp(x_j)) with the same max shift.
double log_sum_exp(const Vec& logits);

bool all_finite(const Vec& v);

// Dense row-major matrix; the only shapes this project needs.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

Vec matvec(const Matrix& m, const Vec& x);    // rows-sized result
Vec matvec_t(const Matrix& m, const Vec& x);  // m^T x, cols-sized result

void axpy(double alpha, const Vec& x, Vec& y);  // y += alpha * x

}  // namespace negprompt
