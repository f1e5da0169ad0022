#include "core_math.hpp"

#include <algorithm>
#include <cmath>

namespace negprompt {

double norm2(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("dot: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Vec l2_normalize(const Vec& v) {
  if (v.empty()) throw InvalidArgument("degenerate vector: empty");
  const double n = norm2(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("degenerate vector: zero norm");
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

double cosine_sim(const Vec& a, const Vec& b) {
  const double d = dot(a, b);
  return std::clamp(d, -1.0, 1.0);
}

Vec softmax_stable(const Vec& logits) {
  if (logits.empty()) throw InvalidArgument("softmax: empty input");
  double m = logits[0];
  for (double x : logits) {
    if (std::isnan(x)) throw InvalidArgument("softmax: NaN input");
    m = std::max(m, x);
  }
  Vec out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (auto& x : out) x /= z;
  return out;
}

double log_sum_exp(const Vec& logits) {
  if (logits.empty()) throw InvalidArgument("log_sum_exp: empty input");
  double m = logits[0];
  for (double x : logits) {
    if (std::isnan(x)) throw InvalidArgument("log_sum_exp: NaN input");
    m = std::max(m, x);
  }
  double z = 0.0;
  for (double x : logits) z += std::exp(x - m);
  return m + std::log(z);
}

bool all_finite(const Vec& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Vec matvec(const Matrix& m, const Vec& x) {
  if (x.size() != m.cols) throw InvalidArgument("matvec: dimension mismatch");
  Vec out(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double s = 0.0;
    const double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
    out[r] = s;
  }
  return out;
}

Vec matvec_t(const Matrix& m, const Vec& x) {
  if (x.size() != m.rows) throw InvalidArgument("matvec_t: dimension mismatch");
  Vec out(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += row[c] * x[r];
  }
  return out;
}

void axpy(double alpha, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw InvalidArgument("axpy: dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace negprompt
