#include "loss/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "util/error.hpp"
#include "util/hash.hpp"
#include "util/rng.hpp"

namespace forge::loss {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), v_(std::move(values)) {
  if (v_.size() != rows * cols) throw ArgumentError("matrix: value count does not match shape");
}

void check_logits(const Matrix& m, const char* what) {
  if (m.rows() < 1) throw ArgumentError(std::string(what) + ": need at least one position");
  if (m.cols() < 2) throw ArgumentError(std::string(what) + ": vocabulary size must be >= 2");
  for (double x : m.values())
    if (!std::isfinite(x)) throw ArgumentError(std::string(what) + ": non-finite entry");
}

double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

namespace {

void log_softmax_into(const double* x, std::size_t n, double* out) {
  const double mx = *std::max_element(x, x + n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i] - mx);
  const double lse = std::log(pairwise_sum(out, n));
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - mx - lse;
}

std::size_t check_mask(const Mask& mask, std::size_t rows) {
  if (mask.size() != rows) throw ArgumentError("mask length does not match number of positions");
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

}  // namespace

std::vector<double> log_softmax(const std::vector<double>& row) {
  if (row.empty()) throw ArgumentError("log_softmax: empty row");
  for (double x : row)
    if (!std::isfinite(x)) throw ArgumentError("log_softmax: non-finite entry");
  std::vector<double> out(row.size());
  log_softmax_into(row.data(), row.size(), out.data());
  return out;
}

LossResult masked_ce(const Matrix& logits, const std::vector<std::int64_t>& targets, const Mask& mask) {
  check_logits(logits);
  if (targets.size() != logits.rows()) throw ArgumentError("masked_ce: targets length does not match positions");
  const std::size_t active = check_mask(mask, logits.rows());
  const auto V = logits.cols();
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= V)
      throw ArgumentError("masked_ce: target " + std::to_string(targets[i]) + " at position " + std::to_string(i) +
                          " outside [0, " + std::to_string(V) + ")");

  LossResult r{0.0, Matrix(logits.rows(), V)};
  if (active == 0) return r;
  const double inv = 1.0 / static_cast<double>(active);
  std::vector<double> row_loss(logits.rows(), 0.0);
  std::vector<double> lp(V);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!mask[i]) continue;
    log_softmax_into(logits.row(i), V, lp.data());
    const auto t = static_cast<std::size_t>(targets[i]);
    row_loss[i] = -lp[t];
    double* g = r.grad.row(i);
    for (std::size_t k = 0; k < V; ++k) g[k] = std::exp(lp[k]) * inv;
    g[t] -= inv;
  }
  r.loss = pairwise_sum(row_loss) * inv;
  return r;
}

LossResult kl_distill(const Matrix& teacher, const Matrix& student, const Mask& mask, const KlOptions& opt) {
  check_logits(teacher, "teacher");
  check_logits(student, "student");
  if (!teacher.same_shape(student)) throw ArgumentError("kl_distill: teacher and student shapes differ");
  if (!(opt.temperature > 0.0) || !std::isfinite(opt.temperature))
    throw ArgumentError("kl_distill: temperature must be > 0");
  const std::size_t active = check_mask(mask, student.rows());
  const auto V = student.cols();
  const double T = opt.temperature;

  LossResult r{0.0, Matrix(student.rows(), V)};
  if (active == 0) return r;
  const double inv = 1.0 / static_cast<double>(active);
  std::vector<double> row_loss(student.rows(), 0.0);
  std::vector<double> ts(V), ss(V), lp(V), lq(V), terms(V);
  for (std::size_t i = 0; i < student.rows(); ++i) {
    if (!mask[i]) continue;
    for (std::size_t k = 0; k < V; ++k) {
      ts[k] = teacher(i, k) / T;
      ss[k] = student(i, k) / T;
    }
    log_softmax_into(ts.data(), V, lp.data());
    log_softmax_into(ss.data(), V, lq.data());
    double* g = r.grad.row(i);
    if (opt.direction == KlDirection::kForward) {
      // KL(p||q); d/dz_k = T * (q_k - p_k) after the T^2 scale.
      for (std::size_t k = 0; k < V; ++k) {
        const double p = std::exp(lp[k]);
        terms[k] = p > 0.0 ? p * (lp[k] - lq[k]) : 0.0;
        g[k] = T * (std::exp(lq[k]) - p) * inv;
      }
      row_loss[i] = pairwise_sum(terms.data(), V);
    } else {
      // KL(q||p); d/dz_k = T * q_k * ((lq_k - lp_k) - KL).
      for (std::size_t k = 0; k < V; ++k) {
        const double q = std::exp(lq[k]);
        terms[k] = q > 0.0 ? q * (lq[k] - lp[k]) : 0.0;
      }
      const double kl = pairwise_sum(terms.data(), V);
      for (std::size_t k = 0; k < V; ++k) g[k] = T * std::exp(lq[k]) * ((lq[k] - lp[k]) - kl) * inv;
      row_loss[i] = kl;
    }
  }
  r.loss = T * T * pairwise_sum(row_loss) * inv;
  return r;
}

JointResult joint_loss(const LossResult& ce, const LossResult& kl, double lambda_kl, const LossResult* talker_ce,
                       double lambda_talker) {
  if (!(lambda_kl >= 0.0) || !(lambda_talker >= 0.0)) throw ArgumentError("joint_loss: weights must be >= 0");
  if (!ce.grad.same_shape(kl.grad)) throw ArgumentError("joint_loss: ce and kl gradients differ in shape");
  JointResult r;
  r.total = ce.loss + lambda_kl * kl.loss;
  r.thinker_grad = ce.grad;
  auto& g = r.thinker_grad.values();
  const auto& k = kl.grad.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += lambda_kl * k[i];
  if (talker_ce) {
    r.total += lambda_talker * talker_ce->loss;
    Matrix tg = talker_ce->grad;
    for (auto& x : tg.values()) x *= lambda_talker;
    r.talker_grad = std::move(tg);
  }
  return r;
}

double finite_diff_check(const LossFn& fn, const Matrix& point, double epsilon) {
  return finite_diff_check(fn, [&](const Matrix& m) { return static_cast<long double>(fn(m).loss); }, point, epsilon);
}

double finite_diff_check(const LossFn& fn, const LossValueFn& value, const Matrix& point, double epsilon) {
  if (!(epsilon > 0.0)) throw ArgumentError("finite_diff_check: epsilon must be > 0");
  const LossResult base = fn(point);
  if (!base.grad.same_shape(point)) throw ArgumentError("finite_diff_check: gradient shape mismatch");
  Matrix x = point;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.values().size(); ++i) {
    const double orig = x.values()[i];
    const double hi = orig + epsilon, lo = orig - epsilon;
    x.values()[i] = hi;
    const long double up = value(x);
    x.values()[i] = lo;
    const long double down = value(x);
    x.values()[i] = orig;
    const double numeric = static_cast<double>((up - down) / (static_cast<long double>(hi) - lo));
    const double analytic = base.grad.values()[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

namespace {

void log_softmax_ld(const std::vector<long double>& x, std::vector<long double>& out) {
  const long double mx = *std::max_element(x.begin(), x.end());
  long double s = 0;
  for (auto v : x) s += std::exp(v - mx);
  const long double lse = mx + std::log(s);
  out.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] - lse;
}

}  // namespace

long double masked_ce_value(const Matrix& logits, const std::vector<std::int64_t>& targets, const Mask& mask) {
  check_logits(logits);
  const std::size_t active = check_mask(mask, logits.rows());
  if (targets.size() != logits.rows()) throw ArgumentError("masked_ce: targets length != rows");
  if (active == 0) return 0;
  std::vector<long double> row(logits.cols()), ls;
  long double total = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!mask[i]) continue;
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = logits(i, k);
    log_softmax_ld(row, ls);
    total -= ls.at(static_cast<std::size_t>(targets[i]));
  }
  return total / static_cast<long double>(active);
}

long double kl_distill_value(const Matrix& teacher, const Matrix& student, const Mask& mask, const KlOptions& opt) {
  check_logits(teacher, "teacher");
  check_logits(student, "student");
  if (!teacher.same_shape(student)) throw ArgumentError("kl_distill: teacher and student shapes differ");
  const std::size_t active = check_mask(mask, student.rows());
  if (active == 0) return 0;
  const long double T = opt.temperature;
  std::vector<long double> t(student.cols()), s(student.cols()), lp, lq;
  long double total = 0;
  for (std::size_t i = 0; i < student.rows(); ++i) {
    if (!mask[i]) continue;
    for (std::size_t k = 0; k < t.size(); ++k) {
      t[k] = teacher(i, k) / T;
      s[k] = student(i, k) / T;
    }
    log_softmax_ld(t, lp);
    log_softmax_ld(s, lq);
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (opt.direction == KlDirection::kForward)
        total += std::exp(lp[k]) * (lp[k] - lq[k]);
      else
        total += std::exp(lq[k]) * (lq[k] - lp[k]);
    }
  }
  return T * T * total / static_cast<long double>(active);
}

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[at + i]);
  return v;
}

}  // namespace

std::string encode_matrix(const Matrix& m) {
  std::string out;
  out.reserve(16 + 8 * m.values().size());
  put_u64(out, m.rows());
  put_u64(out, m.cols());
  for (double x : m.values()) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    put_u64(out, bits);
  }
  return out;
}

Matrix decode_matrix(const std::string& bytes) {
  if (bytes.size() < 16) throw ParseError("matrix: truncated header");
  const auto rows = get_u64(bytes, 0);
  const auto cols = get_u64(bytes, 8);
  if (cols != 0 && rows > (bytes.size() / 8) / cols) throw ParseError("matrix: shape larger than payload");
  const std::size_t n = rows * cols;
  if (bytes.size() != 16 + 8 * n)
    throw ParseError("matrix: expected " + std::to_string(16 + 8 * n) + " bytes, got " + std::to_string(bytes.size()));
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = get_u64(bytes, 16 + 8 * i);
    std::memcpy(&v[i], &bits, sizeof bits);
  }
  return Matrix(rows, cols, std::move(v));
}

Matrix read_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_matrix(bytes);
}

void write_matrix(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const auto bytes = encode_matrix(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

GradSuiteResult run_grad_suite(int cases, std::uint64_t seed) {
  if (cases < 1) throw ArgumentError("loss-check: cases must be >= 1");
  GradSuiteResult r;
  r.cases = cases;
  r.temperatures = {0.5, 1.0, 2.0};
  r.max_kl_error_by_t.assign(r.temperatures.size(), 0.0);
  for (int c = 0; c < cases; ++c) {
    Rng rng(derive_seed(seed, std::to_string(c), "loss-check"));
    const auto rows = static_cast<std::size_t>(rng.between(1, 5));
    const auto cols = static_cast<std::size_t>(rng.between(2, 9));
    Matrix a(rows, cols), b(rows, cols);
    for (auto& x : a.values()) x = rng.uniform() * 6.0 - 3.0;
    for (auto& x : b.values()) x = rng.uniform() * 6.0 - 3.0;
    std::vector<std::int64_t> targets(rows);
    for (auto& t : targets) t = static_cast<std::int64_t>(rng.below(cols));
    Mask mask(rows);
    for (std::size_t i = 0; i < rows; ++i) mask[i] = rng.bernoulli(0.75);
    mask[rng.below(rows)] = true;

    const LossFn ce_fn = [&](const Matrix& m) { return masked_ce(m, targets, mask); };
    r.max_ce_error = std::max(
        r.max_ce_error, finite_diff_check(ce_fn, [&](const Matrix& m) { return masked_ce_value(m, targets, mask); }, a));
    r.max_ce_error_double = std::max(r.max_ce_error_double, finite_diff_check(ce_fn, a));
    for (std::size_t ti = 0; ti < r.temperatures.size(); ++ti) {
      for (auto dir : {KlDirection::kForward, KlDirection::kReverse}) {
        const KlOptions opt{r.temperatures[ti], dir};
        const LossFn kl = [&](const Matrix& m) { return kl_distill(b, m, mask, opt); };
        const double e = finite_diff_check(kl, [&](const Matrix& m) { return kl_distill_value(b, m, mask, opt); }, a);
        r.max_kl_error_by_t[ti] = std::max(r.max_kl_error_by_t[ti], e);
        r.max_kl_error = std::max(r.max_kl_error, e);
        r.max_kl_error_double = std::max(r.max_kl_error_double, finite_diff_check(kl, a));
      }
    }
    r.max_identical_kl = std::max(r.max_identical_kl, std::abs(kl_distill(a, a, mask).loss));
    Matrix uniform(rows, cols, rng.uniform() * 10.0 - 5.0);
    const double ce = masked_ce(uniform, targets, mask).loss;
    r.max_uniform_ce_deviation =
        std::max(r.max_uniform_ce_deviation, std::abs(ce - std::log(static_cast<double>(cols))));
  }
  return r;
}

}  // namespace forge::loss
