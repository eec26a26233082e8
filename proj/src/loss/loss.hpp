#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace forge::loss {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), v_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }
  const double* row(std::size_t r) const { return v_.data() + r * cols_; }
  double* row(std::size_t r) { return v_.data() + r * cols_; }
  const std::vector<double>& values() const { return v_; }
  std::vector<double>& values() { return v_; }
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> v_;
};

// Throws ArgumentError unless rows >= 1, cols >= 2 and every entry is finite.
void check_logits(const Matrix& m, const char* what = "logits");

struct LossResult {
  double loss = 0.0;
  Matrix grad;
};

using Mask = std::vector<bool>;

// Sum in a fixed pairwise tree so results do not depend on how rows are split.
double pairwise_sum(const double* x, std::size_t n);
inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

std::vector<double> log_softmax(const std::vector<double>& row);

LossResult masked_ce(const Matrix& logits, const std::vector<std::int64_t>& targets, const Mask& mask);

enum class KlDirection { kForward, kReverse };  // forward: KL(teacher || student)

struct KlOptions {
  double temperature = 1.0;
  KlDirection direction = KlDirection::kForward;
};

LossResult kl_distill(const Matrix& teacher, const Matrix& student, const Mask& mask, const KlOptions& opt = {});

struct JointResult {
  double total = 0.0;
  Matrix thinker_grad;                // ce.grad + lambda_kl * kl.grad
  std::optional<Matrix> talker_grad;  // lambda_talker * talker_ce.grad
};

JointResult joint_loss(const LossResult& ce, const LossResult& kl, double lambda_kl,
                       const LossResult* talker_ce = nullptr, double lambda_talker = 1.0);

using LossFn = std::function<LossResult(const Matrix&)>;
using LossValueFn = std::function<long double(const Matrix&)>;

// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-12),
// numeric taken by central differences with step epsilon on fn's own loss.
double finite_diff_check(const LossFn& fn, const Matrix& point, double epsilon = 1e-6);
// Same, but the differences are taken on `value`, an extended-precision
// evaluation of the same loss. With epsilon = 1e-6 a double-valued loss
// carries ~1e-10 of cancellation noise, more than 1e-5 of a small gradient
// coordinate.
double finite_diff_check(const LossFn& fn, const LossValueFn& value, const Matrix& point, double epsilon = 1e-6);

// Loss values in long double, for the numeric side of gradient checks.
long double masked_ce_value(const Matrix& logits, const std::vector<std::int64_t>& targets, const Mask& mask);
long double kl_distill_value(const Matrix& teacher, const Matrix& student, const Mask& mask, const KlOptions& opt = {});

// Binary matrix file: u64 rows, u64 cols (little-endian), then rows*cols
// little-endian IEEE-754 doubles.
Matrix read_matrix(const std::string& path);
void write_matrix(const std::string& path, const Matrix& m);
std::string encode_matrix(const Matrix& m);
Matrix decode_matrix(const std::string& bytes);

struct GradSuiteResult {
  int cases = 0;
  double max_ce_error = 0.0;
  double max_kl_error = 0.0;  // over all temperatures
  std::vector<double> temperatures;
  std::vector<double> max_kl_error_by_t;
  double max_identical_kl = 0.0;
  double max_uniform_ce_deviation = 0.0;
  // Same checks with differences over the double-valued loss, for reference.
  double max_ce_error_double = 0.0;
  double max_kl_error_double = 0.0;
};

inline constexpr double kGradTolerance = 1e-5;

// Random-case finite-difference suite behind `forge loss-check`.
GradSuiteResult run_grad_suite(int cases, std::uint64_t seed);

}  // namespace forge::loss
