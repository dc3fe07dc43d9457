// Differentiable-computation core: tensors, parameter storage, the LSTM
// cell with its backward pass, Adam, and a finite-difference checker.
#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace lenvae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense float64 tensor, row-major. Rank 1 and rank 2 are the only ranks the
/// model uses; higher ranks are stored but cannot be viewed as matrices.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  Eigen::Map<RowMajorMatrix> matrix();
  Eigen::Map<const RowMajorMatrix> matrix() const;
  Eigen::Map<Vector> vector();
  Eigen::Map<const Vector> vector() const;

  void set_zero();
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Named learnable tensors with gradient slots. Iteration follows insertion
/// order; references stay valid as parameters are added.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor::Shape shape);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t count() const { return entries_.size(); }
  std::size_t total_size() const;
  void zero_grad();

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::deque<Parameter> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Seeded random stream. Every stochastic operation draws from one of these
/// so that callers can freeze the noise by re-seeding.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);
double log_sum_exp(std::span<const double> values);

// ---------------------------------------------------------------------------
// LSTM cell. Gate rows are stacked [input, forget, candidate, output] in the
// 4H-row weight matrices. Columns of the activation matrices are batch items.

struct LstmParams {
  Parameter* input_weights = nullptr;      // 4H x In
  Parameter* recurrent_weights = nullptr;  // 4H x H
  Parameter* bias = nullptr;               // 4H

  static LstmParams bind(ParamStore& store, const std::string& prefix);
  /// Registers `prefix.wx`, `prefix.wh`, `prefix.b`.
  static LstmParams create(ParamStore& store, const std::string& prefix,
                           std::size_t input_size, std::size_t hidden_size);

  std::size_t hidden_size() const;
  std::size_t input_size() const;
};

struct LstmCache {
  Matrix input, h_prev, c_prev;
  Matrix i, f, g, o;
  Matrix c, tanh_c;
};

struct LstmOutput {
  Matrix h;
  Matrix c;
};

LstmOutput lstm_cell_forward(const Matrix& input, const Matrix& h_prev,
                             const Matrix& c_prev, const LstmParams& params,
                             LstmCache* cache = nullptr);

struct LstmInputGrads {
  Matrix input;
  Matrix h_prev;
  Matrix c_prev;
};

/// Accumulates weight gradients into the bound parameters' grad slots.
LstmInputGrads lstm_cell_backward(const LstmCache& cache, const Matrix& dh,
                                  const Matrix& dc, const LstmParams& params);

/// Uniform(+-scale) weights, forget-gate bias 1, other biases 0.
void init_lstm(const LstmParams& params, RandomStream& rng, double scale);

// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update. Zeroes the gradients afterwards.
void adam_step(ParamStore& params, AdamState& state);

/// Global-norm clipping; returns the norm before clipping.
double clip_gradients(ParamStore& params, double max_norm);

/// Evaluates the loss at `params` and writes analytic gradients into the
/// parameters' grad slots. Must be deterministic in `params`.
using LossWithGradient = std::function<double(ParamStore&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
/// Central differences at eps 1e-5 on an O(10) loss carry roughly 1e-10 of
/// roundoff, so gradients much smaller than this cannot be compared
/// relatively; below the floor the check is effectively |a - n| < 1e-9.
inline constexpr double kGradCheckFloor = 1e-5;

GradCheckResult grad_check(const LossWithGradient& loss, ParamStore& params,
                           double eps = 1e-5);

}  // namespace lenvae
