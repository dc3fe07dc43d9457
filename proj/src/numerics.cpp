#include "lenvae/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lenvae {

namespace {

std::size_t shape_product(const Tensor::Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive");
    n *= extent;
  }
  return n;
}

Matrix sigmoid(const Matrix& x) {
  return (1.0 + (-x.array()).exp()).inverse().matrix();
}

void check_shape(const Parameter& p, std::size_t rows, std::size_t cols) {
  if (p.value.rows() != rows || p.value.cols() != cols)
    throw ShapeError("shape mismatch for '" + p.name + "': expected " +
                     std::to_string(rows) + "x" + std::to_string(cols) +
                     ", got " + std::to_string(p.value.rows()) + "x" +
                     std::to_string(p.value.cols()));
}

}  // namespace

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_product(shape_) != values_.size())
    throw ShapeError("tensor value count does not match its shape");
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 0;
  if (shape_.size() == 1) return 1;
  return shape_[1];
}

Eigen::Map<RowMajorMatrix> Tensor::matrix() {
  if (rank() > 2) throw ShapeError("matrix view needs rank <= 2");
  return {values_.data(), static_cast<Eigen::Index>(rows()),
          static_cast<Eigen::Index>(cols())};
}

Eigen::Map<const RowMajorMatrix> Tensor::matrix() const {
  if (rank() > 2) throw ShapeError("matrix view needs rank <= 2");
  return {values_.data(), static_cast<Eigen::Index>(rows()),
          static_cast<Eigen::Index>(cols())};
}

Eigen::Map<Vector> Tensor::vector() {
  return {values_.data(), static_cast<Eigen::Index>(values_.size())};
}

Eigen::Map<const Vector> Tensor::vector() const {
  return {values_.data(), static_cast<Eigen::Index>(values_.size())};
}

void Tensor::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

Parameter& ParamStore::add(const std::string& name, Tensor::Shape shape) {
  if (index_.contains(name))
    throw Error("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  Tensor value(shape);
  Tensor grad(std::move(shape));
  entries_.push_back(Parameter{name, std::move(value), std::move(grad)});
  return entries_.back();
}

Parameter& ParamStore::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end())
    throw Error("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second];
}

const Parameter& ParamStore::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end())
    throw Error("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second];
}

bool ParamStore::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : entries_) p.grad.set_zero();
}

std::size_t RandomStream::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw Error("log_sum_exp of empty input");
  const double m = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - m);
  return m + std::log(sum);
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw Error("softmax of empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.begin(), logits.end());
  for (auto& v : out) v -= lse;
  return out;
}

LstmParams LstmParams::bind(ParamStore& store, const std::string& prefix) {
  LstmParams p;
  p.input_weights = &store.at(prefix + ".wx");
  p.recurrent_weights = &store.at(prefix + ".wh");
  p.bias = &store.at(prefix + ".b");
  const std::size_t h = p.hidden_size();
  check_shape(*p.recurrent_weights, 4 * h, h);
  check_shape(*p.bias, 4 * h, 1);
  if (p.input_weights->value.rows() != 4 * h)
    throw ShapeError("shape mismatch for '" + p.input_weights->name +
                     "': row count must be 4x hidden size");
  return p;
}

LstmParams LstmParams::create(ParamStore& store, const std::string& prefix,
                              std::size_t input_size,
                              std::size_t hidden_size) {
  store.add(prefix + ".wx", {4 * hidden_size, input_size});
  store.add(prefix + ".wh", {4 * hidden_size, hidden_size});
  store.add(prefix + ".b", {4 * hidden_size});
  return bind(store, prefix);
}

std::size_t LstmParams::hidden_size() const {
  return recurrent_weights->value.cols();
}

std::size_t LstmParams::input_size() const {
  return input_weights->value.cols();
}

LstmOutput lstm_cell_forward(const Matrix& input, const Matrix& h_prev,
                             const Matrix& c_prev, const LstmParams& params,
                             LstmCache* cache) {
  const auto hidden = static_cast<Eigen::Index>(params.hidden_size());
  if (input.rows() != static_cast<Eigen::Index>(params.input_size()))
    throw ShapeError("shape mismatch for LSTM input: expected " +
                     std::to_string(params.input_size()) + " rows, got " +
                     std::to_string(input.rows()));
  if (h_prev.rows() != hidden || h_prev.cols() != input.cols())
    throw ShapeError("shape mismatch for LSTM h_prev");
  if (c_prev.rows() != hidden || c_prev.cols() != input.cols())
    throw ShapeError("shape mismatch for LSTM c_prev");

  Matrix pre = params.input_weights->value.matrix() * input +
               params.recurrent_weights->value.matrix() * h_prev;
  pre.colwise() += params.bias->value.vector();

  Matrix i = sigmoid(pre.middleRows(0, hidden));
  Matrix f = sigmoid(pre.middleRows(hidden, hidden));
  Matrix g = pre.middleRows(2 * hidden, hidden).array().tanh().matrix();
  Matrix o = sigmoid(pre.middleRows(3 * hidden, hidden));

  LstmOutput out;
  out.c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  Matrix tanh_c = out.c.array().tanh().matrix();
  out.h = o.cwiseProduct(tanh_c);

  if (cache) {
    cache->input = input;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->g = std::move(g);
    cache->o = std::move(o);
    cache->c = out.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return out;
}

LstmInputGrads lstm_cell_backward(const LstmCache& cache, const Matrix& dh,
                                  const Matrix& dc, const LstmParams& params) {
  const auto hidden = static_cast<Eigen::Index>(params.hidden_size());
  const auto batch = cache.input.cols();

  const Matrix d_o = dh.cwiseProduct(cache.tanh_c);
  const Matrix dc_total =
      dc + dh.cwiseProduct(cache.o)
               .cwiseProduct((1.0 - cache.tanh_c.array().square()).matrix());

  Matrix dpre(4 * hidden, batch);
  dpre.middleRows(0, hidden) =
      dc_total.cwiseProduct(cache.g)
          .cwiseProduct((cache.i.array() * (1.0 - cache.i.array())).matrix());
  dpre.middleRows(hidden, hidden) =
      dc_total.cwiseProduct(cache.c_prev)
          .cwiseProduct((cache.f.array() * (1.0 - cache.f.array())).matrix());
  dpre.middleRows(2 * hidden, hidden) =
      dc_total.cwiseProduct(cache.i)
          .cwiseProduct((1.0 - cache.g.array().square()).matrix());
  dpre.middleRows(3 * hidden, hidden) =
      d_o.cwiseProduct((cache.o.array() * (1.0 - cache.o.array())).matrix());

  params.input_weights->grad.matrix().noalias() +=
      dpre * cache.input.transpose();
  params.recurrent_weights->grad.matrix().noalias() +=
      dpre * cache.h_prev.transpose();
  params.bias->grad.vector() += dpre.rowwise().sum();

  LstmInputGrads grads;
  grads.input = params.input_weights->value.matrix().transpose() * dpre;
  grads.h_prev = params.recurrent_weights->value.matrix().transpose() * dpre;
  grads.c_prev = dc_total.cwiseProduct(cache.f);
  return grads;
}

void init_lstm(const LstmParams& params, RandomStream& rng, double scale) {
  for (Parameter* p : {params.input_weights, params.recurrent_weights})
    for (auto& v : p->value.values()) v = rng.uniform(-scale, scale);
  auto bias = params.bias->value.values();
  const std::size_t hidden = params.hidden_size();
  std::fill(bias.begin(), bias.end(), 0.0);
  std::fill(bias.begin() + static_cast<std::ptrdiff_t>(hidden),
            bias.begin() + static_cast<std::ptrdiff_t>(2 * hidden), 1.0);
}

void adam_step(ParamStore& params, AdamState& state) {
  if (state.first_moment.size() != params.count()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.value.shape());
      state.second_moment.emplace_back(p.value.shape());
    }
  }
  for (const auto& p : params)
    if (p.grad.size() != p.value.size() || p.grad.size() == 0)
      throw Error("missing gradient for parameter '" + p.name + "'");

  ++state.step;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  std::size_t k = 0;
  for (auto& p : params) {
    auto value = p.value.values();
    auto grad = p.grad.values();
    auto m = state.first_moment[k].values();
    auto v = state.second_moment[k].values();
    if (m.size() != value.size())
      throw ShapeError("Adam moment shape mismatch for '" + p.name + "'");
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
    p.grad.set_zero();
    ++k;
  }
}

double clip_gradients(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) sq += p.grad.vector().squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& p : params) p.grad.vector() *= scale;
  }
  return norm;
}

GradCheckResult grad_check(const LossWithGradient& loss, ParamStore& params,
                           double eps) {
  params.zero_grad();
  const double base = loss(params);
  if (!std::isfinite(base)) throw Error("grad_check: non-finite loss");

  std::vector<Tensor> analytic;
  analytic.reserve(params.count());
  for (const auto& p : params) analytic.push_back(p.grad);

  GradCheckResult result;
  std::size_t k = 0;
  for (auto& p : params) {
    auto values = p.value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = loss(params);
      values[i] = saved - eps;
      const double minus = loss(params);
      values[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus))
        throw Error("grad_check: non-finite loss while perturbing '" +
                    p.name + "'");
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p.name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
      ++result.checked;
    }
    ++k;
  }
  // Leave the analytic gradient in place for callers that inspect it.
  k = 0;
  for (auto& p : params) p.grad = analytic[k++];
  return result;
}

}  // namespace lenvae
