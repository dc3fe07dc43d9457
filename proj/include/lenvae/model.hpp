// Sentence VAE with a length-countdown embedding on the decoder input.
//
// Encoder: bidirectional LSTM over word embeddings; the per-step states
// [forward; backward] are averaged over the true length and mapped affinely
// to the posterior mean and log-variance.
// Decoder: multi-layer LSTM whose every step sees
//   [embedding(previous word); z; length_embedding(remaining words)],
// with layers above the first also receiving the hidden state below. The
// first layer's cell state starts at an affine map of z.
// Losses: token reconstruction (sampled softmax while training, full softmax
// in eval mode), annealed KL to N(0, I), and a bag-of-words loss from z.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lenvae/numerics.hpp"
#include "lenvae/textpipe.hpp"

namespace lenvae {

struct HyperParams {
  std::size_t vocab_size = 0;
  std::size_t cell_size = 32;
  std::size_t embedding_size = 32;
  std::size_t latent_size = 16;
  std::size_t bow_hidden_size = 32;
  std::size_t length_embedding_size = 8;
  std::size_t decoder_layers = 1;
  std::size_t max_length_index = 40;
  std::size_t sample_count = 1000;
  bool use_length_embedding = true;

  void validate() const;
  /// Negatives drawn per token: sample_count clamped to V - 1.
  std::size_t effective_sample_count() const;
  std::size_t decoder_input_size(std::size_t layer) const;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

/// Values found for the full-scale Gigaword setup.
HyperParams paper_hyperparams(std::size_t vocab_size);

struct VaeModel {
  HyperParams hp;
  ParamStore params;

  /// Registers every parameter and draws initial values.
  static VaeModel create(const HyperParams& hp, std::uint64_t seed,
                         double init_scale = 0.08);
};

/// Columns are batch items.
struct LatentParams {
  Matrix mu;
  Matrix logvar;
};

LatentParams encode(const VaeModel& model, const Batch& batch);

Matrix reparameterize(const LatentParams& latent, const Matrix& noise);

/// Closed-form KL(N(mu, exp(logvar)) || N(0, I)) per column.
Vector kl_divergence(const LatentParams& latent);

/// Remaining-length counter: starts at the desired length and counts down
/// by one per emitted word, never below zero.
class LengthSchedule {
 public:
  explicit LengthSchedule(std::size_t initial_length)
      : initial_(initial_length), current_(initial_length) {}

  std::size_t initial() const { return initial_; }
  std::size_t current() const { return current_; }
  std::size_t step() const { return step_; }
  void advance() {
    if (current_ > 0) --current_;
    ++step_;
  }

 private:
  std::size_t initial_;
  std::size_t current_;
  std::size_t step_ = 0;
};

/// Row of the length table for the schedule's current value, clamped to the
/// last row. A model without length embedding yields zeros.
Vector length_embed(const LengthSchedule& schedule, const VaeModel& model);

struct DecoderState {
  std::vector<Vector> h;
  std::vector<Vector> c;
};

DecoderState initial_decoder_state(const VaeModel& model, const Vector& z);

enum class Mode { kTrain, kEval };

struct StepOutput {
  Vector logits;
  DecoderState state;
};

/// One decoder step for a single sequence. In training mode the output layer
/// input is dropped out with the given keep rate.
StepOutput decode_step(const VaeModel& model, const Vector& z,
                       TokenId previous_token, const LengthSchedule& schedule,
                       const DecoderState& state, Mode mode = Mode::kEval,
                       double keep_rate = 1.0, RandomStream* rng = nullptr);

/// -sum_w counts[w] * log softmax(bow_logits(z))[w].
double bow_loss(const VaeModel& model, const Vector& z,
                const std::vector<double>& counts);

struct SampledSoftmaxResult {
  double loss = 0.0;
  /// Target first, then the sampled negatives.
  std::vector<TokenId> classes;
  /// Softmax over `classes`.
  std::vector<double> probabilities;
};

/// Cross-entropy of the target against `sample_count` negatives drawn
/// uniformly without replacement from the other classes.
SampledSoftmaxResult sampled_softmax_loss(const Tensor& output_weights,
                                          const Tensor& output_bias,
                                          const Vector& hidden, TokenId target,
                                          std::size_t sample_count,
                                          RandomStream& rng);

/// Draws `count` distinct ids from [0, vocab) excluding `target`.
std::vector<TokenId> sample_negatives(std::size_t vocab_size, TokenId target,
                                      std::size_t count, RandomStream& rng);

struct LossOptions {
  double kl_weight = 1.0;
  Mode mode = Mode::kEval;
  double keep_rate = 1.0;
  /// Posterior noise (latent x batch). Drawn from the stream when absent.
  std::optional<Matrix> noise;
  /// Per-example desired lengths. Defaults to the true lengths.
  std::optional<std::vector<std::size_t>> desired_lengths;
};

struct LossBreakdown {
  double total = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  double bow = 0.0;
};

/// Batch-averaged loss. Random draws happen in a fixed order: posterior
/// noise, dropout masks, then negative samples.
LossBreakdown total_loss(const VaeModel& model, const Batch& batch,
                         const LossOptions& options, RandomStream& rng);

/// Same as total_loss, and accumulates the gradient into `model.params`.
LossBreakdown forward_backward(VaeModel& model, const Batch& batch,
                               const LossOptions& options, RandomStream& rng);

}  // namespace lenvae
