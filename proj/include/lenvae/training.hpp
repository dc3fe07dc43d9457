// Training loop: KL annealing, word dropout, Adam, metric logging and
// periodic checkpoints.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lenvae/model.hpp"
#include "lenvae/textpipe.hpp"

namespace lenvae {

enum class AnnealKind { kLinear, kLogistic };

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t total_steps = 3000;
  AnnealKind anneal = AnnealKind::kLinear;
  std::size_t anneal_horizon = 1500;
  double word_drop = 0.20;
  double keep_rate = 0.87;
  AdamConfig adam{.learning_rate = 3e-3};
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  std::size_t checkpoint_interval = 0;  // 0 disables periodic checkpoints

  void validate() const;
};

/// 0 at step 0, 1 from the horizon on, non-decreasing in between.
double kl_anneal_weight(std::size_t step, const TrainConfig& config);

/// Replaces each content token of the decoder input with UNK with
/// probability p. BOS and PAD are never replaced.
std::vector<TokenId> word_dropout(const std::vector<TokenId>& decoder_inputs,
                                  double p, RandomStream& rng);
Batch apply_word_dropout(const Batch& batch, double p, RandomStream& rng);

struct MetricRecord {
  std::size_t step = 0;
  double kl_weight = 0.0;
  double kl = 0.0;
  double reconstruction = 0.0;
  double bow = 0.0;
  double total = 0.0;
};

class MetricsLog {
 public:
  void append(const MetricRecord& record);
  const std::vector<MetricRecord>& records() const { return records_; }
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
  static MetricsLog read_csv(const std::filesystem::path& path);

 private:
  std::vector<MetricRecord> records_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TrainResult {
  VaeModel model;
  MetricsLog metrics;
  std::vector<std::filesystem::path> checkpoints;
};

/// Called after every step with the record just logged.
using TrainProgress = std::function<void(const MetricRecord&)>;

/// Deterministic in (corpus, vocab, hyperparameters, config). While
/// training, the length schedule of each example starts at its true length.
TrainResult train(const std::vector<TokenizedSentence>& corpus,
                  const Vocabulary& vocab, const HyperParams& hp,
                  const TrainConfig& config,
                  const std::optional<std::filesystem::path>& checkpoint_dir = {},
                  const TrainProgress& progress = {});

}  // namespace lenvae
