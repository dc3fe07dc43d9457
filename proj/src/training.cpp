#include "lenvae/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lenvae/checkpoint.hpp"

namespace lenvae {

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (word_drop < 0.0 || word_drop > 1.0)
    throw Error("word_drop must lie in [0, 1]");
  if (keep_rate <= 0.0 || keep_rate > 1.0)
    throw Error("keep_rate must lie in (0, 1]");
  if (anneal_horizon > total_steps)
    throw Error("anneal_horizon must not exceed total_steps");
  if (clip_norm <= 0.0) throw Error("clip_norm must be positive");
}

double kl_anneal_weight(std::size_t step, const TrainConfig& config) {
  const std::size_t horizon = config.anneal_horizon;
  if (horizon == 0 || step >= horizon) return 1.0;
  if (step == 0) return 0.0;
  const double x = static_cast<double>(step) / static_cast<double>(horizon);
  if (config.anneal == AnnealKind::kLinear) return x;
  // Logistic curve rescaled to pass through (0, 0) and (1, 1).
  constexpr double kSteepness = 10.0;
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double lo = sigmoid(-0.5 * kSteepness);
  const double hi = sigmoid(0.5 * kSteepness);
  const double w = (sigmoid(kSteepness * (x - 0.5)) - lo) / (hi - lo);
  return std::clamp(w, 0.0, 1.0);
}

std::vector<TokenId> word_dropout(const std::vector<TokenId>& decoder_inputs,
                                  double p, RandomStream& rng) {
  if (p < 0.0 || p > 1.0) throw Error("word dropout probability must lie in [0, 1]");
  std::vector<TokenId> out = decoder_inputs;
  for (auto& id : out) {
    if (id == special::kBos || id == special::kPad) continue;
    if (rng.bernoulli(p)) id = special::kUnk;
  }
  return out;
}

Batch apply_word_dropout(const Batch& batch, double p, RandomStream& rng) {
  Batch out = batch;
  if (p > 0.0) out.decoder_inputs = word_dropout(batch.decoder_inputs, p, rng);
  return out;
}

void MetricsLog::append(const MetricRecord& record) {
  if (!records_.empty() && record.step <= records_.back().step)
    throw Error("metric steps must be strictly increasing");
  records_.push_back(record);
}

std::string MetricsLog::to_csv() const {
  std::string out = "step,kl_weight,kl,reconstruction,bow,total\n";
  char line[256];
  for (const auto& r : records_) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.step, r.kl_weight, r.kl, r.reconstruction, r.bow, r.total);
    out += line;
  }
  return out;
}

void MetricsLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << to_csv();
}

MetricsLog MetricsLog::read_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "step,kl_weight,kl,reconstruction,bow,total")
    throw Error("'" + path.string() + "' is not a metrics log");
  MetricsLog log;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    MetricRecord r;
    if (std::sscanf(lines[i].c_str(), "%zu,%lf,%lf,%lf,%lf,%lf", &r.step,
                    &r.kl_weight, &r.kl, &r.reconstruction, &r.bow,
                    &r.total) != 6)
      throw Error("malformed metrics record on line " + std::to_string(i + 1));
    log.append(r);
  }
  return log;
}

TrainResult train(const std::vector<TokenizedSentence>& corpus,
                  const Vocabulary& vocab, const HyperParams& hp,
                  const TrainConfig& config,
                  const std::optional<std::filesystem::path>& checkpoint_dir,
                  const TrainProgress& progress) {
  config.validate();
  if (hp.vocab_size != vocab.size())
    throw Error("hyperparameters disagree with the vocabulary size");
  std::vector<TokenizedSentence> usable;
  for (const auto& s : corpus)
    if (s.word_count() > 0) usable.push_back(s);
  if (usable.empty()) throw TrainingError("training corpus is empty");

  TrainResult result{VaeModel::create(hp, config.seed), {}, {}};
  VaeModel& model = result.model;
  AdamState adam{config.adam, {}, {}, 0};
  RandomStream rng(config.seed * 0x9E3779B97F4A7C15ULL + 17);

  std::size_t epoch = 0;
  std::vector<Batch> batches =
      encode_batch(usable, vocab, config.batch_size, config.seed + epoch);
  std::size_t next = 0;

  for (std::size_t step = 0; step < config.total_steps; ++step) {
    if (next == batches.size()) {
      ++epoch;
      batches = encode_batch(usable, vocab, config.batch_size, config.seed + epoch);
      next = 0;
    }
    const Batch batch = apply_word_dropout(batches[next++], config.word_drop, rng);
    LossOptions options;
    options.kl_weight = kl_anneal_weight(step, config);
    options.mode = Mode::kTrain;
    options.keep_rate = config.keep_rate;
    const LossBreakdown loss = forward_backward(model, batch, options, rng);

    const std::pair<const char*, double> parts[] = {
        {"reconstruction", loss.reconstruction},
        {"kl", loss.kl},
        {"bow", loss.bow},
        {"total", loss.total}};
    for (auto [name, value] : parts)
      if (!std::isfinite(value))
        throw TrainingError(std::string("non-finite ") + name +
                            " loss at step " + std::to_string(step));

    clip_gradients(model.params, config.clip_norm);
    adam_step(model.params, adam);
    result.metrics.append({step, options.kl_weight, loss.kl,
                           loss.reconstruction, loss.bow, loss.total});
    if (progress) progress(result.metrics.records().back());

    if (checkpoint_dir && config.checkpoint_interval > 0 &&
        (step + 1) % config.checkpoint_interval == 0) {
      auto path = *checkpoint_dir /
                  ("checkpoint-" + std::to_string(step + 1) + ".lvae");
      save_checkpoint(path, model, vocab, static_cast<std::int64_t>(step + 1));
      result.checkpoints.push_back(std::move(path));
    }
  }
  return result;
}

}  // namespace lenvae
