// Desk-scale experiment on the synthetic corpus: trains a model with and one
// without length embeddings and measures length control, the length probe
// and capped ROUGE against first-k-word references.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lenvae/probe.hpp"
#include "lenvae/run_config.hpp"

namespace lenvae::acceptance {

struct ToySettings {
  std::size_t train_sentences = 5000;
  std::size_t heldout_sentences = 200;
  std::uint64_t corpus_seed = 1;
  std::uint64_t heldout_seed = 2;
  std::vector<std::size_t> requested_lengths = {4, 8, 12};
  /// Request whose output spread is compared with natural-length decoding.
  std::size_t fixed_request = 8;
  /// Synthetic references are the first `reference_words` input tokens.
  std::size_t reference_words = 8;
  /// Length requested for the compressed system.
  std::size_t summary_length = 6;
  std::size_t byte_limit = 30;
  std::uint64_t probe_seed = 3;
  RunConfig run = RunConfig::desk();
};

ToySettings default_toy_settings();

struct LengthStats {
  double mean = 0.0;
  double stddev = 0.0;
};

struct ToyResults {
  double train_seconds_with = 0.0;
  double train_seconds_without = 0.0;
  double final_loss_with = 0.0;
  double reconstruction_accuracy = 0.0;
  double pearson = 0.0;
  std::vector<LengthStats> requested_stats;  // one per requested length
  LengthStats natural_stats;
  LengthStats input_stats;
  ProbeReport probe;
  double rouge1_compressed = 0.0;
  double rouge1_natural = 0.0;
  double rouge1_prefix = 0.0;
  std::vector<std::string> examples;  // a few decoded samples for the log
};

ToyResults run_toy_experiment(const ToySettings& settings);

double pearson(const std::vector<double>& a, const std::vector<double>& b);
LengthStats length_stats(const std::vector<double>& values);

}  // namespace lenvae::acceptance
