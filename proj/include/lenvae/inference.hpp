// Beam-search decoding with a controllable target length.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lenvae/model.hpp"
#include "lenvae/textpipe.hpp"

namespace lenvae {

struct BeamOptions {
  std::size_t beam_width = 8;
  std::size_t max_tokens = 40;
  TokenId start_token = special::kBos;
  /// Hypotheses ending in this token are complete. Absent: every hypothesis
  /// runs to max_tokens.
  std::optional<TokenId> end_token = special::kEos;
  /// Never emitted.
  std::vector<TokenId> banned = {special::kPad, special::kBos};
};

struct BeamResult {
  /// Emitted tokens without the end token.
  std::vector<TokenId> tokens;
  double log_prob = 0.0;
  /// No hypothesis finished within max_tokens.
  bool truncated = false;
};

/// Keeps the beam_width best partial sequences by cumulative log-probability
/// (no length normalization) and returns the best completed one.
BeamResult beam_search(const VaeModel& model, const Vector& z,
                       std::size_t initial_length, const BeamOptions& options);

/// Natural length is the input's own word count.
struct DecodeRequest {
  std::optional<std::size_t> desired_length = 20;
  std::size_t beam_width = 8;
  std::size_t max_tokens = 40;
};

struct Summary {
  std::string text;
  std::vector<TokenId> tokens;
  bool truncated = false;
};

/// Posterior means, one column per sentence.
Matrix encode_means(const VaeModel& model,
                    const std::vector<TokenizedSentence>& sentences,
                    std::size_t batch_size = 64);

Summary summarize(const std::string& sentence, const DecodeRequest& request,
                  const VaeModel& model, const Vocabulary& vocab);

/// summarize with the desired length set to the input's word count.
Summary reconstruct(const std::string& sentence, const DecodeRequest& request,
                    const VaeModel& model, const Vocabulary& vocab);

/// Batched summarize over already-encoded sentences.
std::vector<Summary> summarize_all(const std::vector<TokenizedSentence>& sentences,
                                   const DecodeRequest& request,
                                   const VaeModel& model, const Vocabulary& vocab);

}  // namespace lenvae
