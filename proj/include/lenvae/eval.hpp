// ROUGE-1/2/L, byte capping, the prefix baseline, extractive percentage and
// output-length histograms.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lenvae/textpipe.hpp"

namespace lenvae {

struct RougeScore {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

RougeScore make_rouge_score(double recall, double precision);

/// Clipped n-gram overlap. With several references the reference giving
/// the highest recall is used (ties: higher f1).
RougeScore rouge_n(const Tokens& candidate, const std::vector<Tokens>& references,
                   std::size_t n);
RougeScore rouge_l(const Tokens& candidate, const std::vector<Tokens>& references);
std::size_t lcs_length(const Tokens& a, const Tokens& b);

/// Longest whole-token prefix whose UTF-8 byte length, spaces included,
/// fits the limit.
std::string byte_cap(std::string_view text, std::size_t limit);

/// Number of UTF-8 code points.
std::size_t char_length(std::string_view text);

inline constexpr std::size_t kPrefixChars = 75;
inline constexpr std::size_t kCapBytes = 75;

/// First `chars` characters (code points) of the raw input.
std::string prefix_baseline(std::string_view input, std::size_t chars = kPrefixChars);

/// Share of output tokens found in the input, clipped by multiplicity.
std::optional<double> extractive_pct(const Tokens& output, const Tokens& input);

/// Bucket start -> count over character lengths.
std::map<std::size_t, std::size_t> length_histogram(
    const std::vector<std::string>& outputs, std::size_t bucket_width = 5);
std::string format_histogram(const std::map<std::size_t, std::size_t>& histogram);

struct SystemScores {
  std::string name;
  RougeScore rouge1, rouge2, rougel;
  std::optional<double> extractive;
  std::size_t examples = 0;
};

struct EvalSettings {
  /// Candidates are byte-capped before scoring when set.
  std::optional<std::size_t> byte_limit = kCapBytes;
};

/// Mean of per-example scores. Texts are tokenized with `normalize`.
/// `inputs` may be empty, in which case no extractive percentage is given.
SystemScores score_system(const std::string& name,
                          const std::vector<std::string>& candidates,
                          const std::vector<std::vector<std::string>>& references,
                          const std::vector<std::string>& inputs,
                          const EvalSettings& settings = {});

struct EvalReport {
  std::vector<SystemScores> systems;
};

/// Scores in percent, rows per system.
std::string format_report_table(const EvalReport& report);
std::string format_report_csv(const EvalReport& report);

}  // namespace lenvae
