#include "lenvae/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace lenvae {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

bool better(const RougeScore& a, const RougeScore& b) {
  if (a.recall != b.recall) return a.recall > b.recall;
  return a.f1 > b.f1;
}

template <typename ScoreOne>
RougeScore best_over_references(const std::vector<Tokens>& references,
                                ScoreOne score_one) {
  if (references.empty()) throw Error("ROUGE needs at least one reference");
  RougeScore best;
  bool first = true;
  for (const auto& ref : references) {
    const RougeScore s = score_one(ref);
    if (first || better(s, best)) best = s;
    first = false;
  }
  return best;
}

}  // namespace

RougeScore make_rouge_score(double recall, double precision) {
  RougeScore s{recall, precision, 0.0};
  if (recall + precision > 0.0) s.f1 = 2.0 * recall * precision / (recall + precision);
  return s;
}

RougeScore rouge_n(const Tokens& candidate, const std::vector<Tokens>& references,
                   std::size_t n) {
  if (n < 1) throw Error("ROUGE-N needs n >= 1");
  const NgramCounts cand = count_ngrams(candidate, n);
  std::size_t cand_total = 0;
  for (const auto& [gram, c] : cand) cand_total += c;
  return best_over_references(references, [&](const Tokens& ref) {
    const NgramCounts ref_counts = count_ngrams(ref, n);
    std::size_t ref_total = 0, overlap = 0;
    for (const auto& [gram, c] : ref_counts) {
      ref_total += c;
      auto it = cand.find(gram);
      if (it != cand.end()) overlap += std::min(c, it->second);
    }
    if (ref_total == 0) return RougeScore{};
    const double recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
    const double precision =
        cand_total ? static_cast<double>(overlap) / static_cast<double>(cand_total) : 0.0;
    return make_rouge_score(recall, precision);
  });
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(const Tokens& candidate, const std::vector<Tokens>& references) {
  return best_over_references(references, [&](const Tokens& ref) {
    if (candidate.empty() || ref.empty()) return RougeScore{};
    const auto lcs = static_cast<double>(lcs_length(candidate, ref));
    return make_rouge_score(lcs / static_cast<double>(ref.size()),
                            lcs / static_cast<double>(candidate.size()));
  });
}

std::string byte_cap(std::string_view text, std::size_t limit) {
  std::string out;
  for (const auto& token : split_whitespace(text)) {
    const std::size_t needed = out.size() + (out.empty() ? 0 : 1) + token.size();
    if (needed > limit) break;
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  return out;
}

std::size_t char_length(std::string_view text) {
  std::size_t n = 0;
  for (unsigned char c : text)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

std::string prefix_baseline(std::string_view input, std::size_t chars) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < input.size(); ++i) {
    if ((static_cast<unsigned char>(input[i]) & 0xC0) != 0x80) {
      if (seen == chars) return std::string(input.substr(0, i));
      ++seen;
    }
  }
  return std::string(input);
}

std::optional<double> extractive_pct(const Tokens& output, const Tokens& input) {
  if (output.empty()) return std::nullopt;
  std::map<std::string, std::size_t> available;
  for (const auto& t : input) ++available[t];
  std::size_t hits = 0;
  for (const auto& t : output) {
    auto it = available.find(t);
    if (it != available.end() && it->second > 0) {
      --it->second;
      ++hits;
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(output.size());
}

std::map<std::size_t, std::size_t> length_histogram(
    const std::vector<std::string>& outputs, std::size_t bucket_width) {
  if (bucket_width < 1) throw Error("histogram bucket width must be >= 1");
  std::map<std::size_t, std::size_t> buckets;
  for (const auto& o : outputs) ++buckets[char_length(o) / bucket_width * bucket_width];
  return buckets;
}

std::string format_histogram(const std::map<std::size_t, std::size_t>& histogram) {
  std::string out = "bucket_start,count\n";
  for (auto [start, count] : histogram)
    out += std::to_string(start) + "," + std::to_string(count) + "\n";
  return out;
}

SystemScores score_system(const std::string& name,
                          const std::vector<std::string>& candidates,
                          const std::vector<std::vector<std::string>>& references,
                          const std::vector<std::string>& inputs,
                          const EvalSettings& settings) {
  if (candidates.size() != references.size())
    throw Error("candidate and reference counts differ");
  if (!inputs.empty() && inputs.size() != candidates.size())
    throw Error("candidate and input counts differ");
  SystemScores scores;
  scores.name = name;
  scores.examples = candidates.size();
  double ext_sum = 0.0;
  std::size_t ext_count = 0;
  auto add = [](RougeScore& acc, const RougeScore& s) {
    acc.recall += s.recall;
    acc.precision += s.precision;
    acc.f1 += s.f1;
  };
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const std::string text =
        settings.byte_limit ? byte_cap(candidates[i], *settings.byte_limit) : candidates[i];
    const Tokens cand = normalize(text);
    std::vector<Tokens> refs;
    for (const auto& r : references[i]) refs.push_back(normalize(r));
    add(scores.rouge1, rouge_n(cand, refs, 1));
    add(scores.rouge2, rouge_n(cand, refs, 2));
    add(scores.rougel, rouge_l(cand, refs));
    if (!inputs.empty()) {
      if (auto pct = extractive_pct(normalize(candidates[i]), normalize(inputs[i]))) {
        ext_sum += *pct;
        ++ext_count;
      }
    }
  }
  if (!candidates.empty()) {
    const double inv = 1.0 / static_cast<double>(candidates.size());
    for (RougeScore* s : {&scores.rouge1, &scores.rouge2, &scores.rougel}) {
      s->recall *= inv;
      s->precision *= inv;
      s->f1 *= inv;
    }
  }
  if (ext_count) scores.extractive = ext_sum / static_cast<double>(ext_count);
  return scores;
}

std::string format_report_table(const EvalReport& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s %8s\n", "Model", "ROUGE-1",
                "ROUGE-2", "ROUGE-L", "Ext. %");
  out += line;
  for (const auto& s : report.systems) {
    char ext[32] = "-";
    if (s.extractive) std::snprintf(ext, sizeof ext, "%.0f", *s.extractive);
    std::snprintf(line, sizeof line, "%-16s %8.2f %8.2f %8.2f %8s\n", s.name.c_str(),
                  100.0 * s.rouge1.recall, 100.0 * s.rouge2.recall,
                  100.0 * s.rougel.recall, ext);
    out += line;
  }
  return out;
}

std::string format_report_csv(const EvalReport& report) {
  std::string out =
      "system,examples,rouge1_recall,rouge1_precision,rouge1_f1,"
      "rouge2_recall,rouge2_precision,rouge2_f1,"
      "rougel_recall,rougel_precision,rougel_f1,extractive_pct\n";
  char line[512];
  for (const auto& s : report.systems) {
    std::snprintf(line, sizeof line,
                  "%s,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,", s.name.c_str(),
                  s.examples, s.rouge1.recall, s.rouge1.precision, s.rouge1.f1,
                  s.rouge2.recall, s.rouge2.precision, s.rouge2.f1, s.rougel.recall,
                  s.rougel.precision, s.rougel.f1);
    out += line;
    if (s.extractive) {
      std::snprintf(line, sizeof line, "%.6f", *s.extractive);
      out += line;
    }
    out += "\n";
  }
  return out;
}

}  // namespace lenvae
