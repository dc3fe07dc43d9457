// Corpus normalization, vocabulary, batching and bag-of-words targets.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lenvae/numerics.hpp"

namespace lenvae {

using TokenId = int;
using Tokens = std::vector<std::string>;

namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kBos = 2;
inline constexpr TokenId kEos = 3;
inline constexpr TokenId kNum = 4;
inline constexpr std::size_t kCount = 5;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kBosToken = "<s>";
inline constexpr std::string_view kEosToken = "</s>";
inline constexpr std::string_view kNumToken = "#";
}  // namespace special

/// Lowercases, splits on whitespace, detaches ASCII punctuation and replaces
/// every number (digit runs joined by '.', ',' or '/') with "#".
Tokens normalize(std::string_view line);

std::string join_tokens(const Tokens& tokens);
Tokens split_whitespace(std::string_view text);

class Vocabulary {
 public:
  /// Reserved tokens only.
  Vocabulary();
  /// First five tokens must be the reserved tokens in id order.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  /// Unknown tokens map to UNK.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> encode(const Tokens& tokens) const;
  /// Drops PAD, BOS and EOS.
  Tokens decode(const std::vector<TokenId>& ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Keeps the `top_k` most frequent tokens, ties broken lexicographically.
Vocabulary build_vocab(const std::vector<Tokens>& corpus, std::size_t top_k);

struct TokenizedSentence {
  std::vector<TokenId> ids;
  std::string surface;

  std::size_t word_count() const { return ids.size(); }
};

TokenizedSentence encode_sentence(std::string_view surface,
                                  const Vocabulary& vocab);

template <typename Sentence>
std::vector<Sentence> filter_by_length(const std::vector<Sentence>& corpus,
                                       std::size_t max_words) {
  if (max_words < 1) throw Error("filter_by_length: max_words must be >= 1");
  std::vector<Sentence> kept;
  for (const auto& s : corpus) {
    std::size_t n;
    if constexpr (requires { s.word_count(); })
      n = s.word_count();
    else
      n = s.size();
    if (n <= max_words) kept.push_back(s);
  }
  return kept;
}

/// Sparse (id, count) bag of content tokens, sorted by id.
using BagOfWords = std::vector<std::pair<TokenId, double>>;

struct Batch {
  std::size_t batch_size = 0;
  std::size_t max_length = 0;  // content tokens, without BOS/EOS
  std::size_t vocab_size = 0;
  std::vector<std::size_t> lengths;
  /// [b * max_length + t]; PAD beyond lengths[b].
  std::vector<TokenId> tokens;
  /// [b * (max_length + 1) + t]; BOS followed by the tokens.
  std::vector<TokenId> decoder_inputs;
  /// [b * (max_length + 1) + t]; the tokens followed by EOS.
  std::vector<TokenId> targets;
  std::vector<BagOfWords> bags;
  /// Index of each row in the sentence list the batch was built from.
  std::vector<std::size_t> source_index;

  TokenId token(std::size_t b, std::size_t t) const {
    return tokens[b * max_length + t];
  }
  TokenId decoder_input(std::size_t b, std::size_t t) const {
    return decoder_inputs[b * (max_length + 1) + t];
  }
  TokenId& decoder_input(std::size_t b, std::size_t t) {
    return decoder_inputs[b * (max_length + 1) + t];
  }
  TokenId target(std::size_t b, std::size_t t) const {
    return targets[b * (max_length + 1) + t];
  }
  std::vector<double> dense_bow(std::size_t b) const;
};

Batch make_batch(const std::vector<const TokenizedSentence*>& sentences,
                 std::size_t vocab_size,
                 std::vector<std::size_t> source_index = {});
Batch make_batch(const std::vector<TokenizedSentence>& sentences,
                 std::size_t vocab_size);

/// Splits the corpus into batches. With a seed the order is shuffled
/// deterministically; without one input order is kept.
std::vector<Batch> encode_batch(const std::vector<TokenizedSentence>& sentences,
                                const Vocabulary& vocab,
                                std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed = {});

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path,
                 const std::vector<std::string>& lines);

// ---------------------------------------------------------------------------
// Toy corpus

/// Templated grammar. A sentence is the concatenation of one alternative
/// picked from every slot; an empty alternative makes the slot optional.
/// Upper-case symbols name word classes, anything else is a literal word.
struct ToyGrammar {
  std::map<std::string, std::vector<std::string>> word_classes;
  std::vector<std::vector<std::vector<std::string>>> slots;

  std::vector<std::string> vocabulary() const;
  /// Every sentence length the productions can yield.
  std::vector<std::size_t> reachable_lengths() const;
};

ToyGrammar default_toy_grammar();

std::vector<std::string> generate_toy_corpus(const ToyGrammar& grammar,
                                             std::size_t size,
                                             std::uint64_t seed);

}  // namespace lenvae
