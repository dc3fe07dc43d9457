#include "lenvae/textpipe.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>

namespace lenvae {

namespace {

bool is_ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}
bool is_ascii_punct(unsigned char c) {
  return c < 0x80 && std::ispunct(c) != 0;
}
bool is_number_separator(unsigned char c) {
  return c == '.' || c == ',' || c == '/';
}

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> tokens = {
      std::string(special::kPadToken), std::string(special::kUnkToken),
      std::string(special::kBosToken), std::string(special::kEosToken),
      std::string(special::kNumToken)};
  return tokens;
}

}  // namespace

Tokens normalize(std::string_view line) {
  Tokens out;
  const std::size_t n = line.size();
  std::size_t i = 0;
  auto at = [&](std::size_t k) { return static_cast<unsigned char>(line[k]); };
  while (i < n) {
    const unsigned char c = at(i);
    if (is_ascii_space(c)) {
      ++i;
    } else if (is_ascii_digit(c)) {
      while (i < n && is_ascii_digit(at(i))) ++i;
      while (i + 1 < n && is_number_separator(at(i)) &&
             is_ascii_digit(at(i + 1))) {
        ++i;
        while (i < n && is_ascii_digit(at(i))) ++i;
      }
      out.emplace_back(special::kNumToken);
    } else if (is_ascii_punct(c)) {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    } else {
      std::string word;
      while (i < n) {
        const unsigned char d = at(i);
        if (is_ascii_space(d) || is_ascii_digit(d) || is_ascii_punct(d)) break;
        word.push_back(d < 0x80 ? static_cast<char>(std::tolower(d))
                                : static_cast<char>(d));
        ++i;
      }
      out.push_back(std::move(word));
    }
  }
  return out;
}

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Tokens split_whitespace(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() &&
           is_ascii_space(static_cast<unsigned char>(text[i])))
      ++i;
    std::size_t j = i;
    while (j < text.size() &&
           !is_ascii_space(static_cast<unsigned char>(text[j])))
      ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(reserved_tokens()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : tokens_(std::move(tokens)) {
  const auto& reserved = reserved_tokens();
  if (tokens_.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), tokens_.begin()))
    throw Error("vocabulary must start with the reserved tokens");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] =
        index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) throw Error("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? special::kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw Error("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(const std::vector<TokenId>& ids) const {
  Tokens out;
  for (TokenId id : ids) {
    if (id == special::kPad || id == special::kBos || id == special::kEos)
      continue;
    out.push_back(token(id));
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  write_lines(path, tokens_);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  return Vocabulary(read_lines(path));
}

Vocabulary build_vocab(const std::vector<Tokens>& corpus, std::size_t top_k) {
  if (top_k < 1) throw Error("build_vocab: top_k must be >= 1");
  if (corpus.empty()) throw Error("build_vocab: empty corpus");
  const auto& reserved = reserved_tokens();
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus)
    for (const auto& token : sentence) ++counts[token];
  for (const auto& r : reserved) counts.erase(r);

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > top_k) ranked.resize(top_k);

  std::vector<std::string> tokens = reserved;
  for (auto& [token, count] : ranked) tokens.push_back(token);
  return Vocabulary(std::move(tokens));
}

TokenizedSentence encode_sentence(std::string_view surface,
                                  const Vocabulary& vocab) {
  TokenizedSentence s;
  s.surface = std::string(surface);
  s.ids = vocab.encode(normalize(surface));
  return s;
}

std::vector<double> Batch::dense_bow(std::size_t b) const {
  std::vector<double> dense(vocab_size, 0.0);
  for (auto [id, count] : bags.at(b)) dense[static_cast<std::size_t>(id)] = count;
  return dense;
}

Batch make_batch(const std::vector<const TokenizedSentence*>& sentences,
                 std::size_t vocab_size,
                 std::vector<std::size_t> source_index) {
  Batch batch;
  batch.batch_size = sentences.size();
  batch.vocab_size = vocab_size;
  for (const auto* s : sentences)
    batch.max_length = std::max(batch.max_length, s->word_count());
  const std::size_t width = batch.max_length + 1;
  batch.tokens.assign(batch.batch_size * batch.max_length, special::kPad);
  batch.decoder_inputs.assign(batch.batch_size * width, special::kPad);
  batch.targets.assign(batch.batch_size * width, special::kPad);
  for (std::size_t b = 0; b < sentences.size(); ++b) {
    const auto& ids = sentences[b]->ids;
    batch.lengths.push_back(ids.size());
    batch.decoder_inputs[b * width] = special::kBos;
    std::map<TokenId, double> bag;
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (ids[t] == special::kPad)
        throw Error("PAD token inside a sentence");
      if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vocab_size)
        throw Error("token id outside the vocabulary");
      batch.tokens[b * batch.max_length + t] = ids[t];
      batch.decoder_inputs[b * width + t + 1] = ids[t];
      batch.targets[b * width + t] = ids[t];
      if (ids[t] != special::kBos && ids[t] != special::kEos) bag[ids[t]] += 1.0;
    }
    batch.targets[b * width + ids.size()] = special::kEos;
    batch.bags.emplace_back(bag.begin(), bag.end());
  }
  if (source_index.empty()) {
    source_index.resize(batch.batch_size);
    std::iota(source_index.begin(), source_index.end(), std::size_t{0});
  }
  batch.source_index = std::move(source_index);
  return batch;
}

Batch make_batch(const std::vector<TokenizedSentence>& sentences,
                 std::size_t vocab_size) {
  std::vector<const TokenizedSentence*> ptrs;
  for (const auto& s : sentences) ptrs.push_back(&s);
  return make_batch(ptrs, vocab_size);
}

std::vector<Batch> encode_batch(const std::vector<TokenizedSentence>& sentences,
                                const Vocabulary& vocab,
                                std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size < 1) throw Error("encode_batch: batch_size must be >= 1");
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed) {
    std::mt19937_64 engine(*shuffle_seed);
    // Fisher-Yates with an explicit draw so the order is library independent.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = engine() % i;
      std::swap(order[i - 1], order[j]);
    }
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    std::vector<const TokenizedSentence*> group;
    std::vector<std::size_t> index;
    for (std::size_t k = start; k < stop; ++k) {
      group.push_back(&sentences[order[k]]);
      index.push_back(order[k]);
    }
    batches.push_back(make_batch(group, vocab.size(), std::move(index)));
  }
  return batches;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::filesystem::path& path,
                 const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (const auto& line : lines) out << line << '\n';
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace lenvae
