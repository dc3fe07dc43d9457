#include <algorithm>
#include <cmath>
#include <limits>

#include <doctest.h>

#include "lenvae/inference.hpp"
#include "test_support.hpp"

using namespace lenvae;
using lenvae::testing::tiny_hyperparams;

namespace {

Vector random_z(std::size_t dim, std::uint64_t seed) {
  RandomStream rng(seed);
  Vector z(static_cast<Eigen::Index>(dim));
  for (Eigen::Index d = 0; d < z.size(); ++d) z(d) = rng.normal();
  return z;
}

double token_log_prob(const Vector& logits, TokenId token) {
  const std::vector<double> l(logits.data(), logits.data() + logits.size());
  return log_softmax(l)[static_cast<std::size_t>(token)];
}

// Scores a fixed sequence (optionally followed by EOS) step by step.
double sequence_log_prob(const VaeModel& model, const Vector& z, std::size_t length,
                         const std::vector<TokenId>& tokens, std::optional<TokenId> end,
                         TokenId start = special::kBos) {
  auto state = initial_decoder_state(model, z);
  LengthSchedule sched(length);
  TokenId prev = start;
  double total = 0.0;
  std::vector<TokenId> all = tokens;
  if (end) all.push_back(*end);
  for (TokenId t : all) {
    auto out = decode_step(model, z, prev, sched, state);
    total += token_log_prob(out.logits, t);
    state = std::move(out.state);
    sched.advance();
    prev = t;
  }
  return total;
}

// Greedy argmax decoding over non-banned tokens.
std::vector<TokenId> greedy(const VaeModel& model, const Vector& z, std::size_t length,
                            std::size_t max_tokens) {
  auto state = initial_decoder_state(model, z);
  LengthSchedule sched(length);
  TokenId prev = special::kBos;
  std::vector<TokenId> out;
  for (std::size_t step = 0; step < max_tokens; ++step) {
    auto o = decode_step(model, z, prev, sched, state);
    o.logits(special::kPad) = -std::numeric_limits<double>::infinity();
    o.logits(special::kBos) = -std::numeric_limits<double>::infinity();
    Eigen::Index best;
    o.logits.maxCoeff(&best);
    if (best == special::kEos) break;
    out.push_back(static_cast<TokenId>(best));
    state = std::move(o.state);
    sched.advance();
    prev = static_cast<TokenId>(best);
  }
  return out;
}

// All sequences over `alphabet` with lengths in [0, max_len].
std::vector<std::vector<TokenId>> enumerate(const std::vector<TokenId>& alphabet,
                                            std::size_t min_len, std::size_t max_len) {
  std::vector<std::vector<TokenId>> out, frontier{{}};
  for (std::size_t len = 0; len <= max_len; ++len) {
    if (len >= min_len) out.insert(out.end(), frontier.begin(), frontier.end());
    std::vector<std::vector<TokenId>> next;
    for (const auto& seq : frontier)
      for (TokenId t : alphabet) {
        next.push_back(seq);
        next.back().push_back(t);
      }
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST_CASE("beam width 1 equals greedy decoding") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CAPTURE(seed);
    const auto model = VaeModel::create(tiny_hyperparams(), seed, 1.0);
    const Vector z = random_z(3, seed);
    BeamOptions options;
    options.beam_width = 1;
    options.max_tokens = 8;
    const auto result = beam_search(model, z, 3, options);
    const auto expected = greedy(model, z, 3, 8);
    CHECK(result.tokens == expected);
    CHECK(result.truncated == (expected.size() == 8));
  }
}

TEST_CASE("exhaustive beam over V=4 without an end token") {
  auto hp = tiny_hyperparams();
  hp.vocab_size = 4;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    const auto model = VaeModel::create(hp, seed, 1.0);
    const Vector z = random_z(3, seed + 10);
    BeamOptions options;
    options.beam_width = 64;
    options.max_tokens = 3;
    options.end_token.reset();
    options.banned.clear();
    const auto result = beam_search(model, z, 3, options);

    double best = -std::numeric_limits<double>::infinity();
    std::vector<TokenId> argmax;
    for (const auto& seq : enumerate({0, 1, 2, 3}, 3, 3)) {
      const double lp = sequence_log_prob(model, z, 3, seq, std::nullopt);
      if (lp > best) {
        best = lp;
        argmax = seq;
      }
    }
    CHECK(result.tokens == argmax);
    CHECK(std::abs(result.log_prob - best) < 1e-12);
    CHECK(result.truncated);
  }
}

TEST_CASE("exhaustive beam with an end token matches enumeration") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    const auto model = VaeModel::create(tiny_hyperparams(1), seed, 1.5);
    const Vector z = random_z(3, seed + 20);
    BeamOptions options;
    options.beam_width = 1000;
    options.max_tokens = 4;
    const auto result = beam_search(model, z, 2, options);

    // Complete sequences: up to 3 non-end tokens followed by EOS.
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& seq : enumerate({special::kUnk, special::kNum, 5, 6}, 0, 3))
      best = std::max(best, sequence_log_prob(model, z, 2, seq, special::kEos));
    REQUIRE_FALSE(result.truncated);
    CHECK(std::abs(result.log_prob - best) < 1e-12);
    CHECK(std::abs(sequence_log_prob(model, z, 2, result.tokens, special::kEos) - best) < 1e-12);
  }
}

TEST_CASE("wider beams never beat the exhaustive beam") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CAPTURE(seed);
    const auto model = VaeModel::create(tiny_hyperparams(), seed, 1.5);
    const Vector z = random_z(3, seed + 30);
    BeamOptions options;
    options.max_tokens = 4;
    options.beam_width = 1000;
    const double exhaustive = beam_search(model, z, 3, options).log_prob;
    for (std::size_t width : {1u, 2u, 3u, 5u, 8u}) {
      options.beam_width = width;
      const auto r = beam_search(model, z, 3, options);
      if (!r.truncated) CHECK(r.log_prob <= exhaustive + 1e-12);
    }
  }
}

TEST_CASE("beam search is deterministic and never emits PAD or BOS") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CAPTURE(seed);
    const auto model = VaeModel::create(tiny_hyperparams(), seed, 2.0);
    const Vector z = random_z(3, seed);
    BeamOptions options;
    options.beam_width = 4;
    options.max_tokens = 12;
    const auto a = beam_search(model, z, 5, options);
    const auto b = beam_search(model, z, 5, options);
    CHECK(a.tokens == b.tokens);
    CHECK(a.log_prob == b.log_prob);
    CHECK(a.tokens.size() <= 12);
    for (TokenId t : a.tokens) {
      CHECK(t != special::kPad);
      CHECK(t != special::kBos);
      CHECK(t != special::kEos);
    }
  }
  const auto model = VaeModel::create(tiny_hyperparams(), 1);
  BeamOptions bad;
  bad.beam_width = 0;
  CHECK_THROWS_AS(beam_search(model, random_z(3, 1), 3, bad), Error);
}

TEST_CASE("summarize and reconstruct on an untrained model") {
  const auto lines = generate_toy_corpus(default_toy_grammar(), 50, 2);
  std::vector<Tokens> corpus;
  for (const auto& l : lines) corpus.push_back(normalize(l));
  const Vocabulary vocab = build_vocab(corpus, 1000);
  HyperParams hp = tiny_hyperparams();
  hp.vocab_size = vocab.size();
  hp.max_length_index = 20;
  const auto model = VaeModel::create(hp, 4);

  DecodeRequest request;
  request.desired_length = 4;
  request.beam_width = 3;
  request.max_tokens = 10;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto s = summarize(lines[i], request, model, vocab);
    CHECK(s.tokens.size() <= 10);
    CHECK(s.text.find("<pad>") == std::string::npos);
    CHECK(s.text.find("<s>") == std::string::npos);
    CHECK(s.text.find("</s>") == std::string::npos);
    CHECK(summarize(lines[i], request, model, vocab).text == s.text);
    CHECK_NOTHROW(reconstruct(lines[i], request, model, vocab));
  }
  CHECK_THROWS_AS(summarize("", request, model, vocab), Error);
  CHECK_THROWS_AS(summarize("   ", request, model, vocab), Error);

  HyperParams plain = hp;
  plain.use_length_embedding = false;
  const auto no_len = VaeModel::create(plain, 4);
  CHECK_THROWS_AS(summarize(lines[0], request, no_len, vocab), Error);
  CHECK_NOTHROW(reconstruct(lines[0], request, no_len, vocab));
}

TEST_CASE("summaries of a batch match one-by-one decoding") {
  const auto lines = generate_toy_corpus(default_toy_grammar(), 20, 3);
  std::vector<Tokens> corpus;
  for (const auto& l : lines) corpus.push_back(normalize(l));
  const Vocabulary vocab = build_vocab(corpus, 1000);
  HyperParams hp = tiny_hyperparams();
  hp.vocab_size = vocab.size();
  const auto model = VaeModel::create(hp, 6, 0.5);
  std::vector<TokenizedSentence> encoded;
  for (const auto& l : lines) encoded.push_back(encode_sentence(l, vocab));
  DecodeRequest request;
  request.beam_width = 2;
  request.max_tokens = 6;
  const auto all = summarize_all(encoded, request, model, vocab);
  for (std::size_t i = 0; i < lines.size(); ++i)
    CHECK(all[i].text == summarize(lines[i], request, model, vocab).text);
}
