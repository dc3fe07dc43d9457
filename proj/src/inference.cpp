#include "lenvae/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lenvae {

namespace {

struct Hypothesis {
  std::vector<TokenId> tokens;
  double log_prob = 0.0;
  DecoderState state;
  LengthSchedule schedule{0};
};

struct Candidate {
  double score;
  std::size_t parent;
  TokenId token;
};

Vector log_softmax_vector(const Vector& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

}  // namespace

BeamResult beam_search(const VaeModel& model, const Vector& z,
                       std::size_t initial_length, const BeamOptions& options) {
  if (options.beam_width < 1) throw Error("beam width must be >= 1");
  if (options.max_tokens < 1) throw Error("max tokens must be >= 1");
  const std::size_t vocab = model.hp.vocab_size;
  std::vector<bool> allowed(vocab, true);
  for (TokenId id : options.banned)
    if (id >= 0 && static_cast<std::size_t>(id) < vocab)
      allowed[static_cast<std::size_t>(id)] = false;

  std::vector<Hypothesis> live(1);
  live[0].state = initial_decoder_state(model, z);
  live[0].schedule = LengthSchedule(initial_length);

  std::vector<BeamResult> completed;
  auto best_completed = [&]() {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& c : completed) best = std::max(best, c.log_prob);
    return best;
  };

  for (std::size_t step = 0; step < options.max_tokens && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    std::vector<DecoderState> next_states;
    next_states.reserve(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      const auto& hyp = live[i];
      const TokenId prev = hyp.tokens.empty() ? options.start_token : hyp.tokens.back();
      auto out = decode_step(model, z, prev, hyp.schedule, hyp.state);
      const Vector logp = log_softmax_vector(out.logits);
      next_states.push_back(std::move(out.state));
      for (std::size_t w = 0; w < vocab; ++w)
        if (allowed[w])
          candidates.push_back({hyp.log_prob + logp(static_cast<Eigen::Index>(w)), i,
                                static_cast<TokenId>(w)});
    }
    const std::size_t keep = std::min(options.beam_width, candidates.size());
    // Ties resolve toward earlier parents and smaller token ids.
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });

    std::vector<Hypothesis> next;
    for (std::size_t k = 0; k < keep; ++k) {
      const auto& cand = candidates[k];
      const auto& parent = live[cand.parent];
      if (options.end_token && cand.token == *options.end_token) {
        completed.push_back({parent.tokens, cand.score, false});
        continue;
      }
      Hypothesis child;
      child.tokens = parent.tokens;
      child.tokens.push_back(cand.token);
      child.log_prob = cand.score;
      child.state = next_states[cand.parent];
      child.schedule = parent.schedule;
      child.schedule.advance();
      next.push_back(std::move(child));
    }
    live = std::move(next);

    if (!completed.empty()) {
      double best_live = -std::numeric_limits<double>::infinity();
      for (const auto& h : live) best_live = std::max(best_live, h.log_prob);
      // Scores only decrease as tokens append.
      if (best_completed() >= best_live) break;
    }
  }

  if (!completed.empty()) {
    const auto it = std::max_element(
        completed.begin(), completed.end(),
        [](const BeamResult& a, const BeamResult& b) { return a.log_prob < b.log_prob; });
    return *it;
  }
  const auto it = std::max_element(
      live.begin(), live.end(),
      [](const Hypothesis& a, const Hypothesis& b) { return a.log_prob < b.log_prob; });
  return {it->tokens, it->log_prob, true};
}

Matrix encode_means(const VaeModel& model,
                    const std::vector<TokenizedSentence>& sentences,
                    std::size_t batch_size) {
  Matrix means(static_cast<Eigen::Index>(model.hp.latent_size),
               static_cast<Eigen::Index>(sentences.size()));
  for (std::size_t start = 0; start < sentences.size(); start += batch_size) {
    const std::size_t stop = std::min(sentences.size(), start + batch_size);
    std::vector<const TokenizedSentence*> group;
    for (std::size_t i = start; i < stop; ++i) group.push_back(&sentences[i]);
    const Batch batch = make_batch(group, model.hp.vocab_size);
    const LatentParams latent = encode(model, batch);
    means.middleCols(static_cast<Eigen::Index>(start),
                     static_cast<Eigen::Index>(stop - start)) = latent.mu;
  }
  return means;
}

namespace {

Summary decode_one(const Vector& mu, std::size_t natural_length,
                   const DecodeRequest& request, const VaeModel& model,
                   const Vocabulary& vocab) {
  BeamOptions options;
  options.beam_width = request.beam_width;
  options.max_tokens = request.max_tokens;
  const std::size_t length = request.desired_length.value_or(natural_length);
  const BeamResult result = beam_search(model, mu, length, options);
  Summary summary;
  summary.tokens = result.tokens;
  summary.truncated = result.truncated;
  summary.text = join_tokens(vocab.decode(result.tokens));
  return summary;
}

}  // namespace

std::vector<Summary> summarize_all(const std::vector<TokenizedSentence>& sentences,
                                   const DecodeRequest& request,
                                   const VaeModel& model, const Vocabulary& vocab) {
  for (const auto& s : sentences)
    if (s.word_count() == 0) throw Error("cannot summarize an empty sentence");
  if (request.desired_length && !model.hp.use_length_embedding)
    throw Error("model has no length embedding; use natural-length decoding");
  const Matrix means = encode_means(model, sentences);
  std::vector<Summary> out;
  out.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i)
    out.push_back(decode_one(means.col(static_cast<Eigen::Index>(i)),
                             sentences[i].word_count(), request, model, vocab));
  return out;
}

Summary summarize(const std::string& sentence, const DecodeRequest& request,
                  const VaeModel& model, const Vocabulary& vocab) {
  TokenizedSentence encoded = encode_sentence(sentence, vocab);
  if (encoded.word_count() == 0) throw Error("cannot summarize an empty sentence");
  return summarize_all({encoded}, request, model, vocab).front();
}

Summary reconstruct(const std::string& sentence, const DecodeRequest& request,
                    const VaeModel& model, const Vocabulary& vocab) {
  DecodeRequest natural = request;
  natural.desired_length.reset();
  return summarize(sentence, natural, model, vocab);
}

}  // namespace lenvae
