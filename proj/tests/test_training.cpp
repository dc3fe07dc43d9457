#include <cmath>
#include <fstream>

#include <doctest.h>

#include "lenvae/checkpoint.hpp"
#include "lenvae/training.hpp"
#include "test_support.hpp"

using namespace lenvae;

namespace {

struct ToySetup {
  Vocabulary vocab;
  std::vector<TokenizedSentence> corpus;
  HyperParams hp;
};

ToySetup toy_setup(std::size_t sentences = 300) {
  ToySetup s;
  const auto lines = generate_toy_corpus(default_toy_grammar(), sentences, 11);
  std::vector<Tokens> tokenized;
  for (const auto& l : lines) tokenized.push_back(normalize(l));
  s.vocab = build_vocab(tokenized, 1000);
  for (const auto& l : lines) s.corpus.push_back(encode_sentence(l, s.vocab));
  s.hp.vocab_size = s.vocab.size();
  s.hp.cell_size = 16;
  s.hp.embedding_size = 12;
  s.hp.latent_size = 6;
  s.hp.bow_hidden_size = 12;
  s.hp.length_embedding_size = 4;
  s.hp.max_length_index = 15;
  s.hp.sample_count = 20;
  return s;
}

TrainConfig small_config(std::size_t steps) {
  TrainConfig c;
  c.batch_size = 16;
  c.total_steps = steps;
  c.anneal_horizon = steps;
  c.seed = 3;
  return c;
}

double eval_loss(const VaeModel& model, const std::vector<TokenizedSentence>& corpus) {
  std::vector<const TokenizedSentence*> all;
  for (const auto& s : corpus) all.push_back(&s);
  const Batch batch = make_batch(all, model.hp.vocab_size);
  LossOptions opts;
  opts.noise = Matrix::Zero(static_cast<Eigen::Index>(model.hp.latent_size),
                            static_cast<Eigen::Index>(batch.batch_size));
  RandomStream rng(0);
  return total_loss(model, batch, opts, rng).total;
}

}  // namespace

TEST_CASE("kl annealing") {
  TrainConfig c;
  c.total_steps = 200;
  c.anneal_horizon = 100;
  CHECK(kl_anneal_weight(0, c) == 0.0);
  CHECK(kl_anneal_weight(50, c) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(kl_anneal_weight(100, c) == 1.0);
  CHECK(kl_anneal_weight(1000000, c) == 1.0);

  c.anneal = AnnealKind::kLogistic;
  c.total_steps = 2000;
  c.anneal_horizon = 1000;
  CHECK(kl_anneal_weight(0, c) == 0.0);
  CHECK(kl_anneal_weight(1000, c) == 1.0);
  double previous = 0.0;
  for (std::size_t step = 0; step <= 1000; ++step) {
    const double w = kl_anneal_weight(step, c);
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
    CHECK(w >= previous);
    previous = w;
  }

  c.anneal_horizon = 3000;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("word dropout") {
  std::vector<TokenId> inputs = {special::kBos, 5, 6, 7, special::kPad,
                                 special::kBos, 8, special::kPad, special::kPad};
  RandomStream rng(1);
  CHECK(word_dropout(inputs, 0.0, rng) == inputs);
  const auto all = word_dropout(inputs, 1.0, rng);
  CHECK(all == std::vector<TokenId>{special::kBos, special::kUnk, special::kUnk, special::kUnk,
                                    special::kPad, special::kBos, special::kUnk, special::kPad,
                                    special::kPad});

  std::vector<TokenId> many(100000, 9);
  const auto dropped = word_dropout(many, 0.2, rng);
  const double rate =
      static_cast<double>(std::count(dropped.begin(), dropped.end(), special::kUnk)) / 1e5;
  CHECK(std::abs(rate - 0.2) < 0.01);
  CHECK_THROWS_AS(word_dropout(inputs, 1.5, rng), Error);

  SUBCASE("targets untouched") {
    TokenizedSentence s;
    s.ids = {5, 6, 7};
    const Batch b = make_batch(std::vector<TokenizedSentence>{s}, 10);
    const Batch d = apply_word_dropout(b, 1.0, rng);
    CHECK(d.targets == b.targets);
    CHECK(d.tokens == b.tokens);
    CHECK(d.bags == b.bags);
    CHECK(d.decoder_input(0, 0) == special::kBos);
    CHECK(d.decoder_input(0, 1) == special::kUnk);
  }
}

TEST_CASE("metrics log") {
  MetricsLog log;
  log.append({1, 0.1, 2.0, 30.0, 4.0, 34.2});
  log.append({2, 0.2, 1.0 / 3.0, 29.0, 3.5, 32.6});
  CHECK_THROWS_AS(log.append({2, 0.2, 1.0, 1.0, 1.0, 1.0}), Error);
  const std::string csv = log.to_csv();
  CHECK(csv.rfind("step,kl_weight,kl,reconstruction,bow,total\n", 0) == 0);
  const auto dir = testing::temp_dir("metrics");
  log.write_csv(dir / "metrics.csv");
  const auto back = MetricsLog::read_csv(dir / "metrics.csv");
  REQUIRE(back.records().size() == 2);
  CHECK(back.records()[1].kl == 1.0 / 3.0);
  CHECK(back.records()[1].step == 2);
}

TEST_CASE("training lowers the loss and is deterministic") {
  const ToySetup s = toy_setup();
  const TrainConfig config = small_config(200);
  const auto initial = VaeModel::create(s.hp, config.seed);
  const auto a = train(s.corpus, s.vocab, s.hp, config);
  CHECK(eval_loss(a.model, s.corpus) < eval_loss(initial, s.corpus));
  REQUIRE(a.metrics.records().size() == 200);
  CHECK(a.metrics.records().front().kl_weight == 0.0);

  const auto b = train(s.corpus, s.vocab, s.hp, config);
  CHECK(a.metrics.to_csv() == b.metrics.to_csv());
  for (const auto& p : a.model.params) CHECK(p.value == b.model.params.at(p.name).value);
}

TEST_CASE("periodic checkpoints") {
  const ToySetup s = toy_setup(100);
  TrainConfig config = small_config(20);
  config.checkpoint_interval = 10;
  const auto dir = testing::temp_dir("ckpt_periodic");
  const auto result = train(s.corpus, s.vocab, s.hp, config, dir);
  REQUIRE(result.checkpoints.size() == 2);
  const auto last = load_checkpoint(result.checkpoints.back());
  CHECK(last.step == 20);
  for (const auto& p : result.model.params) CHECK(p.value == last.model.params.at(p.name).value);
}

TEST_CASE("checkpoint round trip and corruption") {
  const ToySetup s = toy_setup(50);
  auto model = VaeModel::create(s.hp, 5);
  const auto dir = testing::temp_dir("ckpt");
  const auto path = dir / "model.lvae";
  save_checkpoint(path, model, s.vocab, 1234);

  const auto loaded = load_checkpoint(path);
  CHECK(loaded.step == 1234);
  CHECK(loaded.vocab == s.vocab);
  CHECK(loaded.model.hp == model.hp);
  for (const auto& p : model.params) CHECK(p.value == loaded.model.params.at(p.name).value);
  CHECK_NOTHROW(require_length_embedding(loaded));

  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  auto write_variant = [&](const std::string& content) {
    const auto p = dir / "variant.lvae";
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    return p;
  };
  auto kind_of = [&](const std::filesystem::path& p) {
    try {
      load_checkpoint(p);
    } catch (const CheckpointError& e) {
      return e.kind();
    }
    FAIL("expected a checkpoint error");
    return CheckpointErrorKind::kIo;
  };

  CHECK(kind_of(dir / "absent.lvae") == CheckpointErrorKind::kIo);
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1})
    CHECK(kind_of(write_variant(bytes.substr(0, cut))) == CheckpointErrorKind::kTruncated);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(kind_of(write_variant(bad_magic)) == CheckpointErrorKind::kBadMagic);

  std::string bad_version = bytes;
  bad_version[4] = 7;
  CHECK(kind_of(write_variant(bad_version)) == CheckpointErrorKind::kVersionMismatch);

  std::string flipped = bytes;
  flipped[bytes.size() - 20] ^= 0x01;  // inside the last tensor's values
  CHECK(kind_of(write_variant(flipped)) == CheckpointErrorKind::kChecksumMismatch);

  CHECK(kind_of(write_variant(bytes + "junk")) == CheckpointErrorKind::kMalformed);
}

TEST_CASE("length-embedding guard") {
  ToySetup s = toy_setup(50);
  s.hp.use_length_embedding = false;
  const auto dir = testing::temp_dir("ckpt_nolen");
  save_checkpoint(dir / "plain.lvae", VaeModel::create(s.hp, 1), s.vocab, 0);
  const auto loaded = load_checkpoint(dir / "plain.lvae");
  CHECK_FALSE(loaded.model.params.contains("length.table"));
  try {
    require_length_embedding(loaded);
    FAIL("expected an incompatibility error");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointErrorKind::kIncompatible);
  }
}

TEST_CASE("hyperparameter text round trip") {
  HyperParams hp = testing::tiny_hyperparams(3, false);
  CHECK(parse_hyperparams(serialize_hyperparams(hp)) == hp);
  CHECK_THROWS_AS(parse_hyperparams("cell_size = banana\n"), Error);
}
