#include <cmath>

#include <doctest.h>

#include "lenvae/probe.hpp"
#include "test_support.hpp"

using namespace lenvae;

TEST_CASE("exact recovery of a linear target") {
  RandomStream rng(1);
  Matrix x(40, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  const Vector y = (2.5 * x.col(1)).array() - 1.25;
  const LinearFit fit = fit_linear_regression(x, y);
  CHECK(std::abs(fit.weights(0)) < 1e-10);
  CHECK(std::abs(fit.weights(1) - 2.5) < 1e-10);
  CHECK(std::abs(fit.weights(2)) < 1e-10);
  CHECK(std::abs(fit.intercept + 1.25) < 1e-10);
  CHECK((predict(fit, x) - y).cwiseAbs().maxCoeff() < 1e-8);
  CHECK_FALSE(fit.ridge_applied);
}

TEST_CASE("constant targets") {
  RandomStream rng(2);
  Matrix x(20, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  const LinearFit fit = fit_linear_regression(x, Vector::Constant(20, 7.0));
  CHECK(fit.weights.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(fit.intercept - 7.0) < 1e-12);
  CHECK_THROWS_AS(r_squared(Vector::Constant(20, 7.0), Vector::Constant(20, 7.0)), Error);
}

TEST_CASE("five-dimensional problem matches a high-precision solve") {
  const int n = 30, d = 5;
  Matrix x(n, d);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = ((i * 37 + j * 11 + i * j * 5) % 17) - 8;
    y(i) = ((i * 13) % 23) - 5 + 0.5 * i;
  }
  // Normal equations solved at 50 significant digits.
  const double expected[] = {0.262943452182620904, 0.13317777345604045146,
                             -0.10911030539420817688, -0.0066113514510837511894,
                             -0.11370694903629035366};
  const LinearFit fit = fit_linear_regression(x, y);
  for (int j = 0; j < d; ++j) CHECK(std::abs(fit.weights(j) - expected[j]) < 1e-12);
  CHECK(std::abs(fit.intercept - 12.956685992085780744) < 1e-11);
}

TEST_CASE("r squared") {
  Vector y(4);
  y << 1, 2, 3, 6;
  CHECK(r_squared(y, y) == 1.0);
  CHECK(std::abs(r_squared(Vector::Constant(4, y.mean()), y)) < 1e-15);
  CHECK_THROWS_AS(r_squared(Vector::Zero(3), y), ShapeError);

  RandomStream rng(3);
  Matrix x(50, 4);
  Vector t(50);
  for (Eigen::Index i = 0; i < 50; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) x(i, j) = rng.normal();
    t(i) = rng.normal();
  }
  // OLS on its own training data never does worse than the mean.
  CHECK(r_squared(predict(fit_linear_regression(x, t), x), t) >= -1e-12);
}

TEST_CASE("shifting the targets only moves the intercept") {
  RandomStream rng(4);
  Matrix x(30, 3);
  Vector y(30);
  for (Eigen::Index i = 0; i < 30; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = rng.normal();
    y(i) = rng.normal();
  }
  const LinearFit a = fit_linear_regression(x, y);
  const LinearFit b = fit_linear_regression(x, y.array() + 100.0);
  CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(std::abs(b.intercept - a.intercept - 100.0) < 1e-8);
}

TEST_CASE("singular design falls back to ridge") {
  Matrix x(10, 2);
  for (int i = 0; i < 10; ++i) {
    x(i, 0) = i;
    x(i, 1) = 2.0 * i;  // collinear
  }
  const Vector y = x.col(0);
  const LinearFit fit = fit_linear_regression(x, y);
  CHECK(fit.ridge_applied);
  CHECK(fit.weights.allFinite());
  CHECK((predict(fit, x) - y).cwiseAbs().maxCoeff() < 1e-4);
  CHECK_THROWS_AS(fit_linear_regression(Matrix::Zero(2, 2), Vector::Zero(2)), Error);
}

TEST_CASE("probe experiment is deterministic and reports both models") {
  const auto lines = generate_toy_corpus(default_toy_grammar(), 120, 5);
  std::vector<Tokens> corpus;
  for (const auto& l : lines) corpus.push_back(normalize(l));
  const Vocabulary vocab = build_vocab(corpus, 1000);
  std::vector<TokenizedSentence> sentences;
  for (const auto& l : lines) sentences.push_back(encode_sentence(l, vocab));

  HyperParams hp = testing::tiny_hyperparams();
  hp.vocab_size = vocab.size();
  hp.max_length_index = 15;
  const auto with_len = VaeModel::create(hp, 1, 0.5);
  hp.use_length_embedding = false;
  const auto without_len = VaeModel::create(hp, 1, 0.5);

  const auto a = probe_experiment(with_len, without_len, sentences, 9);
  const auto b = probe_experiment(with_len, without_len, sentences, 9);
  CHECK(a.with_length.test_r2 == b.with_length.test_r2);
  CHECK(a.without_length.test_r2 == b.without_length.test_r2);
  CHECK(a.with_length.train_r2 <= 1.0);
  CHECK(a.with_length.train_r2 >= -1e-12);

  const std::string table = format_probe_table(a);
  CHECK(table.find("with LenEmb") != std::string::npos);
  CHECK(table.find("without LenEmb") != std::string::npos);
}
