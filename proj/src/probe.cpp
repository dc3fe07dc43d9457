#include "lenvae/probe.hpp"

#include <cstdio>
#include <numeric>
#include <random>

#include "lenvae/inference.hpp"

namespace lenvae {

LinearFit fit_linear_regression(const Matrix& features, const Vector& targets) {
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  if (targets.size() != n) throw ShapeError("one target per feature row required");
  if (n < d + 1)
    throw Error("linear regression needs at least " + std::to_string(d + 1) +
                " examples, got " + std::to_string(n));

  Matrix design(n, d + 1);
  design.leftCols(d) = features;
  design.col(d).setOnes();
  Matrix normal = design.transpose() * design;
  const Vector rhs = design.transpose() * targets;

  LinearFit fit;
  Eigen::LDLT<Matrix> ldlt(normal);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-10) {
    normal.diagonal().array() += 1e-8;
    ldlt.compute(normal);
    fit.ridge_applied = true;
  }
  const Vector solution = ldlt.solve(rhs);
  fit.weights = solution.head(d);
  fit.intercept = solution(d);
  return fit;
}

Vector predict(const LinearFit& fit, const Matrix& features) {
  return (features * fit.weights).array() + fit.intercept;
}

double r_squared(const Vector& predictions, const Vector& targets) {
  if (predictions.size() != targets.size())
    throw ShapeError("predictions and targets differ in length");
  if (targets.size() < 2) throw Error("R^2 needs at least two examples");
  const double mean = targets.mean();
  const double ss_tot = (targets.array() - mean).square().sum();
  if (ss_tot == 0.0) throw Error("R^2 is undefined for constant targets");
  const double ss_res = (targets - predictions).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

ProbeScores probe_model(const VaeModel& model,
                        const std::vector<TokenizedSentence>& sentences,
                        std::uint64_t seed) {
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 engine(seed);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[engine() % i]);
  const std::size_t train_n = sentences.size() * 4 / 5;

  const Matrix means = encode_means(model, sentences);
  auto gather = [&](std::size_t begin, std::size_t end, Matrix& x, Vector& y) {
    x.resize(static_cast<Eigen::Index>(end - begin), means.rows());
    y.resize(static_cast<Eigen::Index>(end - begin));
    for (std::size_t k = begin; k < end; ++k) {
      const auto row = static_cast<Eigen::Index>(k - begin);
      x.row(row) = means.col(static_cast<Eigen::Index>(order[k])).transpose();
      y(row) = static_cast<double>(sentences[order[k]].word_count());
    }
  };
  Matrix x_train, x_test;
  Vector y_train, y_test;
  gather(0, train_n, x_train, y_train);
  gather(train_n, sentences.size(), x_test, y_test);

  const LinearFit fit = fit_linear_regression(x_train, y_train);
  ProbeScores scores;
  scores.ridge_applied = fit.ridge_applied;
  scores.train_r2 = r_squared(predict(fit, x_train), y_train);
  scores.test_r2 = r_squared(predict(fit, x_test), y_test);
  return scores;
}

ProbeReport probe_experiment(const VaeModel& with_length,
                             const VaeModel& without_length,
                             const std::vector<TokenizedSentence>& sentences,
                             std::uint64_t seed) {
  return {probe_model(with_length, sentences, seed),
          probe_model(without_length, sentences, seed)};
}

std::string format_probe_table(const ProbeReport& report) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-18s | %8s | %8s\n"
                "%-18s | %8.2f | %8.2f\n"
                "%-18s | %8.2f | %8.2f\n",
                "R^2", "test", "train",
                "with LenEmb", report.with_length.test_r2, report.with_length.train_r2,
                "without LenEmb", report.without_length.test_r2,
                report.without_length.train_r2);
  std::string out = buf;
  if (report.with_length.ridge_applied || report.without_length.ridge_applied)
    out += "note: singular normal matrix, ridge 1e-8 added\n";
  return out;
}

}  // namespace lenvae
