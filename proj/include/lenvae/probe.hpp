// Linear-regression probe: how much sentence-length information the
// posterior mean carries.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lenvae/model.hpp"
#include "lenvae/textpipe.hpp"

namespace lenvae {

struct LinearFit {
  Vector weights;
  double intercept = 0.0;
  /// The normal matrix was singular and a 1e-8 ridge was added.
  bool ridge_applied = false;
};

/// Ordinary least squares with intercept via the normal equations.
/// Rows of `features` are examples.
LinearFit fit_linear_regression(const Matrix& features, const Vector& targets);
Vector predict(const LinearFit& fit, const Matrix& features);

/// 1 - SS_res / SS_tot. Throws on constant targets.
double r_squared(const Vector& predictions, const Vector& targets);

struct ProbeScores {
  double train_r2 = 0.0;
  double test_r2 = 0.0;
  bool ridge_applied = false;
};

struct ProbeReport {
  ProbeScores with_length;
  ProbeScores without_length;
};

/// Fits on a seeded 80% split of the sentences and scores on the rest.
ProbeScores probe_model(const VaeModel& model,
                        const std::vector<TokenizedSentence>& sentences,
                        std::uint64_t seed);

ProbeReport probe_experiment(const VaeModel& with_length,
                             const VaeModel& without_length,
                             const std::vector<TokenizedSentence>& sentences,
                             std::uint64_t seed);

std::string format_probe_table(const ProbeReport& report);

}  // namespace lenvae
