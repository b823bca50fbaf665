#pragma once

#include <string>
#include <vector>

#include "dull/rng.hpp"
#include "dull/tensor.hpp"

namespace dull {

struct MixerConfig {
  double alpha = 0.1;                // label smoothing factor
  std::string lambda_mode = "fixed"; // fixed | beta
  double lambda_value = 0.5;
  double beta_a = 1.0, beta_b = 1.0;
  int pairs_per_batch = -1;          // -1 => batch_size / 4
};

struct MixPair {
  int i = 0, j = 0;
  double similarity = 0.0;
};

// Inner products of masked feature rows with the diagonal zeroed, equal-class
// entries zeroed, and entries zeroed when j's observed class outranks i's in
// observed-size order (rank 0 = largest). Rows with mass are normalized to
// sum 1.
Tensor similarity_matrix(const Tensor& masked_features,
                         const std::vector<int>& observed,
                         const std::vector<int>& class_rank);

// Top entries by normalized similarity, ties broken by (i, j); returns all
// valid entries when fewer than requested.
std::vector<MixPair> select_pairs(const Tensor& matrix, int count);

// (1 - alpha) * onehot(observed) + alpha * y_hat.
std::vector<double> smooth_labels(int observed,
                                  const std::vector<double>& y_hat,
                                  double alpha);

// x_mix = lambda * x_i + (1 - lambda) * x_j (same for labels).
std::vector<double> mix(const std::vector<double>& a,
                        const std::vector<double>& b, double lambda);

double draw_lambda(const MixerConfig& cfg, Rng& rng);

}  // namespace dull
