#include "dull/mixer.hpp"

#include <algorithm>
#include <stdexcept>

namespace dull {

Tensor similarity_matrix(const Tensor& masked_features,
                         const std::vector<int>& observed,
                         const std::vector<int>& class_rank) {
  const int n = masked_features.dim(0), k = masked_features.dim(1);
  if (static_cast<int>(observed.size()) != n)
    throw std::invalid_argument("similarity_matrix: label count mismatch");
  Tensor sim({n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int ci = observed[static_cast<std::size_t>(i)];
      const int cj = observed[static_cast<std::size_t>(j)];
      if (ci == cj) continue;
      // no forward transfer: partner j must not be higher-ranked than i
      if (class_rank[static_cast<std::size_t>(cj)] <
          class_rank[static_cast<std::size_t>(ci)])
        continue;
      double dot = 0.0;
      for (int f = 0; f < k; ++f)
        dot += masked_features.at(i, f) * masked_features.at(j, f);
      if (dot > 0.0) sim.at(i, j) = dot;
    }
  }
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) row += sim.at(i, j);
    if (row > 0.0)
      for (int j = 0; j < n; ++j) sim.at(i, j) /= row;
  }
  return sim;
}

std::vector<MixPair> select_pairs(const Tensor& matrix, int count) {
  const int n = matrix.dim(0);
  std::vector<MixPair> entries;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (matrix.at(i, j) > 0.0) entries.push_back({i, j, matrix.at(i, j)});
  std::stable_sort(entries.begin(), entries.end(),
                   [](const MixPair& a, const MixPair& b) {
                     if (a.similarity != b.similarity)
                       return a.similarity > b.similarity;
                     if (a.i != b.i) return a.i < b.i;
                     return a.j < b.j;
                   });
  if (count < 0) count = 0;
  if (static_cast<std::size_t>(count) < entries.size())
    entries.resize(static_cast<std::size_t>(count));
  return entries;
}

std::vector<double> smooth_labels(int observed,
                                  const std::vector<double>& y_hat,
                                  double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("smooth_labels: alpha outside [0, 1]");
  std::vector<double> y(y_hat.size(), 0.0);
  y[static_cast<std::size_t>(observed)] = 1.0 - alpha;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * y_hat[i];
  return y;
}

std::vector<double> mix(const std::vector<double>& a,
                        const std::vector<double>& b, double lambda) {
  if (a.size() != b.size())
    throw std::invalid_argument("mix: shape mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = lambda * a[i] + (1.0 - lambda) * b[i];
  return out;
}

double draw_lambda(const MixerConfig& cfg, Rng& rng) {
  if (cfg.lambda_mode == "fixed") return cfg.lambda_value;
  if (cfg.lambda_mode == "beta") return rng.beta(cfg.beta_a, cfg.beta_b);
  throw std::invalid_argument("unknown lambda_mode '" + cfg.lambda_mode + "'");
}

}  // namespace dull
