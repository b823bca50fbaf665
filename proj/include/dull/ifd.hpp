#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dull/augment.hpp"
#include "dull/net.hpp"
#include "dull/training_set.hpp"

namespace dull {

struct ArchConfig {
  std::string kind = "auto";            // auto | conv | mlp
  std::vector<int> conv_widths = {16, 32, 64, 64};  // last one must equal feature_dim
  int mlp_hidden = 128;
  int feature_dim = 64;                 // K
};

struct IfdConfig {
  double beta = 0.01;
  int sparsity_p = 1;        // 1 or 2
  int epochs = 40;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> lr_decay_epochs = {20, 30};
  double lr_decay_factor = 0.1;
  std::uint64_t seed = 1;
  ArchConfig arch;
  AugmentConfig augment = AugmentConfig::weak_image();
};

struct IfdLossBreakdown {
  double total = 0.0;
  double l0 = 0.0;        // unmasked CE + masked CE
  double l1 = 0.0;        // beta * ||G^T G - I_C||_F^2
  double sparsity = 0.0;  // ||G||_p / (K*C)
};

// Fresh bundle matching the config's architecture and the set's geometry.
ModelBundle make_bundle_for(const TrainingSet& train, const IfdConfig& config);

// Loss over one batch; does not touch parameters.
IfdLossBreakdown ifd_loss(const ModelBundle& bundle, const Tensor& x,
                          const std::vector<int>& observed, double beta,
                          int sparsity_p);

// Same value, but also accumulates parameter gradients (bundle_params order).
IfdLossBreakdown ifd_loss_grad(ModelBundle& bundle, const Tensor& x,
                               const std::vector<int>& observed, double beta,
                               int sparsity_p, std::vector<Tensor>& grads);

double orthogonality_penalty(const Tensor& g, double beta);
// Accumulates beta * d||G^T G - I||_F^2 / dG into dg.
void orthogonality_penalty_grad(const Tensor& g, double beta, Tensor& dg);

double sparsity_penalty(const Tensor& g, int p);
void sparsity_penalty_grad(const Tensor& g, int p, double scale, Tensor& dg);

// Sum of |cos| over class-column pairs; zero columns contribute 0.
double om_metric(const Tensor& g);
// ||G||_1 / (K*C).
double lsm_metric(const Tensor& g);

struct DisentangleReport {
  std::vector<double> om, lsm, l0, l1, sparsity, train_acc;
  double final_om = 0.0, final_lsm = 0.0;
  int epochs() const { return static_cast<int>(om.size()); }
};

// Trains the original bundle on observed labels only. Divergence aborts with
// the last epoch's checkpoint written to abort_dir (when provided).
std::pair<ModelBundle, DisentangleReport> train_ifd(
    const TrainingSet& train, const IfdConfig& config,
    const std::optional<std::filesystem::path>& abort_dir = std::nullopt);

}  // namespace dull
