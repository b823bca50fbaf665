#include "dull/ifd.hpp"

#include <cmath>

#include <Eigen/Core>

#include "dull/checkpoint.hpp"

namespace dull {

namespace {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMapRM = Eigen::Map<const MatrixRM>;
using MapRM = Eigen::Map<MatrixRM>;

ModelBundle build_bundle(const TrainingSet& train, const IfdConfig& cfg) {
  const ArchConfig& arch = cfg.arch;
  std::string kind = arch.kind;
  if (kind == "auto") kind = train.is_image ? "conv" : "mlp";
  if (kind == "conv") {
    if (!train.is_image)
      throw TrainError("conv extractor requires image inputs");
    if (arch.conv_widths.empty() || arch.conv_widths.back() != arch.feature_dim)
      throw TrainError("conv_widths must end with feature_dim");
    return make_conv_bundle(train.channels, arch.conv_widths,
                            train.class_count, cfg.seed);
  }
  if (kind == "mlp") {
    if (train.is_image)
      throw TrainError("mlp extractor requires feature-vector inputs");
    return make_mlp_bundle(train.feat_dim, arch.mlp_hidden, arch.feature_dim,
                           train.class_count, cfg.seed);
  }
  throw TrainError("unknown extractor kind '" + kind + "'");
}

}  // namespace

ModelBundle make_bundle_for(const TrainingSet& train, const IfdConfig& config) {
  return build_bundle(train, config);
}

double orthogonality_penalty(const Tensor& g, double beta) {
  const int k = g.dim(0), c = g.dim(1);
  CMapRM gm(g.ptr(), k, c);
  MatrixRM m = gm.transpose() * gm;
  for (int i = 0; i < c; ++i) m(i, i) -= 1.0;
  return beta * m.squaredNorm();
}

void orthogonality_penalty_grad(const Tensor& g, double beta, Tensor& dg) {
  const int k = g.dim(0), c = g.dim(1);
  CMapRM gm(g.ptr(), k, c);
  MatrixRM m = gm.transpose() * gm;
  for (int i = 0; i < c; ++i) m(i, i) -= 1.0;
  MapRM dgm(dg.ptr(), k, c);
  dgm.noalias() += 4.0 * beta * (gm * m);
}

double sparsity_penalty(const Tensor& g, int p) {
  if (p == 1) {
    double s = 0.0;
    for (double v : g.data) s += std::abs(v);
    return s;
  }
  if (p == 2) {
    double s = 0.0;
    for (double v : g.data) s += v * v;
    return std::sqrt(s);
  }
  throw TrainError("sparsity norm p must be 1 or 2");
}

void sparsity_penalty_grad(const Tensor& g, int p, double scale, Tensor& dg) {
  if (p == 1) {
    for (std::size_t j = 0; j < g.data.size(); ++j) {
      const double v = g.data[j];
      dg.data[j] += scale * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
    }
    return;
  }
  const double norm = sparsity_penalty(g, 2);
  if (norm <= 0.0) return;
  for (std::size_t j = 0; j < g.data.size(); ++j)
    dg.data[j] += scale * g.data[j] / norm;
}

double om_metric(const Tensor& g) {
  const int k = g.dim(0), c = g.dim(1);
  std::vector<double> norms(c, 0.0);
  for (int j = 0; j < c; ++j) {
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += g.at(i, j) * g.at(i, j);
    norms[j] = std::sqrt(s);
  }
  double om = 0.0;
  for (int a = 0; a < c; ++a) {
    if (norms[a] == 0.0) continue;
    for (int b = a + 1; b < c; ++b) {
      if (norms[b] == 0.0) continue;
      double dot = 0.0;
      for (int i = 0; i < k; ++i) dot += g.at(i, a) * g.at(i, b);
      om += std::abs(dot) / (norms[a] * norms[b]);
    }
  }
  return om;
}

double lsm_metric(const Tensor& g) {
  return sparsity_penalty(g, 1) / static_cast<double>(g.size());
}

namespace {

struct IfdBatchState {
  IfdLossBreakdown breakdown;
  double batch_acc = 0.0;
};

IfdBatchState ifd_batch(ModelBundle& bundle, const Tensor& x,
                        const std::vector<int>& observed, double beta,
                        int sparsity_p, std::vector<Tensor>* grads) {
  const int n = x.dim(0);
  const int k = bundle.feature_dim();
  const int c = bundle.class_count();

  ExtractorTrace trace;
  const Tensor features = extractor_forward(bundle.extractor, x, trace);
  const Tensor logits = linear_forward(bundle.classifier, features);

  // masked branch: per-instance mask is G's column for the observed label
  Tensor masked(features.shape);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j)
      masked.at(i, j) = features.at(i, j) * bundle.g.at(j, observed[i]);
  const Tensor masked_logits = linear_forward(bundle.classifier, masked);

  IfdBatchState st;
  Tensor dlogits({n, c}), dmasked_logits({n, c});
  st.breakdown.l0 =
      cross_entropy(logits, observed, grads ? &dlogits : nullptr) +
      cross_entropy(masked_logits, observed, grads ? &dmasked_logits : nullptr);
  st.breakdown.l1 = orthogonality_penalty(bundle.g, beta);
  st.breakdown.sparsity =
      sparsity_penalty(bundle.g, sparsity_p) / static_cast<double>(k * c);
  st.breakdown.total =
      st.breakdown.l0 + st.breakdown.l1 + st.breakdown.sparsity;

  int hits = 0;
  for (int i = 0; i < n; ++i) {
    int arg = 0;
    for (int j = 1; j < c; ++j)
      if (logits.at(i, j) > logits.at(i, arg)) arg = j;
    if (arg == observed[i]) hits++;
  }
  st.batch_acc = static_cast<double>(hits) / n;

  if (!grads) return st;
  auto& gd = *grads;
  const std::size_t gi = gd.size() - 1;  // g is last in bundle_params order
  Tensor& dw = gd[gd.size() - 3];
  Tensor& db = gd[gd.size() - 2];

  Tensor dfeatures({n, k});
  linear_backward(bundle.classifier, features, dlogits, dw, db, &dfeatures);
  Tensor dmasked({n, k});
  linear_backward(bundle.classifier, masked, dmasked_logits, dw, db, &dmasked);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      dfeatures.at(i, j) += dmasked.at(i, j) * bundle.g.at(j, observed[i]);
      gd[gi].at(j, observed[i]) += dmasked.at(i, j) * features.at(i, j);
    }
  extractor_backward(bundle.extractor, trace, dfeatures, gd);

  orthogonality_penalty_grad(bundle.g, beta, gd[gi]);
  sparsity_penalty_grad(bundle.g, sparsity_p, 1.0 / (k * c), gd[gi]);
  return st;
}

}  // namespace

IfdLossBreakdown ifd_loss(const ModelBundle& bundle, const Tensor& x,
                          const std::vector<int>& observed, double beta,
                          int sparsity_p) {
  auto& mutable_bundle = const_cast<ModelBundle&>(bundle);  // no writes
  return ifd_batch(mutable_bundle, x, observed, beta, sparsity_p, nullptr)
      .breakdown;
}

IfdLossBreakdown ifd_loss_grad(ModelBundle& bundle, const Tensor& x,
                               const std::vector<int>& observed, double beta,
                               int sparsity_p, std::vector<Tensor>& grads) {
  return ifd_batch(bundle, x, observed, beta, sparsity_p, &grads).breakdown;
}

std::pair<ModelBundle, DisentangleReport> train_ifd(
    const TrainingSet& train, const IfdConfig& config,
    const std::optional<std::filesystem::path>& abort_dir) {
  if (train.size() == 0) throw TrainError("empty training set");
  ModelBundle bundle = make_bundle_for(train, config);
  project_g(bundle.g);

  auto params = bundle_params(bundle);
  std::vector<char> decay_mask(params.size(), 1);
  decay_mask.back() = 0;  // g: explicit regularizers + projection instead
  SgdState opt;
  SgdConfig sgd{config.lr, config.momentum, config.weight_decay};

  Rng rng(config.seed);
  std::vector<int> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  DisentangleReport report;
  ModelBundle last_good = bundle;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int de : config.lr_decay_epochs)
      if (epoch == de) sgd.lr *= config.lr_decay_factor;
    rng.shuffle(order);

    double sum_l0 = 0.0, sum_l1 = 0.0, sum_sp = 0.0, sum_acc = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + config.batch_size);
      std::vector<int> idx(order.begin() + start, order.begin() + stop);
      std::vector<int> y(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i)
        y[i] = train.observed[static_cast<std::size_t>(idx[i])];
      const Tensor x = make_batch(train, idx, &config.augment, &rng);

      auto grads = zeros_like(params);
      const auto st = ifd_batch(bundle, x, y, config.beta, config.sparsity_p,
                                &grads);
      if (!std::isfinite(st.breakdown.total)) {
        if (abort_dir) {
          std::filesystem::create_directories(*abort_dir);
          save_checkpoint(last_good, *abort_dir / "abort_last.ckpt");
        }
        throw TrainError("ifd training diverged at epoch " +
                         std::to_string(epoch) + " (l0=" +
                         std::to_string(st.breakdown.l0) + ", l1=" +
                         std::to_string(st.breakdown.l1) + ", sparsity=" +
                         std::to_string(st.breakdown.sparsity) + ")");
      }
      sgd_step(params, grads, opt, sgd, decay_mask);
      project_g(bundle.g);

      sum_l0 += st.breakdown.l0;
      sum_l1 += st.breakdown.l1;
      sum_sp += st.breakdown.sparsity;
      sum_acc += st.batch_acc;
      batches++;
    }
    report.l0.push_back(sum_l0 / batches);
    report.l1.push_back(sum_l1 / batches);
    report.sparsity.push_back(sum_sp / batches);
    report.train_acc.push_back(sum_acc / batches);
    report.om.push_back(om_metric(bundle.g));
    report.lsm.push_back(lsm_metric(bundle.g));
    last_good = bundle;
  }
  report.final_om = report.om.empty() ? om_metric(bundle.g) : report.om.back();
  report.final_lsm =
      report.lsm.empty() ? lsm_metric(bundle.g) : report.lsm.back();
  bundle.stage = Stage::original;
  return {std::move(bundle), std::move(report)};
}

}  // namespace dull
