#include "dull/unlearn.hpp"

#include <cmath>
#include <numeric>

#include "dull/checkpoint.hpp"
#include "dull/dataset.hpp"

namespace dull {

Tensor instance_mask(const std::vector<int>& label_set, const Tensor& g) {
  const int k = g.dim(0), c = g.dim(1);
  if (label_set.empty()) throw TrainError("instance_mask: empty label set");
  for (int l : label_set)
    if (l < 0 || l >= c)
      throw TrainError("instance_mask: class index " + std::to_string(l) +
                       " outside [0, " + std::to_string(c) + ")");
  Tensor mask({k});
  for (int ch = 0; ch < k; ++ch) {
    double sum = 0.0;
    for (int l : label_set) sum += g.at(ch, l);
    mask[static_cast<std::size_t>(ch)] = sum > kMaskEps ? 1.0 : 0.0;
  }
  return mask;
}

Tensor instance_masks(const std::vector<const std::vector<int>*>& label_sets,
                      const Tensor& g) {
  const int n = static_cast<int>(label_sets.size());
  const int k = g.dim(0);
  Tensor masks({n, k});
  for (int i = 0; i < n; ++i) {
    const Tensor m = instance_mask(*label_sets[static_cast<std::size_t>(i)], g);
    for (int ch = 0; ch < k; ++ch) masks.at(i, ch) = m[static_cast<std::size_t>(ch)];
  }
  return masks;
}

double ifpu_loss(const ModelBundle& original, const ModelBundle& unlearned,
                 const Tensor& x, const Tensor& masks) {
  if (original.stage != Stage::original || unlearned.stage != Stage::unlearned)
    throw TrainError("ifpu_loss: stage-tag mismatch (wanted original + "
                     "unlearned bundles)");
  const ForwardResult r = forward(unlearned, x);
  const Tensor masked_logits = masked_forward(unlearned, r.features, masks);
  const int n = r.logits.dim(0), c = r.logits.dim(1);
  double mse = 0.0;
  for (std::size_t j = 0; j < r.logits.data.size(); ++j) {
    const double diff = r.logits.data[j] - masked_logits.data[j];
    mse += diff * diff;
  }
  return mse / (static_cast<double>(n) * c);
}

namespace {

// Soft-target CE contribution with an externally chosen row divisor, so the
// original and synthesized sub-batches can share one mean.
double soft_ce_scaled(const Tensor& logits, const Tensor& targets,
                      double inv_rows, Tensor& dlogits) {
  const Tensor p = softmax_rows(logits);
  const int n = logits.dim(0), c = logits.dim(1);
  double loss = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const double t = targets.at(i, j);
      if (t > 0.0) loss -= t * std::log(std::max(p.at(i, j), 1e-300));
      dlogits.at(i, j) += (p.at(i, j) - t) * inv_rows;
    }
  return loss * inv_rows;
}

double plain_accuracy(const ModelBundle& bundle, const TrainingSet& set) {
  const int n = static_cast<int>(set.size());
  const int c = bundle.class_count();
  int hits = 0;
  for (int start = 0; start < n; start += 256) {
    const int stop = std::min(n, start + 256);
    std::vector<int> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = forward(bundle, make_batch(set, idx, nullptr,
                                                     nullptr)).logits;
    for (int i = 0; i < stop - start; ++i) {
      int arg = 0;
      for (int j = 1; j < c; ++j)
        if (logits.at(i, j) > logits.at(i, arg)) arg = j;
      if (arg == set.true_labels[static_cast<std::size_t>(start + i)]) hits++;
    }
  }
  return 100.0 * hits / n;
}

}  // namespace

std::pair<ModelBundle, UnlearnReport> unlearn_finetune(
    const ModelBundle& original, const TrainingSet& train,
    const IfpuConfig& config, const TrainingSet* val,
    const std::optional<std::filesystem::path>& abort_dir) {
  if (original.stage != Stage::original)
    throw TrainError("unlearn_finetune needs an original-stage bundle");
  const int c = original.class_count();
  const int k = original.feature_dim();

  ModelBundle unlearned = original;  // deep copy; the original stays frozen
  unlearned.stage = Stage::unlearned;

  auto params = bundle_params(unlearned);
  std::vector<char> decay_mask(params.size(), 1);
  decay_mask.back() = 0;  // g rides along untouched; masks come from original.g
  SgdState opt;
  SgdConfig sgd{config.lr, config.momentum, config.weight_decay};

  const auto ranks = class_rank_by_size(train.observed_sizes);
  Rng rng(config.seed);
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  UnlearnReport report;
  ModelBundle last_good = unlearned;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int de : config.lr_decay_epochs)
      if (epoch == de) sgd.lr *= config.lr_decay_factor;

    RelabelConfig rcfg = config.relabel;
    rcfg.seed = config.seed * 7919 + static_cast<std::uint64_t>(epoch);
    const auto records = relabel_dataset(unlearned, train, rcfg);

    UnlearnEpoch ep;
    ep.hit_rate = hit_rate(records, train.true_labels);

    std::vector<std::vector<double>> smoothed(train.size());
    for (std::size_t i = 0; i < train.size(); ++i)
      smoothed[i] = smooth_labels(
          train.observed[i], multilabel_distribution(records[i].labels, c),
          config.mixer.alpha);

    rng.shuffle(order);
    double sum_ce = 0.0, sum_ifpu = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + config.batch_size);
      std::vector<int> idx(order.begin() + start, order.begin() + stop);
      const int n = static_cast<int>(idx.size());

      const Tensor x = make_batch(train, idx, &config.augment, &rng);
      std::vector<int> y_obs(static_cast<std::size_t>(n));
      std::vector<const std::vector<int>*> sets(static_cast<std::size_t>(n));
      Tensor targets({n, c});
      for (int i = 0; i < n; ++i) {
        const auto si = static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]);
        y_obs[static_cast<std::size_t>(i)] = train.observed[si];
        sets[static_cast<std::size_t>(i)] = &records[si].labels;
        for (int j = 0; j < c; ++j) targets.at(i, j) = smoothed[si][static_cast<std::size_t>(j)];
      }
      const Tensor masks = instance_masks(sets, original.g);

      ExtractorTrace trace;
      const Tensor features = extractor_forward(unlearned.extractor, x, trace);
      const Tensor logits = linear_forward(unlearned.classifier, features);
      Tensor masked_features = features;
      for (std::size_t j = 0; j < masked_features.data.size(); ++j)
        masked_features.data[j] *= masks.data[j];
      const Tensor masked_logits =
          linear_forward(unlearned.classifier, masked_features);

      // head-to-tail pairs on the masked features
      const Tensor sim = similarity_matrix(masked_features, y_obs, ranks);
      const int want = config.mixer.pairs_per_batch < 0
                           ? n / 4
                           : config.mixer.pairs_per_batch;
      const auto pairs = select_pairs(sim, want);
      const int s = static_cast<int>(pairs.size());

      Tensor xs, targets_s;
      if (s > 0) {
        std::vector<int> in_shape = x.shape;
        in_shape[0] = s;
        xs = Tensor(in_shape);
        targets_s = Tensor({s, c});
        const std::size_t row = x.data.size() / static_cast<std::size_t>(x.dim(0));
        for (int p = 0; p < s; ++p) {
          const double lambda = draw_lambda(config.mixer, rng);
          const double* xi = x.ptr() + static_cast<std::size_t>(pairs[p].i) * row;
          const double* xj = x.ptr() + static_cast<std::size_t>(pairs[p].j) * row;
          double* xo = xs.ptr() + static_cast<std::size_t>(p) * row;
          for (std::size_t e = 0; e < row; ++e)
            xo[e] = lambda * xi[e] + (1.0 - lambda) * xj[e];
          for (int j = 0; j < c; ++j)
            targets_s.at(p, j) = lambda * targets.at(pairs[p].i, j) +
                                 (1.0 - lambda) * targets.at(pairs[p].j, j);
        }
      }

      const double inv_rows = 1.0 / static_cast<double>(n + s);
      auto grads = zeros_like(params);
      Tensor& dw = grads[grads.size() - 3];
      Tensor& db = grads[grads.size() - 2];

      Tensor dlogits({n, c});
      double ce = soft_ce_scaled(logits, targets, inv_rows, dlogits);

      // MSE between plain and masked predictions
      double mse = 0.0;
      Tensor dmasked_logits({n, c});
      const double inv_nc = 1.0 / (static_cast<double>(n) * c);
      for (std::size_t j = 0; j < logits.data.size(); ++j) {
        const double diff = logits.data[j] - masked_logits.data[j];
        mse += diff * diff * inv_nc;
        dlogits.data[j] += 2.0 * diff * inv_nc;
        dmasked_logits.data[j] -= 2.0 * diff * inv_nc;
      }

      Tensor dfeatures({n, k});
      linear_backward(unlearned.classifier, features, dlogits, dw, db,
                      &dfeatures);
      Tensor dmasked({n, k});
      linear_backward(unlearned.classifier, masked_features, dmasked_logits,
                      dw, db, &dmasked);
      for (std::size_t j = 0; j < dfeatures.data.size(); ++j)
        dfeatures.data[j] += dmasked.data[j] * masks.data[j];
      extractor_backward(unlearned.extractor, trace, dfeatures, grads);

      if (s > 0) {
        ExtractorTrace trace_s;
        const Tensor features_s =
            extractor_forward(unlearned.extractor, xs, trace_s);
        const Tensor logits_s = linear_forward(unlearned.classifier, features_s);
        Tensor dlogits_s({s, c});
        ce += soft_ce_scaled(logits_s, targets_s, inv_rows, dlogits_s);
        Tensor dfeatures_s({s, k});
        linear_backward(unlearned.classifier, features_s, dlogits_s, dw, db,
                        &dfeatures_s);
        extractor_backward(unlearned.extractor, trace_s, dfeatures_s, grads);
      }

      if (!std::isfinite(ce) || !std::isfinite(mse)) {
        if (abort_dir) {
          std::filesystem::create_directories(*abort_dir);
          save_checkpoint(last_good, *abort_dir / "abort_last.ckpt");
        }
        throw TrainError("unlearning diverged at epoch " +
                         std::to_string(epoch) + " (ce=" + std::to_string(ce) +
                         ", ifpu=" + std::to_string(mse) + ")");
      }

      sgd_step(params, grads, opt, sgd, decay_mask);
      sum_ce += ce;
      sum_ifpu += mse;
      batches++;
    }

    ep.ce = sum_ce / batches;
    ep.ifpu = sum_ifpu / batches;
    ep.val_acc = val ? plain_accuracy(unlearned, *val) : 0.0;
    report.epochs.push_back(ep);
    if (epoch == config.epochs - 1) report.last_records = records;
    last_good = unlearned;
  }
  return {std::move(unlearned), std::move(report)};
}

}  // namespace dull
