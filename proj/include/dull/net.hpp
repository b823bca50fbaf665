#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "dull/tensor.hpp"

namespace dull {

class NetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Linear {
  Tensor w;  // [out, in]
  Tensor b;  // [out]
};

struct Conv2d {
  Tensor w;  // [out, in, 3, 3], stride 1, pad 1
  Tensor b;  // [out]
};

// conv3x3 -> relu -> maxpool2 per block, then global average pooling over the
// last feature map. feature_dim() == last width == K.
struct ConvExtractor {
  int in_channels = 3;
  std::vector<Conv2d> blocks;
  int feature_dim() const { return blocks.back().w.dim(0); }
};

// in -> hidden -> K with relu after both layers (nonnegative pooled features,
// same contract as the conv path).
struct MlpExtractor {
  Linear l1;
  Linear l2;
  int feature_dim() const { return l2.w.dim(0); }
};

using Extractor = std::variant<ConvExtractor, MlpExtractor>;

int extractor_feature_dim(const Extractor& e);

enum class Stage { original, unlearned };

std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

// The trainable triple: backbone, classifier, and the channel-class
// correlation matrix G (K x C, entries kept in [0,1] by projection).
struct ModelBundle {
  Extractor extractor;
  Linear classifier;  // K -> C
  Tensor g;           // [K, C]
  Stage stage = Stage::original;
  std::uint64_t config_hash = 0;

  int feature_dim() const { return extractor_feature_dim(extractor); }
  int class_count() const { return classifier.w.dim(0); }
};

ModelBundle make_conv_bundle(int in_channels, const std::vector<int>& widths,
                             int classes, std::uint64_t seed);
ModelBundle make_mlp_bundle(int in_dim, int hidden, int feature_dim,
                            int classes, std::uint64_t seed);

// Elementwise clamp of G to [0,1]; idempotent.
void project_g(Tensor& g);

struct ForwardResult {
  Tensor features;  // [N, K]
  Tensor logits;    // [N, C]
};

// Pure evaluation: safe to call concurrently on a frozen bundle.
ForwardResult forward(const ModelBundle& bundle, const Tensor& x);

// logits = classifier(features (.) mask); mask is [K] (shared) or [N, K].
Tensor masked_forward(const ModelBundle& bundle, const Tensor& features,
                      const Tensor& mask);

// ---- training-side primitives ----

struct ConvTrace {
  Tensor input;
  std::vector<Tensor> pre_relu;
  std::vector<Tensor> post_relu;
  std::vector<std::vector<std::int32_t>> pool_argmax;
  std::vector<Tensor> block_out;
};

struct MlpTrace {
  Tensor input;
  Tensor h_pre, h_post;
  Tensor f_pre;
};

using ExtractorTrace = std::variant<ConvTrace, MlpTrace>;

// Forward with cached activations; returns pooled features [N, K].
Tensor extractor_forward(const Extractor& e, const Tensor& x,
                         ExtractorTrace& trace);

// Accumulates parameter gradients (aligned with extractor_params order)
// given d(features). Gradients are += so several loss branches can share one
// buffer set.
void extractor_backward(const Extractor& e, const ExtractorTrace& trace,
                        const Tensor& dfeatures, std::vector<Tensor>& grads);

Tensor linear_forward(const Linear& l, const Tensor& x);
// dx may be null when the input gradient is not needed.
void linear_backward(const Linear& l, const Tensor& x, const Tensor& dy,
                     Tensor& dw, Tensor& db, Tensor* dx);

Tensor softmax_rows(const Tensor& logits);

// Mean cross entropy over the batch against soft targets (rows of `targets`
// sum to 1). If dlogits is non-null it receives (p - t) / N accumulated (+=).
double soft_cross_entropy(const Tensor& logits, const Tensor& targets,
                          Tensor* dlogits);
double cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     Tensor* dlogits);

// ---- parameter registry ----

struct ParamRef {
  std::string name;
  Tensor* tensor;
};

std::vector<ParamRef> extractor_params(Extractor& e);
// Extractor params, then classifier.w / classifier.b, then g (always last).
std::vector<ParamRef> bundle_params(ModelBundle& b);

std::vector<Tensor> zeros_like(const std::vector<ParamRef>& params);

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

struct SgdState {
  std::vector<Tensor> velocity;
};

// decay_mask[i] == 0 disables weight decay for that parameter (used for g).
void sgd_step(std::vector<ParamRef>& params, const std::vector<Tensor>& grads,
              SgdState& state, const SgdConfig& cfg,
              const std::vector<char>& decay_mask);

void set_gemm_threads(int n);

}  // namespace dull
