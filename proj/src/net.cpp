#include "dull/net.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "dull/rng.hpp"

namespace dull {

namespace {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using CMapRM = Eigen::Map<const MatrixRM>;

void he_init(Tensor& w, int fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / fan_in);
  for (auto& v : w.data) v = stddev * rng.normal();
}

// col layout: (Cin*9) x (H*W) for one image, pad 1, stride 1.
void im2col(const double* img, int cin, int h, int w, double* col) {
  const int hw = h * w;
  for (int ci = 0; ci < cin; ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = col + static_cast<std::size_t>(ci * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) {
            std::fill(row + y * w, row + (y + 1) * w, 0.0);
            continue;
          }
          const double* src = img + (static_cast<std::size_t>(ci) * h + sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            row[y * w + x] = (sx < 0 || sx >= w) ? 0.0 : src[sx];
          }
        }
      }
    }
  }
}

void col2im_accum(const double* col, int cin, int h, int w, double* img) {
  const int hw = h * w;
  for (int ci = 0; ci < cin; ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row =
            col + static_cast<std::size_t>(ci * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          double* dst = img + (static_cast<std::size_t>(ci) * h + sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            if (sx >= 0 && sx < w) dst[sx] += row[y * w + x];
          }
        }
      }
    }
  }
}

Tensor conv_forward(const Conv2d& conv, const Tensor& x, Tensor& col_scratch) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int cout = conv.w.dim(0);
  if (conv.w.dim(1) != cin) throw NetError("conv input channel mismatch");
  Tensor y({n, cout, h, w});
  const std::int64_t colsz = static_cast<std::int64_t>(cin) * 9 * h * w;
  if (col_scratch.size() < colsz)
    col_scratch = Tensor({cin * 9, h * w});
  CMapRM wmat(conv.w.ptr(), cout, cin * 9);
  for (int i = 0; i < n; ++i) {
    im2col(x.ptr() + static_cast<std::size_t>(i) * cin * h * w, cin, h, w,
           col_scratch.ptr());
    CMapRM col(col_scratch.ptr(), cin * 9, h * w);
    MapRM out(y.ptr() + static_cast<std::size_t>(i) * cout * h * w, cout,
              h * w);
    out.noalias() = wmat * col;
    for (int co = 0; co < cout; ++co) out.row(co).array() += conv.b[co];
  }
  return y;
}

void conv_backward(const Conv2d& conv, const Tensor& x, const Tensor& dy,
                   Tensor& dw, Tensor& db, Tensor* dx, Tensor& col_scratch,
                   Tensor& dcol_scratch) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int cout = conv.w.dim(0);
  CMapRM wmat(conv.w.ptr(), cout, cin * 9);
  MapRM dwmat(dw.ptr(), cout, cin * 9);
  if (col_scratch.size() < static_cast<std::int64_t>(cin) * 9 * h * w)
    col_scratch = Tensor({cin * 9, h * w});
  if (dcol_scratch.size() < static_cast<std::int64_t>(cin) * 9 * h * w)
    dcol_scratch = Tensor({cin * 9, h * w});
  for (int i = 0; i < n; ++i) {
    im2col(x.ptr() + static_cast<std::size_t>(i) * cin * h * w, cin, h, w,
           col_scratch.ptr());
    CMapRM col(col_scratch.ptr(), cin * 9, h * w);
    CMapRM dyi(dy.ptr() + static_cast<std::size_t>(i) * cout * h * w, cout,
               h * w);
    dwmat.noalias() += dyi * col.transpose();
    for (int co = 0; co < cout; ++co) db[co] += dyi.row(co).sum();
    if (dx) {
      MapRM dcol(dcol_scratch.ptr(), cin * 9, h * w);
      dcol.noalias() = wmat.transpose() * dyi;
      col2im_accum(dcol_scratch.ptr(), cin, h, w,
                   dx->ptr() + static_cast<std::size_t>(i) * cin * h * w);
    }
  }
}

void relu_inplace(Tensor& t) {
  for (auto& v : t.data) v = v > 0.0 ? v : 0.0;
}

Tensor maxpool2(const Tensor& x, std::vector<std::int32_t>& argmax) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    throw NetError("maxpool2 needs even spatial dims, got " +
                   std::to_string(h) + "x" + std::to_string(w));
  const int ho = h / 2, wo = w / 2;
  Tensor y({n, c, ho, wo});
  argmax.assign(y.data.size(), 0);
  std::size_t oi = 0;
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + ci) * h * w;
      for (int y0 = 0; y0 < ho; ++y0) {
        for (int x0 = 0; x0 < wo; ++x0) {
          double best = -1e300;
          std::int32_t bi = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const auto idx = static_cast<std::int32_t>(
                  base + static_cast<std::size_t>(2 * y0 + dy) * w + 2 * x0 +
                  dx);
              const double v = x.data[static_cast<std::size_t>(idx)];
              if (v > best) {
                best = v;
                bi = idx;
              }
            }
          }
          y.data[oi] = best;
          argmax[oi] = bi;
          ++oi;
        }
      }
    }
  }
  return y;
}

Tensor gap(const Tensor& x) {
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      const double* p = x.ptr() + (static_cast<std::size_t>(i) * c + ci) * hw;
      double s = 0.0;
      for (int j = 0; j < hw; ++j) s += p[j];
      y.at(i, ci) = s / hw;
    }
  }
  return y;
}

}  // namespace

int extractor_feature_dim(const Extractor& e) {
  return std::visit([](const auto& net) { return net.feature_dim(); }, e);
}

std::string stage_name(Stage s) {
  return s == Stage::original ? "original" : "unlearned";
}

Stage stage_from_name(const std::string& name) {
  if (name == "original") return Stage::original;
  if (name == "unlearned") return Stage::unlearned;
  throw NetError("unknown stage '" + name + "'");
}

ModelBundle make_conv_bundle(int in_channels, const std::vector<int>& widths,
                             int classes, std::uint64_t seed) {
  if (widths.empty()) throw NetError("conv extractor needs at least one block");
  Rng rng(seed);
  ConvExtractor ext;
  ext.in_channels = in_channels;
  int cin = in_channels;
  for (int width : widths) {
    Conv2d conv;
    conv.w = Tensor({width, cin, 3, 3});
    conv.b = Tensor({width});
    he_init(conv.w, cin * 9, rng);
    ext.blocks.push_back(std::move(conv));
    cin = width;
  }
  ModelBundle b;
  b.extractor = std::move(ext);
  b.classifier.w = Tensor({classes, widths.back()});
  b.classifier.b = Tensor({classes});
  he_init(b.classifier.w, widths.back(), rng);
  b.g = Tensor({widths.back(), classes});
  for (auto& v : b.g.data) v = rng.uniform();
  b.stage = Stage::original;
  return b;
}

ModelBundle make_mlp_bundle(int in_dim, int hidden, int feature_dim,
                            int classes, std::uint64_t seed) {
  Rng rng(seed);
  MlpExtractor ext;
  ext.l1.w = Tensor({hidden, in_dim});
  ext.l1.b = Tensor({hidden});
  ext.l2.w = Tensor({feature_dim, hidden});
  ext.l2.b = Tensor({feature_dim});
  he_init(ext.l1.w, in_dim, rng);
  he_init(ext.l2.w, hidden, rng);
  ModelBundle b;
  b.extractor = std::move(ext);
  b.classifier.w = Tensor({classes, feature_dim});
  b.classifier.b = Tensor({classes});
  he_init(b.classifier.w, feature_dim, rng);
  b.g = Tensor({feature_dim, classes});
  for (auto& v : b.g.data) v = rng.uniform();
  b.stage = Stage::original;
  return b;
}

void project_g(Tensor& g) {
  for (auto& v : g.data) v = std::clamp(v, 0.0, 1.0);
}

Tensor extractor_forward(const Extractor& e, const Tensor& x,
                         ExtractorTrace& trace) {
  if (const auto* conv = std::get_if<ConvExtractor>(&e)) {
    if (x.ndim() != 4 || x.dim(1) != conv->in_channels)
      throw NetError("conv extractor expects [N, " +
                     std::to_string(conv->in_channels) + ", H, W] input");
    ConvTrace t;
    t.input = x;
    Tensor scratch;
    const Tensor* cur = &t.input;
    for (const auto& block : conv->blocks) {
      Tensor pre = conv_forward(block, *cur, scratch);
      t.pre_relu.push_back(pre);
      relu_inplace(pre);
      t.post_relu.push_back(std::move(pre));
      std::vector<std::int32_t> argmax;
      const Tensor& act = t.post_relu.back();
      if (act.dim(2) >= 2 && act.dim(3) >= 2) {
        t.block_out.push_back(maxpool2(act, argmax));
      } else {
        t.block_out.push_back(act);  // too small to pool
      }
      t.pool_argmax.push_back(std::move(argmax));
      cur = &t.block_out.back();
    }
    Tensor features = gap(*cur);
    trace = std::move(t);
    return features;
  }
  const auto& mlp = std::get<MlpExtractor>(e);
  if (x.ndim() != 2 || x.dim(1) != mlp.l1.w.dim(1))
    throw NetError("mlp extractor expects [N, " +
                   std::to_string(mlp.l1.w.dim(1)) + "] input");
  MlpTrace t;
  t.input = x;
  t.h_pre = linear_forward(mlp.l1, x);
  t.h_post = t.h_pre;
  relu_inplace(t.h_post);
  t.f_pre = linear_forward(mlp.l2, t.h_post);
  Tensor features = t.f_pre;
  relu_inplace(features);
  trace = std::move(t);
  return features;
}

void extractor_backward(const Extractor& e, const ExtractorTrace& trace,
                        const Tensor& dfeatures, std::vector<Tensor>& grads) {
  if (const auto* conv = std::get_if<ConvExtractor>(&e)) {
    const auto& t = std::get<ConvTrace>(trace);
    const int nblocks = static_cast<int>(conv->blocks.size());
    const Tensor& last = t.block_out.back();
    const int n = last.dim(0), c = last.dim(1), hw = last.dim(2) * last.dim(3);

    // GAP backward.
    Tensor dcur({n, c, last.dim(2), last.dim(3)});
    for (int i = 0; i < n; ++i)
      for (int ci = 0; ci < c; ++ci) {
        const double g = dfeatures.at(i, ci) / hw;
        double* p =
            dcur.ptr() + (static_cast<std::size_t>(i) * c + ci) * hw;
        for (int j = 0; j < hw; ++j) p[j] = g;
      }

    Tensor scratch, dscratch;
    for (int bi = nblocks - 1; bi >= 0; --bi) {
      // unpool (argmax scatter) unless the block skipped pooling
      Tensor drelu;
      if (!t.pool_argmax[bi].empty()) {
        drelu = Tensor(t.post_relu[bi].shape);
        for (std::size_t j = 0; j < t.pool_argmax[bi].size(); ++j)
          drelu.data[static_cast<std::size_t>(t.pool_argmax[bi][j])] +=
              dcur.data[j];
      } else {
        drelu = dcur;
      }
      // relu backward
      for (std::size_t j = 0; j < drelu.data.size(); ++j)
        if (t.pre_relu[bi].data[j] <= 0.0) drelu.data[j] = 0.0;

      const Tensor& input = bi == 0 ? t.input : t.block_out[bi - 1];
      Tensor* dx = nullptr;
      Tensor dinput;
      if (bi > 0) {
        dinput = Tensor(input.shape);
        dx = &dinput;
      }
      conv_backward(conv->blocks[bi], input, drelu, grads[2 * bi],
                    grads[2 * bi + 1], dx, scratch, dscratch);
      if (bi > 0) dcur = std::move(dinput);
    }
    return;
  }
  const auto& mlp = std::get<MlpExtractor>(e);
  const auto& t = std::get<MlpTrace>(trace);
  Tensor df = dfeatures;
  for (std::size_t j = 0; j < df.data.size(); ++j)
    if (t.f_pre.data[j] <= 0.0) df.data[j] = 0.0;
  Tensor dh(t.h_post.shape);
  linear_backward(mlp.l2, t.h_post, df, grads[2], grads[3], &dh);
  for (std::size_t j = 0; j < dh.data.size(); ++j)
    if (t.h_pre.data[j] <= 0.0) dh.data[j] = 0.0;
  linear_backward(mlp.l1, t.input, dh, grads[0], grads[1], nullptr);
}

Tensor linear_forward(const Linear& l, const Tensor& x) {
  const int n = x.dim(0), in = x.dim(1), out = l.w.dim(0);
  if (l.w.dim(1) != in) throw NetError("linear input dim mismatch");
  Tensor y({n, out});
  CMapRM xm(x.ptr(), n, in);
  CMapRM wm(l.w.ptr(), out, in);
  MapRM ym(y.ptr(), n, out);
  ym.noalias() = xm * wm.transpose();
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out; ++o) y.at(i, o) += l.b[o];
  return y;
}

void linear_backward(const Linear& l, const Tensor& x, const Tensor& dy,
                     Tensor& dw, Tensor& db, Tensor* dx) {
  const int n = x.dim(0), in = x.dim(1), out = l.w.dim(0);
  CMapRM xm(x.ptr(), n, in);
  CMapRM dym(dy.ptr(), n, out);
  MapRM dwm(dw.ptr(), out, in);
  dwm.noalias() += dym.transpose() * xm;
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out; ++o) db[o] += dy.at(i, o);
  if (dx) {
    CMapRM wm(l.w.ptr(), out, in);
    MapRM dxm(dx->ptr(), n, in);
    dxm.noalias() += dym * wm;
  }
}

ForwardResult forward(const ModelBundle& bundle, const Tensor& x) {
  ExtractorTrace trace;
  ForwardResult r;
  r.features = extractor_forward(bundle.extractor, x, trace);
  r.logits = linear_forward(bundle.classifier, r.features);
  return r;
}

Tensor masked_forward(const ModelBundle& bundle, const Tensor& features,
                      const Tensor& mask) {
  const int n = features.dim(0), k = features.dim(1);
  if (k != bundle.feature_dim())
    throw NetError("features dim != extractor feature dim");
  Tensor masked = features;
  if (mask.ndim() == 1) {
    if (mask.dim(0) != k)
      throw NetError("mask length " + std::to_string(mask.dim(0)) +
                     " != feature dim " + std::to_string(k));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) masked.at(i, j) *= mask[j];
  } else {
    if (mask.dim(0) != n || mask.dim(1) != k)
      throw NetError("per-instance mask must be [N, K]");
    for (std::size_t j = 0; j < masked.data.size(); ++j)
      masked.data[j] *= mask.data[j];
  }
  return linear_forward(bundle.classifier, masked);
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor p = logits;
  const int n = p.dim(0), c = p.dim(1);
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int j = 0; j < c; ++j) mx = std::max(mx, p.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
      p.at(i, j) = std::exp(p.at(i, j) - mx);
      sum += p.at(i, j);
    }
    for (int j = 0; j < c; ++j) p.at(i, j) /= sum;
  }
  return p;
}

double soft_cross_entropy(const Tensor& logits, const Tensor& targets,
                          Tensor* dlogits) {
  const int n = logits.dim(0), c = logits.dim(1);
  if (!targets.same_shape(logits))
    throw NetError("target shape mismatch in cross entropy");
  const Tensor p = softmax_rows(logits);
  double loss = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const double t = targets.at(i, j);
      if (t > 0.0) loss -= t * std::log(std::max(p.at(i, j), 1e-300));
    }
  loss /= n;
  if (dlogits) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j)
        dlogits->at(i, j) += (p.at(i, j) - targets.at(i, j)) / n;
  }
  return loss;
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     Tensor* dlogits) {
  const int n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw NetError("label count mismatch in cross entropy");
  const Tensor p = softmax_rows(logits);
  double loss = 0.0;
  for (int i = 0; i < n; ++i)
    loss -= std::log(std::max(p.at(i, labels[static_cast<std::size_t>(i)]),
                              1e-300));
  loss /= n;
  if (dlogits) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        const double t = labels[static_cast<std::size_t>(i)] == j ? 1.0 : 0.0;
        dlogits->at(i, j) += (p.at(i, j) - t) / n;
      }
  }
  return loss;
}

std::vector<ParamRef> extractor_params(Extractor& e) {
  std::vector<ParamRef> params;
  if (auto* conv = std::get_if<ConvExtractor>(&e)) {
    for (std::size_t i = 0; i < conv->blocks.size(); ++i) {
      params.push_back({"extractor.conv" + std::to_string(i) + ".w",
                        &conv->blocks[i].w});
      params.push_back({"extractor.conv" + std::to_string(i) + ".b",
                        &conv->blocks[i].b});
    }
  } else {
    auto& mlp = std::get<MlpExtractor>(e);
    params.push_back({"extractor.l1.w", &mlp.l1.w});
    params.push_back({"extractor.l1.b", &mlp.l1.b});
    params.push_back({"extractor.l2.w", &mlp.l2.w});
    params.push_back({"extractor.l2.b", &mlp.l2.b});
  }
  return params;
}

std::vector<ParamRef> bundle_params(ModelBundle& b) {
  auto params = extractor_params(b.extractor);
  params.push_back({"classifier.w", &b.classifier.w});
  params.push_back({"classifier.b", &b.classifier.b});
  params.push_back({"g", &b.g});
  return params;
}

std::vector<Tensor> zeros_like(const std::vector<ParamRef>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(Tensor(p.tensor->shape));
  return out;
}

void sgd_step(std::vector<ParamRef>& params, const std::vector<Tensor>& grads,
              SgdState& state, const SgdConfig& cfg,
              const std::vector<char>& decay_mask) {
  if (state.velocity.empty()) {
    for (const auto& p : params) state.velocity.push_back(Tensor(p.tensor->shape));
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& w = *params[pi].tensor;
    const Tensor& g = grads[pi];
    Tensor& v = state.velocity[pi];
    const double wd = decay_mask.empty() || decay_mask[pi] ? cfg.weight_decay
                                                           : 0.0;
    for (std::size_t j = 0; j < w.data.size(); ++j) {
      v.data[j] = cfg.momentum * v.data[j] + g.data[j] + wd * w.data[j];
      w.data[j] -= cfg.lr * v.data[j];
    }
  }
}

void set_gemm_threads(int n) { Eigen::setNbThreads(n); }

}  // namespace dull
