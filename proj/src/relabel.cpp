#include "dull/relabel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace dull {

using nlohmann::json;

namespace {

void check_simplex(const std::vector<double>& p, const char* what) {
  double sum = 0.0;
  for (double v : p) sum += v;
  if (std::abs(sum - 1.0) > 1e-6)
    throw TrainError(std::string(what) + " is not a probability vector (sum " +
                     std::to_string(sum) + ")");
}

}  // namespace

std::vector<double> fused_confidence(const std::vector<double>& p_weak,
                                     const std::vector<double>& p_strong,
                                     double gamma) {
  if (p_weak.size() != p_strong.size())
    throw TrainError("fused_confidence: size mismatch");
  if (gamma < 0.0 || gamma > 1.0)
    throw TrainError("fused_confidence: gamma outside [0, 1]");
  check_simplex(p_weak, "weak prediction");
  check_simplex(p_strong, "strong prediction");
  std::vector<double> fused(p_weak.size());
  for (std::size_t i = 0; i < fused.size(); ++i)
    fused[i] = gamma * p_weak[i] + (1.0 - gamma) * p_strong[i];
  return fused;
}

double jsd(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw TrainError("jsd: size mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double m = 0.5 * (a[i] + b[i]);
    if (a[i] > 0.0) d += 0.5 * a[i] * std::log2(a[i] / m);
    if (b[i] > 0.0) d += 0.5 * b[i] * std::log2(b[i] / m);
  }
  return std::clamp(d, 0.0, 1.0);
}

int label_count(double d, int class_count) {
  const int q = static_cast<int>(std::floor(d * class_count));
  return std::clamp(q, 1, class_count);
}

std::vector<char> split_clean_noisy(const std::vector<double>& d,
                                    double* threshold_out) {
  if (d.empty()) throw TrainError("split_clean_noisy: no scores");
  const double tau =
      std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  if (threshold_out) *threshold_out = tau;
  std::vector<char> clean(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) clean[i] = d[i] <= tau ? 1 : 0;
  return clean;
}

std::vector<int> build_multilabel(const std::vector<double>& p, int observed,
                                  int q, bool clean) {
  const int c = static_cast<int>(p.size());
  std::vector<int> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return p[static_cast<std::size_t>(x)] != p[static_cast<std::size_t>(y)]
               ? p[static_cast<std::size_t>(x)] > p[static_cast<std::size_t>(y)]
               : x < y;
  });
  if (!clean) {
    order.erase(std::remove(order.begin(), order.end(), observed),
                order.end());
  }
  const int limit = clean ? c : c - 1;
  const int take = std::clamp(q, 1, limit);
  return {order.begin(), order.begin() + take};
}

std::vector<double> multilabel_distribution(const std::vector<int>& labels,
                                            int class_count) {
  std::vector<double> y(static_cast<std::size_t>(class_count), 0.0);
  if (labels.empty()) return y;
  const double w = 1.0 / static_cast<double>(labels.size());
  for (int l : labels) y[static_cast<std::size_t>(l)] = w;
  return y;
}

double hit_rate(const std::vector<MultiLabelRecord>& records,
                const std::vector<int>& true_labels) {
  if (records.empty()) return 0.0;
  if (records.size() != true_labels.size())
    throw TrainError("hit_rate: record/label count mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& l = records[i].labels;
    if (std::find(l.begin(), l.end(), true_labels[i]) != l.end()) hits++;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double top1_hit_rate(const std::vector<MultiLabelRecord>& records,
                     const std::vector<int>& true_labels) {
  if (records.empty()) return 0.0;
  if (records.size() != true_labels.size())
    throw TrainError("top1_hit_rate: record/label count mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].top1 == true_labels[i]) hits++;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::vector<MultiLabelRecord> relabel_dataset(const ModelBundle& bundle,
                                              const TrainingSet& set,
                                              const RelabelConfig& cfg) {
  const int n = static_cast<int>(set.size());
  const int c = bundle.class_count();
  Rng rng(cfg.seed);

  std::vector<double> scores(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> fused(static_cast<std::size_t>(n));
  for (int start = 0; start < n; start += cfg.chunk) {
    const int stop = std::min(n, start + cfg.chunk);
    std::vector<int> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor xw = make_batch(set, idx, &cfg.weak, &rng);
    const Tensor xs = make_batch(set, idx, &cfg.strong, &rng);
    const Tensor pw = softmax_rows(forward(bundle, xw).logits);
    const Tensor ps = softmax_rows(forward(bundle, xs).logits);
    for (int i = 0; i < stop - start; ++i) {
      std::vector<double> w(c), s(c);
      for (int j = 0; j < c; ++j) {
        w[static_cast<std::size_t>(j)] = pw.at(i, j);
        s[static_cast<std::size_t>(j)] = ps.at(i, j);
      }
      auto f = fused_confidence(w, s, cfg.gamma);
      std::vector<double> onehot(static_cast<std::size_t>(c), 0.0);
      onehot[static_cast<std::size_t>(
          set.observed[static_cast<std::size_t>(start + i)])] = 1.0;
      scores[static_cast<std::size_t>(start + i)] = jsd(onehot, f);
      fused[static_cast<std::size_t>(start + i)] = std::move(f);
    }
  }

  const auto clean = split_clean_noisy(scores);
  std::vector<MultiLabelRecord> records(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& rec = records[static_cast<std::size_t>(i)];
    rec.id = set.ids[static_cast<std::size_t>(i)];
    rec.d = scores[static_cast<std::size_t>(i)];
    rec.clean = clean[static_cast<std::size_t>(i)] != 0;
    rec.q = label_count(rec.d, c);
    rec.labels =
        build_multilabel(fused[static_cast<std::size_t>(i)],
                         set.observed[static_cast<std::size_t>(i)], rec.q,
                         rec.clean);
    rec.q = static_cast<int>(rec.labels.size());
    const auto& f = fused[static_cast<std::size_t>(i)];
    rec.top1 = static_cast<int>(
        std::max_element(f.begin(), f.end()) - f.begin());
  }
  return records;
}

void save_relabel_dump(const std::vector<MultiLabelRecord>& records,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TrainError("cannot write " + path.string());
  for (const auto& rec : records) {
    json j;
    j["id"] = rec.id;
    j["d"] = rec.d;
    j["clean"] = rec.clean;
    j["q"] = rec.q;
    j["labels"] = rec.labels;
    out << j.dump() << "\n";
  }
}

std::vector<MultiLabelRecord> load_relabel_dump(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TrainError("cannot open " + path.string());
  std::vector<MultiLabelRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    MultiLabelRecord rec;
    rec.id = j.at("id").get<int>();
    rec.d = j.at("d").get<double>();
    rec.clean = j.at("clean").get<bool>();
    rec.q = j.at("q").get<int>();
    rec.labels = j.at("labels").get<std::vector<int>>();
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace dull
