#include "dull/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace dull {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'D', 'U', 'L', 'L', 'C', 'K', 'P', '1'};
}

void save_checkpoint(const ModelBundle& bundle,
                     const std::filesystem::path& path) {
  auto& mutable_bundle = const_cast<ModelBundle&>(bundle);  // read-only walk
  auto params = bundle_params(mutable_bundle);

  json arch;
  if (const auto* conv = std::get_if<ConvExtractor>(&bundle.extractor)) {
    arch["kind"] = "conv";
    arch["in_channels"] = conv->in_channels;
    json widths = json::array();
    for (const auto& b : conv->blocks) widths.push_back(b.w.dim(0));
    arch["widths"] = widths;
  } else {
    const auto& mlp = std::get<MlpExtractor>(bundle.extractor);
    arch["kind"] = "mlp";
    arch["in_dim"] = mlp.l1.w.dim(1);
    arch["hidden"] = mlp.l1.w.dim(0);
  }
  arch["feature_dim"] = bundle.feature_dim();
  arch["classes"] = bundle.class_count();

  json header;
  header["stage"] = stage_name(bundle.stage);
  header["config_hash"] = bundle.config_hash;
  header["arch"] = arch;
  json plist = json::array();
  for (const auto& p : params)
    plist.push_back({{"name", p.name}, {"shape", p.tensor->shape}});
  header["params"] = plist;

  const std::string head = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NetError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const auto head_len = static_cast<std::uint32_t>(head.size());
  out.write(reinterpret_cast<const char*>(&head_len), sizeof head_len);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& p : params)
    out.write(reinterpret_cast<const char*>(p.tensor->ptr()),
              static_cast<std::streamsize>(p.tensor->size() * sizeof(double)));
}

ModelBundle load_checkpoint(const std::filesystem::path& path,
                            int expect_classes, int expect_feature_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NetError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw NetError(path.string() + " is not a checkpoint file");
  std::uint32_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), sizeof head_len);
  std::string head(head_len, '\0');
  in.read(head.data(), head_len);
  if (!in) throw NetError(path.string() + ": truncated header");
  json header = json::parse(head);

  const auto& arch = header.at("arch");
  const int classes = arch.at("classes").get<int>();
  const int feature_dim = arch.at("feature_dim").get<int>();
  if (expect_classes >= 0 && classes != expect_classes)
    throw NetError("checkpoint has " + std::to_string(classes) +
                   " classes, expected " + std::to_string(expect_classes));
  if (expect_feature_dim >= 0 && feature_dim != expect_feature_dim)
    throw NetError("checkpoint has feature dim " + std::to_string(feature_dim) +
                   ", expected " + std::to_string(expect_feature_dim));

  ModelBundle bundle;
  if (arch.at("kind") == "conv") {
    bundle = make_conv_bundle(arch.at("in_channels").get<int>(),
                              arch.at("widths").get<std::vector<int>>(),
                              classes, 0);
  } else {
    bundle = make_mlp_bundle(arch.at("in_dim").get<int>(),
                             arch.at("hidden").get<int>(), feature_dim,
                             classes, 0);
  }
  bundle.stage = stage_from_name(header.at("stage").get<std::string>());
  bundle.config_hash = header.at("config_hash").get<std::uint64_t>();

  auto params = bundle_params(bundle);
  const auto& plist = header.at("params");
  if (plist.size() != params.size())
    throw NetError(path.string() + ": parameter list mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto shape = plist[i].at("shape").get<std::vector<int>>();
    if (shape != params[i].tensor->shape)
      throw NetError(path.string() + ": shape mismatch for " + params[i].name);
    in.read(reinterpret_cast<char*>(params[i].tensor->ptr()),
            static_cast<std::streamsize>(params[i].tensor->size() *
                                         sizeof(double)));
  }
  if (!in) throw NetError(path.string() + ": truncated parameter data");
  return bundle;
}

}  // namespace dull
