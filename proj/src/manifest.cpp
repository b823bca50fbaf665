#include "dull/manifest.hpp"

#include <fstream>

#include <json.hpp>

namespace dull {

using nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ForgeError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const auto n = static_cast<std::size_t>(in.gcount());
    for (std::size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

namespace {

json payload_to_json_fields(const Payload& p, json& rec) {
  if (const auto* ref = std::get_if<ImageRef>(&p)) {
    rec["image"] = {{"file", ref->file}, {"offset", ref->offset}};
  } else if (const auto* feats = std::get_if<std::vector<double>>(&p)) {
    rec["features"] = *feats;
  }
  return rec;
}

Payload payload_from_json(const json& rec) {
  if (rec.contains("image")) {
    ImageRef ref;
    ref.file = rec.at("image").at("file").get<std::string>();
    ref.offset = rec.at("image").at("offset").get<std::uint64_t>();
    return ref;
  }
  if (rec.contains("features"))
    return rec.at("features").get<std::vector<double>>();
  return std::monostate{};
}

}  // namespace

void save_manifest(const NoisyDataset& d, const std::filesystem::path& path) {
  json j;
  j["version"] = 1;
  j["class_count"] = d.class_count;
  j["noise_ratio"] = d.noise_ratio;
  j["seed"] = d.seed;
  j["sources"] = json::array();
  for (const auto& s : d.sources)
    j["sources"].push_back(
        {{"file", s.file}, {"bytes", s.bytes}, {"fnv64", s.fnv64}});
  j["records"] = json::array();
  for (const auto& inst : d.instances) {
    json rec;
    rec["id"] = inst.id;
    rec["true_label"] = inst.true_label;
    rec["observed_label"] = inst.observed_label;
    rec["split"] = inst.split;
    payload_to_json_fields(inst.payload, rec);
    j["records"].push_back(std::move(rec));
  }
  std::ofstream out(path);
  if (!out) throw ForgeError("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

NoisyDataset load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ForgeError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ForgeError("malformed manifest " + path.string() + ": " + e.what());
  }
  const int version = j.at("version").get<int>();
  if (version != 1)
    throw ForgeError("unsupported manifest version " + std::to_string(version));
  NoisyDataset d;
  d.class_count = j.at("class_count").get<int>();
  d.noise_ratio = j.at("noise_ratio").get<double>();
  d.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& s : j.value("sources", json::array())) {
    SourceFile sf;
    sf.file = s.at("file").get<std::string>();
    sf.bytes = s.at("bytes").get<std::uint64_t>();
    sf.fnv64 = s.at("fnv64").get<std::uint64_t>();
    d.sources.push_back(std::move(sf));
  }
  for (const auto& rec : j.at("records")) {
    NoisyInstance inst;
    inst.id = rec.at("id").get<int>();
    inst.true_label = rec.at("true_label").get<int>();
    inst.observed_label = rec.at("observed_label").get<int>();
    inst.split = rec.at("split").get<std::string>();
    inst.payload = payload_from_json(rec);
    if (inst.true_label < 0 || inst.true_label >= d.class_count ||
        inst.observed_label < 0 || inst.observed_label >= d.class_count)
      throw ForgeError("manifest record " + std::to_string(inst.id) +
                       " has out-of-range label");
    d.instances.push_back(std::move(inst));
  }
  return d;
}

NoisyDataset with_test_split(NoisyDataset train, const LabeledDataset& test) {
  for (const auto& s : test.sources) {
    bool known = false;
    for (const auto& t : train.sources) known = known || t == s;
    if (!known) train.sources.push_back(s);
  }
  for (const auto& inst : test.instances) {
    NoisyInstance ni;
    ni.id = inst.id;
    ni.true_label = inst.true_label;
    ni.observed_label = inst.true_label;
    ni.split = "test";
    ni.payload = inst.payload;
    train.instances.push_back(std::move(ni));
  }
  return train;
}

}  // namespace dull
