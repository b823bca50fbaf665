#include "dull/cifar.hpp"

#include <fstream>

#include "dull/manifest.hpp"

namespace dull {

namespace {

struct BatchFile {
  std::string name;
  std::string split;
};

std::vector<BatchFile> batch_files(const std::string& variant) {
  if (variant == "cifar10") {
    std::vector<BatchFile> files;
    for (int i = 1; i <= 5; ++i)
      files.push_back({"data_batch_" + std::to_string(i) + ".bin", "train"});
    files.push_back({"test_batch.bin", "test"});
    return files;
  }
  if (variant == "cifar100")
    return {{"train.bin", "train"}, {"test.bin", "test"}};
  if (variant == "cifar10-single")  // one train batch, e.g. synthetic corpora
    return {{"data_batch_1.bin", "train"}, {"test_batch.bin", "test"}};
  throw ForgeError("unknown CIFAR variant '" + variant + "'");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ForgeError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

LabeledDataset ingest_cifar(const std::filesystem::path& dir,
                            const std::string& variant) {
  const int label_bytes = variant == "cifar100" ? 2 : 1;
  const int record_bytes = label_bytes + kCifarImageBytes;
  const int class_count = variant == "cifar100" ? 100 : 10;

  LabeledDataset out;
  out.class_count = class_count;
  int next_id = 0;
  for (const auto& bf : batch_files(variant)) {
    const auto path = dir / bf.name;
    const auto bytes = read_file(path);
    if (bytes.size() % record_bytes != 0)
      throw ForgeError(path.string() + ": corrupted record at byte offset " +
                       std::to_string(bytes.size() / record_bytes *
                                      record_bytes) +
                       " (file size " + std::to_string(bytes.size()) +
                       " is not a multiple of " + std::to_string(record_bytes) +
                       ")");
    SourceFile sf;
    sf.file = path.string();
    sf.bytes = bytes.size();
    sf.fnv64 = fnv1a64(bytes.data(), bytes.size());
    out.sources.push_back(sf);

    const std::size_t records = bytes.size() / record_bytes;
    for (std::size_t r = 0; r < records; ++r) {
      const std::size_t base = r * record_bytes;
      // cifar100 stores (coarse, fine); the fine label is the class.
      const int label = bytes[base + label_bytes - 1];
      if (label >= class_count)
        throw ForgeError(path.string() + ": label " + std::to_string(label) +
                         " out of range at byte offset " +
                         std::to_string(base));
      Instance inst;
      inst.id = next_id++;
      inst.true_label = label;
      inst.split = bf.split;
      inst.payload = ImageRef{path.string(), base + label_bytes};
      out.instances.push_back(std::move(inst));
    }
  }
  return out;
}

void write_cifar10_batch(const std::filesystem::path& file,
                         const std::vector<std::vector<std::uint8_t>>& images,
                         const std::vector<int>& labels) {
  if (images.size() != labels.size())
    throw ForgeError("image/label count mismatch");
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ForgeError("cannot write " + file.string());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].size() != kCifarImageBytes)
      throw ForgeError("image " + std::to_string(i) + " has " +
                       std::to_string(images[i].size()) + " bytes, expected " +
                       std::to_string(kCifarImageBytes));
    const char label = static_cast<char>(labels[i]);
    out.write(&label, 1);
    out.write(reinterpret_cast<const char*>(images[i].data()),
              kCifarImageBytes);
  }
}

PixelReader::PixelReader(std::vector<SourceFile> sources,
                         std::filesystem::path root)
    : root_(std::move(root)), sources_(std::move(sources)) {}

const std::vector<std::uint8_t>& PixelReader::file_bytes(
    const std::string& file) {
  for (auto& [name, bytes] : cache_)
    if (name == file) return bytes;
  std::filesystem::path path(file);
  if (path.is_relative() && !root_.empty()) path = root_ / path;
  auto bytes = read_file(path);
  for (const auto& s : sources_) {
    if (s.file != file) continue;
    if (s.bytes != bytes.size())
      throw ForgeError(file + ": size " + std::to_string(bytes.size()) +
                       " does not match manifest (" + std::to_string(s.bytes) +
                       ")");
    if (s.fnv64 != fnv1a64(bytes.data(), bytes.size()))
      throw ForgeError(file + ": checksum mismatch against manifest");
  }
  cache_.emplace_back(file, std::move(bytes));
  return cache_.back().second;
}

std::vector<std::uint8_t> PixelReader::read(const ImageRef& ref) {
  const auto& bytes = file_bytes(ref.file);
  if (ref.offset + kCifarImageBytes > bytes.size())
    throw ForgeError(ref.file + ": image reference at offset " +
                     std::to_string(ref.offset) + " exceeds file size");
  return {bytes.begin() + static_cast<std::ptrdiff_t>(ref.offset),
          bytes.begin() + static_cast<std::ptrdiff_t>(ref.offset) +
              kCifarImageBytes};
}

}  // namespace dull
