#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dull/dataset.hpp"

namespace dull {

// Standard CIFAR binary layouts: cifar10 records are 1 label byte + 3072
// pixel bytes; cifar100 records are 2 label bytes (coarse, fine) + 3072.
inline constexpr int kCifarImageBytes = 3072;

// Reads the batch files under `dir` (cifar10: data_batch_1..5.bin +
// test_batch.bin; cifar100: train.bin + test.bin) into a LabeledDataset of
// ImageRefs. Instances from the test file carry split = "test".
LabeledDataset ingest_cifar(const std::filesystem::path& dir,
                            const std::string& variant);

// Writes images (3072 bytes each) + labels in cifar10 record layout.
// Used to materialize synthetic corpora that flow through the same ingest
// path as real data.
void write_cifar10_batch(const std::filesystem::path& file,
                         const std::vector<std::vector<std::uint8_t>>& images,
                         const std::vector<int>& labels);

// Loads the 3072 pixel bytes behind a reference, verifying the source file's
// size and checksum on first touch.
class PixelReader {
 public:
  explicit PixelReader(std::vector<SourceFile> sources,
                       std::filesystem::path root = {});
  const std::vector<std::uint8_t>& file_bytes(const std::string& file);
  std::vector<std::uint8_t> read(const ImageRef& ref);

 private:
  std::filesystem::path root_;
  std::vector<SourceFile> sources_;
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> cache_;
};

}  // namespace dull
