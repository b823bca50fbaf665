#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dull/dataset.hpp"

namespace dull {

// Manifest JSON schema:
//   {version, class_count, noise_ratio, seed,
//    sources:[{file, bytes, fnv64}],
//    records:[{id, true_label, observed_label, split,
//              image?:{file, offset}, features?:[...]}]}
// Pixels are referenced by (file, offset) into the original binaries, never
// copied. save -> load round-trips bit-exactly.
void save_manifest(const NoisyDataset& d, const std::filesystem::path& path);
NoisyDataset load_manifest(const std::filesystem::path& path);

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

// Appends the test split of `test` (labels assumed clean: observed = true)
// to a noisy train manifest.
NoisyDataset with_test_split(NoisyDataset train, const LabeledDataset& test);

}  // namespace dull
