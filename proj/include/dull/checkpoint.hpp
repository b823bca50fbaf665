#pragma once

#include <filesystem>

#include "dull/net.hpp"

namespace dull {

// Single-file container: magic, JSON header (arch, stage, config hash,
// parameter shapes), then raw little-endian float64 parameter blocks in
// bundle_params order.
void save_checkpoint(const ModelBundle& bundle,
                     const std::filesystem::path& path);

// expect_classes / expect_feature_dim of -1 skip the respective check;
// a mismatch is refused.
ModelBundle load_checkpoint(const std::filesystem::path& path,
                            int expect_classes = -1,
                            int expect_feature_dim = -1);

}  // namespace dull
