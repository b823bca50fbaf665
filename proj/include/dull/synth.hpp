#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>

#include "dull/dataset.hpp"

namespace dull {

// Balanced label-only dataset (payload-free); enough for distribution work.
LabeledDataset make_label_source(int classes, int per_class);

// Gaussian blob task with inline feature payloads: class centers at
// signal * N(0, I_dim), samples at center + N(0, I). Returns (train, test).
std::pair<LabeledDataset, LabeledDataset> make_blob_source(
    int classes, int train_per_class, int test_per_class, int dim,
    double signal, std::uint64_t seed);

// Writes a 10-class 32x32x3 corpus in cifar10 binary layout (data_batch_1.bin
// + test_batch.bin) under dir. Classes are smooth random template fields plus
// per-sample nuisance structure; `signal` scales template-to-nuisance ratio.
void write_synthetic_image_corpus(const std::filesystem::path& dir,
                                  int classes, int train_per_class,
                                  int test_per_class, double signal,
                                  std::uint64_t seed);

}  // namespace dull
