#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "faultline/common.hpp"

namespace faultline::qnn {

enum class DatasetKind : uint8_t { Blobs, Rings, TinyImages };

DatasetKind dataset_kind_from(const std::string& name);
const char* to_string(DatasetKind k);

/// Synthetic labeled data with a deterministic stratified train/test split.
/// Flat datasets have channels == 0; image datasets carry channels x height
/// x width per sample.
struct Dataset {
    DatasetKind kind = DatasetKind::Blobs;
    int num_classes = 0;
    int features = 0;  ///< flattened sample size
    int channels = 0, height = 0, width = 0;
    uint64_t seed = 0;

    std::vector<double> train_x;  ///< train_count x features
    std::vector<int> train_y;
    std::vector<double> test_x;
    std::vector<int> test_y;

    size_t train_count() const { return train_y.size(); }
    size_t test_count() const { return test_y.size(); }
    bool is_image() const { return channels > 0; }
    double random_guess() const { return 1.0 / num_classes; }
};

/// Builds a dataset of `samples` points, classes balanced within one sample,
/// split 80/20 per class. Deterministic in (kind, num_classes, samples, seed).
/// Requires samples >= 10 * num_classes.
Dataset make_dataset(DatasetKind kind, int num_classes, int samples, uint64_t seed);

/// Fixed attack mini-batch: `size` test-sample indices chosen by `seed`.
std::vector<size_t> select_batch(const Dataset& data, size_t size, uint64_t seed);

}  // namespace faultline::qnn
