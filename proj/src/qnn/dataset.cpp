#include "faultline/qnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace faultline::qnn {

DatasetKind dataset_kind_from(const std::string& name) {
    if (name == "blobs") return DatasetKind::Blobs;
    if (name == "rings") return DatasetKind::Rings;
    if (name == "tiny-images" || name == "tiny_images") return DatasetKind::TinyImages;
    throw ValidationError("unknown dataset kind '" + name + "'");
}

const char* to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::Blobs: return "blobs";
        case DatasetKind::Rings: return "rings";
        case DatasetKind::TinyImages: return "tiny-images";
    }
    return "?";
}

Dataset make_dataset(DatasetKind kind, int num_classes, int samples, uint64_t seed) {
    if (num_classes < 1) throw ValidationError("make_dataset: num_classes must be >= 1");
    if (samples < 10 * num_classes)
        throw ValidationError("make_dataset: need at least 10 samples per class");

    Dataset d;
    d.kind = kind;
    d.num_classes = num_classes;
    d.seed = seed;
    switch (kind) {
        case DatasetKind::Blobs:
            d.features = 32;
            break;
        case DatasetKind::Rings:
            d.features = 2;
            break;
        case DatasetKind::TinyImages:
            d.channels = 1;
            d.height = 8;
            d.width = 8;
            d.features = 64;
            break;
    }

    // Class templates.
    std::vector<double> centers(static_cast<size_t>(num_classes) * d.features);
    Rng template_rng(seed, 1);
    for (int k = 0; k < num_classes; ++k) {
        double* c = centers.data() + static_cast<size_t>(k) * d.features;
        switch (kind) {
            case DatasetKind::Blobs:
                // Non-negative feature templates, in the spirit of image data.
                for (int f = 0; f < d.features; ++f)
                    c[f] = 1.5 * std::fabs(template_rng.normal());
                break;
            case DatasetKind::Rings:
                c[0] = 1.0 + k;  // radius; angle drawn per sample
                break;
            case DatasetKind::TinyImages:
                for (int f = 0; f < d.features; ++f)
                    c[f] = std::fabs(template_rng.normal());
                break;
        }
    }

    // Balanced labels, then a seeded shuffle of the sample order.
    std::vector<int> labels(static_cast<size_t>(samples));
    for (int i = 0; i < samples; ++i) labels[static_cast<size_t>(i)] = i % num_classes;
    Rng order_rng(seed, 2);
    order_rng.shuffle(labels);

    std::vector<double> xs(static_cast<size_t>(samples) * d.features);
    Rng sample_rng(seed, 3);
    for (int i = 0; i < samples; ++i) {
        double* x = xs.data() + static_cast<size_t>(i) * d.features;
        const int k = labels[static_cast<size_t>(i)];
        const double* c = centers.data() + static_cast<size_t>(k) * d.features;
        switch (kind) {
            case DatasetKind::Blobs:
                for (int f = 0; f < d.features; ++f) x[f] = std::max(0.0, c[f] + 0.9 * sample_rng.normal());
                break;
            case DatasetKind::Rings: {
                const double angle = 2.0 * 3.14159265358979323846 * sample_rng.real();
                const double radius = c[0] + 0.1 * sample_rng.normal();
                x[0] = radius * std::cos(angle);
                x[1] = radius * std::sin(angle);
                break;
            }
            case DatasetKind::TinyImages:
                for (int f = 0; f < d.features; ++f) x[f] = std::max(0.0, c[f] + 0.5 * sample_rng.normal());
                break;
        }
    }

    // Stratified 80/20 split, preserving the shuffled order within each class.
    std::vector<std::vector<size_t>> by_class(static_cast<size_t>(num_classes));
    for (int i = 0; i < samples; ++i)
        by_class[static_cast<size_t>(labels[static_cast<size_t>(i)])].push_back(
            static_cast<size_t>(i));
    for (int k = 0; k < num_classes; ++k) {
        const auto& idx = by_class[static_cast<size_t>(k)];
        const size_t n_train = idx.size() * 8 / 10;
        for (size_t j = 0; j < idx.size(); ++j) {
            auto& tx = j < n_train ? d.train_x : d.test_x;
            auto& ty = j < n_train ? d.train_y : d.test_y;
            const double* x = xs.data() + idx[j] * d.features;
            tx.insert(tx.end(), x, x + d.features);
            ty.push_back(k);
        }
    }
    return d;
}

std::vector<size_t> select_batch(const Dataset& data, size_t size, uint64_t seed) {
    if (data.test_count() == 0) throw ValidationError("select_batch: empty test split");
    size = std::min(size, data.test_count());
    std::vector<size_t> all(data.test_count());
    std::iota(all.begin(), all.end(), size_t{0});
    Rng rng(seed, 4);
    rng.shuffle(all);
    all.resize(size);
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace faultline::qnn
