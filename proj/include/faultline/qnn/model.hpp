#pragma once

#include <string>
#include <vector>

#include "faultline/qnn/dataset.hpp"
#include "faultline/qnn/kernels.hpp"

namespace faultline::qnn {

enum class LayerKind : uint8_t { Dense, Conv3x3, ReLU, MaxPool2, Flatten };

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    int out = 0;  ///< output features (Dense) or channels (Conv3x3)

    bool parametric() const { return kind == LayerKind::Dense || kind == LayerKind::Conv3x3; }
    bool operator==(const LayerSpec&) const = default;
};

/// Layer list in a small textual form: "dense:64,relu,dense:10" or
/// "conv:8,relu,pool,flatten,dense:10".
struct ModelSpec {
    std::vector<LayerSpec> layers;

    static ModelSpec parse(const std::string& text);
    static ModelSpec mlp(int num_classes);  ///< dense:64,relu,dense:64,relu,dense:K
    static ModelSpec cnn(int num_classes);  ///< conv:8,relu,pool,flatten,dense:K
    std::string to_text() const;
    bool operator==(const ModelSpec&) const = default;
};

/// Activation shape flowing between layers.
struct Shape {
    int c = 0, h = 0, w = 0;  ///< image when c > 0
    int features = 0;         ///< flat size (always valid)

    static Shape flat(int f) { return {0, 0, 0, f}; }
    static Shape image(int c, int h, int w) { return {c, h, w, c * h * w}; }
    bool is_image() const { return c > 0; }
    bool operator==(const Shape&) const = default;
};

/// Per-layer input shapes plus the output shape; validates adjacency.
std::vector<Shape> infer_shapes(const ModelSpec& spec, Shape input);

/// Float network. weights[i]/biases[i] are empty for non-parametric layers.
/// Dense weights are [out][in] row-major; conv kernels [oc][c][3][3].
struct FloatModel {
    ModelSpec spec;
    Shape input;
    std::vector<Shape> shapes;  ///< size layers+1, shapes[i] = input of layer i
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    int num_classes() const { return shapes.back().features; }
};

/// He-initialized model, deterministic in seed.
FloatModel build_model(const ModelSpec& spec, Shape input, uint64_t seed);

/// Read-only view shared by the float and quantized forward/backward paths.
struct NetRef {
    const ModelSpec* spec;
    const std::vector<Shape>* shapes;
    const std::vector<std::vector<double>>* weights;
    const std::vector<std::vector<double>>* biases;
};
inline NetRef net_ref(const FloatModel& m) {
    return {&m.spec, &m.shapes, &m.weights, &m.biases};
}

struct ForwardCache {
    int batch = 0;
    std::vector<std::vector<double>> acts;      ///< acts[0] = input, acts[i+1] = layer i output
    std::vector<std::vector<int32_t>> argmax;   ///< per layer, used by MaxPool2
    const std::vector<double>& logits() const { return acts.back(); }
};

ForwardCache forward(const NetRef& net, const double* x, int batch);

/// Mean cross-entropy over the batch; fills probs (batch x classes) if given.
double mean_xent_loss(const NetRef& net, const std::vector<double>& logits, int batch,
                      const int* labels, std::vector<double>* probs = nullptr);

struct Gradients {
    double loss = 0.0;
    std::vector<std::vector<double>> dw;
    std::vector<std::vector<double>> db;
};

/// Analytic backward pass through every layer; gradients of the mean
/// cross-entropy w.r.t. weights and biases.
Gradients backward(const NetRef& net, const ForwardCache& cache, const int* labels);

double accuracy_of(const NetRef& net, const std::vector<double>& xs, const std::vector<int>& ys,
                   int features, int batch_hint = 256);

struct TrainOptions {
    int epochs = 20;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-3;
    int batch_size = 32;
    uint64_t seed = 0;
};

struct TrainReport {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double final_loss = 0.0;
};

/// Mini-batch SGD with momentum. Deterministic in (spec, dataset, options).
/// Throws with a diagnostic if the loss goes non-finite.
FloatModel train_float(const ModelSpec& spec, const Dataset& data, const TrainOptions& opts,
                       TrainReport* report = nullptr);

}  // namespace faultline::qnn
