#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "faultline/qnn/model.hpp"

namespace faultline::qnn {

/// Per-layer symmetric linear quantization of the weights into n_q-bit two's
/// complement codes with scale = max|w| / (2^(n_q-1) - 1). Biases stay float.
/// The dequantized weights are kept as an incrementally-updated cache so a
/// single bit flip is O(1).
class QuantizedModel {
  public:
    QuantizedModel() = default;

    const ModelSpec& spec() const { return spec_; }
    const std::vector<Shape>& shapes() const { return shapes_; }
    Shape input() const { return shapes_.front(); }
    int n_q() const { return n_q_; }
    int num_classes() const { return shapes_.back().features; }
    uint64_t seed() const { return seed_; }
    void set_seed(uint64_t s) { seed_ = s; }  ///< training-seed provenance

    size_t layer_count() const { return spec_.layers.size(); }
    bool parametric(size_t layer) const { return spec_.layers[layer].parametric(); }
    size_t weight_count(size_t layer) const { return codes_[layer].size(); }
    size_t total_weight_bits() const;

    double scale(size_t layer) const { return scales_[layer]; }
    int16_t code(size_t layer, size_t w) const { return codes_[layer][w]; }
    double weight(size_t layer, size_t w) const { return deq_[layer][w]; }

    /// Bit b of the weight's two's complement encoding, b in [0, n_q).
    uint8_t bit(size_t layer, size_t w, uint32_t b) const {
        return static_cast<uint8_t>((static_cast<uint16_t>(codes_[layer][w]) >> b) & 1u);
    }
    /// Toggles one encoding bit and refreshes the dequantized cache entry.
    void flip_bit(size_t layer, size_t w, uint32_t b);

    /// Signed value change of flipping bit b of this weight's code.
    double flip_delta(size_t layer, size_t w, uint32_t b) const;

    /// MSB carries weight -2^(n_q-1); bit i carries 2^i.
    double bit_weight(uint32_t b) const {
        const double mag = static_cast<double>(1u << b);
        return b + 1 == static_cast<uint32_t>(n_q_) ? -mag : mag;
    }

    NetRef net() const { return {&spec_, &shapes_, &deq_, &biases_}; }
    const std::vector<std::vector<double>>& shadow_weights() const { return shadow_; }
    const std::vector<std::vector<double>>& biases() const { return biases_; }

    friend QuantizedModel quantize(const FloatModel& model, int n_q);
    friend QuantizedModel load_model(const std::string& path);

  private:
    int16_t sign_extend(uint16_t enc) const {
        const uint16_t mask = static_cast<uint16_t>((1u << n_q_) - 1u);
        enc &= mask;
        if (enc & (1u << (n_q_ - 1))) return static_cast<int16_t>(enc - (1u << n_q_));
        return static_cast<int16_t>(enc);
    }

    ModelSpec spec_;
    std::vector<Shape> shapes_;
    int n_q_ = 8;
    uint64_t seed_ = 0;
    std::vector<std::vector<int16_t>> codes_;
    std::vector<double> scales_;
    std::vector<std::vector<double>> biases_;
    std::vector<std::vector<double>> shadow_;  ///< float weights at quantize time
    std::vector<std::vector<double>> deq_;     ///< scale * code, kept in sync
};

/// n_q must be in [2, 16]. An all-zero layer gets scale 1 with a warning.
QuantizedModel quantize(const FloatModel& model, int n_q);
FloatModel dequantize(const QuantizedModel& model);

struct LossResult {
    std::vector<double> logits;
    double loss = 0.0;
};
LossResult forward_loss(const QuantizedModel& model, const std::vector<double>& x, int batch,
                        const std::vector<int>& labels);

/// d(loss)/d(bit) for every encoding bit: dL/dw * scale * bit_weight.
struct BitGradients {
    int n_q = 8;
    std::vector<std::vector<double>> by_layer;  ///< [layer][w * n_q + bit]
};
BitGradients bit_gradients(const QuantizedModel& model, const std::vector<double>& x, int batch,
                           const std::vector<int>& labels);

struct AccuracyResult {
    double accuracy = 0.0;
    double random_guess = 0.0;
};
AccuracyResult accuracy(const QuantizedModel& model, const Dataset& data, bool test_split = true);

/// Checkpoint: one-line JSON header, '\n', then the little-endian int16 code
/// payload of every parametric layer in order.
void save_model(const QuantizedModel& model, const std::string& path);
QuantizedModel load_model(const std::string& path);

}  // namespace faultline::qnn
