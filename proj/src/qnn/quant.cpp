#include "faultline/qnn/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace faultline::qnn {

using nlohmann::json;

size_t QuantizedModel::total_weight_bits() const {
    size_t n = 0;
    for (const auto& c : codes_) n += c.size() * static_cast<size_t>(n_q_);
    return n;
}

void QuantizedModel::flip_bit(size_t layer, size_t w, uint32_t b) {
    const uint16_t enc = static_cast<uint16_t>(codes_[layer][w]) ^ static_cast<uint16_t>(1u << b);
    codes_[layer][w] = sign_extend(enc);
    deq_[layer][w] = scales_[layer] * codes_[layer][w];
}

double QuantizedModel::flip_delta(size_t layer, size_t w, uint32_t b) const {
    const double sign = bit(layer, w, b) ? -1.0 : 1.0;
    return sign * bit_weight(b) * scales_[layer];
}

QuantizedModel quantize(const FloatModel& model, int n_q) {
    if (n_q < 2 || n_q > 16) throw ValidationError("quantize: n_q must be in [2, 16]");
    QuantizedModel q;
    q.spec_ = model.spec;
    q.shapes_ = model.shapes;
    q.n_q_ = n_q;
    q.biases_ = model.biases;
    q.shadow_ = model.weights;
    q.codes_.resize(model.weights.size());
    q.scales_.assign(model.weights.size(), 0.0);
    q.deq_.resize(model.weights.size());

    const double qmax = static_cast<double>((1 << (n_q - 1)) - 1);
    for (size_t i = 0; i < model.weights.size(); ++i) {
        const auto& w = model.weights[i];
        if (w.empty()) continue;
        double absmax = 0.0;
        for (double v : w) absmax = std::max(absmax, std::fabs(v));
        double scale = absmax / qmax;
        if (scale == 0.0) {
            std::fprintf(stderr, "warning: all-zero layer %zu, using unit scale\n", i);
            scale = 1.0;
        }
        q.scales_[i] = scale;
        q.codes_[i].resize(w.size());
        q.deq_[i].resize(w.size());
        for (size_t k = 0; k < w.size(); ++k) {
            long code = std::lround(w[k] / scale);
            code = std::clamp(code, -(1l << (n_q - 1)), (1l << (n_q - 1)) - 1);
            q.codes_[i][k] = static_cast<int16_t>(code);
            q.deq_[i][k] = scale * static_cast<double>(code);
        }
    }
    return q;
}

FloatModel dequantize(const QuantizedModel& model) {
    FloatModel m;
    m.spec = model.spec();
    m.input = model.input();
    m.shapes = model.shapes();
    m.biases = model.biases();
    m.weights.resize(model.layer_count());
    for (size_t i = 0; i < model.layer_count(); ++i) {
        m.weights[i].resize(model.weight_count(i));
        for (size_t k = 0; k < m.weights[i].size(); ++k)
            m.weights[i][k] = model.weight(i, k);
    }
    return m;
}

LossResult forward_loss(const QuantizedModel& model, const std::vector<double>& x, int batch,
                        const std::vector<int>& labels) {
    if (labels.size() != static_cast<size_t>(batch))
        throw ValidationError("forward_loss: labels/batch size mismatch");
    if (x.size() != static_cast<size_t>(batch) * model.input().features)
        throw ValidationError("forward_loss: input/batch shape mismatch");
    ForwardCache cache = forward(model.net(), x.data(), batch);
    LossResult res;
    res.loss = mean_xent_loss(model.net(), cache.logits(), batch, labels.data());
    res.logits = cache.logits();
    return res;
}

BitGradients bit_gradients(const QuantizedModel& model, const std::vector<double>& x, int batch,
                           const std::vector<int>& labels) {
    ForwardCache cache = forward(model.net(), x.data(), batch);
    Gradients g = backward(model.net(), cache, labels.data());

    BitGradients bits;
    bits.n_q = model.n_q();
    bits.by_layer.resize(model.layer_count());
    const auto n_q = static_cast<uint32_t>(model.n_q());
    for (size_t i = 0; i < model.layer_count(); ++i) {
        if (!model.parametric(i)) continue;
        const double scale = model.scale(i);
        auto& out = bits.by_layer[i];
        out.resize(g.dw[i].size() * n_q);
        for (size_t w = 0; w < g.dw[i].size(); ++w) {
            const double base = g.dw[i][w] * scale;
            for (uint32_t b = 0; b < n_q; ++b)
                out[w * n_q + b] = base * model.bit_weight(b);
        }
    }
    return bits;
}

AccuracyResult accuracy(const QuantizedModel& model, const Dataset& data, bool test_split) {
    const auto& xs = test_split ? data.test_x : data.train_x;
    const auto& ys = test_split ? data.test_y : data.train_y;
    AccuracyResult r;
    r.random_guess = data.random_guess();
    r.accuracy = accuracy_of(model.net(), xs, ys, data.features);
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

void save_model(const QuantizedModel& model, const std::string& path) {
    json header;
    header["format_version"] = kFormatVersion;
    header["tool_version"] = kToolVersion;
    header["spec"] = model.spec().to_text();
    const Shape in = model.input();
    header["input"] = {{"c", in.c}, {"h", in.h}, {"w", in.w}, {"features", in.features}};
    header["n_q"] = model.n_q();
    header["seed"] = model.seed();
    json scales = json::array();
    json biases = json::array();
    json sizes = json::array();
    for (size_t i = 0; i < model.layer_count(); ++i) {
        scales.push_back(model.scale(i));
        biases.push_back(model.biases()[i]);
        sizes.push_back(model.weight_count(i));
    }
    header["scales"] = scales;
    header["biases"] = biases;
    header["weight_counts"] = sizes;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << header.dump() << '\n';
    for (size_t i = 0; i < model.layer_count(); ++i)
        for (size_t w = 0; w < model.weight_count(i); ++w) {
            const auto enc = static_cast<uint16_t>(model.code(i, w));
            const char bytes[2] = {static_cast<char>(enc & 0xff),
                                   static_cast<char>((enc >> 8) & 0xff)};
            out.write(bytes, 2);
        }
}

QuantizedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw ParseError(path + ": missing header");
    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }

    QuantizedModel q;
    try {
        if (header.at("format_version").get<int>() > kFormatVersion)
            throw ParseError(path + ": unsupported format_version");
        q.spec_ = ModelSpec::parse(header.at("spec").get<std::string>());
        const auto& jin = header.at("input");
        Shape input;
        input.c = jin.at("c").get<int>();
        input.h = jin.at("h").get<int>();
        input.w = jin.at("w").get<int>();
        input.features = jin.at("features").get<int>();
        q.shapes_ = infer_shapes(q.spec_, input);
        q.n_q_ = header.at("n_q").get<int>();
        if (q.n_q_ < 2 || q.n_q_ > 16) throw ParseError(path + ": bad n_q");
        q.seed_ = header.at("seed").get<uint64_t>();
        q.scales_ = header.at("scales").get<std::vector<double>>();
        q.biases_ = header.at("biases").get<std::vector<std::vector<double>>>();
        const auto counts = header.at("weight_counts").get<std::vector<size_t>>();
        if (counts.size() != q.spec_.layers.size())
            throw ParseError(path + ": weight_counts size mismatch");
        q.codes_.resize(counts.size());
        q.deq_.resize(counts.size());
        for (size_t i = 0; i < counts.size(); ++i) {
            q.codes_[i].resize(counts[i]);
            for (size_t w = 0; w < counts[i]; ++w) {
                char bytes[2];
                if (!in.read(bytes, 2)) throw ParseError(path + ": truncated payload");
                const auto enc = static_cast<uint16_t>(
                    static_cast<uint8_t>(bytes[0]) |
                    (static_cast<uint16_t>(static_cast<uint8_t>(bytes[1])) << 8));
                q.codes_[i][w] = q.sign_extend(enc);
            }
            q.deq_[i].resize(counts[i]);
            for (size_t w = 0; w < counts[i]; ++w)
                q.deq_[i][w] = q.scales_[i] * q.codes_[i][w];
        }
        q.shadow_ = q.deq_;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return q;
}

}  // namespace faultline::qnn
