#include "faultline/qnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace faultline::qnn {

// ---------------------------------------------------------------------------
// Spec parsing
// ---------------------------------------------------------------------------

ModelSpec ModelSpec::parse(const std::string& text) {
    ModelSpec spec;
    std::istringstream in(text);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (tok.empty()) continue;
        const auto colon = tok.find(':');
        const std::string name = tok.substr(0, colon);
        auto arg = [&]() -> int {
            if (colon == std::string::npos)
                throw ValidationError("model spec: '" + name + "' needs an argument");
            const int v = std::stoi(tok.substr(colon + 1));
            if (v < 1) throw ValidationError("model spec: argument must be >= 1");
            return v;
        };
        if (name == "dense")
            spec.layers.push_back({LayerKind::Dense, arg()});
        else if (name == "conv")
            spec.layers.push_back({LayerKind::Conv3x3, arg()});
        else if (name == "relu")
            spec.layers.push_back({LayerKind::ReLU, 0});
        else if (name == "pool")
            spec.layers.push_back({LayerKind::MaxPool2, 0});
        else if (name == "flatten")
            spec.layers.push_back({LayerKind::Flatten, 0});
        else
            throw ValidationError("model spec: unknown layer '" + name + "'");
    }
    if (spec.layers.empty()) throw ValidationError("model spec: empty");
    return spec;
}

ModelSpec ModelSpec::mlp(int num_classes) {
    return parse("dense:64,relu,dense:64,relu,dense:" + std::to_string(num_classes));
}

ModelSpec ModelSpec::cnn(int num_classes) {
    return parse("conv:8,relu,pool,flatten,dense:" + std::to_string(num_classes));
}

std::string ModelSpec::to_text() const {
    std::string out;
    for (const LayerSpec& l : layers) {
        if (!out.empty()) out += ',';
        switch (l.kind) {
            case LayerKind::Dense: out += "dense:" + std::to_string(l.out); break;
            case LayerKind::Conv3x3: out += "conv:" + std::to_string(l.out); break;
            case LayerKind::ReLU: out += "relu"; break;
            case LayerKind::MaxPool2: out += "pool"; break;
            case LayerKind::Flatten: out += "flatten"; break;
        }
    }
    return out;
}

std::vector<Shape> infer_shapes(const ModelSpec& spec, Shape input) {
    std::vector<Shape> shapes;
    shapes.push_back(input);
    Shape cur = input;
    for (const LayerSpec& l : spec.layers) {
        switch (l.kind) {
            case LayerKind::Dense:
                if (cur.is_image())
                    throw ValidationError("dense layer needs a flat input (add flatten)");
                cur = Shape::flat(l.out);
                break;
            case LayerKind::Conv3x3:
                if (!cur.is_image()) throw ValidationError("conv layer needs an image input");
                cur = Shape::image(l.out, cur.h, cur.w);
                break;
            case LayerKind::ReLU:
                break;
            case LayerKind::MaxPool2:
                if (!cur.is_image()) throw ValidationError("pool layer needs an image input");
                if (cur.h % 2 != 0 || cur.w % 2 != 0)
                    throw ValidationError("pool layer needs even input height/width");
                cur = Shape::image(cur.c, cur.h / 2, cur.w / 2);
                break;
            case LayerKind::Flatten:
                if (!cur.is_image()) throw ValidationError("flatten needs an image input");
                cur = Shape::flat(cur.features);
                break;
        }
        shapes.push_back(cur);
    }
    return shapes;
}

FloatModel build_model(const ModelSpec& spec, Shape input, uint64_t seed) {
    FloatModel m;
    m.spec = spec;
    m.input = input;
    m.shapes = infer_shapes(spec, input);
    m.weights.resize(spec.layers.size());
    m.biases.resize(spec.layers.size());
    Rng rng(seed, 10);
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (!l.parametric()) continue;
        const Shape& in = m.shapes[i];
        size_t fan_in, n;
        if (l.kind == LayerKind::Dense) {
            fan_in = static_cast<size_t>(in.features);
            n = static_cast<size_t>(l.out) * in.features;
        } else {
            fan_in = static_cast<size_t>(in.c) * 9;
            n = static_cast<size_t>(l.out) * in.c * 9;
        }
        const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
        m.weights[i].resize(n);
        for (double& w : m.weights[i]) w = scale * rng.normal();
        m.biases[i].assign(static_cast<size_t>(l.out), 0.0);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

ForwardCache forward(const NetRef& net, const double* x, int batch) {
    const auto& layers = net.spec->layers;
    const auto& shapes = *net.shapes;
    ForwardCache cache;
    cache.batch = batch;
    cache.acts.resize(layers.size() + 1);
    cache.argmax.resize(layers.size());
    cache.acts[0].assign(x, x + static_cast<size_t>(batch) * shapes[0].features);

    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const Shape& in = shapes[i];
        const Shape& out = shapes[i + 1];
        const double* src = cache.acts[i].data();
        auto& dst = cache.acts[i + 1];
        dst.resize(static_cast<size_t>(batch) * out.features);
        switch (l.kind) {
            case LayerKind::Dense:
                kern::dense_forward(src, net.weights->at(i).data(), net.biases->at(i).data(),
                                    dst.data(), batch, in.features, out.features);
                break;
            case LayerKind::Conv3x3:
                kern::conv3x3_forward(src, net.weights->at(i).data(), net.biases->at(i).data(),
                                      dst.data(), batch, in.c, in.h, in.w, out.c);
                break;
            case LayerKind::ReLU:
                kern::relu_forward(src, dst.data(), static_cast<int64_t>(batch) * in.features);
                break;
            case LayerKind::MaxPool2:
                cache.argmax[i].resize(static_cast<size_t>(batch) * out.features);
                kern::maxpool2_forward(src, dst.data(), cache.argmax[i].data(), batch, in.c,
                                       in.h, in.w);
                break;
            case LayerKind::Flatten:
                dst = cache.acts[i];
                break;
        }
    }
    return cache;
}

double mean_xent_loss(const NetRef& net, const std::vector<double>& logits, int batch,
                      const int* labels, std::vector<double>* probs) {
    const int classes = net.shapes->back().features;
    std::vector<double> local_probs(static_cast<size_t>(batch) * classes);
    std::vector<double> losses(static_cast<size_t>(batch));
    kern::softmax_xent(logits.data(), labels, local_probs.data(), losses.data(), batch, classes);
    // Serial accumulation keeps the mean bit-deterministic.
    double total = 0.0;
    for (double l : losses) total += l;
    if (probs) *probs = std::move(local_probs);
    return total / batch;
}

Gradients backward(const NetRef& net, const ForwardCache& cache, const int* labels) {
    const auto& layers = net.spec->layers;
    const auto& shapes = *net.shapes;
    const int batch = cache.batch;
    const int classes = shapes.back().features;

    Gradients g;
    g.dw.resize(layers.size());
    g.db.resize(layers.size());

    std::vector<double> probs;
    g.loss = mean_xent_loss(net, cache.logits(), batch, labels, &probs);

    // d(mean xent)/d(logit) = (softmax - onehot) / batch
    std::vector<double> delta = std::move(probs);
    for (int b = 0; b < batch; ++b)
        delta[static_cast<size_t>(b) * classes + labels[b]] -= 1.0;
    const double inv_batch = 1.0 / batch;
    for (double& d : delta) d *= inv_batch;

    for (size_t ri = layers.size(); ri-- > 0;) {
        const LayerSpec& l = layers[ri];
        const Shape& in = shapes[ri];
        const Shape& out = shapes[ri + 1];
        std::vector<double> dx(static_cast<size_t>(batch) * in.features);
        switch (l.kind) {
            case LayerKind::Dense:
                g.dw[ri].resize(net.weights->at(ri).size());
                g.db[ri].resize(net.biases->at(ri).size());
                kern::dense_backward_params(cache.acts[ri].data(), delta.data(),
                                            g.dw[ri].data(), g.db[ri].data(), batch,
                                            in.features, out.features);
                kern::dense_backward_input(delta.data(), net.weights->at(ri).data(), dx.data(),
                                           batch, in.features, out.features);
                break;
            case LayerKind::Conv3x3:
                g.dw[ri].resize(net.weights->at(ri).size());
                g.db[ri].resize(net.biases->at(ri).size());
                kern::conv3x3_backward_params(cache.acts[ri].data(), delta.data(),
                                              g.dw[ri].data(), g.db[ri].data(), batch, in.c,
                                              in.h, in.w, out.c);
                kern::conv3x3_backward_input(delta.data(), net.weights->at(ri).data(), dx.data(),
                                             batch, in.c, in.h, in.w, out.c);
                break;
            case LayerKind::ReLU:
                kern::relu_backward(cache.acts[ri].data(), delta.data(), dx.data(),
                                    static_cast<int64_t>(batch) * in.features);
                break;
            case LayerKind::MaxPool2:
                kern::maxpool2_backward(delta.data(), cache.argmax[ri].data(), dx.data(), batch,
                                        in.c, in.h, in.w);
                break;
            case LayerKind::Flatten:
                dx = delta;
                break;
        }
        delta = std::move(dx);
    }
    return g;
}

double accuracy_of(const NetRef& net, const std::vector<double>& xs, const std::vector<int>& ys,
                   int features, int batch_hint) {
    if (ys.empty()) throw ValidationError("accuracy: empty dataset");
    const int classes = net.shapes->back().features;
    size_t correct = 0;
    size_t pos = 0;
    while (pos < ys.size()) {
        const int b = static_cast<int>(std::min<size_t>(ys.size() - pos, batch_hint));
        ForwardCache cache =
            forward(net, xs.data() + pos * static_cast<size_t>(features), b);
        const auto& logits = cache.logits();
        for (int s = 0; s < b; ++s) {
            const double* row = logits.data() + static_cast<size_t>(s) * classes;
            int best = 0;
            for (int k = 1; k < classes; ++k)
                if (row[k] > row[best]) best = k;
            if (best == ys[pos + static_cast<size_t>(s)]) ++correct;
        }
        pos += static_cast<size_t>(b);
    }
    return static_cast<double>(correct) / static_cast<double>(ys.size());
}

FloatModel train_float(const ModelSpec& spec, const Dataset& data, const TrainOptions& opts,
                       TrainReport* report) {
    const Shape input = data.is_image()
                            ? Shape::image(data.channels, data.height, data.width)
                            : Shape::flat(data.features);
    FloatModel model = build_model(spec, input, opts.seed);
    if (model.num_classes() != data.num_classes)
        throw ValidationError("train_float: model output size does not match num_classes");

    std::vector<std::vector<double>> vel_w(model.weights.size()), vel_b(model.biases.size());
    for (size_t i = 0; i < model.weights.size(); ++i) {
        vel_w[i].assign(model.weights[i].size(), 0.0);
        vel_b[i].assign(model.biases[i].size(), 0.0);
    }

    const size_t n = data.train_count();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});

    double last_loss = 0.0;
    std::vector<double> batch_x;
    std::vector<int> batch_y;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        Rng rng(opts.seed, 100 + static_cast<uint64_t>(epoch));
        rng.shuffle(order);
        for (size_t start = 0; start < n; start += static_cast<size_t>(opts.batch_size)) {
            const size_t bsz = std::min(static_cast<size_t>(opts.batch_size), n - start);
            batch_x.resize(bsz * static_cast<size_t>(data.features));
            batch_y.resize(bsz);
            for (size_t j = 0; j < bsz; ++j) {
                const size_t src = order[start + j];
                std::copy_n(data.train_x.data() + src * data.features, data.features,
                            batch_x.data() + j * static_cast<size_t>(data.features));
                batch_y[j] = data.train_y[src];
            }
            ForwardCache cache = forward(net_ref(model), batch_x.data(), static_cast<int>(bsz));
            Gradients g = backward(net_ref(model), cache, batch_y.data());
            last_loss = g.loss;
            if (!std::isfinite(last_loss))
                throw Error("train_float: non-finite loss at epoch " + std::to_string(epoch) +
                            " (lr too high?)");
            for (size_t i = 0; i < model.weights.size(); ++i) {
                if (model.weights[i].empty()) continue;
                for (size_t k = 0; k < model.weights[i].size(); ++k) {
                    vel_w[i][k] = opts.momentum * vel_w[i][k] -
                                  opts.lr * (g.dw[i][k] + opts.weight_decay * model.weights[i][k]);
                    model.weights[i][k] += vel_w[i][k];
                }
                for (size_t k = 0; k < model.biases[i].size(); ++k) {
                    vel_b[i][k] = opts.momentum * vel_b[i][k] - opts.lr * g.db[i][k];
                    model.biases[i][k] += vel_b[i][k];
                }
            }
        }
    }

    if (report) {
        report->final_loss = last_loss;
        report->train_accuracy =
            accuracy_of(net_ref(model), data.train_x, data.train_y, data.features);
        report->test_accuracy =
            accuracy_of(net_ref(model), data.test_x, data.test_y, data.features);
    }
    return model;
}

}  // namespace faultline::qnn
