#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "depthfill/nn.hpp"
#include "depthfill/raster.hpp"
#include "depthfill/rng.hpp"

namespace depthfill {

// Encoder-decoder geometry. Parameter count is a pure function of these
// fields; the seed fixes the initialization.
struct NetworkSpec {
    int width = 64;
    int height = 48;
    int levels = 2;
    int base_channels = 8;
    int in_channels = 3;  // 3 for RGB prediction, 1 for the raster corrector
    std::uint64_t seed = 0;

    bool operator==(const NetworkSpec&) const = default;
};

inline void validate(const NetworkSpec& spec) {
    if (spec.width <= 0 || spec.height <= 0)
        throw std::invalid_argument("NetworkSpec: input size must be positive");
    if (spec.levels < 1) throw std::invalid_argument("NetworkSpec: levels must be >= 1");
    if (spec.base_channels < 1)
        throw std::invalid_argument("NetworkSpec: base_channels must be >= 1");
    if (spec.in_channels < 1)
        throw std::invalid_argument("NetworkSpec: in_channels must be >= 1");
    const int div = 1 << spec.levels;
    if (spec.width % div != 0 || spec.height % div != 0)
        throw std::invalid_argument("NetworkSpec: input size must be divisible by 2^levels");
}

// Convolutions in parameter order: encoder stages top-down, bottleneck,
// decoder stages bottom-up, then the 1x1 output head.
inline std::vector<ConvShape> network_layers(const NetworkSpec& spec) {
    std::vector<ConvShape> layers;
    const int c = spec.base_channels;
    for (int i = 0; i < spec.levels; ++i)
        layers.push_back({i == 0 ? spec.in_channels : c << (i - 1), c << i, 3});
    layers.push_back({c << (spec.levels - 1), c << spec.levels, 3});
    for (int i = spec.levels - 1; i >= 0; --i)
        layers.push_back({(c << (i + 1)) + (c << i), c << i, 3});
    layers.push_back({c, 1, 1});
    return layers;
}

inline std::size_t parameter_count(const NetworkSpec& spec) {
    std::size_t n = 0;
    for (const auto& l : network_layers(spec)) n += l.param_count();
    return n;
}

struct PredictorModel {
    NetworkSpec spec;
    std::vector<double> parameters;  // per layer: weights [out][ky][kx][in], then biases
};

// Deterministic initialization: per-layer uniform in +-sqrt(1/fan_in), drawn
// in layer order from a generator seeded with spec.seed.
inline PredictorModel init_model(const NetworkSpec& spec) {
    validate(spec);
    PredictorModel model;
    model.spec = spec;
    model.parameters.reserve(parameter_count(spec));
    Rng rng(spec.seed);
    for (const auto& layer : network_layers(spec)) {
        const double bound = std::sqrt(1.0 / (static_cast<double>(layer.in_ch) * layer.ksize * layer.ksize));
        for (std::size_t i = 0; i < layer.param_count(); ++i)
            model.parameters.push_back(rng.uniform(-bound, bound));
    }
    return model;
}

// Everything the backward pass needs from one forward evaluation.
struct ForwardTrace {
    Tensor input;
    std::vector<Tensor> enc_act;
    std::vector<Tensor> enc_pooled;
    std::vector<std::vector<std::size_t>> pool_argmax;
    Tensor bottleneck_act;
    std::vector<Tensor> dec_concat;
    std::vector<Tensor> dec_act;
    Tensor output;  // height x width x 1, linear head
};

inline ForwardTrace forward_traced(const PredictorModel& model, Tensor input) {
    const auto& spec = model.spec;
    if (input.h != spec.height || input.w != spec.width || input.c != spec.in_channels)
        throw std::invalid_argument("forward: input tensor does not match the network spec");

    const auto layers = network_layers(spec);
    const int levels = spec.levels;
    std::vector<std::span<const double>> params;
    std::size_t offset = 0;
    for (const auto& l : layers) {
        params.emplace_back(model.parameters.data() + offset, l.param_count());
        offset += l.param_count();
    }

    ForwardTrace t;
    t.input = std::move(input);
    t.enc_act.resize(levels);
    t.enc_pooled.resize(levels);
    t.pool_argmax.resize(levels);
    t.dec_concat.resize(levels);
    t.dec_act.resize(levels);

    const Tensor* cur = &t.input;
    for (int i = 0; i < levels; ++i) {
        t.enc_act[i] = conv_forward(*cur, layers[i], params[i]);
        relu_inplace(t.enc_act[i]);
        t.enc_pooled[i] = maxpool2_forward(t.enc_act[i], t.pool_argmax[i]);
        cur = &t.enc_pooled[i];
    }

    t.bottleneck_act = conv_forward(*cur, layers[levels], params[levels]);
    relu_inplace(t.bottleneck_act);

    cur = &t.bottleneck_act;
    for (int i = levels - 1; i >= 0; --i) {
        const std::size_t li = static_cast<std::size_t>(levels) + 1 + (levels - 1 - i);
        t.dec_concat[i] = concat_channels(upsample2_forward(*cur), t.enc_act[i]);
        t.dec_act[i] = conv_forward(t.dec_concat[i], layers[li], params[li]);
        relu_inplace(t.dec_act[i]);
        cur = &t.dec_act[i];
    }

    t.output = conv_forward(*cur, layers.back(), params.back());
    return t;
}

// Accumulates parameter gradients for one sample into param_grad.
inline void backward(const PredictorModel& model, const ForwardTrace& t, Tensor d_out,
                     std::span<double> param_grad) {
    const auto& spec = model.spec;
    const auto layers = network_layers(spec);
    const int levels = spec.levels;

    std::vector<std::span<const double>> params;
    std::vector<std::span<double>> grads;
    std::size_t offset = 0;
    for (const auto& l : layers) {
        params.emplace_back(model.parameters.data() + offset, l.param_count());
        grads.emplace_back(param_grad.data() + offset, l.param_count());
        offset += l.param_count();
    }

    Tensor g = conv_backward(t.dec_act[0], d_out, layers.back(), params.back(), grads.back());

    std::vector<Tensor> skip_grad(levels);
    for (int i = 0; i < levels; ++i) {
        const std::size_t li = static_cast<std::size_t>(levels) + 1 + (levels - 1 - i);
        relu_backward_inplace(t.dec_act[i], g);
        Tensor d_cat = conv_backward(t.dec_concat[i], g, layers[li], params[li], grads[li]);
        Tensor d_up(d_cat.h, d_cat.w, d_cat.c - t.enc_act[i].c);
        skip_grad[i] = Tensor(d_cat.h, d_cat.w, t.enc_act[i].c);
        split_channels_grad(d_cat, d_up, skip_grad[i]);
        g = upsample2_backward(d_up);
    }

    relu_backward_inplace(t.bottleneck_act, g);
    g = conv_backward(t.enc_pooled[levels - 1], g, layers[levels], params[levels], grads[levels]);

    for (int i = levels - 1; i >= 0; --i) {
        Tensor d_act = maxpool2_backward(g, t.pool_argmax[i], t.enc_act[i].h, t.enc_act[i].w);
        for (std::size_t p = 0; p < d_act.v.size(); ++p) d_act.v[p] += skip_grad[i].v[p];
        relu_backward_inplace(t.enc_act[i], d_act);
        g = conv_backward(i == 0 ? t.input : t.enc_pooled[i - 1], d_act, layers[i], params[i],
                          grads[i]);
    }
}

// Mean squared error over the included pixels, with the per-output gradient.
// Target codes are normalized to [0, 1]; mask_invalid drops code-0 targets.
struct MseResult {
    double loss = 0.0;
    Tensor grad;
};

inline MseResult loss_mse(const Tensor& pred, const DisparityRaster& target, bool mask_invalid) {
    if (pred.h != target.height || pred.w != target.width || pred.c != 1)
        throw std::invalid_argument("loss_mse: prediction/target dimension mismatch");
    std::size_t count = 0;
    for (const auto code : target.codes)
        if (!mask_invalid || code != 0) ++count;
    if (count == 0)
        throw std::invalid_argument("loss_mse: mask excludes every pixel");

    MseResult r;
    r.grad = Tensor(pred.h, pred.w, 1);
    for (int y = 0; y < pred.h; ++y) {
        for (int x = 0; x < pred.w; ++x) {
            const std::uint16_t code = target.at(x, y);
            if (mask_invalid && code == 0) continue;
            const double diff = pred.at(y, x, 0) - static_cast<double>(code) / 65535.0;
            r.loss += diff * diff;
            r.grad.at(y, x, 0) = 2.0 * diff / static_cast<double>(count);
        }
    }
    r.loss /= static_cast<double>(count);
    return r;
}

struct TrainConfig {
    int epochs = 1;
    double learning_rate = 1.0;
    int batch_size = 1;
    bool mask_invalid_targets = false;
    std::uint64_t seed = 0;

    bool operator==(const TrainConfig&) const = default;
};

inline void validate(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    // A zero rate is a legal no-op (parameters stay fixed); only negative or
    // non-finite rates are rejected.
    if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
        throw std::invalid_argument("TrainConfig: learning_rate must be non-negative");
    if (cfg.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
}

struct TrainResult {
    PredictorModel model;
    std::vector<double> loss_trace;  // one mean loss per epoch
};

// Normalized network input from an RGB image, resampled to the spec size.
inline Tensor rgb_to_input(const RgbImage& rgb, const NetworkSpec& spec) {
    const RgbImage scaled = resize_bilinear(rgb, spec.width, spec.height);
    Tensor t(spec.height, spec.width, 3);
    for (std::size_t i = 0; i < t.v.size(); ++i)
        t.v[i] = static_cast<double>(scaled.data[i]) / 255.0;
    return t;
}

// Normalized single-channel input from a disparity raster (corrector path).
inline Tensor raster_to_input(const DisparityRaster& r, const NetworkSpec& spec) {
    const DisparityRaster scaled = resize_nearest(r, spec.width, spec.height);
    Tensor t(spec.height, spec.width, 1);
    for (std::size_t i = 0; i < t.v.size(); ++i)
        t.v[i] = static_cast<double>(scaled.codes[i]) / 65535.0;
    return t;
}

// Mini-batch gradient descent over prepared input tensors. Sample order is
// reshuffled every epoch from cfg.seed; gradient accumulation runs in batch
// order, so the whole procedure is bit-reproducible.
inline TrainResult train_on_tensors(const PredictorModel& initial,
                                    std::span<const Tensor> inputs,
                                    std::span<const DisparityRaster> targets,
                                    const TrainConfig& cfg) {
    validate(cfg);
    if (inputs.empty() || inputs.size() != targets.size())
        throw std::invalid_argument("train: dataset is empty or ill-formed");

    TrainResult result;
    result.model = initial;
    auto& params = result.model.parameters;
    std::vector<double> grad(params.size());

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(inputs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                ForwardTrace trace = forward_traced(result.model, Tensor(inputs[idx]));
                MseResult mse = loss_mse(trace.output, targets[idx], cfg.mask_invalid_targets);
                epoch_loss += mse.loss;
                backward(result.model, trace, std::move(mse.grad), grad);
            }
            const double scale = cfg.learning_rate / static_cast<double>(end - start);
            for (std::size_t p = 0; p < params.size(); ++p) params[p] -= scale * grad[p];
        }
        epoch_loss /= static_cast<double>(inputs.size());
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                     std::to_string(epoch + 1));
        result.loss_trace.push_back(epoch_loss);
    }
    return result;
}

// RGB training entry point: prepares inputs at network resolution and
// nearest-resamples the target rasters to match.
inline TrainResult train(const PredictorModel& initial,
                         std::span<const std::pair<RgbImage, DisparityRaster>> dataset,
                         const TrainConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    std::vector<Tensor> inputs;
    std::vector<DisparityRaster> targets;
    inputs.reserve(dataset.size());
    targets.reserve(dataset.size());
    for (const auto& [rgb, raster] : dataset) {
        inputs.push_back(rgb_to_input(rgb, initial.spec));
        targets.push_back(resize_nearest(raster, initial.spec.width, initial.spec.height));
    }
    return train_on_tensors(initial, inputs, targets, cfg);
}

// Quantizes a network output field to disparity codes and nearest-resamples
// to the requested size.
inline DisparityRaster field_to_raster(const Tensor& out, int dst_w, int dst_h) {
    DisparityRaster raster(out.w, out.h);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            raster.at(x, y) = quantize_code(out.at(y, x, 0) * 65535.0);
    return resize_nearest(raster, dst_w, dst_h);
}

inline DisparityRaster predict(const PredictorModel& model, const RgbImage& rgb,
                               int out_w, int out_h) {
    ForwardTrace t = forward_traced(model, rgb_to_input(rgb, model.spec));
    return field_to_raster(t.output, out_w, out_h);
}

inline DisparityRaster predict_from_raster(const PredictorModel& model,
                                           const DisparityRaster& input,
                                           int out_w, int out_h) {
    ForwardTrace t = forward_traced(model, raster_to_input(input, model.spec));
    return field_to_raster(t.output, out_w, out_h);
}

// --- checkpoint format ----------------------------------------------------
//
// Byte layout (all integers little-endian):
//   0   4   magic "DFCK"
//   4   4   u32 format version (1)
//   8   4   u32 width          12  4   u32 height
//   16  4   u32 levels         20  4   u32 base_channels
//   24  4   u32 in_channels    28  8   u64 seed
//   36  8   u64 parameter count
//   44  ..  parameters, little-endian IEEE-754 f64, in layer order
//           (weights [out][ky][kx][in] then biases, per layer)

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const PredictorModel& model) {
    std::string buf;
    buf.reserve(44 + model.parameters.size() * 8);
    buf += "DFCK";
    detail::put_u32(buf, 1);
    detail::put_u32(buf, static_cast<std::uint32_t>(model.spec.width));
    detail::put_u32(buf, static_cast<std::uint32_t>(model.spec.height));
    detail::put_u32(buf, static_cast<std::uint32_t>(model.spec.levels));
    detail::put_u32(buf, static_cast<std::uint32_t>(model.spec.base_channels));
    detail::put_u32(buf, static_cast<std::uint32_t>(model.spec.in_channels));
    detail::put_u64(buf, model.spec.seed);
    detail::put_u64(buf, model.parameters.size());
    for (const double d : model.parameters) detail::put_u64(buf, std::bit_cast<std::uint64_t>(d));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

inline PredictorModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 44 || buf.compare(0, 4, "DFCK") != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    if (detail::get_u32(p + 4) != 1)
        throw std::runtime_error("unsupported checkpoint version: " + path);

    PredictorModel model;
    model.spec.width = static_cast<int>(detail::get_u32(p + 8));
    model.spec.height = static_cast<int>(detail::get_u32(p + 12));
    model.spec.levels = static_cast<int>(detail::get_u32(p + 16));
    model.spec.base_channels = static_cast<int>(detail::get_u32(p + 20));
    model.spec.in_channels = static_cast<int>(detail::get_u32(p + 24));
    model.spec.seed = detail::get_u64(p + 28);
    const std::uint64_t count = detail::get_u64(p + 36);
    validate(model.spec);
    if (count != parameter_count(model.spec) || buf.size() != 44 + count * 8)
        throw std::runtime_error("checkpoint is truncated or inconsistent: " + path);
    model.parameters.resize(count);
    for (std::uint64_t i = 0; i < count; ++i)
        model.parameters[i] = std::bit_cast<double>(detail::get_u64(p + 44 + i * 8));
    for (const double d : model.parameters)
        if (!std::isfinite(d))
            throw std::runtime_error("checkpoint contains non-finite parameters: " + path);
    return model;
}

} // namespace depthfill
