// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pucknet/adam.hpp"
#include "pucknet/checkpoint.hpp"
#include "pucknet/ops.hpp"
#include "pucknet/rng.hpp"

namespace pucknet {

// Two-headed encoder-decoder for puck classification + coordinate regression.
// Encoder: per stage, a 2x2 mean-pool then convs_per_block 3x3 convs, each
// followed by batch norm and ReLU. Decoder: 2x2 stride-2 up-convolutions; the
// feature after each up-convolution receives the additive skip from the
// same-resolution encoder stage, then batch norm and ReLU. Heads: global
// average pool + linear for the logit, 1x1 conv + spatial soft-argmax for the
// coordinates.
struct PuckNetConfig {
    std::size_t input_channels = 3;
    std::vector<std::size_t> down_channels = {8, 16, 32};
    std::vector<std::size_t> up_channels = {32, 16, 8}; // widths consumed by the up-convs
    std::size_t convs_per_block = 3;
    std::size_t kernel = 3;
    double out_width = 400.0;
    double out_height = 300.0;
    std::size_t input_width = 128;
    std::size_t input_height = 96;

    std::size_t levels() const { return down_channels.size(); }
    std::size_t downsample_factor() const { return std::size_t{1} << levels(); }

    void validate() const {
        if (down_channels.empty()) fail_config("PuckNet config: down_channels is empty");
        if (convs_per_block < 1) fail_config("PuckNet config: convs_per_block must be >= 1");
        std::vector<std::size_t> rev(down_channels.rbegin(), down_channels.rend());
        if (rev != up_channels)
            fail_config("PuckNet config: up_channels must equal reversed down_channels "
                        "(additive skips need matching widths)");
        if (out_width <= 0 || out_height <= 0)
            fail_config("PuckNet config: coordinate range must be positive");
    }

    nlohmann::json to_json() const {
        return {{"input_channels", input_channels}, {"down_channels", down_channels},
                {"up_channels", up_channels},       {"convs_per_block", convs_per_block},
                {"kernel", kernel},                 {"out_width", out_width},
                {"out_height", out_height},         {"input_width", input_width},
                {"input_height", input_height}};
    }

    static PuckNetConfig from_json(const nlohmann::json& j) {
        PuckNetConfig c;
        c.input_channels = j.at("input_channels").get<std::size_t>();
        c.down_channels = j.at("down_channels").get<std::vector<std::size_t>>();
        c.up_channels = j.at("up_channels").get<std::vector<std::size_t>>();
        c.convs_per_block = j.at("convs_per_block").get<std::size_t>();
        c.kernel = j.at("kernel").get<std::size_t>();
        c.out_width = j.at("out_width").get<double>();
        c.out_height = j.at("out_height").get<double>();
        c.input_width = j.at("input_width").get<std::size_t>();
        c.input_height = j.at("input_height").get<std::size_t>();
        return c;
    }
};

struct PuckNetModel {
    PuckNetConfig config;
    // Trainable parameters in declaration order, keyed by layer name.
    std::vector<std::pair<std::string, Tensor>> params;
    // Batch-norm running stats, keyed like "down0.bn1".
    std::vector<std::pair<std::string, RunningStats>> stats;

    Tensor& param(const std::string& name) {
        for (auto& [n, t] : params)
            if (n == name) return t;
        fail_contract("unknown parameter: ", name);
    }
    const Tensor& param(const std::string& name) const {
        for (const auto& [n, t] : params)
            if (n == name) return t;
        fail_contract("unknown parameter: ", name);
    }
    RunningStats& stat(const std::string& name) {
        for (auto& [n, s] : stats)
            if (n == name) return s;
        fail_contract("unknown running stat: ", name);
    }

    std::vector<Tensor> parameter_tensors() const {
        std::vector<Tensor> out;
        out.reserve(params.size());
        for (const auto& [n, t] : params) out.push_back(t);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : params) n += t.size();
        return n;
    }

    double parameter_l2_norm() const {
        double s = 0.0;
        for (const auto& [name, t] : params)
            for (double v : t.values()) s += v * v;
        return std::sqrt(s);
    }

    void zero_grad() {
        for (auto& [n, t] : params) t.zero_grad();
    }
};

// Number of trainable parameters implied by a config, without building one.
inline std::size_t parameter_count(const PuckNetConfig& cfg) {
    cfg.validate();
    std::size_t n = 0;
    const std::size_t k2 = cfg.kernel * cfg.kernel;
    std::size_t in = cfg.input_channels;
    for (std::size_t out : cfg.down_channels) {
        for (std::size_t j = 0; j < cfg.convs_per_block; ++j) {
            const std::size_t cin = j == 0 ? in : out;
            n += out * cin * k2 + out; // conv w + b
            n += 2 * out;              // bn gamma + beta
        }
        in = out;
    }
    const std::size_t levels = cfg.levels();
    for (std::size_t i = 0; i < levels; ++i) {
        const std::size_t cin = cfg.up_channels[i];
        const std::size_t cout = i + 1 < levels ? cfg.up_channels[i + 1] : cfg.up_channels.back();
        n += cin * cout * 4 + cout; // 2x2 up-conv w + b
        n += 2 * cout;              // bn
    }
    const std::size_t f = cfg.up_channels.back();
    n += f * 1 + 1; // classification linear
    n += 1 * f + 1; // 1x1 heatmap conv
    return n;
}

namespace detail {

inline Tensor init_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::vector<double> v(numel(shape));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(v), true);
}

} // namespace detail

// Deterministic build: the same seed yields bitwise-identical parameters.
// Weights are uniform in +-sqrt(1/fan_in); biases zero; bn gamma 1, beta 0.
inline PuckNetModel build(const PuckNetConfig& cfg, std::uint64_t rng_seed) {
    cfg.validate();
    PuckNetModel m;
    m.config = cfg;
    Rng rng(rng_seed);
    const std::size_t k = cfg.kernel;

    auto add_bn = [&m](const std::string& name, std::size_t c) {
        m.params.emplace_back(name + ".gamma", Tensor::full({c}, 1.0, true));
        m.params.emplace_back(name + ".beta", Tensor::zeros({c}, true));
        m.stats.emplace_back(name, RunningStats(c));
    };

    std::size_t in = cfg.input_channels;
    for (std::size_t i = 0; i < cfg.levels(); ++i) {
        const std::size_t out = cfg.down_channels[i];
        for (std::size_t j = 0; j < cfg.convs_per_block; ++j) {
            const std::size_t cin = j == 0 ? in : out;
            const std::string base = cat("down", i, ".conv", j);
            m.params.emplace_back(base + ".w",
                                  detail::init_uniform(rng, {out, cin, k, k}, cin * k * k));
            m.params.emplace_back(base + ".b", Tensor::zeros({out}, true));
            add_bn(cat("down", i, ".bn", j), out);
        }
        in = out;
    }
    for (std::size_t i = 0; i < cfg.levels(); ++i) {
        const std::size_t cin = cfg.up_channels[i];
        const std::size_t cout =
            i + 1 < cfg.levels() ? cfg.up_channels[i + 1] : cfg.up_channels.back();
        m.params.emplace_back(cat("up", i, ".w"),
                              detail::init_uniform(rng, {cin, cout, 2, 2}, cin * 4));
        m.params.emplace_back(cat("up", i, ".b"), Tensor::zeros({cout}, true));
        add_bn(cat("up", i, ".bn"), cout);
    }
    const std::size_t f = cfg.up_channels.back();
    m.params.emplace_back("head.class.w", detail::init_uniform(rng, {f, 1}, f));
    m.params.emplace_back("head.class.b", Tensor::zeros({1}, true));
    m.params.emplace_back("head.heat.w", detail::init_uniform(rng, {1, f, 1, 1}, f));
    m.params.emplace_back("head.heat.b", Tensor::zeros({1}, true));
    return m;
}

struct PuckNetOutput {
    Tensor logits; // N x 1
    Tensor coords; // N x 2, inside [0,out_width] x [0,out_height]
};

inline PuckNetOutput forward(PuckNetModel& m, const Tensor& images, NetMode mode) {
    detail::check_4d(images, "PuckNet input");
    const std::size_t C = images.dim(1), H = images.dim(2), W = images.dim(3);
    const PuckNetConfig& cfg = m.config;
    if (C != cfg.input_channels)
        fail_contract("PuckNet input has ", C, " channels, config wants ", cfg.input_channels);
    const std::size_t factor = cfg.downsample_factor();
    if (H % factor || W % factor) {
        const std::size_t ph = (H + factor - 1) / factor * factor;
        const std::size_t pw = (W + factor - 1) / factor * factor;
        fail_contract("PuckNet input ", H, "x", W, " not divisible by ", factor,
                      "; pad the input to ", ph, "x", pw);
    }

    Tensor f = images;
    std::vector<Tensor> skips;
    for (std::size_t i = 0; i < cfg.levels(); ++i) {
        f = avg_pool2x2(f);
        for (std::size_t j = 0; j < cfg.convs_per_block; ++j) {
            f = conv2d(f, m.param(cat("down", i, ".conv", j, ".w")),
                       m.param(cat("down", i, ".conv", j, ".b")), 1, cfg.kernel / 2);
            f = batch_norm2d(f, m.param(cat("down", i, ".bn", j, ".gamma")),
                             m.param(cat("down", i, ".bn", j, ".beta")), 1e-5, 0.1, mode,
                             m.stat(cat("down", i, ".bn", j)));
            f = relu(f);
        }
        skips.push_back(f);
    }
    for (std::size_t i = 0; i < cfg.levels(); ++i) {
        f = conv_transpose2d(f, m.param(cat("up", i, ".w")), m.param(cat("up", i, ".b")), 2, 0);
        if (i + 1 < cfg.levels()) f = add(f, skips[cfg.levels() - 2 - i]);
        f = batch_norm2d(f, m.param(cat("up", i, ".bn.gamma")), m.param(cat("up", i, ".bn.beta")),
                         1e-5, 0.1, mode, m.stat(cat("up", i, ".bn")));
        f = relu(f);
    }

    PuckNetOutput out;
    out.logits = linear(global_avg_pool(f), m.param("head.class.w"), m.param("head.class.b"));
    Tensor heat = conv2d(f, m.param("head.heat.w"), m.param("head.heat.b"), 1, 0);
    out.coords = spatial_soft_argmax(heat, cfg.out_width, cfg.out_height);
    return out;
}

// ---- checkpoint glue -------------------------------------------------------

inline Checkpoint to_checkpoint(const PuckNetModel& m) {
    Checkpoint ckpt;
    ckpt.meta = nlohmann::json{{"format", "pucknet-model"}, {"config", m.config.to_json()}}.dump();
    for (const auto& [name, t] : m.params)
        ckpt.entries.emplace_back(name, Tensor(t.shape(), t.values()));
    for (const auto& [name, s] : m.stats) {
        ckpt.entries.emplace_back(name + ".running_mean",
                                  Tensor({s.mean.size()}, s.mean));
        ckpt.entries.emplace_back(name + ".running_var", Tensor({s.var.size()}, s.var));
    }
    return ckpt;
}

inline PuckNetModel model_from_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json meta = nlohmann::json::parse(ckpt.meta);
    if (meta.value("format", "") != "pucknet-model")
        fail_config("checkpoint does not hold a PuckNet model");
    PuckNetModel m = build(PuckNetConfig::from_json(meta.at("config")), 0);
    for (auto& [name, t] : m.params) {
        const Tensor* src = ckpt.find(name);
        if (!src) fail_config("checkpoint is missing parameter ", name);
        if (src->shape() != t.shape())
            fail_config("checkpoint parameter ", name, " has shape ", shape_str(src->shape()),
                        ", model wants ", shape_str(t.shape()));
        t.values() = src->values();
    }
    for (auto& [name, s] : m.stats) {
        const Tensor* mean = ckpt.find(name + ".running_mean");
        const Tensor* var = ckpt.find(name + ".running_var");
        if (!mean || !var) fail_config("checkpoint is missing running stats for ", name);
        s.mean = mean->values();
        s.var = var->values();
    }
    return m;
}

inline void save_model(const std::string& path, const PuckNetModel& m) {
    save_checkpoint(path, to_checkpoint(m));
}

inline PuckNetModel load_model(const std::string& path) {
    return model_from_checkpoint(load_checkpoint(path));
}

} // namespace pucknet
