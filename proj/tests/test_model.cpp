// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "pucknet/losses.hpp"
#include "pucknet/model.hpp"

#include "oracles.hpp"

#include <filesystem>

using namespace pucknet;

TEST_CASE("build is deterministic in the seed") {
    PuckNetConfig cfg;
    PuckNetModel a = build(cfg, 42);
    PuckNetModel b = build(cfg, 42);
    REQUIRE(a.params.size() == b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        CHECK(a.params[i].first == b.params[i].first);
        const auto& av = a.params[i].second.values();
        const auto& bv = b.params[i].second.values();
        REQUIRE(av.size() == bv.size());
        for (std::size_t j = 0; j < av.size(); ++j) CHECK(av[j] == bv[j]);
    }
    PuckNetModel c = build(cfg, 43);
    CHECK(c.params[0].second.values() != a.params[0].second.values());
}

TEST_CASE("parameter count matches the layer-by-layer arithmetic") {
    // Independent tally for the default config: channels 3 -> [8,16,32],
    // three 3x3 convs per block each with batch norm, 2x2 up-convs with batch
    // norm, then the two heads.
    const std::size_t expected =
        // down block 0 (3 -> 8)
        (8 * 3 * 9 + 8) + 2 * 8 + (8 * 8 * 9 + 8) + 2 * 8 + (8 * 8 * 9 + 8) + 2 * 8 +
        // down block 1 (8 -> 16)
        (16 * 8 * 9 + 16) + 2 * 16 + (16 * 16 * 9 + 16) + 2 * 16 + (16 * 16 * 9 + 16) + 2 * 16 +
        // down block 2 (16 -> 32)
        (32 * 16 * 9 + 32) + 2 * 32 + (32 * 32 * 9 + 32) + 2 * 32 + (32 * 32 * 9 + 32) + 2 * 32 +
        // up-convs 32->16, 16->8, 8->8, each with batch norm
        (32 * 16 * 4 + 16) + 2 * 16 + (16 * 8 * 4 + 8) + 2 * 8 + (8 * 8 * 4 + 8) + 2 * 8 +
        // classification linear 8->1 and 1x1 heatmap conv 8->1
        (8 * 1 + 1) + (1 * 8 * 1 * 1 + 1);

    PuckNetConfig cfg;
    CHECK(parameter_count(cfg) == expected);
    PuckNetModel m = build(cfg, 1);
    CHECK(m.parameter_count() == expected);
}

TEST_CASE("two-level config builds and keeps the output contract") {
    PuckNetConfig cfg;
    cfg.down_channels = {8, 16};
    cfg.up_channels = {16, 8};
    PuckNetModel m = build(cfg, 5);
    Rng rng(6);
    Tensor x = oracles::random_tensor(rng, {2, 3, 12, 16}, 0.0, 1.0, false);
    auto out = forward(m, x, NetMode::Eval);
    CHECK(out.logits.shape() == Shape{2, 1});
    CHECK(out.coords.shape() == Shape{2, 2});
}

TEST_CASE("config validation catches mismatched channel lists") {
    PuckNetConfig cfg;
    cfg.up_channels = {16, 8, 32};
    CHECK_THROWS_AS(build(cfg, 0), ConfigError);
}

TEST_CASE("coords always live inside the output rectangle") {
    PuckNetConfig cfg;
    PuckNetModel m = build(cfg, 7);
    Rng rng(8);
    Tensor x = oracles::random_tensor(rng, {3, 3, 24, 32}, -2.0, 2.0, false);
    auto out = forward(m, x, NetMode::Eval);
    for (std::size_t n = 0; n < 3; ++n) {
        CHECK(out.coords.values()[2 * n] >= 0.0);
        CHECK(out.coords.values()[2 * n] <= 400.0);
        CHECK(out.coords.values()[2 * n + 1] >= 0.0);
        CHECK(out.coords.values()[2 * n + 1] <= 300.0);
    }
}

TEST_CASE("indivisible input dims raise an error with a padding hint") {
    PuckNetConfig cfg;
    PuckNetModel m = build(cfg, 9);
    Tensor x = Tensor::zeros({1, 3, 20, 28});
    CHECK_THROWS_WITH(forward(m, x, NetMode::Eval),
                      Catch::Matchers::ContainsSubstring("pad the input to 24x32"));
}

namespace {

// Flip every convolution kernel along its width axis; with the mirrored
// input this realizes the horizontally mirrored network.
void mirror_model_weights(PuckNetModel& m) {
    for (auto& [name, t] : m.params) {
        if (t.shape().size() != 4) continue;
        const std::size_t k = t.dim(3);
        if (k < 2) continue;
        const std::size_t rows = t.size() / k;
        for (std::size_t r = 0; r < rows; ++r) {
            double* p = t.values().data() + r * k;
            for (std::size_t a = 0, b = k - 1; a < b; ++a, --b) std::swap(p[a], p[b]);
        }
    }
}

Tensor mirror_images(const Tensor& x) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    std::vector<double> v(x.size());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w)
                    v[((n * C + c) * H + h) * W + w] =
                        x.values()[((n * C + c) * H + h) * W + (W - 1 - w)];
    return Tensor(x.shape(), std::move(v));
}

} // namespace

TEST_CASE("mirrored input through the mirrored model flips the x coordinate") {
    PuckNetConfig cfg;
    PuckNetModel m = build(cfg, 11);
    PuckNetModel flipped = build(cfg, 11);
    mirror_model_weights(flipped);

    Rng rng(12);
    Tensor x = oracles::random_tensor(rng, {2, 3, 16, 16}, 0.0, 1.0, false);
    Tensor xm = mirror_images(x);

    auto out = forward(m, x, NetMode::Eval);
    auto out_m = forward(flipped, xm, NetMode::Eval);
    for (std::size_t n = 0; n < 2; ++n) {
        CHECK(out_m.logits.values()[n] == Catch::Approx(out.logits.values()[n]).margin(1e-9));
        CHECK(out_m.coords.values()[2 * n] ==
              Catch::Approx(400.0 - out.coords.values()[2 * n]).margin(1e-9));
        CHECK(out_m.coords.values()[2 * n + 1] ==
              Catch::Approx(out.coords.values()[2 * n + 1]).margin(1e-9));
    }
}

TEST_CASE("identical images in a batch give identical rows under eval batch norm") {
    PuckNetConfig cfg;
    PuckNetModel m = build(cfg, 13);
    Rng rng(14);
    Tensor one = oracles::random_tensor(rng, {1, 3, 16, 16}, 0.0, 1.0, false);
    std::vector<double> two(one.values());
    two.insert(two.end(), one.values().begin(), one.values().end());
    Tensor pair(Shape{2, 3, 16, 16}, std::move(two));
    auto out = forward(m, pair, NetMode::Eval);
    CHECK(out.logits.values()[0] == out.logits.values()[1]);
    CHECK(out.coords.values()[0] == out.coords.values()[2]);
    CHECK(out.coords.values()[1] == out.coords.values()[3]);
}

TEST_CASE("end-to-end loss-to-input gradient matches finite differences") {
    PuckNetConfig cfg;
    PuckNetModel m = build(cfg, 17);
    Rng rng(18);
    Tensor x = oracles::random_tensor(rng, {1, 3, 16, 16}, 0.0, 1.0, true);
    const std::vector<double> labels = {1.0};
    const std::vector<double> targets = {123.0, 210.0};

    auto loss_value = [&]() {
        auto out = forward(m, x, NetMode::Train);
        return combined_masked_loss(out.logits, labels, out.coords, targets).total.item();
    };

    auto out = forward(m, x, NetMode::Train);
    auto combined = combined_masked_loss(out.logits, labels, out.coords, targets);
    backward(combined.total);
    auto numeric = oracles::fd_gradient(x, loss_value);
    CHECK(oracles::grad_discrepancy(x.grad(), numeric) <= 1e-3);
}

TEST_CASE("model checkpoints round-trip bitwise and reproduce the forward pass") {
    PuckNetConfig cfg;
    cfg.down_channels = {8, 16};
    cfg.up_channels = {16, 8};
    PuckNetModel m = build(cfg, 19);
    // Move the running stats off their defaults so the round trip covers them.
    Rng rng(20);
    Tensor warm = oracles::random_tensor(rng, {2, 3, 8, 8}, 0.0, 1.0, false);
    forward(m, warm, NetMode::Train);

    const std::string path =
        (std::filesystem::temp_directory_path() / "pucknet_model_test.ckpt").string();
    save_model(path, m);
    PuckNetModel back = load_model(path);
    REQUIRE(back.params.size() == m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        const auto& av = m.params[i].second.values();
        const auto& bv = back.params[i].second.values();
        REQUIRE(av.size() == bv.size());
        for (std::size_t j = 0; j < av.size(); ++j) CHECK(av[j] == bv[j]);
    }
    Tensor probe = oracles::random_tensor(rng, {1, 3, 8, 8}, 0.0, 1.0, false);
    auto a = forward(m, probe, NetMode::Eval);
    auto b = forward(back, probe, NetMode::Eval);
    CHECK(a.logits.values()[0] == b.logits.values()[0]);
    CHECK(a.coords.values()[0] == b.coords.values()[0]);
    CHECK(a.coords.values()[1] == b.coords.values()[1]);
    std::filesystem::remove(path);
}
