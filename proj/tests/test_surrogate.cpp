// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "combforge/emoracle.hpp"
#include "combforge/errors.hpp"
#include "combforge/pixelgrid.hpp"
#include "combforge/rng.hpp"
#include "combforge/surrogate.hpp"

using namespace combforge;
using namespace combforge::surrogate;
using pixelgrid::PixelLayout;

namespace {

SurrogateArchitecture tiny_arch(double dropout = 0.0) {
    SurrogateArchitecture arch;
    arch.input_rows = 6;
    arch.input_cols = 6;
    arch.conv_layers = {{3, 4, kResidualNone}, {3, 4, kResidualInput}, {3, 4, 0}};
    arch.fc_layers = {{16, dropout}};
    arch.output_dim = 12;
    return arch;
}

std::vector<TrainingSample> tiny_batch(const SurrogateArchitecture& arch, int n,
                                       std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TrainingSample> batch;
    for (int i = 0; i < n; ++i) {
        TrainingSample s;
        s.layout = pixelgrid::random_layout(arch.input_rows, arch.input_cols, 0.5, 0.1, rng);
        for (int k = 0; k < arch.output_dim; ++k)
            s.target.push_back(rng.uniform(-0.9, 0.9));
        batch.push_back(std::move(s));
    }
    return batch;
}

}  // namespace

TEST_CASE("published architecture dimensions") {
    const SurrogateArchitecture arch = paper_architecture();
    CHECK(arch.input_rows == 15);
    CHECK(arch.input_cols == 15);
    REQUIRE(arch.conv_layers.size() == 12);
    const int sizes[] = {12, 12, 10, 10, 8, 8, 6, 6, 4, 4, 3, 3};
    for (int i = 0; i < 12; ++i) {
        CHECK(arch.conv_layers[i].filter_size == sizes[i]);
        CHECK(arch.conv_layers[i].n_filters == 32);
    }
    CHECK(arch.conv_layers[0].residual_source == kResidualNone);
    CHECK(arch.conv_layers[2].residual_source == kResidualInput);
    CHECK(arch.conv_layers[4].residual_source == 1);
    CHECK(arch.conv_layers[6].residual_source == 3);
    CHECK(arch.conv_layers[8].residual_source == 5);
    CHECK(arch.conv_layers[10].residual_source == 7);
    REQUIRE(arch.fc_layers.size() == 5);
    for (const FcLayerSpec& fc : arch.fc_layers) {
        CHECK(fc.n_neurons == 2048);
        CHECK(fc.dropout_rate == doctest::Approx(0.25));
    }
    CHECK(arch.output_dim == 78);
    CHECK(arch.flatten_dim() == 32 * 15 * 15);
    arch.validate();

    const SurrogateArchitecture desk = desk_architecture(8, 8, 13);
    CHECK(desk.input_rows == 8);
    CHECK(desk.output_dim == 78);
    desk.validate();
}

TEST_CASE("architecture validation rejects bad residual wiring") {
    SurrogateArchitecture arch = tiny_arch();
    arch.conv_layers[1].residual_source = 1;  // forward reference to itself
    CHECK_THROWS_AS(arch.validate(), std::invalid_argument);

    arch = tiny_arch();
    arch.conv_layers[2].residual_source = 5;
    CHECK_THROWS_AS(arch.validate(), std::invalid_argument);

    arch = tiny_arch();
    arch.conv_layers[0].n_filters = 8;  // source channels no longer match
    arch.conv_layers[2].residual_source = 0;
    CHECK_THROWS_AS(arch.validate(), std::invalid_argument);

    arch = tiny_arch();
    arch.fc_layers[0].dropout_rate = 1.0;
    CHECK_THROWS_AS(arch.validate(), std::invalid_argument);
}

TEST_CASE("initialization is seeded and bounded") {
    const SurrogateArchitecture arch = tiny_arch();
    const SurrogateModel a = init_model(arch, 5);
    const SurrogateModel b = init_model(arch, 5);
    const SurrogateModel c = init_model(arch, 6);

    const auto ta = trainable_tensors(a);
    const auto tb = trainable_tensors(b);
    const auto tc = trainable_tensors(c);
    REQUIRE(ta.size() == tb.size());
    bool all_same_seed = true, any_diff_seed = false;
    for (size_t i = 0; i < ta.size(); ++i) {
        if (ta[i]->data != tb[i]->data) all_same_seed = false;
        if (ta[i]->data != tc[i]->data) any_diff_seed = true;
    }
    CHECK(all_same_seed);
    CHECK(any_diff_seed);

    // first conv layer sees one input channel: fan_in = 9 for a 3x3 kernel
    const double bound = std::sqrt(6.0 / 9.0);
    double max_abs = 0.0;
    for (double w : a.conv[0].weight.data) max_abs = std::max(max_abs, std::abs(w));
    CHECK(max_abs <= bound);
    CHECK(max_abs > 0.1 * bound);

    for (double v : a.conv[0].bn_gamma.data) CHECK(v == 1.0);
    for (double v : a.conv[0].bn_running_var.data) CHECK(v == 1.0);
    for (double v : a.conv[0].bias.data) CHECK(v == 0.0);
}

TEST_CASE("tensor name list matches the parameter count") {
    const SurrogateArchitecture arch = tiny_arch();
    const std::vector<std::string> names = trainable_tensor_names(arch);
    SurrogateModel m = init_model(arch, 1);
    CHECK(names.size() == trainable_tensors(m).size());
    CHECK(names.size() == 4 * 3 + 2 * 1 + 2);
    CHECK(std::find(names.begin(), names.end(), "conv0.weight") != names.end());
    CHECK(std::find(names.begin(), names.end(), "fc0.bias") != names.end());
    CHECK(std::find(names.begin(), names.end(), "output.weight") != names.end());
}

TEST_CASE("inference is deterministic and bounded by the output squash") {
    const SurrogateModel m = init_model(tiny_arch(0.25), 3);
    Rng rng(1);
    const PixelLayout g = pixelgrid::random_layout(6, 6, 0.5, 0.1, rng);
    const std::vector<double> y1 = predict(m, g);
    const std::vector<double> y2 = predict(m, g);
    REQUIRE(y1.size() == 12);
    CHECK(y1 == y2);
    for (double v : y1) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("dropout only acts in training mode") {
    const SurrogateModel m = init_model(tiny_arch(0.5), 3);
    Rng rng(1);
    const PixelLayout g = pixelgrid::random_layout(6, 6, 0.5, 0.1, rng);

    Rng d1(10), d2(11);
    const std::vector<double> t1 = forward(m, g, Mode::Train, d1);
    const std::vector<double> t2 = forward(m, g, Mode::Train, d2);
    CHECK(t1 != t2);

    Rng d3(10), d4(11);
    CHECK(forward(m, g, Mode::Infer, d3) == forward(m, g, Mode::Infer, d4));
}

TEST_CASE("wrong grid size is rejected") {
    const SurrogateModel m = init_model(tiny_arch(), 3);
    Rng rng(1);
    const PixelLayout g = pixelgrid::random_layout(8, 8, 0.5, 0.1, rng);
    CHECK_THROWS_AS(predict(m, g), ShapeMismatch);
}

TEST_CASE("mean absolute error hand values") {
    CHECK(loss_mae({1.0, 2.0}, {1.0, 2.0}) == 0.0);
    CHECK(loss_mae({0.0, 0.0}, {1.0, -1.0}) == doctest::Approx(1.0));
    CHECK(loss_mae({0.5}, {-0.25}) == doctest::Approx(0.75));
    CHECK_THROWS_AS(loss_mae({1.0}, {1.0, 2.0}), LengthMismatch);
    CHECK_THROWS_AS(loss_mae({}, {}), LengthMismatch);
}

TEST_CASE("all-zero weights give zero output and zero gradients") {
    const SurrogateArchitecture arch = tiny_arch();
    SurrogateModel m = init_model(arch, 1);
    for (Tensor* t : trainable_tensors(m)) std::fill(t->data.begin(), t->data.end(), 0.0);

    Rng rng(1);
    const PixelLayout g = pixelgrid::random_layout(6, 6, 0.5, 0.1, rng);
    for (double v : predict(m, g)) CHECK(v == 0.0);

    std::vector<TrainingSample> batch(1);
    batch[0].layout = g;
    batch[0].target.assign(12, 0.0);
    Rng drop(1);
    const BatchResult res = backward(m, batch, drop);
    CHECK(res.loss == 0.0);
    for (const Tensor& t : res.grads)
        for (double v : t.data) CHECK(v == 0.0);
}

TEST_CASE("analytic gradients match finite differences") {
    const SurrogateArchitecture arch = tiny_arch();
    SurrogateModel m = init_model(arch, 7);
    const std::vector<TrainingSample> batch = tiny_batch(arch, 3, 11);

    Rng drop(1);
    const BatchResult res = backward(m, batch, drop);
    REQUIRE(res.loss > 0.0);

    auto loss_at = [&]() {
        Rng r(1);
        return backward(m, batch, r).loss;
    };

    const std::vector<Tensor*> params = trainable_tensors(m);
    REQUIRE(params.size() == res.grads.size());
    const double h = 1e-4;
    int checked = 0;
    for (size_t ti = 0; ti < params.size(); ++ti) {
        Tensor& t = *params[ti];
        const size_t stride = std::max<size_t>(1, t.data.size() / 12);
        for (size_t k = 0; k < t.data.size(); k += stride) {
            const double saved = t.data[k];
            t.data[k] = saved + h;
            const double lp = loss_at();
            t.data[k] = saved - h;
            const double lm = loss_at();
            t.data[k] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = res.grads[ti].data[k];
            CHECK(std::abs(fd - an) < 1e-6 + 1e-4 * std::max(std::abs(fd), std::abs(an)));
            ++checked;
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("duplicating the batch leaves loss and gradients unchanged") {
    const SurrogateArchitecture arch = tiny_arch();
    SurrogateModel m = init_model(arch, 9);
    std::vector<TrainingSample> one = tiny_batch(arch, 1, 13);
    std::vector<TrainingSample> two = {one[0], one[0]};

    Rng r1(1), r2(1);
    const BatchResult a = backward(m, one, r1);
    const BatchResult b = backward(m, two, r2);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    for (size_t i = 0; i < a.grads.size(); ++i)
        for (size_t k = 0; k < a.grads[i].data.size(); ++k)
            CHECK(a.grads[i].data[k] == doctest::Approx(b.grads[i].data[k]).epsilon(1e-12));
}

TEST_CASE("gradients are identical across worker counts") {
    const SurrogateArchitecture arch = tiny_arch();
    SurrogateModel m = init_model(arch, 15);
    const std::vector<TrainingSample> batch = tiny_batch(arch, 5, 17);
    Rng r1(1), r2(1);
    const BatchResult a = backward(m, batch, r1, 1);
    const BatchResult b = backward(m, batch, r2, 4);
    CHECK(a.loss == b.loss);
    for (size_t i = 0; i < a.grads.size(); ++i) CHECK(a.grads[i].data == b.grads[i].data);
}

TEST_CASE("learning rate follows the staircase schedule") {
    TrainConfig cfg;
    cfg.learning_rate = 0.001;
    cfg.lr_decay_factor = 0.93;
    cfg.lr_decay_every_epochs = 10;
    for (int e = 1; e <= 10; ++e) CHECK(learning_rate_at(cfg, e) == 0.001);
    CHECK(learning_rate_at(cfg, 11) == doctest::Approx(0.00093).epsilon(1e-12));
    CHECK(learning_rate_at(cfg, 20) == doctest::Approx(0.00093).epsilon(1e-12));
    CHECK(learning_rate_at(cfg, 25) == doctest::Approx(0.001 * 0.93 * 0.93).epsilon(1e-12));
    CHECK(learning_rate_at(cfg, 25) == doctest::Approx(8.649e-4).epsilon(1e-10));
    CHECK_THROWS_AS(learning_rate_at(cfg, 0), std::invalid_argument);
}

TEST_CASE("dropout mask statistics match the configured rate") {
    // a bare FC stack whose activations are pinned to 1 exposes each mask
    // draw through the output weight gradient: entry (j,k) is dy_j * mask_k
    const double rate = 0.25;
    SurrogateArchitecture arch;
    arch.input_rows = 3;
    arch.input_cols = 3;
    arch.fc_layers = {{1000, rate}};
    arch.output_dim = 4;
    SurrogateModel probe = init_model(arch, 3);
    std::fill(probe.fc[0].weight.data.begin(), probe.fc[0].weight.data.end(), 0.0);
    std::fill(probe.fc[0].bias.data.begin(), probe.fc[0].bias.data.end(), 1.0);

    std::vector<TrainingSample> batch(1);
    batch[0].layout = pixelgrid::make_layout(3, 3);
    batch[0].target.assign(4, 0.0);

    int dropped = 0, kept = 0;
    Rng drng(41);
    for (int rep = 0; rep < 10; ++rep) {
        const BatchResult res = backward(probe, batch, drng);
        const Tensor& dw_out = res.grads[res.grads.size() - 2];
        REQUIRE(dw_out.shape == std::vector<int>{4, 1000});
        for (int j = 0; j < 4; ++j) {
            double nonzero_mag = -1.0;
            for (int k = 0; k < 1000; ++k) {
                const double v = std::abs(dw_out.data[j * 1000 + k]);
                if (v == 0.0) {
                    ++dropped;
                } else {
                    ++kept;
                    // kept neurons all carry the same 1/(1-rate) scaling
                    if (nonzero_mag < 0.0)
                        nonzero_mag = v;
                    else
                        CHECK(v == doctest::Approx(nonzero_mag).epsilon(1e-12));
                }
            }
        }
    }
    const double drop_frac = static_cast<double>(dropped) / (dropped + kept);
    CHECK(drop_frac == doctest::Approx(rate).epsilon(0.08));
}

TEST_CASE("training shrinks the loss and is seed deterministic") {
    const SurrogateArchitecture arch = tiny_arch();
    const std::vector<TrainingSample> samples = tiny_batch(arch, 16, 23);

    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.003;
    cfg.rng_seed = 5;
    cfg.jobs = 2;

    SurrogateModel m1 = init_model(arch, 5);
    const TrainResult r1 = train(m1, samples, cfg);
    REQUIRE(r1.history.size() == 60);
    CHECK(r1.effective_batch_size == 8);
    CHECK(r1.history.back().train_mae < 0.5 * r1.history.front().train_mae);
    for (const EpochRow& row : r1.history) CHECK(std::isnan(row.val_mae));

    SurrogateModel m2 = init_model(arch, 5);
    const TrainResult r2 = train(m2, samples, cfg);
    for (size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].train_mae == r2.history[i].train_mae);
        CHECK(r1.history[i].lr == r2.history[i].lr);
    }
    const auto t1 = trainable_tensors(m1);
    const auto t2 = trainable_tensors(m2);
    for (size_t i = 0; i < t1.size(); ++i) CHECK(t1[i]->data == t2[i]->data);
}

TEST_CASE("validation split reports a held-out error") {
    const SurrogateArchitecture arch = tiny_arch();
    const std::vector<TrainingSample> samples = tiny_batch(arch, 20, 29);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.val_fraction = 0.25;
    SurrogateModel m = init_model(arch, 1);
    const TrainResult r = train(m, samples, cfg);
    CHECK(r.effective_batch_size == 8);
    for (const EpochRow& row : r.history) {
        CHECK_FALSE(std::isnan(row.val_mae));
        CHECK(row.val_mae > 0.0);
    }
}

TEST_CASE("oversized batch clamps to the training split") {
    const SurrogateArchitecture arch = tiny_arch();
    const std::vector<TrainingSample> samples = tiny_batch(arch, 10, 31);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 512;
    SurrogateModel m = init_model(arch, 1);
    const TrainResult r = train(m, samples, cfg);
    CHECK(r.effective_batch_size == 10);
}

TEST_CASE("zero epochs leaves the model untouched") {
    const SurrogateArchitecture arch = tiny_arch();
    const std::vector<TrainingSample> samples = tiny_batch(arch, 4, 37);
    TrainConfig cfg;
    cfg.epochs = 0;
    SurrogateModel m = init_model(arch, 8);
    const SurrogateModel before = m;
    const TrainResult r = train(m, samples, cfg);
    CHECK(r.history.empty());
    const auto ta = trainable_tensors(m);
    const auto tb = trainable_tensors(before);
    for (size_t i = 0; i < ta.size(); ++i) CHECK(ta[i]->data == tb[i]->data);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.val_fraction = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.epochs = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("model weights survive a file round-trip") {
    const SurrogateArchitecture arch = tiny_arch(0.25);
    SurrogateModel m = init_model(arch, 13);
    // move the running stats off their init values so they are covered too
    m.conv[0].bn_running_mean.data[0] = 0.25;
    m.conv[1].bn_running_var.data[2] = 3.5;

    const std::string path = "model_roundtrip.cfsm";
    save_model(m, path);
    const SurrogateModel back = load_model(path);
    std::remove(path.c_str());

    CHECK(back.arch.input_rows == arch.input_rows);
    REQUIRE(back.arch.conv_layers.size() == arch.conv_layers.size());
    CHECK(back.arch.conv_layers[1].residual_source == kResidualInput);
    CHECK(back.arch.fc_layers[0].dropout_rate == 0.25);

    const auto ta = trainable_tensors(m);
    const auto tb = trainable_tensors(back);
    REQUIRE(ta.size() == tb.size());
    for (size_t i = 0; i < ta.size(); ++i) CHECK(ta[i]->data == tb[i]->data);
    CHECK(back.conv[0].bn_running_mean.data[0] == 0.25);
    CHECK(back.conv[1].bn_running_var.data[2] == 3.5);

    Rng rng(1);
    const PixelLayout g = pixelgrid::random_layout(6, 6, 0.5, 0.1, rng);
    CHECK(predict(m, g) == predict(back, g));

    CHECK_THROWS_AS(load_model("no_such_model.cfsm"), IoFailure);
}

TEST_CASE("training samples can be rebuilt from dataset records") {
    emoracle::DatasetConfig cfg;
    cfg.n_samples = 2;
    cfg.rows = 9;
    cfg.cols = 9;
    const std::string path = "ds_samples.jsonl";
    emoracle::generate_dataset(cfg, path);
    const std::vector<emoracle::DatasetRecord> recs = emoracle::load_dataset(path);
    std::remove(path.c_str());
    const std::vector<TrainingSample> samples = samples_from_records(recs);
    REQUIRE(samples.size() == recs.size());
    CHECK(samples[0].layout.rows == 9);
    CHECK(samples[0].target.size() == 78);
    CHECK(samples[0].target == recs[0].s_params_real_imag_flat);
}

TEST_CASE("loss csv has one row per epoch") {
    std::vector<EpochRow> history = {{1, 0.001, 0.5, 0.6}, {2, 0.001, 0.4, 0.5}};
    const std::string path = "loss_test.csv";
    write_loss_csv(history, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,lr,train_mae,val_mae");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    in.close();
    std::remove(path.c_str());
    CHECK(rows == 2);
}
