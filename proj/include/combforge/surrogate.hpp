// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef COMBFORGE_SURROGATE_HPP
#define COMBFORGE_SURROGATE_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "combforge/emoracle.hpp"
#include "combforge/pixelgrid.hpp"
#include "combforge/rng.hpp"

namespace combforge::surrogate {

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct DivergedLoss : std::runtime_error {
    explicit DivergedLoss(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major tensor of doubles; the unit of parameter storage.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    bool operator==(const Tensor&) const = default;
};

// residual_source: kResidualNone = previous layer only, kResidualInput adds
// the 1-channel network input (broadcast over channels), >= 0 adds the output
// of that earlier conv layer.
inline constexpr int kResidualNone = -2;
inline constexpr int kResidualInput = -1;

struct ConvLayerSpec {
    int filter_size = 3;
    int n_filters = 32;
    int residual_source = kResidualNone;
    bool operator==(const ConvLayerSpec&) const = default;
};

struct FcLayerSpec {
    int n_neurons = 2048;
    double dropout_rate = 0.25;
    bool operator==(const FcLayerSpec&) const = default;
};

// Conv stack (each layer: conv, batch norm, leaky ReLU, stride 1, same
// zero-padding), flatten, FC stack (leaky ReLU + inverted dropout), and a
// final tanh layer of output_dim units.
struct SurrogateArchitecture {
    int input_rows = 15;
    int input_cols = 15;
    std::vector<ConvLayerSpec> conv_layers;
    std::vector<FcLayerSpec> fc_layers;
    int output_dim = 78;
    double leaky_slope = 0.01;

    void validate() const;
    int flatten_dim() const;
    bool operator==(const SurrogateArchitecture&) const = default;
};

// Full-size architecture: twelve 32-filter conv layers with staged residual
// connections, five 2048-unit FC layers with dropout 0.25, 78 tanh outputs.
SurrogateArchitecture paper_architecture();

// Reduced architecture for desk-scale runs and CI: four 8-filter conv layers
// (one input residual, one layer residual), two FC layers, 6*n_freqs outputs.
SurrogateArchitecture desk_architecture(int rows = 8, int cols = 8, int n_freqs = 13);

struct ConvLayerParams {
    Tensor weight;           // (C_out, C_in, k, k)
    Tensor bias;             // (C_out)
    Tensor bn_gamma;         // (C_out)
    Tensor bn_beta;          // (C_out)
    Tensor bn_running_mean;  // (C_out)
    Tensor bn_running_var;   // (C_out)
};

struct FcLayerParams {
    Tensor weight;  // (n_out, n_in)
    Tensor bias;    // (n_out)
};

struct SurrogateModel {
    SurrogateArchitecture arch;
    std::vector<ConvLayerParams> conv;
    std::vector<FcLayerParams> fc;
    FcLayerParams output;
};

// Kaiming-uniform weights U(+-sqrt(6/fan_in)), zero biases, identity batch
// norm (gamma 1, beta 0, running mean 0, running var 1).
SurrogateModel init_model(const SurrogateArchitecture& arch, std::uint64_t seed);

// Trainable parameters in a fixed traversal order (running stats excluded).
std::vector<Tensor*> trainable_tensors(SurrogateModel& model);
std::vector<const Tensor*> trainable_tensors(const SurrogateModel& model);
std::vector<std::string> trainable_tensor_names(const SurrogateArchitecture& arch);

enum class Mode { Train, Infer };

// Single-sample forward pass. Train mode uses batch statistics of this one
// sample and draws dropout masks from rng; Infer mode uses running statistics
// and no dropout. Running statistics are never modified here.
std::vector<double> forward(const SurrogateModel& model,
                            const pixelgrid::PixelLayout& layout, Mode mode, Rng& rng);

// Infer-mode forward; deterministic, safe to call concurrently on one model.
std::vector<double> predict(const SurrogateModel& model,
                            const pixelgrid::PixelLayout& layout);

double loss_mae(const std::vector<double>& pred, const std::vector<double>& target);

struct TrainingSample {
    pixelgrid::PixelLayout layout;
    std::vector<double> target;
};

using Gradients = std::vector<Tensor>;  // ordered as trainable_tensors

struct BatchResult {
    Gradients grads;
    double loss = 0.0;
};

// Train-mode forward over the batch plus reverse-mode gradients of the mean
// batch MAE for every trainable parameter. The absolute-error subgradient at
// zero residual is 0. Deterministic for a fixed rng state and any job count.
BatchResult backward(const SurrogateModel& model,
                     const std::vector<TrainingSample>& batch, Rng& rng, int jobs = 1);

struct TrainConfig {
    double learning_rate = 0.001;
    double lr_decay_factor = 0.93;
    int lr_decay_every_epochs = 10;
    int epochs = 300;
    int batch_size = 2790;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t rng_seed = 1;
    double val_fraction = 0.0;  // held-out tail of the pre-shuffled dataset
    int jobs = 0;               // 0 = all hardware threads

    void validate() const;
};

// Stepped schedule: learning_rate * lr_decay_factor^floor((epoch-1)/every)
// with 1-based epochs.
double learning_rate_at(const TrainConfig& cfg, int epoch);

struct EpochRow {
    int epoch;
    double lr;
    double train_mae;
    double val_mae;  // NaN when no validation split is configured
};

struct TrainResult {
    std::vector<EpochRow> history;
    int effective_batch_size = 0;  // batch_size clamped to the training split
};

// Adam training loop; epoch = one full shuffled pass. Batch statistics also
// update the batch-norm running stats (momentum 0.9). Throws DivergedLoss on
// a non-finite batch loss.
TrainResult train(SurrogateModel& model, const std::vector<TrainingSample>& samples,
                  const TrainConfig& cfg);

void write_loss_csv(const std::vector<EpochRow>& history, const std::string& path);

// Versioned binary container: architecture header plus named little-endian
// float64 tensors, so a file alone reconstructs the model.
void save_model(const SurrogateModel& model, const std::string& path);
SurrogateModel load_model(const std::string& path);

std::vector<TrainingSample> samples_from_records(
    const std::vector<emoracle::DatasetRecord>& records);

}  // namespace combforge::surrogate

#endif  // COMBFORGE_SURROGATE_HPP
