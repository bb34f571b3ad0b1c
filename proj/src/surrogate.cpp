// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "combforge/surrogate.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <utility>

#include "combforge/errors.hpp"
#include "combforge/parallel.hpp"

namespace combforge::surrogate {

namespace {
constexpr double kBnEpsilon = 1e-5;
constexpr double kBnMomentum = 0.9;  // running = momentum*running + (1-momentum)*batch
}  // namespace

Tensor Tensor::zeros(std::vector<int> shape) {
    std::int64_t total = 1;
    for (int d : shape) {
        if (d < 1) throw std::invalid_argument("tensor dimensions must be positive");
        total *= d;
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(static_cast<std::size_t>(total), 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
}

void SurrogateArchitecture::validate() const {
    if (input_rows < 1 || input_cols < 1)
        throw std::invalid_argument("input grid dimensions must be positive");
    if (output_dim < 1) throw std::invalid_argument("output dimension must be positive");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
        throw std::invalid_argument("leaky slope must lie in [0, 1)");
    for (std::size_t i = 0; i < conv_layers.size(); ++i) {
        const ConvLayerSpec& layer = conv_layers[i];
        if (layer.filter_size < 1) throw std::invalid_argument("filter size must be positive");
        if (layer.n_filters < 1) throw std::invalid_argument("filter count must be positive");
        if (layer.residual_source != kResidualNone) {
            if (layer.residual_source < kResidualInput ||
                layer.residual_source >= static_cast<int>(i))
                throw std::invalid_argument(
                    "residual source must be the input or a strictly earlier conv layer");
            if (layer.residual_source >= 0) {
                const int prev_channels = i == 0 ? 1 : conv_layers[i - 1].n_filters;
                if (conv_layers[static_cast<std::size_t>(layer.residual_source)].n_filters !=
                    prev_channels)
                    throw std::invalid_argument(
                        "residual source channel count must match the previous layer");
            }
        }
    }
    for (const FcLayerSpec& layer : fc_layers) {
        if (layer.n_neurons < 1) throw std::invalid_argument("neuron count must be positive");
        if (!(layer.dropout_rate >= 0.0 && layer.dropout_rate < 1.0))
            throw std::invalid_argument("dropout rate must lie in [0, 1)");
    }
}

int SurrogateArchitecture::flatten_dim() const {
    const int channels = conv_layers.empty() ? 1 : conv_layers.back().n_filters;
    return channels * input_rows * input_cols;
}

SurrogateArchitecture paper_architecture() {
    SurrogateArchitecture arch;
    arch.input_rows = 15;
    arch.input_cols = 15;
    arch.conv_layers = {
        {12, 32, kResidualNone}, {12, 32, kResidualNone}, {10, 32, kResidualInput},
        {10, 32, kResidualNone}, {8, 32, 1},              {8, 32, kResidualNone},
        {6, 32, 3},              {6, 32, kResidualNone},  {4, 32, 5},
        {4, 32, kResidualNone},  {3, 32, 7},              {3, 32, kResidualNone},
    };
    arch.fc_layers = {{2048, 0.25}, {2048, 0.25}, {2048, 0.25}, {2048, 0.25}, {2048, 0.25}};
    arch.output_dim = 78;
    arch.validate();
    return arch;
}

SurrogateArchitecture desk_architecture(int rows, int cols, int n_freqs) {
    SurrogateArchitecture arch;
    arch.input_rows = rows;
    arch.input_cols = cols;
    arch.conv_layers = {
        {5, 8, kResidualNone}, {3, 8, kResidualNone}, {3, 8, kResidualInput}, {3, 8, 1}};
    arch.fc_layers = {{256, 0.25}, {128, 0.25}};
    arch.output_dim = 6 * n_freqs;
    arch.validate();
    return arch;
}

namespace {

int conv_in_channels(const SurrogateArchitecture& arch, std::size_t layer) {
    return layer == 0 ? 1 : arch.conv_layers[layer - 1].n_filters;
}

Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    const double bound = std::sqrt(6.0 / fan_in);
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

SurrogateModel init_model(const SurrogateArchitecture& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(seed);
    SurrogateModel model;
    model.arch = arch;
    for (std::size_t i = 0; i < arch.conv_layers.size(); ++i) {
        const ConvLayerSpec& spec = arch.conv_layers[i];
        const int c_in = conv_in_channels(arch, i);
        const int k = spec.filter_size;
        ConvLayerParams p;
        p.weight = kaiming_uniform({spec.n_filters, c_in, k, k}, c_in * k * k, rng);
        p.bias = Tensor::zeros({spec.n_filters});
        p.bn_gamma = Tensor::full({spec.n_filters}, 1.0);
        p.bn_beta = Tensor::zeros({spec.n_filters});
        p.bn_running_mean = Tensor::zeros({spec.n_filters});
        p.bn_running_var = Tensor::full({spec.n_filters}, 1.0);
        model.conv.push_back(std::move(p));
    }
    int n_in = arch.flatten_dim();
    for (const FcLayerSpec& spec : arch.fc_layers) {
        FcLayerParams p;
        p.weight = kaiming_uniform({spec.n_neurons, n_in}, n_in, rng);
        p.bias = Tensor::zeros({spec.n_neurons});
        model.fc.push_back(std::move(p));
        n_in = spec.n_neurons;
    }
    model.output.weight = kaiming_uniform({arch.output_dim, n_in}, n_in, rng);
    model.output.bias = Tensor::zeros({arch.output_dim});
    return model;
}

std::vector<Tensor*> trainable_tensors(SurrogateModel& model) {
    std::vector<Tensor*> out;
    for (ConvLayerParams& p : model.conv) {
        out.push_back(&p.weight);
        out.push_back(&p.bias);
        out.push_back(&p.bn_gamma);
        out.push_back(&p.bn_beta);
    }
    for (FcLayerParams& p : model.fc) {
        out.push_back(&p.weight);
        out.push_back(&p.bias);
    }
    out.push_back(&model.output.weight);
    out.push_back(&model.output.bias);
    return out;
}

std::vector<const Tensor*> trainable_tensors(const SurrogateModel& model) {
    std::vector<const Tensor*> out;
    for (Tensor* t : trainable_tensors(const_cast<SurrogateModel&>(model))) out.push_back(t);
    return out;
}

std::vector<std::string> trainable_tensor_names(const SurrogateArchitecture& arch) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < arch.conv_layers.size(); ++i) {
        const std::string base = "conv" + std::to_string(i);
        names.push_back(base + ".weight");
        names.push_back(base + ".bias");
        names.push_back(base + ".bn_gamma");
        names.push_back(base + ".bn_beta");
    }
    for (std::size_t i = 0; i < arch.fc_layers.size(); ++i) {
        const std::string base = "fc" + std::to_string(i);
        names.push_back(base + ".weight");
        names.push_back(base + ".bias");
    }
    names.push_back("output.weight");
    names.push_back("output.bias");
    return names;
}

namespace {

struct ConvCache {
    std::vector<double> in;    // (n, C_in, H*W), residual already added
    std::vector<double> xhat;  // (n, C, H*W)
    std::vector<double> out;   // (n, C, H*W)
    std::vector<double> mean;  // (C), statistics used in this pass
    std::vector<double> var;   // (C)
};

struct FcCache {
    std::vector<double> in;    // (n, n_in)
    std::vector<double> act;   // (n, n_out), after leaky ReLU, before dropout
    std::vector<double> mask;  // inverted-dropout mask; empty = identity
    std::vector<double> out;   // (n, n_out), layer output
};

struct BatchCache {
    int n = 0;
    std::vector<double> input;  // (n, H*W)
    std::vector<ConvCache> conv;
    std::vector<FcCache> fc;
    std::vector<double> out_in;  // (n, n_last)
    std::vector<double> y;       // (n, output_dim)
};

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }

void conv_forward(const std::vector<double>& in, int n, int c_in, int rows, int cols,
                  const Tensor& weight, const Tensor& bias, int k, std::vector<double>& z,
                  int jobs) {
    const int hw = rows * cols;
    const int c_out = weight.shape[0];
    const int pad_lo = (k - 1) / 2;
    z.assign(static_cast<std::size_t>(n) * c_out * hw, 0.0);
    parallel_for(n, jobs, [&](std::int64_t ni) {
        const double* in_n = in.data() + static_cast<std::size_t>(ni) * c_in * hw;
        double* z_n = z.data() + static_cast<std::size_t>(ni) * c_out * hw;
        for (int co = 0; co < c_out; ++co) {
            const double* w_co =
                weight.data.data() + static_cast<std::size_t>(co) * c_in * k * k;
            double* z_co = z_n + static_cast<std::size_t>(co) * hw;
            const double b = bias.data[static_cast<std::size_t>(co)];
            for (int h = 0; h < rows; ++h) {
                for (int w = 0; w < cols; ++w) {
                    double acc = b;
                    for (int ci = 0; ci < c_in; ++ci) {
                        const double* in_c = in_n + static_cast<std::size_t>(ci) * hw;
                        const double* w_c = w_co + static_cast<std::size_t>(ci) * k * k;
                        for (int kr = 0; kr < k; ++kr) {
                            const int hh = h + kr - pad_lo;
                            if (hh < 0 || hh >= rows) continue;
                            for (int kc = 0; kc < k; ++kc) {
                                const int ww = w + kc - pad_lo;
                                if (ww < 0 || ww >= cols) continue;
                                acc += w_c[kr * k + kc] * in_c[hh * cols + ww];
                            }
                        }
                    }
                    z_co[h * cols + w] = acc;
                }
            }
        }
    });
}

// Fills the cache; cache.y holds the outputs. Never touches running stats.
void forward_batch(const SurrogateModel& model, std::vector<double> input, int n, Mode mode,
                   Rng& rng, BatchCache& cache, int jobs) {
    const SurrogateArchitecture& arch = model.arch;
    const int rows = arch.input_rows;
    const int cols = arch.input_cols;
    const int hw = rows * cols;
    cache.n = n;
    cache.input = std::move(input);
    cache.conv.assign(arch.conv_layers.size(), {});
    cache.fc.assign(arch.fc_layers.size(), {});

    const std::vector<double>* prev = &cache.input;
    for (std::size_t li = 0; li < arch.conv_layers.size(); ++li) {
        const ConvLayerSpec& spec = arch.conv_layers[li];
        const ConvLayerParams& params = model.conv[li];
        const int c_in = conv_in_channels(arch, li);
        const int c_out = spec.n_filters;
        ConvCache& cc = cache.conv[li];

        cc.in = *prev;
        if (spec.residual_source == kResidualInput) {
            parallel_for(n, jobs, [&](std::int64_t ni) {
                double* in_n = cc.in.data() + static_cast<std::size_t>(ni) * c_in * hw;
                const double* x0 = cache.input.data() + static_cast<std::size_t>(ni) * hw;
                for (int c = 0; c < c_in; ++c)
                    for (int i = 0; i < hw; ++i) in_n[c * hw + i] += x0[i];
            });
        } else if (spec.residual_source >= 0) {
            const std::vector<double>& src =
                cache.conv[static_cast<std::size_t>(spec.residual_source)].out;
            for (std::size_t i = 0; i < cc.in.size(); ++i) cc.in[i] += src[i];
        }

        std::vector<double> z;
        conv_forward(cc.in, n, c_in, rows, cols, params.weight, params.bias,
                     spec.filter_size, z, jobs);

        if (mode == Mode::Train) {
            cc.mean.assign(static_cast<std::size_t>(c_out), 0.0);
            cc.var.assign(static_cast<std::size_t>(c_out), 0.0);
            const double inv_m = 1.0 / (static_cast<double>(n) * hw);
            for (int co = 0; co < c_out; ++co) {
                double s = 0.0;
                for (int ni = 0; ni < n; ++ni) {
                    const double* z_c =
                        z.data() + (static_cast<std::size_t>(ni) * c_out + co) * hw;
                    for (int i = 0; i < hw; ++i) s += z_c[i];
                }
                const double mean = s * inv_m;
                double sq = 0.0;
                for (int ni = 0; ni < n; ++ni) {
                    const double* z_c =
                        z.data() + (static_cast<std::size_t>(ni) * c_out + co) * hw;
                    for (int i = 0; i < hw; ++i) {
                        const double d = z_c[i] - mean;
                        sq += d * d;
                    }
                }
                cc.mean[static_cast<std::size_t>(co)] = mean;
                cc.var[static_cast<std::size_t>(co)] = sq * inv_m;
            }
        } else {
            cc.mean = params.bn_running_mean.data;
            cc.var = params.bn_running_var.data;
        }

        cc.xhat.resize(z.size());
        cc.out.resize(z.size());
        parallel_for(n, jobs, [&](std::int64_t ni) {
            for (int co = 0; co < c_out; ++co) {
                const std::size_t base = (static_cast<std::size_t>(ni) * c_out + co) * hw;
                const double inv_std =
                    1.0 / std::sqrt(cc.var[static_cast<std::size_t>(co)] + kBnEpsilon);
                const double mean = cc.mean[static_cast<std::size_t>(co)];
                const double g = params.bn_gamma.data[static_cast<std::size_t>(co)];
                const double b = params.bn_beta.data[static_cast<std::size_t>(co)];
                for (int i = 0; i < hw; ++i) {
                    const double xh = (z[base + i] - mean) * inv_std;
                    cc.xhat[base + i] = xh;
                    cc.out[base + i] = leaky(g * xh + b, arch.leaky_slope);
                }
            }
        });
        prev = &cc.out;
    }

    // The flatten is a reinterpretation: (C, H, W) row-major == length C*H*W.
    const std::vector<double>* x = prev;
    int n_in = arch.flatten_dim();
    for (std::size_t fi = 0; fi < arch.fc_layers.size(); ++fi) {
        const FcLayerSpec& spec = arch.fc_layers[fi];
        const FcLayerParams& params = model.fc[fi];
        FcCache& fc = cache.fc[fi];
        const int n_out = spec.n_neurons;
        fc.in = *x;
        fc.act.assign(static_cast<std::size_t>(n) * n_out, 0.0);
        parallel_for(n, jobs, [&](std::int64_t ni) {
            const double* x_n = fc.in.data() + static_cast<std::size_t>(ni) * n_in;
            double* a_n = fc.act.data() + static_cast<std::size_t>(ni) * n_out;
            for (int o = 0; o < n_out; ++o) {
                const double* w_o =
                    params.weight.data.data() + static_cast<std::size_t>(o) * n_in;
                double acc = params.bias.data[static_cast<std::size_t>(o)];
                for (int i = 0; i < n_in; ++i) acc += w_o[i] * x_n[i];
                a_n[o] = leaky(acc, arch.leaky_slope);
            }
        });
        if (mode == Mode::Train && spec.dropout_rate > 0.0) {
            fc.mask.resize(fc.act.size());
            const double keep_scale = 1.0 / (1.0 - spec.dropout_rate);
            for (double& m : fc.mask) m = rng.bernoulli(spec.dropout_rate) ? 0.0 : keep_scale;
            fc.out.resize(fc.act.size());
            for (std::size_t i = 0; i < fc.out.size(); ++i) fc.out[i] = fc.act[i] * fc.mask[i];
        } else {
            fc.out = fc.act;
        }
        x = &fc.out;
        n_in = n_out;
    }

    cache.out_in = *x;
    cache.y.assign(static_cast<std::size_t>(n) * arch.output_dim, 0.0);
    parallel_for(n, jobs, [&](std::int64_t ni) {
        const double* x_n = cache.out_in.data() + static_cast<std::size_t>(ni) * n_in;
        double* y_n = cache.y.data() + static_cast<std::size_t>(ni) * arch.output_dim;
        for (int o = 0; o < arch.output_dim; ++o) {
            const double* w_o =
                model.output.weight.data.data() + static_cast<std::size_t>(o) * n_in;
            double acc = model.output.bias.data[static_cast<std::size_t>(o)];
            for (int i = 0; i < n_in; ++i) acc += w_o[i] * x_n[i];
            y_n[o] = std::tanh(acc);
        }
    });
}

std::vector<double> layout_to_input(const SurrogateArchitecture& arch,
                                    const pixelgrid::PixelLayout& layout) {
    if (layout.rows != arch.input_rows || layout.cols != arch.input_cols)
        throw ShapeMismatch("layout is " + std::to_string(layout.rows) + "x" +
                            std::to_string(layout.cols) + " but the network expects " +
                            std::to_string(arch.input_rows) + "x" +
                            std::to_string(arch.input_cols));
    std::vector<double> input(layout.cells.size());
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = layout.cells[i] ? 1.0 : 0.0;
    return input;
}

// dW and db for one conv layer, parallel over output channels so every
// accumulation order is fixed regardless of the job count.
void conv_backward(const std::vector<double>& in, const std::vector<double>& dz, int n,
                   int c_in, int rows, int cols, const Tensor& weight, Tensor& dw,
                   Tensor& db, std::vector<double>& din, int k, int jobs) {
    const int hw = rows * cols;
    const int c_out = weight.shape[0];
    const int pad_lo = (k - 1) / 2;
    dw = Tensor::zeros(weight.shape);
    db = Tensor::zeros({c_out});
    parallel_for(c_out, jobs, [&](std::int64_t co) {
        double* dw_co = dw.data.data() + static_cast<std::size_t>(co) * c_in * k * k;
        double bsum = 0.0;
        for (int ni = 0; ni < n; ++ni) {
            const double* in_n = in.data() + static_cast<std::size_t>(ni) * c_in * hw;
            const double* dz_c =
                dz.data() + (static_cast<std::size_t>(ni) * c_out + co) * hw;
            for (int h = 0; h < rows; ++h) {
                for (int w = 0; w < cols; ++w) {
                    const double g = dz_c[h * cols + w];
                    if (g == 0.0) continue;
                    bsum += g;
                    for (int ci = 0; ci < c_in; ++ci) {
                        const double* in_c = in_n + static_cast<std::size_t>(ci) * hw;
                        double* dw_c = dw_co + static_cast<std::size_t>(ci) * k * k;
                        for (int kr = 0; kr < k; ++kr) {
                            const int hh = h + kr - pad_lo;
                            if (hh < 0 || hh >= rows) continue;
                            for (int kc = 0; kc < k; ++kc) {
                                const int ww = w + kc - pad_lo;
                                if (ww < 0 || ww >= cols) continue;
                                dw_c[kr * k + kc] += g * in_c[hh * cols + ww];
                            }
                        }
                    }
                }
            }
        }
        db.data[static_cast<std::size_t>(co)] = bsum;
    });

    din.assign(in.size(), 0.0);
    parallel_for(n, jobs, [&](std::int64_t ni) {
        const double* dz_n = dz.data() + static_cast<std::size_t>(ni) * c_out * hw;
        double* din_n = din.data() + static_cast<std::size_t>(ni) * c_in * hw;
        for (int co = 0; co < c_out; ++co) {
            const double* w_co =
                weight.data.data() + static_cast<std::size_t>(co) * c_in * k * k;
            const double* dz_c = dz_n + static_cast<std::size_t>(co) * hw;
            for (int h = 0; h < rows; ++h) {
                for (int w = 0; w < cols; ++w) {
                    const double g = dz_c[h * cols + w];
                    if (g == 0.0) continue;
                    for (int ci = 0; ci < c_in; ++ci) {
                        double* din_c = din_n + static_cast<std::size_t>(ci) * hw;
                        const double* w_c = w_co + static_cast<std::size_t>(ci) * k * k;
                        for (int kr = 0; kr < k; ++kr) {
                            const int hh = h + kr - pad_lo;
                            if (hh < 0 || hh >= rows) continue;
                            for (int kc = 0; kc < k; ++kc) {
                                const int ww = w + kc - pad_lo;
                                if (ww < 0 || ww >= cols) continue;
                                din_c[hh * cols + ww] += g * w_c[kr * k + kc];
                            }
                        }
                    }
                }
            }
        }
    });
}

struct BackwardInternal {
    Gradients grads;
    double loss = 0.0;
    BatchCache cache;  // exposes the batch BN statistics for running updates
};

BackwardInternal backward_internal(const SurrogateModel& model,
                                   const std::vector<TrainingSample>& batch, Rng& rng,
                                   int jobs) {
    const SurrogateArchitecture& arch = model.arch;
    if (batch.empty()) throw std::invalid_argument("batch must not be empty");
    const int n = static_cast<int>(batch.size());
    const int hw = arch.input_rows * arch.input_cols;
    const int d_out = arch.output_dim;

    std::vector<double> input(static_cast<std::size_t>(n) * hw);
    for (int ni = 0; ni < n; ++ni) {
        const std::vector<double> one = layout_to_input(arch, batch[static_cast<std::size_t>(ni)].layout);
        std::copy(one.begin(), one.end(), input.begin() + static_cast<std::size_t>(ni) * hw);
        if (static_cast<int>(batch[static_cast<std::size_t>(ni)].target.size()) != d_out)
            throw ShapeMismatch("target has " +
                                std::to_string(batch[static_cast<std::size_t>(ni)].target.size()) +
                                " values but the network produces " + std::to_string(d_out));
    }

    BackwardInternal result;
    forward_batch(model, std::move(input), n, Mode::Train, rng, result.cache, jobs);
    BatchCache& cache = result.cache;

    const double inv_total = 1.0 / (static_cast<double>(n) * d_out);
    double loss = 0.0;
    std::vector<double> dy(static_cast<std::size_t>(n) * d_out);
    for (int ni = 0; ni < n; ++ni) {
        const std::vector<double>& target = batch[static_cast<std::size_t>(ni)].target;
        for (int o = 0; o < d_out; ++o) {
            const std::size_t at = static_cast<std::size_t>(ni) * d_out + o;
            const double r = cache.y[at] - target[static_cast<std::size_t>(o)];
            loss += std::abs(r);
            dy[at] = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) * inv_total;
        }
    }
    result.loss = loss * inv_total;

    // Gradient tensors in trainable_tensors order.
    std::vector<Tensor> conv_dw(arch.conv_layers.size());
    std::vector<Tensor> conv_db(arch.conv_layers.size());
    std::vector<Tensor> conv_dgamma(arch.conv_layers.size());
    std::vector<Tensor> conv_dbeta(arch.conv_layers.size());
    std::vector<Tensor> fc_dw(arch.fc_layers.size());
    std::vector<Tensor> fc_db(arch.fc_layers.size());

    // Output layer: y = tanh(W x + b).
    const int n_last = arch.fc_layers.empty() ? arch.flatten_dim()
                                              : arch.fc_layers.back().n_neurons;
    std::vector<double> dz_out(dy.size());
    for (std::size_t i = 0; i < dy.size(); ++i)
        dz_out[i] = dy[i] * (1.0 - cache.y[i] * cache.y[i]);

    Tensor out_dw = Tensor::zeros(model.output.weight.shape);
    Tensor out_db = Tensor::zeros({d_out});
    parallel_for(d_out, jobs, [&](std::int64_t o) {
        double* dw_o = out_dw.data.data() + static_cast<std::size_t>(o) * n_last;
        double bsum = 0.0;
        for (int ni = 0; ni < n; ++ni) {
            const double g = dz_out[static_cast<std::size_t>(ni) * d_out + o];
            if (g == 0.0) continue;
            bsum += g;
            const double* x_n = cache.out_in.data() + static_cast<std::size_t>(ni) * n_last;
            for (int i = 0; i < n_last; ++i) dw_o[i] += g * x_n[i];
        }
        out_db.data[static_cast<std::size_t>(o)] = bsum;
    });
    std::vector<double> d_cur(static_cast<std::size_t>(n) * n_last, 0.0);
    parallel_for(n, jobs, [&](std::int64_t ni) {
        const double* dz_n = dz_out.data() + static_cast<std::size_t>(ni) * d_out;
        double* d_n = d_cur.data() + static_cast<std::size_t>(ni) * n_last;
        for (int o = 0; o < d_out; ++o) {
            const double g = dz_n[o];
            if (g == 0.0) continue;
            const double* w_o =
                model.output.weight.data.data() + static_cast<std::size_t>(o) * n_last;
            for (int i = 0; i < n_last; ++i) d_n[i] += g * w_o[i];
        }
    });

    // FC stack in reverse.
    for (int fi = static_cast<int>(arch.fc_layers.size()) - 1; fi >= 0; --fi) {
        const FcLayerSpec& spec = arch.fc_layers[static_cast<std::size_t>(fi)];
        const FcLayerParams& params = model.fc[static_cast<std::size_t>(fi)];
        const FcCache& fc = cache.fc[static_cast<std::size_t>(fi)];
        const int n_out = spec.n_neurons;
        const int n_in = static_cast<int>(fc.in.size()) / n;

        std::vector<double> dz(static_cast<std::size_t>(n) * n_out);
        for (std::size_t i = 0; i < dz.size(); ++i) {
            double g = d_cur[i];
            if (!fc.mask.empty()) g *= fc.mask[i];
            dz[i] = g * (fc.act[i] > 0.0 ? 1.0 : arch.leaky_slope);
        }

        Tensor& dw = fc_dw[static_cast<std::size_t>(fi)];
        Tensor& db = fc_db[static_cast<std::size_t>(fi)];
        dw = Tensor::zeros(params.weight.shape);
        db = Tensor::zeros({n_out});
        parallel_for(n_out, jobs, [&](std::int64_t o) {
            double* dw_o = dw.data.data() + static_cast<std::size_t>(o) * n_in;
            double bsum = 0.0;
            for (int ni = 0; ni < n; ++ni) {
                const double g = dz[static_cast<std::size_t>(ni) * n_out + o];
                if (g == 0.0) continue;
                bsum += g;
                const double* x_n = fc.in.data() + static_cast<std::size_t>(ni) * n_in;
                for (int i = 0; i < n_in; ++i) dw_o[i] += g * x_n[i];
            }
            db.data[static_cast<std::size_t>(o)] = bsum;
        });

        std::vector<double> d_prev(static_cast<std::size_t>(n) * n_in, 0.0);
        parallel_for(n, jobs, [&](std::int64_t ni) {
            const double* dz_n = dz.data() + static_cast<std::size_t>(ni) * n_out;
            double* d_n = d_prev.data() + static_cast<std::size_t>(ni) * n_in;
            for (int o = 0; o < n_out; ++o) {
                const double g = dz_n[o];
                if (g == 0.0) continue;
                const double* w_o =
                    params.weight.data.data() + static_cast<std::size_t>(o) * n_in;
                for (int i = 0; i < n_in; ++i) d_n[i] += g * w_o[i];
            }
        });
        d_cur.swap(d_prev);
    }

    // Conv stack in reverse; d_out_acc[li] holds the gradient w.r.t. that
    // layer's post-activation output, fed by the next layer and by residual
    // consumers.
    std::vector<std::vector<double>> d_out_acc(arch.conv_layers.size());
    if (!arch.conv_layers.empty()) d_out_acc.back() = std::move(d_cur);
    for (int li = static_cast<int>(arch.conv_layers.size()) - 1; li >= 0; --li) {
        const ConvLayerSpec& spec = arch.conv_layers[static_cast<std::size_t>(li)];
        const ConvLayerParams& params = model.conv[static_cast<std::size_t>(li)];
        const ConvCache& cc = cache.conv[static_cast<std::size_t>(li)];
        const int c_in = conv_in_channels(arch, static_cast<std::size_t>(li));
        const int c_out = spec.n_filters;
        const std::vector<double>& d_out_li = d_out_acc[static_cast<std::size_t>(li)];

        // Through leaky ReLU and batch norm.
        std::vector<double> da(d_out_li.size());
        for (std::size_t i = 0; i < da.size(); ++i)
            da[i] = d_out_li[i] * (cc.out[i] > 0.0 ? 1.0 : arch.leaky_slope);

        Tensor& dgamma = conv_dgamma[static_cast<std::size_t>(li)];
        Tensor& dbeta = conv_dbeta[static_cast<std::size_t>(li)];
        dgamma = Tensor::zeros({c_out});
        dbeta = Tensor::zeros({c_out});
        std::vector<double> dz(da.size());
        const double m = static_cast<double>(n) * hw;
        parallel_for(c_out, jobs, [&](std::int64_t co) {
            double sum_da = 0.0;
            double sum_da_xhat = 0.0;
            for (int ni = 0; ni < n; ++ni) {
                const std::size_t base = (static_cast<std::size_t>(ni) * c_out + co) * hw;
                for (int i = 0; i < hw; ++i) {
                    sum_da += da[base + i];
                    sum_da_xhat += da[base + i] * cc.xhat[base + i];
                }
            }
            dgamma.data[static_cast<std::size_t>(co)] = sum_da_xhat;
            dbeta.data[static_cast<std::size_t>(co)] = sum_da;
            const double g = params.bn_gamma.data[static_cast<std::size_t>(co)];
            const double inv_std =
                1.0 / std::sqrt(cc.var[static_cast<std::size_t>(co)] + kBnEpsilon);
            const double mean_dxhat = g * sum_da / m;
            const double mean_dxhat_xhat = g * sum_da_xhat / m;
            for (int ni = 0; ni < n; ++ni) {
                const std::size_t base = (static_cast<std::size_t>(ni) * c_out + co) * hw;
                for (int i = 0; i < hw; ++i) {
                    const double dxhat = da[base + i] * g;
                    dz[base + i] =
                        inv_std * (dxhat - mean_dxhat - cc.xhat[base + i] * mean_dxhat_xhat);
                }
            }
        });

        std::vector<double> din;
        conv_backward(cc.in, dz, n, c_in, arch.input_rows, arch.input_cols, params.weight,
                      conv_dw[static_cast<std::size_t>(li)], conv_db[static_cast<std::size_t>(li)],
                      din, spec.filter_size, jobs);

        // Route the input gradient to the previous layer and residual source.
        if (li > 0) {
            std::vector<double>& d_prev = d_out_acc[static_cast<std::size_t>(li - 1)];
            if (d_prev.empty()) {
                d_prev = din;
            } else {
                for (std::size_t i = 0; i < din.size(); ++i) d_prev[i] += din[i];
            }
        }
        if (spec.residual_source >= 0) {
            std::vector<double>& d_src = d_out_acc[static_cast<std::size_t>(spec.residual_source)];
            if (d_src.empty()) {
                d_src = din;
            } else {
                for (std::size_t i = 0; i < din.size(); ++i) d_src[i] += din[i];
            }
        }
        // A kResidualInput source routes into the raw input, which has no
        // parameters upstream, so that branch of the gradient ends here.
    }

    result.grads.clear();
    for (std::size_t i = 0; i < arch.conv_layers.size(); ++i) {
        result.grads.push_back(std::move(conv_dw[i]));
        result.grads.push_back(std::move(conv_db[i]));
        result.grads.push_back(std::move(conv_dgamma[i]));
        result.grads.push_back(std::move(conv_dbeta[i]));
    }
    for (std::size_t i = 0; i < arch.fc_layers.size(); ++i) {
        result.grads.push_back(std::move(fc_dw[i]));
        result.grads.push_back(std::move(fc_db[i]));
    }
    result.grads.push_back(std::move(out_dw));
    result.grads.push_back(std::move(out_db));
    return result;
}

}  // namespace

std::vector<double> forward(const SurrogateModel& model, const pixelgrid::PixelLayout& layout,
                            Mode mode, Rng& rng) {
    BatchCache cache;
    forward_batch(model, layout_to_input(model.arch, layout), 1, mode, rng, cache, 1);
    return cache.y;
}

std::vector<double> predict(const SurrogateModel& model,
                            const pixelgrid::PixelLayout& layout) {
    Rng unused(1);
    BatchCache cache;
    forward_batch(model, layout_to_input(model.arch, layout), 1, Mode::Infer, unused, cache,
                  1);
    return cache.y;
}

double loss_mae(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size())
        throw LengthMismatch("prediction has " + std::to_string(pred.size()) +
                             " values, target has " + std::to_string(target.size()));
    if (pred.empty()) throw LengthMismatch("loss of empty vectors is undefined");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - target[i]);
    return sum / static_cast<double>(pred.size());
}

BatchResult backward(const SurrogateModel& model, const std::vector<TrainingSample>& batch,
                     Rng& rng, int jobs) {
    BackwardInternal internal = backward_internal(model, batch, rng, jobs);
    return {std::move(internal.grads), internal.loss};
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(lr_decay_factor > 0.0)) throw std::invalid_argument("decay factor must be positive");
    if (lr_decay_every_epochs < 1)
        throw std::invalid_argument("decay interval must be at least one epoch");
    if (epochs < 0) throw std::invalid_argument("epoch count must be non-negative");
    if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw std::invalid_argument("Adam betas must lie in [0, 1)");
    if (!(adam_epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("validation fraction must lie in [0, 1)");
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
    if (epoch < 1) throw std::invalid_argument("epochs are 1-based");
    const int steps = (epoch - 1) / cfg.lr_decay_every_epochs;
    return cfg.learning_rate * std::pow(cfg.lr_decay_factor, steps);
}

TrainResult train(SurrogateModel& model, const std::vector<TrainingSample>& samples,
                  const TrainConfig& cfg) {
    cfg.validate();
    model.arch.validate();
    if (samples.empty()) throw std::invalid_argument("training set must not be empty");
    const int jobs = resolve_jobs(cfg.jobs);

    Rng rng(cfg.rng_seed);
    std::vector<std::size_t> indices(samples.size());
    std::iota(indices.begin(), indices.end(), 0);
    rng.shuffle(indices);
    const int n_val = static_cast<int>(cfg.val_fraction * static_cast<double>(samples.size()));
    const int n_train = static_cast<int>(samples.size()) - n_val;
    if (n_train < 1) throw std::invalid_argument("validation split leaves no training data");
    std::vector<std::size_t> train_idx(indices.begin(), indices.begin() + n_train);
    const std::vector<std::size_t> val_idx(indices.begin() + n_train, indices.end());

    TrainResult result;
    result.effective_batch_size = std::min(cfg.batch_size, n_train);

    std::vector<Tensor*> params = trainable_tensors(model);
    std::vector<Tensor> adam_m;
    std::vector<Tensor> adam_v;
    adam_m.reserve(params.size());
    adam_v.reserve(params.size());
    for (const Tensor* t : params) {
        adam_m.push_back(Tensor::zeros(t->shape));
        adam_v.push_back(Tensor::zeros(t->shape));
    }
    std::int64_t step = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = learning_rate_at(cfg, epoch);
        rng.shuffle(train_idx);

        double loss_weighted = 0.0;
        for (int start = 0; start < n_train; start += result.effective_batch_size) {
            const int count = std::min(result.effective_batch_size, n_train - start);
            std::vector<TrainingSample> batch;
            batch.reserve(static_cast<std::size_t>(count));
            for (int i = 0; i < count; ++i)
                batch.push_back(samples[train_idx[static_cast<std::size_t>(start + i)]]);

            BackwardInternal bw = backward_internal(model, batch, rng, jobs);
            if (!std::isfinite(bw.loss))
                throw DivergedLoss("batch loss is not finite at epoch " +
                                   std::to_string(epoch));
            loss_weighted += bw.loss * count;

            for (std::size_t li = 0; li < model.conv.size(); ++li) {
                ConvLayerParams& p = model.conv[li];
                const ConvCache& cc = bw.cache.conv[li];
                for (std::size_t c = 0; c < p.bn_running_mean.data.size(); ++c) {
                    p.bn_running_mean.data[c] =
                        kBnMomentum * p.bn_running_mean.data[c] + (1.0 - kBnMomentum) * cc.mean[c];
                    p.bn_running_var.data[c] =
                        kBnMomentum * p.bn_running_var.data[c] + (1.0 - kBnMomentum) * cc.var[c];
                }
            }

            ++step;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            for (std::size_t pi = 0; pi < params.size(); ++pi) {
                Tensor& p = *params[pi];
                Tensor& m = adam_m[pi];
                Tensor& v = adam_v[pi];
                const Tensor& g = bw.grads[pi];
                for (std::size_t i = 0; i < p.data.size(); ++i) {
                    m.data[i] = cfg.adam_beta1 * m.data[i] + (1.0 - cfg.adam_beta1) * g.data[i];
                    v.data[i] =
                        cfg.adam_beta2 * v.data[i] + (1.0 - cfg.adam_beta2) * g.data[i] * g.data[i];
                    const double mhat = m.data[i] / bc1;
                    const double vhat = v.data[i] / bc2;
                    p.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
                }
            }
        }

        EpochRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_mae = loss_weighted / n_train;
        row.val_mae = std::numeric_limits<double>::quiet_NaN();
        if (!val_idx.empty()) {
            std::vector<double> per_sample(val_idx.size(), 0.0);
            parallel_for(static_cast<std::int64_t>(val_idx.size()), jobs, [&](std::int64_t i) {
                const TrainingSample& s = samples[val_idx[static_cast<std::size_t>(i)]];
                per_sample[static_cast<std::size_t>(i)] = loss_mae(predict(model, s.layout), s.target);
            });
            double sum = 0.0;
            for (double v : per_sample) sum += v;
            row.val_mae = sum / static_cast<double>(per_sample.size());
        }
        if (!std::isfinite(row.train_mae))
            throw DivergedLoss("epoch loss is not finite at epoch " + std::to_string(epoch));
        result.history.push_back(row);
    }
    return result;
}

void write_loss_csv(const std::vector<EpochRow>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open " + path + " for writing");
    out << "epoch,lr,train_mae,val_mae\n";
    char buf[160];
    for (const EpochRow& row : history) {
        std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,%.12g\n", row.epoch, row.lr,
                      row.train_mae, row.val_mae);
        out << buf;
    }
    if (!out) throw IoFailure("failed writing " + path);
}

namespace {

constexpr char kMagic[4] = {'C', 'F', 'S', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 4);
}

void write_i32(std::ostream& out, std::int32_t v) {
    write_u32(out, static_cast<std::uint32_t>(v));
}

void write_f64(std::ostream& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(bytes, 8);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) throw IoFailure("weights file truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    return v;
}

std::int32_t read_i32(std::istream& in) { return static_cast<std::int32_t>(read_u32(in)); }

double read_f64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw IoFailure("weights file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

void write_named_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data) write_f64(out, v);
}

Tensor read_named_tensor(std::istream& in, const std::string& expected_name) {
    const std::uint32_t name_len = read_u32(in);
    if (name_len > 4096) throw std::invalid_argument("weights file has an oversized name");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw IoFailure("weights file truncated");
    if (name != expected_name)
        throw std::invalid_argument("weights file tensor order mismatch: expected " +
                                    expected_name + ", found " + name);
    const std::uint32_t ndim = read_u32(in);
    if (ndim > 8) throw std::invalid_argument("weights file has an oversized tensor rank");
    std::vector<int> shape;
    std::int64_t total = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        const std::uint32_t d = read_u32(in);
        if (d < 1 || d > (1u << 28)) throw std::invalid_argument("bad tensor dimension");
        shape.push_back(static_cast<int>(d));
        total *= d;
        if (total > (1ll << 33)) throw std::invalid_argument("tensor too large");
    }
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data) v = read_f64(in);
    return t;
}

std::vector<std::pair<std::string, const Tensor*>> all_tensors(const SurrogateModel& model) {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (std::size_t i = 0; i < model.conv.size(); ++i) {
        const std::string base = "conv" + std::to_string(i);
        out.push_back({base + ".weight", &model.conv[i].weight});
        out.push_back({base + ".bias", &model.conv[i].bias});
        out.push_back({base + ".bn_gamma", &model.conv[i].bn_gamma});
        out.push_back({base + ".bn_beta", &model.conv[i].bn_beta});
        out.push_back({base + ".bn_running_mean", &model.conv[i].bn_running_mean});
        out.push_back({base + ".bn_running_var", &model.conv[i].bn_running_var});
    }
    for (std::size_t i = 0; i < model.fc.size(); ++i) {
        const std::string base = "fc" + std::to_string(i);
        out.push_back({base + ".weight", &model.fc[i].weight});
        out.push_back({base + ".bias", &model.fc[i].bias});
    }
    out.push_back({"output.weight", &model.output.weight});
    out.push_back({"output.bias", &model.output.bias});
    return out;
}

}  // namespace

void save_model(const SurrogateModel& model, const std::string& path) {
    model.arch.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot open " + path + " for writing");
    out.write(kMagic, 4);
    write_u32(out, kFormatVersion);
    write_u32(out, static_cast<std::uint32_t>(model.arch.input_rows));
    write_u32(out, static_cast<std::uint32_t>(model.arch.input_cols));
    write_u32(out, static_cast<std::uint32_t>(model.arch.conv_layers.size()));
    for (const ConvLayerSpec& spec : model.arch.conv_layers) {
        write_u32(out, static_cast<std::uint32_t>(spec.filter_size));
        write_u32(out, static_cast<std::uint32_t>(spec.n_filters));
        write_i32(out, spec.residual_source);
    }
    write_u32(out, static_cast<std::uint32_t>(model.arch.fc_layers.size()));
    for (const FcLayerSpec& spec : model.arch.fc_layers) {
        write_u32(out, static_cast<std::uint32_t>(spec.n_neurons));
        write_f64(out, spec.dropout_rate);
    }
    write_u32(out, static_cast<std::uint32_t>(model.arch.output_dim));
    write_f64(out, model.arch.leaky_slope);

    const auto tensors = all_tensors(model);
    write_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) write_named_tensor(out, name, *tensor);
    out.flush();
    if (!out) throw IoFailure("failed writing " + path);
}

SurrogateModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path + " for reading");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::invalid_argument(path + " is not a surrogate weights file");
    const std::uint32_t version = read_u32(in);
    if (version != kFormatVersion)
        throw std::invalid_argument("unsupported weights file version " +
                                    std::to_string(version));

    SurrogateArchitecture arch;
    arch.input_rows = static_cast<int>(read_u32(in));
    arch.input_cols = static_cast<int>(read_u32(in));
    const std::uint32_t n_conv = read_u32(in);
    if (n_conv > 1024) throw std::invalid_argument("implausible conv layer count");
    for (std::uint32_t i = 0; i < n_conv; ++i) {
        ConvLayerSpec spec;
        spec.filter_size = static_cast<int>(read_u32(in));
        spec.n_filters = static_cast<int>(read_u32(in));
        spec.residual_source = read_i32(in);
        arch.conv_layers.push_back(spec);
    }
    const std::uint32_t n_fc = read_u32(in);
    if (n_fc > 1024) throw std::invalid_argument("implausible FC layer count");
    for (std::uint32_t i = 0; i < n_fc; ++i) {
        FcLayerSpec spec;
        spec.n_neurons = static_cast<int>(read_u32(in));
        spec.dropout_rate = read_f64(in);
        arch.fc_layers.push_back(spec);
    }
    arch.output_dim = static_cast<int>(read_u32(in));
    arch.leaky_slope = read_f64(in);
    arch.validate();

    SurrogateModel model = init_model(arch, 1);
    const auto tensors = all_tensors(model);
    const std::uint32_t n_tensors = read_u32(in);
    if (n_tensors != tensors.size())
        throw std::invalid_argument("weights file has " + std::to_string(n_tensors) +
                                    " tensors, architecture requires " +
                                    std::to_string(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        Tensor loaded = read_named_tensor(in, name);
        if (loaded.shape != tensor->shape)
            throw std::invalid_argument("tensor " + name +
                                        " has a shape inconsistent with the architecture");
        const_cast<Tensor*>(tensor)->data = std::move(loaded.data);
    }
    return model;
}

std::vector<TrainingSample> samples_from_records(
    const std::vector<emoracle::DatasetRecord>& records) {
    std::vector<TrainingSample> samples;
    samples.reserve(records.size());
    for (const emoracle::DatasetRecord& record : records) {
        TrainingSample s;
        s.layout = pixelgrid::from_text(record.layout_text);
        s.target = record.s_params_real_imag_flat;
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace combforge::surrogate
