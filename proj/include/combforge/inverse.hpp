// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef COMBFORGE_INVERSE_HPP
#define COMBFORGE_INVERSE_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "combforge/emoracle.hpp"
#include "combforge/pixelgrid.hpp"
#include "combforge/response.hpp"
#include "combforge/rng.hpp"
#include "combforge/surrogate.hpp"

namespace combforge::inverse {

struct GridMismatch : std::runtime_error {
    explicit GridMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct DimMismatch : std::runtime_error {
    explicit DimMismatch(const std::string& what) : std::runtime_error(what) {}
};

// An evaluator threw while scoring one individual; carries where.
struct EvaluatorFailure : std::runtime_error {
    EvaluatorFailure(int generation_, int individual_, const std::string& what)
        : std::runtime_error("evaluator failed at generation " + std::to_string(generation_) +
                             ", individual " + std::to_string(individual_) + ": " + what),
          generation(generation_),
          individual(individual_) {}
    int generation;
    int individual;
};

// Where the target numbers came from; informational, carried through files.
struct TargetProvenance {
    double theta_rad = 0.0;
    double alpha = 1.0;       // magnitude of the current-scaling ratio
    double gamma_b_db = 0.0;
    double r_opt = 50.0;
    double z_ref = 50.0;

    bool operator==(const TargetProvenance&) const = default;
};

// The search objective: desired combiner S11/S12/S22 over a frequency grid.
struct CombinerTarget {
    std::vector<double> freqs_hz;
    std::vector<netalg::cxd> s11;
    std::vector<netalg::cxd> s12;
    std::vector<netalg::cxd> s22;
    TargetProvenance provenance;

    std::size_t n_freqs() const { return freqs_hz.size(); }

    // Lengths must match; frequencies strictly increasing; every magnitude
    // at most 1 + 1e-6 (a passive network cannot do better).
    void validate() const;

    bool operator==(const CombinerTarget&) const = default;
};

CombinerTarget target_from_triple(const response::TwoPortTriple& triple,
                                  const TargetProvenance& provenance);
response::TwoPortTriple triple_from_target(const CombinerTarget& target);

nlohmann::json to_json(const CombinerTarget& target);
CombinerTarget target_from_json(const nlohmann::json& j);
void save_target(const CombinerTarget& target, const std::string& path);
CombinerTarget load_target(const std::string& path);

struct GaConfig {
    int population = 4000;
    int max_iters = 240;
    int elite_count = 10;
    double random_injection_max_fraction = 0.30;
    int tournament_size = 3;
    double mutation_rate_min = 0.01;
    double mutation_rate_max = 0.10;
    double epsilon = 1e-5;
    std::optional<double> fitness_target;
    std::uint64_t rng_seed = 1;

    // Genome geometry and the density prior for random individuals.
    int rows = 15;
    int cols = 15;
    double density_mean = 0.50;
    double density_std = 0.15;

    void validate() const;
};

nlohmann::json to_json(const GaConfig& cfg);
GaConfig ga_config_from_json(const nlohmann::json& j);

struct Fitness {
    double f;  // 1 / (e + epsilon)
    double e;  // max of the summed real-part and imaginary-part deviations
};

// e = max( sum |Re(pred) - Re(target)|, sum |Im(pred) - Im(target)| ), the
// sums running over all three parameters at every frequency point.
Fitness fitness(const response::TwoPortTriple& pred, const CombinerTarget& target,
                double epsilon = 1e-5);

// Scores one candidate layout. Must be defined for every connected layout and
// safe to call concurrently from several threads.
using Evaluator = std::function<response::TwoPortTriple(const pixelgrid::PixelLayout&)>;

// Single row cut r drawn uniformly from {1..rows-1}: rows [0, r) come from a,
// rows [r, rows) from b, port cells forced back to metal.
pixelgrid::PixelLayout crossover(const pixelgrid::PixelLayout& a,
                                 const pixelgrid::PixelLayout& b, Rng& rng);

// Toggle the listed cells (row-major indices). Applying the same list twice
// restores the layout.
void flip_cells(pixelgrid::PixelLayout& layout, const std::vector<int>& cell_indices);

// Draw rate ~ Uniform[rate_min, rate_max], flip ceil(rate * cells) distinct
// uniformly chosen cells, then force port cells back to metal.
pixelgrid::PixelLayout mutate(const pixelgrid::PixelLayout& layout, Rng& rng,
                              double rate_min, double rate_max);

// Rejection-sample random layouts until all four ports are connected.
pixelgrid::PixelLayout random_connected_layout(int rows, int cols, double density_mean,
                                               double density_std, Rng& rng);

struct GenerationRow {
    int generation = 0;
    double best_f = 0.0;           // best fitness seen so far
    double best_e = 0.0;
    double mean_f = 0.0;           // population mean this generation
    double injected_fraction = 0.0;  // fresh random share of this generation
};

struct EvolveOptions {
    int jobs = 0;  // evaluation workers; 0 = all hardware threads
    std::string checkpoint_path;  // empty disables checkpointing
    int checkpoint_every = 0;     // generations between checkpoints; 0 disables
    std::string resume_from;      // checkpoint file to restore before running
    std::function<void(const GenerationRow&)> on_generation;
};

struct EvolveResult {
    pixelgrid::PixelLayout best_layout;
    double best_fitness = 0.0;
    double best_error = std::numeric_limits<double>::infinity();
    std::vector<GenerationRow> history;
    bool target_reached = false;
};

// Generational GA: evaluate everyone, carry the elite unchanged, inject a
// linearly decaying share of fresh random layouts, fill the rest by
// tournament selection, row crossover and mutation. Offspring whose ports
// end up disconnected are re-mutated a few times, then replaced by fresh
// random connected layouts. Selection and variation consume the RNG serially
// in a fixed order, so results do not depend on the evaluation job count.
EvolveResult evolve(const CombinerTarget& target, const Evaluator& evaluator,
                    const GaConfig& cfg, const EvolveOptions& opts = {});

void write_history_csv(const std::vector<GenerationRow>& history, const std::string& path);

// Scores layouts by quasi-static simulation followed by the combiner 2-port
// reduction. Exact but slow; the verification path.
Evaluator make_oracle_evaluator(const emoracle::OracleParams& params,
                                std::vector<double> freqs_hz);

// Scores layouts with the trained network. The model is copied into the
// evaluator once, so the evaluator owns everything it needs.
Evaluator make_surrogate_evaluator(surrogate::SurrogateModel model,
                                   std::vector<double> freqs_hz);

// Side-by-side scoring of one candidate: the evaluator's prediction next to a
// fresh quasi-static simulation, both measured against the target.
struct VerificationReport {
    pixelgrid::PixelLayout layout;
    response::TwoPortTriple predicted;
    response::TwoPortTriple simulated;
    double predicted_f = 0.0;
    double predicted_e = 0.0;
    double simulated_f = 0.0;
    double simulated_e = 0.0;
    double mean_abs_deviation = 0.0;  // |pred - sim| averaged over all real components
};

VerificationReport verify_candidate(const pixelgrid::PixelLayout& layout,
                                    const CombinerTarget& target, const Evaluator& evaluator,
                                    const emoracle::OracleParams& oracle_params,
                                    double epsilon = 1e-5);

// One row per (frequency, parameter): predicted and simulated real/imaginary
// parts, ready for overlay plotting.
void write_overlay_csv(const VerificationReport& report, const std::string& path);

}  // namespace combforge::inverse

#endif  // COMBFORGE_INVERSE_HPP
