// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "combforge/inverse.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <utility>

#include "combforge/errors.hpp"
#include "combforge/parallel.hpp"

namespace combforge::inverse {

namespace {
constexpr double kPassiveTol = 1e-6;
constexpr double kFreqMatchTol = 1e-6;       // relative
constexpr int kMutationAttempts = 5;         // before falling back to a fresh layout
constexpr const char* kCheckpointFormat = "combforge-ga-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

void CombinerTarget::validate() const {
    if (freqs_hz.empty()) throw std::invalid_argument("CombinerTarget: frequency grid is empty");
    for (std::size_t i = 1; i < freqs_hz.size(); ++i)
        if (!(freqs_hz[i] > freqs_hz[i - 1]))
            throw std::invalid_argument("CombinerTarget: frequencies must be strictly increasing");
    if (s11.size() != freqs_hz.size() || s12.size() != freqs_hz.size() ||
        s22.size() != freqs_hz.size())
        throw std::invalid_argument("CombinerTarget: parameter vectors must match the frequency grid");
    for (const std::vector<netalg::cxd>* v : {&s11, &s12, &s22})
        for (const netalg::cxd& s : *v)
            if (std::abs(s) > 1.0 + kPassiveTol)
                throw std::invalid_argument("CombinerTarget: magnitude exceeds the passive bound");
}

CombinerTarget target_from_triple(const response::TwoPortTriple& triple,
                                  const TargetProvenance& provenance) {
    CombinerTarget target;
    target.freqs_hz = triple.freqs_hz;
    target.s11 = triple.s11;
    target.s12 = triple.s12;
    target.s22 = triple.s22;
    target.provenance = provenance;
    target.validate();
    return target;
}

response::TwoPortTriple triple_from_target(const CombinerTarget& target) {
    return {target.freqs_hz, target.s11, target.s12, target.s22};
}

namespace {

nlohmann::json complex_array(const std::vector<netalg::cxd>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const netalg::cxd& s : v) a.push_back({s.real(), s.imag()});
    return a;
}

std::vector<netalg::cxd> complex_from_json(const nlohmann::json& a, const char* name) {
    if (!a.is_array())
        throw std::invalid_argument(std::string("target_from_json: ") + name +
                                    " must be an array of [re, im] pairs");
    std::vector<netalg::cxd> v;
    v.reserve(a.size());
    for (const nlohmann::json& pair : a) {
        if (!pair.is_array() || pair.size() != 2)
            throw std::invalid_argument(std::string("target_from_json: ") + name +
                                        " entries must be [re, im] pairs");
        v.emplace_back(pair[0].get<double>(), pair[1].get<double>());
    }
    return v;
}

}  // namespace

nlohmann::json to_json(const CombinerTarget& target) {
    nlohmann::json j;
    j["freqs_hz"] = target.freqs_hz;
    j["s11"] = complex_array(target.s11);
    j["s12"] = complex_array(target.s12);
    j["s22"] = complex_array(target.s22);
    j["provenance"] = {{"theta_rad", target.provenance.theta_rad},
                       {"alpha", target.provenance.alpha},
                       {"gamma_b_db", target.provenance.gamma_b_db},
                       {"r_opt", target.provenance.r_opt},
                       {"z_ref", target.provenance.z_ref}};
    return j;
}

CombinerTarget target_from_json(const nlohmann::json& j) {
    CombinerTarget target;
    try {
        target.freqs_hz = j.at("freqs_hz").get<std::vector<double>>();
        target.s11 = complex_from_json(j.at("s11"), "s11");
        target.s12 = complex_from_json(j.at("s12"), "s12");
        target.s22 = complex_from_json(j.at("s22"), "s22");
        if (j.contains("provenance")) {
            const nlohmann::json& p = j.at("provenance");
            target.provenance.theta_rad = p.value("theta_rad", 0.0);
            target.provenance.alpha = p.value("alpha", 1.0);
            target.provenance.gamma_b_db = p.value("gamma_b_db", 0.0);
            target.provenance.r_opt = p.value("r_opt", 50.0);
            target.provenance.z_ref = p.value("z_ref", 50.0);
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("target_from_json: ") + e.what());
    }
    target.validate();
    return target;
}

void save_target(const CombinerTarget& target, const std::string& path) {
    target.validate();
    std::ofstream out(path);
    if (!out) throw IoFailure("save_target: cannot open " + path + " for writing");
    out << to_json(target).dump(2) << '\n';
    if (!out) throw IoFailure("save_target: write failed for " + path);
}

CombinerTarget load_target(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("load_target: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("load_target: invalid JSON in " + path + ": " + e.what());
    }
    return target_from_json(j);
}

void GaConfig::validate() const {
    if (population < 2) throw std::invalid_argument("GaConfig: population must be at least 2");
    if (max_iters < 1) throw std::invalid_argument("GaConfig: max_iters must be positive");
    if (elite_count < 0 || elite_count >= population)
        throw std::invalid_argument("GaConfig: elite_count must lie in [0, population)");
    if (!(random_injection_max_fraction >= 0.0 && random_injection_max_fraction <= 1.0))
        throw std::invalid_argument("GaConfig: injection fraction must lie in [0, 1]");
    if (tournament_size < 1)
        throw std::invalid_argument("GaConfig: tournament_size must be positive");
    if (!(mutation_rate_min > 0.0 && mutation_rate_max < 1.0 &&
          mutation_rate_min <= mutation_rate_max))
        throw std::invalid_argument("GaConfig: mutation rate range must lie inside (0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("GaConfig: epsilon must be positive");
    if (fitness_target && !(*fitness_target > 0.0))
        throw std::invalid_argument("GaConfig: fitness_target must be positive");
    if (rows < 3 || cols < 3)
        throw std::invalid_argument("GaConfig: grid must be at least 3x3");
    if (!(density_mean > 0.0 && density_mean < 1.0))
        throw std::invalid_argument("GaConfig: density_mean must lie in (0, 1)");
    if (!(density_std >= 0.0)) throw std::invalid_argument("GaConfig: density_std must be >= 0");
}

nlohmann::json to_json(const GaConfig& cfg) {
    nlohmann::json j;
    j["population"] = cfg.population;
    j["max_iters"] = cfg.max_iters;
    j["elite_count"] = cfg.elite_count;
    j["random_injection_max_fraction"] = cfg.random_injection_max_fraction;
    j["tournament_size"] = cfg.tournament_size;
    j["mutation_rate_min"] = cfg.mutation_rate_min;
    j["mutation_rate_max"] = cfg.mutation_rate_max;
    j["epsilon"] = cfg.epsilon;
    if (cfg.fitness_target)
        j["fitness_target"] = *cfg.fitness_target;
    else
        j["fitness_target"] = nullptr;
    j["rng_seed"] = cfg.rng_seed;
    j["rows"] = cfg.rows;
    j["cols"] = cfg.cols;
    j["density_mean"] = cfg.density_mean;
    j["density_std"] = cfg.density_std;
    return j;
}

GaConfig ga_config_from_json(const nlohmann::json& j) {
    GaConfig cfg;
    try {
        cfg.population = j.value("population", cfg.population);
        cfg.max_iters = j.value("max_iters", cfg.max_iters);
        cfg.elite_count = j.value("elite_count", cfg.elite_count);
        cfg.random_injection_max_fraction =
            j.value("random_injection_max_fraction", cfg.random_injection_max_fraction);
        cfg.tournament_size = j.value("tournament_size", cfg.tournament_size);
        cfg.mutation_rate_min = j.value("mutation_rate_min", cfg.mutation_rate_min);
        cfg.mutation_rate_max = j.value("mutation_rate_max", cfg.mutation_rate_max);
        cfg.epsilon = j.value("epsilon", cfg.epsilon);
        if (j.contains("fitness_target") && !j.at("fitness_target").is_null())
            cfg.fitness_target = j.at("fitness_target").get<double>();
        cfg.rng_seed = j.value("rng_seed", cfg.rng_seed);
        cfg.rows = j.value("rows", cfg.rows);
        cfg.cols = j.value("cols", cfg.cols);
        cfg.density_mean = j.value("density_mean", cfg.density_mean);
        cfg.density_std = j.value("density_std", cfg.density_std);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("ga_config_from_json: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

Fitness fitness(const response::TwoPortTriple& pred, const CombinerTarget& target,
                double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("fitness: epsilon must be positive");
    const std::size_t n = target.freqs_hz.size();
    if (pred.n_freqs() != n || pred.s11.size() != n || pred.s12.size() != n ||
        pred.s22.size() != n)
        throw GridMismatch("fitness: prediction and target cover different frequency grids");
    for (std::size_t i = 0; i < n; ++i) {
        const double scale = std::max(1.0, std::abs(target.freqs_hz[i]));
        if (std::abs(pred.freqs_hz[i] - target.freqs_hz[i]) > kFreqMatchTol * scale)
            throw GridMismatch("fitness: prediction and target cover different frequency grids");
    }
    double sum_re = 0.0;
    double sum_im = 0.0;
    const std::array<const std::vector<netalg::cxd>*, 3> preds = {&pred.s11, &pred.s12,
                                                                  &pred.s22};
    const std::array<const std::vector<netalg::cxd>*, 3> targets = {&target.s11, &target.s12,
                                                                    &target.s22};
    for (std::size_t p = 0; p < 3; ++p) {
        for (std::size_t i = 0; i < n; ++i) {
            const netalg::cxd d = (*preds[p])[i] - (*targets[p])[i];
            sum_re += std::abs(d.real());
            sum_im += std::abs(d.imag());
        }
    }
    const double e = std::max(sum_re, sum_im);
    return {1.0 / (e + epsilon), e};
}

pixelgrid::PixelLayout crossover(const pixelgrid::PixelLayout& a,
                                 const pixelgrid::PixelLayout& b, Rng& rng) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw DimMismatch("crossover: parents have different grid dimensions");
    const int cut = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(a.rows - 1)));
    pixelgrid::PixelLayout out = a;
    for (int r = cut; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) out.set(r, c, b.metal(r, c));
    pixelgrid::force_ports_metal(out);
    return out;
}

void flip_cells(pixelgrid::PixelLayout& layout, const std::vector<int>& cell_indices) {
    const int n_cells = layout.rows * layout.cols;
    for (int idx : cell_indices) {
        if (idx < 0 || idx >= n_cells)
            throw std::out_of_range("flip_cells: cell index out of range");
        layout.cells[static_cast<std::size_t>(idx)] =
            layout.cells[static_cast<std::size_t>(idx)] ? 0 : 1;
    }
}

pixelgrid::PixelLayout mutate(const pixelgrid::PixelLayout& layout, Rng& rng, double rate_min,
                              double rate_max) {
    if (!(rate_min > 0.0 && rate_max < 1.0 && rate_min <= rate_max))
        throw std::invalid_argument("mutate: rate range must lie inside (0, 1)");
    const double rate = rng.uniform(rate_min, rate_max);
    const int n_cells = layout.rows * layout.cols;
    const int n_flip = static_cast<int>(std::ceil(rate * n_cells));
    std::vector<int> cells(static_cast<std::size_t>(n_cells));
    std::iota(cells.begin(), cells.end(), 0);
    rng.shuffle(cells);
    cells.resize(static_cast<std::size_t>(n_flip));
    pixelgrid::PixelLayout out = layout;
    flip_cells(out, cells);
    pixelgrid::force_ports_metal(out);
    return out;
}

pixelgrid::PixelLayout random_connected_layout(int rows, int cols, double density_mean,
                                               double density_std, Rng& rng) {
    for (;;) {
        pixelgrid::PixelLayout layout =
            pixelgrid::random_layout(rows, cols, density_mean, density_std, rng);
        if (pixelgrid::is_connected(layout)) return layout;
    }
}

EvolveResult evolve(const CombinerTarget& target, const Evaluator& evaluator,
                    const GaConfig& cfg, const EvolveOptions& opts) {
    cfg.validate();
    target.validate();
    if (!evaluator) throw std::invalid_argument("evolve: evaluator must be callable");
    const int jobs = resolve_jobs(opts.jobs);

    Rng rng(cfg.rng_seed);
    std::vector<pixelgrid::PixelLayout> population;
    std::vector<double> fit_f(static_cast<std::size_t>(cfg.population), 0.0);
    std::vector<double> fit_e(static_cast<std::size_t>(cfg.population), 0.0);
    EvolveResult result;

    auto evaluate_population = [&](int generation) {
        parallel_for(static_cast<std::int64_t>(population.size()), jobs, [&](std::int64_t i) {
            try {
                const response::TwoPortTriple pred =
                    evaluator(population[static_cast<std::size_t>(i)]);
                const Fitness fit = fitness(pred, target, cfg.epsilon);
                fit_f[static_cast<std::size_t>(i)] = fit.f;
                fit_e[static_cast<std::size_t>(i)] = fit.e;
            } catch (const EvaluatorFailure&) {
                throw;
            } catch (const std::exception& e) {
                throw EvaluatorFailure(generation, static_cast<int>(i), e.what());
            }
        });
    };

    auto write_checkpoint = [&](int generation) {
        nlohmann::json j;
        j["format"] = kCheckpointFormat;
        j["version"] = kCheckpointVersion;
        j["generation"] = generation;
        j["rng_state"] = rng.state();
        j["config"] = to_json(cfg);
        nlohmann::json pop = nlohmann::json::array();
        for (const pixelgrid::PixelLayout& layout : population)
            pop.push_back(pixelgrid::to_text(layout));
        j["population"] = std::move(pop);
        j["fitness_f"] = fit_f;
        j["fitness_e"] = fit_e;
        j["best"] = {{"layout_text", pixelgrid::to_text(result.best_layout)},
                     {"f", result.best_fitness},
                     {"e", result.best_error}};
        j["target_reached"] = result.target_reached;
        nlohmann::json history = nlohmann::json::array();
        for (const GenerationRow& row : result.history)
            history.push_back({{"generation", row.generation},
                               {"best_f", row.best_f},
                               {"best_e", row.best_e},
                               {"mean_f", row.mean_f},
                               {"injected_fraction", row.injected_fraction}});
        j["history"] = std::move(history);

        const std::string tmp = opts.checkpoint_path + ".tmp";
        {
            std::ofstream out(tmp);
            if (!out)
                throw IoFailure("evolve: cannot open " + tmp + " for writing");
            out << j.dump() << '\n';
            out.flush();
            if (!out) throw IoFailure("evolve: write failed for " + tmp);
        }
        if (std::rename(tmp.c_str(), opts.checkpoint_path.c_str()) != 0)
            throw IoFailure("evolve: cannot move checkpoint into place at " +
                            opts.checkpoint_path);
    };

    auto restore_checkpoint = [&]() -> int {
        std::ifstream in(opts.resume_from);
        if (!in) throw IoFailure("evolve: cannot open checkpoint " + opts.resume_from);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("evolve: invalid checkpoint JSON in " +
                                        opts.resume_from + ": " + e.what());
        }
        try {
            if (j.value("format", std::string()) != kCheckpointFormat ||
                j.value("version", 0) != kCheckpointVersion)
                throw std::invalid_argument("evolve: " + opts.resume_from +
                                            " is not a recognized checkpoint");
            if (j.at("config") != to_json(cfg))
                throw std::invalid_argument(
                    "evolve: checkpoint was created with a different configuration");
            rng.set_state(j.at("rng_state").get<std::string>());
            population.clear();
            for (const nlohmann::json& text : j.at("population"))
                population.push_back(pixelgrid::from_text(text.get<std::string>()));
            fit_f = j.at("fitness_f").get<std::vector<double>>();
            fit_e = j.at("fitness_e").get<std::vector<double>>();
            if (static_cast<int>(population.size()) != cfg.population ||
                fit_f.size() != population.size() || fit_e.size() != population.size())
                throw std::invalid_argument("evolve: checkpoint population is inconsistent");
            result.best_layout =
                pixelgrid::from_text(j.at("best").at("layout_text").get<std::string>());
            result.best_fitness = j.at("best").at("f").get<double>();
            result.best_error = j.at("best").at("e").get<double>();
            result.target_reached = j.at("target_reached").get<bool>();
            result.history.clear();
            for (const nlohmann::json& row : j.at("history"))
                result.history.push_back({row.at("generation").get<int>(),
                                          row.at("best_f").get<double>(),
                                          row.at("best_e").get<double>(),
                                          row.at("mean_f").get<double>(),
                                          row.at("injected_fraction").get<double>()});
            return j.at("generation").get<int>();
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("evolve: malformed checkpoint " + opts.resume_from +
                                        ": " + e.what());
        }
    };

    auto record = [&](int generation, double injected_fraction) {
        std::size_t best_idx = 0;
        double mean = 0.0;
        for (std::size_t i = 0; i < fit_f.size(); ++i) {
            mean += fit_f[i];
            if (fit_f[i] > fit_f[best_idx]) best_idx = i;
        }
        mean /= static_cast<double>(fit_f.size());
        if (fit_f[best_idx] > result.best_fitness) {
            result.best_fitness = fit_f[best_idx];
            result.best_error = fit_e[best_idx];
            result.best_layout = population[best_idx];
        }
        GenerationRow row{generation, result.best_fitness, result.best_error, mean,
                          injected_fraction};
        result.history.push_back(row);
        if (opts.on_generation) opts.on_generation(row);
        if (cfg.fitness_target && result.best_fitness >= *cfg.fitness_target)
            result.target_reached = true;
        if (!opts.checkpoint_path.empty() && opts.checkpoint_every > 0 &&
            generation % opts.checkpoint_every == 0)
            write_checkpoint(generation);
    };

    auto tournament = [&]() -> std::size_t {
        std::size_t best = static_cast<std::size_t>(rng.index(population.size()));
        for (int k = 1; k < cfg.tournament_size; ++k) {
            const std::size_t c = static_cast<std::size_t>(rng.index(population.size()));
            if (fit_f[c] > fit_f[best] || (fit_f[c] == fit_f[best] && c < best)) best = c;
        }
        return best;
    };

    // Builds the next generation from the evaluated current one; returns the
    // number of fresh random layouts injected.
    auto build_next = [&](int generation) -> int {
        std::vector<std::size_t> order(population.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            return fit_f[x] != fit_f[y] ? fit_f[x] > fit_f[y] : x < y;
        });

        const double fraction = cfg.random_injection_max_fraction *
                                (1.0 - static_cast<double>(generation) / cfg.max_iters);
        int n_inject = static_cast<int>(std::lround(cfg.population * fraction));
        n_inject = std::clamp(n_inject, 0, cfg.population - cfg.elite_count);

        std::vector<pixelgrid::PixelLayout> next;
        next.reserve(static_cast<std::size_t>(cfg.population));
        for (int i = 0; i < cfg.elite_count; ++i)
            next.push_back(population[order[static_cast<std::size_t>(i)]]);
        for (int i = 0; i < n_inject; ++i)
            next.push_back(random_connected_layout(cfg.rows, cfg.cols, cfg.density_mean,
                                                   cfg.density_std, rng));
        while (static_cast<int>(next.size()) < cfg.population) {
            const std::size_t pa = tournament();
            const std::size_t pb = tournament();
            const pixelgrid::PixelLayout base =
                crossover(population[pa], population[pb], rng);
            bool accepted = false;
            for (int attempt = 0; attempt < kMutationAttempts; ++attempt) {
                pixelgrid::PixelLayout child =
                    mutate(base, rng, cfg.mutation_rate_min, cfg.mutation_rate_max);
                if (pixelgrid::is_connected(child)) {
                    next.push_back(std::move(child));
                    accepted = true;
                    break;
                }
            }
            if (!accepted)
                next.push_back(random_connected_layout(cfg.rows, cfg.cols, cfg.density_mean,
                                                       cfg.density_std, rng));
        }
        population.swap(next);
        return n_inject;
    };

    int generation = 0;
    if (!opts.resume_from.empty()) {
        generation = restore_checkpoint();
    } else {
        population.reserve(static_cast<std::size_t>(cfg.population));
        for (int i = 0; i < cfg.population; ++i)
            population.push_back(random_connected_layout(cfg.rows, cfg.cols, cfg.density_mean,
                                                         cfg.density_std, rng));
        generation = 1;
        evaluate_population(generation);
        record(generation, 1.0);
    }

    while (!result.target_reached && generation < cfg.max_iters) {
        const int n_inject = build_next(generation);
        ++generation;
        evaluate_population(generation);
        record(generation, static_cast<double>(n_inject) / cfg.population);
    }
    return result;
}

void write_history_csv(const std::vector<GenerationRow>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("write_history_csv: cannot open " + path + " for writing");
    out << "generation,best_f,best_e,mean_f,injected_fraction\n";
    char buf[192];
    for (const GenerationRow& row : history) {
        std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,%.12g,%.12g\n", row.generation,
                      row.best_f, row.best_e, row.mean_f, row.injected_fraction);
        out << buf;
    }
    if (!out) throw IoFailure("write_history_csv: write failed for " + path);
}

Evaluator make_oracle_evaluator(const emoracle::OracleParams& params,
                                std::vector<double> freqs_hz) {
    params.validate();
    if (freqs_hz.empty())
        throw std::invalid_argument("make_oracle_evaluator: frequency grid is empty");
    return [params, freqs = std::move(freqs_hz)](const pixelgrid::PixelLayout& layout) {
        const netalg::NetworkMatrix s4 = emoracle::simulate(layout, freqs, params);
        return response::triple_from_two_port(response::reduce_combiner(s4));
    };
}

Evaluator make_surrogate_evaluator(surrogate::SurrogateModel model,
                                   std::vector<double> freqs_hz) {
    model.arch.validate();
    if (freqs_hz.empty())
        throw std::invalid_argument("make_surrogate_evaluator: frequency grid is empty");
    if (model.arch.output_dim != 6 * static_cast<int>(freqs_hz.size()))
        throw std::invalid_argument(
            "make_surrogate_evaluator: model output dimension does not cover the grid");
    auto shared = std::make_shared<const surrogate::SurrogateModel>(std::move(model));
    return [shared, freqs = std::move(freqs_hz)](const pixelgrid::PixelLayout& layout) {
        return response::unflatten_triple(surrogate::predict(*shared, layout), freqs);
    };
}

VerificationReport verify_candidate(const pixelgrid::PixelLayout& layout,
                                    const CombinerTarget& target, const Evaluator& evaluator,
                                    const emoracle::OracleParams& oracle_params,
                                    double epsilon) {
    VerificationReport report;
    report.layout = layout;
    report.predicted = evaluator(layout);
    const netalg::NetworkMatrix s4 = emoracle::simulate(layout, target.freqs_hz, oracle_params);
    report.simulated = response::triple_from_two_port(response::reduce_combiner(s4));

    const Fitness predicted = fitness(report.predicted, target, epsilon);
    const Fitness simulated = fitness(report.simulated, target, epsilon);
    report.predicted_f = predicted.f;
    report.predicted_e = predicted.e;
    report.simulated_f = simulated.f;
    report.simulated_e = simulated.e;

    const std::vector<double> flat_pred = response::flatten_triple(report.predicted);
    const std::vector<double> flat_sim = response::flatten_triple(report.simulated);
    double sum = 0.0;
    for (std::size_t i = 0; i < flat_pred.size(); ++i)
        sum += std::abs(flat_pred[i] - flat_sim[i]);
    report.mean_abs_deviation = sum / static_cast<double>(flat_pred.size());
    return report;
}

void write_overlay_csv(const VerificationReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("write_overlay_csv: cannot open " + path + " for writing");
    out << "freq_hz,param,re_pred,im_pred,re_oracle,im_oracle\n";
    const std::array<const char*, 3> names = {"s11", "s12", "s22"};
    const std::array<const std::vector<netalg::cxd>*, 3> pred = {
        &report.predicted.s11, &report.predicted.s12, &report.predicted.s22};
    const std::array<const std::vector<netalg::cxd>*, 3> sim = {
        &report.simulated.s11, &report.simulated.s12, &report.simulated.s22};
    char buf[224];
    for (std::size_t i = 0; i < report.predicted.n_freqs(); ++i) {
        for (std::size_t p = 0; p < 3; ++p) {
            const netalg::cxd sp = (*pred[p])[i];
            const netalg::cxd ss = (*sim[p])[i];
            std::snprintf(buf, sizeof buf, "%.12g,%s,%.12g,%.12g,%.12g,%.12g\n",
                          report.predicted.freqs_hz[i], names[p], sp.real(), sp.imag(),
                          ss.real(), ss.imag());
            out << buf;
        }
    }
    if (!out) throw IoFailure("write_overlay_csv: write failed for " + path);
}

}  // namespace combforge::inverse
