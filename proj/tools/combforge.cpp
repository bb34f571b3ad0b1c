// Copyright (c) 2026 Combforge Contributors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "combforge/doherty.hpp"
#include "combforge/emoracle.hpp"
#include "combforge/errors.hpp"
#include "combforge/inverse.hpp"
#include "combforge/loadpull.hpp"
#include "combforge/network.hpp"
#include "combforge/pixelgrid.hpp"
#include "combforge/response.hpp"
#include "combforge/surrogate.hpp"
#include "combforge/touchstone.hpp"

namespace {

using namespace combforge;

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double deg(double rad) { return rad * 180.0 / kPi; }
double rad(double degrees) { return degrees * kPi / 180.0; }

std::string out_dir() {
    const char* env = std::getenv("COMBFORGE_OUT_DIR");
    return (env != nullptr && *env != '\0') ? std::string(env) : std::string(".");
}

std::string path_join(const std::string& dir, const std::string& name) {
    if (dir.empty() || dir == ".") return name;
    return dir.back() == '/' ? dir + name : dir + "/" + name;
}

// Removes every registered output unless commit() was reached, so a failed
// subcommand never leaves half-written files behind.
struct OutputGuard {
    std::vector<std::string> paths;
    bool committed = false;

    void add(const std::string& p) { paths.push_back(p); }
    void commit() { committed = true; }
    ~OutputGuard() {
        if (!committed)
            for (const std::string& p : paths) std::remove(p.c_str());
    }
};

void write_json_file(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoFailure("write failed for " + path);
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

nlohmann::json complex_pair(const netalg::cxd& v) {
    return nlohmann::json{v.real(), v.imag()};
}

// Shared flag bundles -------------------------------------------------------

struct OracleFlags {
    emoracle::OracleParams params;

    void attach(CLI::App* cmd) {
        cmd->add_option("--series-l", params.series_inductance_per_cell,
                        "series inductance per cell, henries")
            ->capture_default_str();
        cmd->add_option("--series-r", params.series_resistance_per_cell,
                        "series resistance per cell, ohms")
            ->capture_default_str();
        cmd->add_option("--shunt-c", params.shunt_capacitance_per_cell,
                        "shunt capacitance per cell, farads")
            ->capture_default_str();
        cmd->add_option("--shunt-g", params.shunt_conductance_per_cell,
                        "shunt conductance per cell, siemens")
            ->capture_default_str();
        cmd->add_option("--diag-scale", params.diagonal_impedance_scale,
                        "impedance scale of diagonal branches")
            ->capture_default_str();
        cmd->add_option("--z-ref", params.z_ref, "reference impedance, ohms")
            ->capture_default_str();
    }
};

struct FreqFlags {
    emoracle::FrequencyGrid grid;

    void attach(CLI::App* cmd) {
        cmd->add_option("--f-start", grid.start_hz, "first frequency, Hz")
            ->capture_default_str();
        cmd->add_option("--f-stop", grid.stop_hz, "last frequency, Hz")
            ->capture_default_str();
        cmd->add_option("--n-freqs", grid.n_points, "number of frequency points")
            ->capture_default_str();
    }
};

// theory ---------------------------------------------------------------------

struct TheoryOpts {
    double beta_b = 0.5;
    double alpha = 1.0;
    double r_opt = 50.0;
    double v_max = 1.0;
    double theta_deg = kNan;  // NaN picks the first feasible phase
    int sweep_points = 201;
    std::string out;
};

int cmd_theory(TheoryOpts o) {
    if (o.out.empty()) o.out = path_join(out_dir(), "theory_sweep.csv");

    const doherty::BackoffGamma gamma = doherty::backoff_gamma(o.beta_b, o.alpha);
    const std::vector<double> thetas = doherty::theta_solutions(o.beta_b, o.alpha);

    doherty::IdealDohertyConfig cfg;
    cfg.beta_b = o.beta_b;
    cfg.alpha = o.alpha;
    cfg.theta = std::isnan(o.theta_deg) ? thetas.front() : rad(o.theta_deg);
    cfg.r_opt = o.r_opt;
    cfg.v_max = o.v_max;
    cfg.validate();

    const std::vector<doherty::SweepRow> rows = doherty::drive_sweep(cfg, o.sweep_points);

    OutputGuard guard;
    guard.add(o.out);
    doherty::write_drive_sweep_csv(rows, o.out);
    guard.commit();

    std::printf("gamma_ratio = %.6f\n", gamma.ratio);
    std::printf("gamma_db = %.6f\n", gamma.db);
    std::printf("theta_deg =");
    for (double t : thetas) std::printf(" %.6f", deg(t));
    std::printf("\n");
    std::printf("sweep_theta_deg = %.6f\n", deg(cfg.theta));
    std::printf("sweep_csv = %s (%zu rows)\n", o.out.c_str(), rows.size());
    return 0;
}

// synthesize -----------------------------------------------------------------

struct SynthOpts {
    std::string loadpull;
    std::string out_target;
    std::string out_summary;
    double select_theta_deg = kNan;
    double power_tol_db = kNan;
    double z_ref = 50.0;
    FreqFlags freqs;
};

int cmd_synthesize(SynthOpts o) {
    if (o.out_target.empty()) o.out_target = path_join(out_dir(), "target.json");
    if (o.out_summary.empty()) o.out_summary = path_join(out_dir(), "synthesis.json");

    loadpull::SynthesisInput inp = loadpull::load_input(o.loadpull);
    if (!std::isnan(o.power_tol_db)) inp.power_tol_db = o.power_tol_db;

    const loadpull::PowerBalance balance = loadpull::check_power_conservation(inp);
    std::printf("power_balance_dbm: backed_off=%.6f peak_sum=%.6f delta=%.6f\n",
                balance.backed_off_dbm, balance.peak_sum_dbm, balance.delta_db);

    const std::vector<loadpull::ThetaRoot> roots = loadpull::solve_theta(inp);
    const loadpull::ThetaRoot* chosen = nullptr;
    if (std::isnan(o.select_theta_deg)) {
        chosen = &loadpull::select_root(roots);
    } else {
        const double want = rad(o.select_theta_deg);
        double best = std::numeric_limits<double>::infinity();
        for (const loadpull::ThetaRoot& root : roots) {
            const double d = std::abs(std::atan2(std::sin(root.theta - want),
                                                 std::cos(root.theta - want)));
            if (d < best) {
                best = d;
                chosen = &root;
            }
        }
    }

    std::printf("theta_roots_deg:");
    for (const loadpull::ThetaRoot& root : roots)
        std::printf(" %.4f(residual=%.3g)", deg(root.theta), root.residual);
    std::printf("\n");
    std::printf("selected_theta_deg = %.6f\n", deg(chosen->theta));

    const Eigen::Matrix2cd& z = chosen->z2p;
    std::printf("z11_ohm = %.6f %+.6fj\n", z(0, 0).real(), z(0, 0).imag());
    std::printf("z12_ohm = %.6f %+.6fj\n", z(0, 1).real(), z(0, 1).imag());
    std::printf("z22_ohm = %.6f %+.6fj\n", z(1, 1).real(), z(1, 1).imag());
    std::printf("losslessness_residual = %.6g\n", chosen->residual);

    const double alpha_mag = std::abs(loadpull::alpha_from_loadpull(inp, chosen->theta));
    std::printf("alpha_mag = %.6f\n", alpha_mag);

    o.freqs.grid.validate();
    const std::vector<double> pts = o.freqs.grid.points();
    const std::vector<Eigen::MatrixXcd> zmats(pts.size(), Eigen::MatrixXcd(z));
    const netalg::NetworkMatrix zmat(netalg::MatrixKind::Impedance, pts, zmats, o.z_ref);
    const netalg::NetworkMatrix smat = netalg::z_to_s(zmat, o.z_ref);
    response::TwoPortTriple triple = response::triple_from_two_port(smat);

    // Load-pull rounding can push a near-lossless target marginally outside
    // the unit ball; project those values back so the target stays passive.
    int clamped = 0;
    double max_overshoot = 0.0;
    for (std::vector<netalg::cxd>* v : {&triple.s11, &triple.s12, &triple.s22}) {
        for (netalg::cxd& s : *v) {
            const double mag = std::abs(s);
            if (mag > 1.0) {
                max_overshoot = std::max(max_overshoot, mag - 1.0);
                if (mag <= 1.005) {
                    s /= mag;
                    ++clamped;
                }
            }
        }
    }
    if (clamped > 0)
        std::printf("clamped_magnitudes = %d (max overshoot %.3g)\n", clamped, max_overshoot);

    inverse::TargetProvenance prov;
    prov.theta_rad = chosen->theta;
    prov.alpha = alpha_mag;
    prov.gamma_b_db = inp.gamma_b_db;
    prov.r_opt = inp.main_peak.z.real();
    prov.z_ref = o.z_ref;
    const inverse::CombinerTarget target = inverse::target_from_triple(triple, prov);

    nlohmann::json summary;
    summary["power_balance"] = {{"backed_off_dbm", balance.backed_off_dbm},
                                {"peak_sum_dbm", balance.peak_sum_dbm},
                                {"delta_db", balance.delta_db}};
    summary["alpha_mag"] = alpha_mag;
    nlohmann::json root_list = nlohmann::json::array();
    for (const loadpull::ThetaRoot& root : roots)
        root_list.push_back(
            {{"theta_deg", deg(root.theta)},
             {"residual", root.residual},
             {"z2p",
              {{complex_pair(root.z2p(0, 0)), complex_pair(root.z2p(0, 1))},
               {complex_pair(root.z2p(1, 0)), complex_pair(root.z2p(1, 1))}}}});
    summary["roots"] = std::move(root_list);
    summary["selected"] = {
        {"theta_deg", deg(chosen->theta)},
        {"residual", chosen->residual},
        {"z2p",
         {{complex_pair(z(0, 0)), complex_pair(z(0, 1))},
          {complex_pair(z(1, 0)), complex_pair(z(1, 1))}}}};
    summary["clamped_magnitudes"] = clamped;
    summary["target"] = o.out_target;

    OutputGuard guard;
    guard.add(o.out_target);
    guard.add(o.out_summary);
    inverse::save_target(target, o.out_target);
    write_json_file(summary, o.out_summary);
    guard.commit();

    std::printf("target_json = %s\n", o.out_target.c_str());
    std::printf("synthesis_json = %s\n", o.out_summary.c_str());
    return 0;
}

// gen-dataset ----------------------------------------------------------------

struct GenDatasetOpts {
    emoracle::DatasetConfig cfg;
    std::string out;
    std::string stats;
};

int cmd_gen_dataset(GenDatasetOpts o) {
    if (o.out.empty()) o.out = path_join(out_dir(), "dataset.jsonl");
    if (o.stats.empty()) o.stats = path_join(out_dir(), "dataset_stats.json");

    OutputGuard guard;
    guard.add(o.out);
    guard.add(o.stats);
    const emoracle::DatasetStats stats = emoracle::generate_dataset(o.cfg, o.out);
    emoracle::save_stats(stats, o.stats);
    guard.commit();

    std::printf("dataset = %s\n", o.out.c_str());
    std::printf("structures = %d, records = %d, rejection_rate = %.4f, elapsed_s = %.2f\n",
                stats.n_structures, stats.n_records, stats.rejection_rate, stats.elapsed_s);
    std::printf("stats_json = %s\n", o.stats.c_str());
    return 0;
}

// train ----------------------------------------------------------------------

struct TrainOpts {
    std::string dataset;
    std::string out_model;
    std::string loss_csv;
    std::string arch = "auto";  // auto | desk | paper
    surrogate::TrainConfig cfg;
};

int cmd_train(TrainOpts o) {
    if (o.out_model.empty()) o.out_model = path_join(out_dir(), "model.cfsm");
    if (o.loss_csv.empty()) o.loss_csv = path_join(out_dir(), "loss.csv");

    const std::vector<emoracle::DatasetRecord> records = emoracle::load_dataset(o.dataset);
    if (records.empty()) throw std::invalid_argument("train: dataset " + o.dataset + " is empty");
    const std::vector<surrogate::TrainingSample> samples =
        surrogate::samples_from_records(records);
    const int rows = samples.front().layout.rows;
    const int cols = samples.front().layout.cols;
    const int n_freqs = static_cast<int>(records.front().freqs_hz.size());
    std::printf("dataset = %s: %zu records, grid %dx%d, %d frequencies\n", o.dataset.c_str(),
                samples.size(), rows, cols, n_freqs);

    surrogate::SurrogateArchitecture arch;
    if (o.arch == "paper" ||
        (o.arch == "auto" && rows == 15 && cols == 15 && n_freqs == 13)) {
        arch = surrogate::paper_architecture();
        if (arch.input_rows != rows || arch.input_cols != cols ||
            arch.output_dim != 6 * n_freqs)
            throw std::invalid_argument(
                "train: the full-size architecture needs a 15x15 grid at 13 frequencies");
        std::printf("architecture = paper (flatten %d)\n", arch.flatten_dim());
    } else {
        arch = surrogate::desk_architecture(rows, cols, n_freqs);
        std::printf("architecture = desk (flatten %d)\n", arch.flatten_dim());
    }

    surrogate::SurrogateModel model = surrogate::init_model(arch, o.cfg.rng_seed);
    std::printf("training: %d epochs, batch %d, lr %.6g (decay %.4g every %d)\n",
                o.cfg.epochs, o.cfg.batch_size, o.cfg.learning_rate, o.cfg.lr_decay_factor,
                o.cfg.lr_decay_every_epochs);
    const surrogate::TrainResult result = surrogate::train(model, samples, o.cfg);
    if (result.effective_batch_size != o.cfg.batch_size)
        std::printf("batch_size clamped to %d (training split is smaller than requested)\n",
                    result.effective_batch_size);

    OutputGuard guard;
    guard.add(o.out_model);
    guard.add(o.loss_csv);
    surrogate::save_model(model, o.out_model);
    surrogate::write_loss_csv(result.history, o.loss_csv);
    guard.commit();

    if (!result.history.empty()) {
        const surrogate::EpochRow& last = result.history.back();
        std::printf("final_train_mae = %.6g\n", last.train_mae);
        if (!std::isnan(last.val_mae)) std::printf("final_val_mae = %.6g\n", last.val_mae);
    } else {
        std::printf("no training epochs requested; saved the initialized model\n");
    }
    std::printf("model = %s\n", o.out_model.c_str());
    std::printf("loss_csv = %s\n", o.loss_csv.c_str());
    return 0;
}

// invert ---------------------------------------------------------------------

struct InvertOpts {
    std::string target;
    std::string model;
    std::string evaluator = "surrogate";  // surrogate | oracle
    std::string out_layout;
    std::string history;
    std::string summary;
    std::string checkpoint;
    int checkpoint_every = 0;
    std::string resume;
    int log_every = 10;
    int jobs = 0;
    bool rows_set = false;
    bool cols_set = false;
    inverse::GaConfig ga;
    double fitness_target = kNan;
    OracleFlags oracle;
};

int cmd_invert(InvertOpts o) {
    if (o.out_layout.empty()) o.out_layout = path_join(out_dir(), "best_layout.txt");
    if (o.history.empty()) o.history = path_join(out_dir(), "ga_history.csv");
    if (o.summary.empty()) o.summary = path_join(out_dir(), "invert_summary.json");
    if (!std::isnan(o.fitness_target)) o.ga.fitness_target = o.fitness_target;

    const inverse::CombinerTarget target = inverse::load_target(o.target);

    inverse::Evaluator evaluator;
    if (o.evaluator == "surrogate") {
        if (o.model.empty())
            throw std::invalid_argument("invert: --model is required with the surrogate evaluator");
        surrogate::SurrogateModel model = surrogate::load_model(o.model);
        if ((o.rows_set && o.ga.rows != model.arch.input_rows) ||
            (o.cols_set && o.ga.cols != model.arch.input_cols))
            throw std::invalid_argument("invert: --rows/--cols disagree with the model's grid");
        o.ga.rows = model.arch.input_rows;
        o.ga.cols = model.arch.input_cols;
        evaluator = inverse::make_surrogate_evaluator(std::move(model), target.freqs_hz);
        std::printf("evaluator = surrogate (%dx%d grid)\n", o.ga.rows, o.ga.cols);
    } else {
        evaluator = inverse::make_oracle_evaluator(o.oracle.params, target.freqs_hz);
        std::printf("evaluator = oracle (%dx%d grid)\n", o.ga.rows, o.ga.cols);
    }

    inverse::EvolveOptions eo;
    eo.jobs = o.jobs;
    eo.checkpoint_path = o.checkpoint;
    eo.checkpoint_every = o.checkpoint_every;
    eo.resume_from = o.resume;
    const int log_every = std::max(1, o.log_every);
    eo.on_generation = [log_every](const inverse::GenerationRow& row) {
        if (row.generation == 1 || row.generation % log_every == 0)
            std::printf("gen %d: best_e=%.6g best_f=%.6g mean_f=%.6g injected=%.3f\n",
                        row.generation, row.best_e, row.best_f, row.mean_f,
                        row.injected_fraction);
    };

    const inverse::EvolveResult result = inverse::evolve(target, evaluator, o.ga, eo);
    std::printf("best_e = %.6g, best_f = %.6g, generations = %zu, target_reached = %s\n",
                result.best_error, result.best_fitness, result.history.size(),
                result.target_reached ? "true" : "false");

    const inverse::VerificationReport report = inverse::verify_candidate(
        result.best_layout, target, evaluator, o.oracle.params, o.ga.epsilon);
    std::printf("verification: predicted_e=%.6g simulated_e=%.6g mean_abs_deviation=%.6g\n",
                report.predicted_e, report.simulated_e, report.mean_abs_deviation);

    nlohmann::json summary;
    summary["best_f"] = result.best_fitness;
    summary["best_e"] = result.best_error;
    summary["generations"] = result.history.empty() ? 0 : result.history.back().generation;
    summary["target_reached"] = result.target_reached;
    summary["predicted_e"] = report.predicted_e;
    summary["simulated_e"] = report.simulated_e;
    summary["mean_abs_deviation"] = report.mean_abs_deviation;
    summary["layout"] = o.out_layout;

    OutputGuard guard;
    guard.add(o.out_layout);
    guard.add(o.history);
    guard.add(o.summary);
    pixelgrid::save_text(result.best_layout, o.out_layout);
    inverse::write_history_csv(result.history, o.history);
    write_json_file(summary, o.summary);
    guard.commit();

    std::printf("layout = %s\n", o.out_layout.c_str());
    std::printf("history_csv = %s\n", o.history.c_str());
    std::printf("summary_json = %s\n", o.summary.c_str());
    return 0;
}

// verify ---------------------------------------------------------------------

struct VerifyOpts {
    std::string target;
    std::string layout;
    std::string model;
    std::string evaluator = "surrogate";
    std::string out_overlay;
    std::string summary;
    double epsilon = 1e-5;
    OracleFlags oracle;
};

int cmd_verify(VerifyOpts o) {
    if (o.out_overlay.empty()) o.out_overlay = path_join(out_dir(), "verify_overlay.csv");
    if (o.summary.empty()) o.summary = path_join(out_dir(), "verify_summary.json");

    const inverse::CombinerTarget target = inverse::load_target(o.target);
    const pixelgrid::PixelLayout layout = pixelgrid::load_text(o.layout);

    inverse::Evaluator evaluator;
    if (o.evaluator == "surrogate") {
        if (o.model.empty())
            throw std::invalid_argument("verify: --model is required with the surrogate evaluator");
        evaluator = inverse::make_surrogate_evaluator(surrogate::load_model(o.model),
                                                      target.freqs_hz);
    } else {
        evaluator = inverse::make_oracle_evaluator(o.oracle.params, target.freqs_hz);
    }

    const inverse::VerificationReport report =
        inverse::verify_candidate(layout, target, evaluator, o.oracle.params, o.epsilon);

    nlohmann::json summary;
    summary["predicted_e"] = report.predicted_e;
    summary["simulated_e"] = report.simulated_e;
    summary["predicted_f"] = report.predicted_f;
    summary["simulated_f"] = report.simulated_f;
    summary["mean_abs_deviation"] = report.mean_abs_deviation;

    OutputGuard guard;
    guard.add(o.out_overlay);
    guard.add(o.summary);
    inverse::write_overlay_csv(report, o.out_overlay);
    write_json_file(summary, o.summary);
    guard.commit();

    std::printf("predicted_e = %.6g, simulated_e = %.6g, mean_abs_deviation = %.6g\n",
                report.predicted_e, report.simulated_e, report.mean_abs_deviation);
    std::printf("overlay_csv = %s\n", o.out_overlay.c_str());
    std::printf("summary_json = %s\n", o.summary.c_str());
    return 0;
}

// export-touchstone ----------------------------------------------------------

struct ExportOpts {
    std::string layout;
    std::string out;
    bool two_port = false;
    std::string format = "ri";  // ri | ma
    OracleFlags oracle;
    FreqFlags freqs;
};

int cmd_export_touchstone(ExportOpts o) {
    const pixelgrid::PixelLayout layout = pixelgrid::load_text(o.layout);
    const int ports = o.two_port ? 2 : 4;
    if (o.out.empty())
        o.out = path_join(out_dir(), "layout.s" + std::to_string(ports) + "p");
    const std::string want_ext = ".s" + std::to_string(ports) + "p";
    if (o.out.size() < want_ext.size() ||
        o.out.compare(o.out.size() - want_ext.size(), want_ext.size(), want_ext) != 0)
        throw std::invalid_argument("export-touchstone: output for a " +
                                    std::to_string(ports) + "-port network must end in " +
                                    want_ext);

    o.freqs.grid.validate();
    netalg::NetworkMatrix s = emoracle::simulate(layout, o.freqs.grid, o.oracle.params);
    if (o.two_port) s = response::reduce_combiner(s);

    const netalg::TouchstoneFormat fmt = o.format == "ma"
                                             ? netalg::TouchstoneFormat::MagnitudeAngle
                                             : netalg::TouchstoneFormat::RealImag;
    OutputGuard guard;
    guard.add(o.out);
    netalg::write_touchstone(s, o.out, fmt);
    guard.commit();

    std::printf("touchstone = %s (%d ports, %d frequencies)\n", o.out.c_str(), s.n_ports(),
                s.n_freqs());
    return 0;
}

// pipeline -------------------------------------------------------------------

struct PipelineOpts {
    std::string loadpull = "data/loadpull_2g75.json";
    std::string workdir;
    std::string profile = "desk";
    std::uint64_t seed = 1;
    int jobs = 0;
    int n_structures = -1;  // -1 = profile default
    int epochs = -1;
    int population = -1;
    int iters = -1;
    FreqFlags freqs;
    OracleFlags oracle;
};

int cmd_pipeline(PipelineOpts o) {
    if (o.workdir.empty()) o.workdir = out_dir();
    std::filesystem::create_directories(o.workdir);

    const bool desk = o.profile == "desk";
    const int grid_dim = desk ? 8 : 15;
    const int n_structures = o.n_structures > 0 ? o.n_structures : (desk ? 1000 : 100);
    const int epochs = o.epochs >= 0 ? o.epochs : (desk ? 40 : 300);
    const int batch = desk ? 64 : 2790;
    const int population = o.population > 0 ? o.population : (desk ? 200 : 4000);
    const int iters = o.iters > 0 ? o.iters : (desk ? 60 : 240);

    using clock = std::chrono::steady_clock;
    nlohmann::json timings;
    auto timed = [&timings](const char* stage, auto&& fn) {
        std::printf("== %s ==\n", stage);
        const auto t0 = clock::now();
        fn();
        const double s = std::chrono::duration<double>(clock::now() - t0).count();
        timings[stage] = s;
        std::printf("== %s done in %.1f s ==\n\n", stage, s);
    };

    const std::string target_path = path_join(o.workdir, "target.json");
    const std::string dataset_path = path_join(o.workdir, "dataset.jsonl");
    const std::string model_path = path_join(o.workdir, "model.cfsm");
    const std::string layout_path = path_join(o.workdir, "best_layout.txt");
    const std::string summary_path = path_join(o.workdir, "pipeline_summary.json");

    timed("synthesize", [&] {
        SynthOpts s;
        s.loadpull = o.loadpull;
        s.out_target = target_path;
        s.out_summary = path_join(o.workdir, "synthesis.json");
        s.freqs = o.freqs;
        cmd_synthesize(std::move(s));
    });

    timed("gen-dataset", [&] {
        GenDatasetOpts g;
        g.cfg.n_samples = n_structures;
        g.cfg.rows = grid_dim;
        g.cfg.cols = grid_dim;
        g.cfg.oracle = o.oracle.params;
        g.cfg.freqs = o.freqs.grid;
        g.cfg.base_seed = o.seed;
        g.cfg.jobs = o.jobs;
        g.out = dataset_path;
        g.stats = path_join(o.workdir, "dataset_stats.json");
        cmd_gen_dataset(std::move(g));
    });

    timed("train", [&] {
        TrainOpts t;
        t.dataset = dataset_path;
        t.out_model = model_path;
        t.loss_csv = path_join(o.workdir, "loss.csv");
        t.cfg.epochs = epochs;
        t.cfg.batch_size = batch;
        t.cfg.val_fraction = desk ? 0.1 : 0.0;
        t.cfg.rng_seed = o.seed;
        t.cfg.jobs = o.jobs;
        cmd_train(std::move(t));
    });

    timed("invert", [&] {
        InvertOpts i;
        i.target = target_path;
        i.model = model_path;
        i.out_layout = layout_path;
        i.history = path_join(o.workdir, "ga_history.csv");
        i.summary = path_join(o.workdir, "invert_summary.json");
        i.checkpoint = path_join(o.workdir, "ga_checkpoint.json");
        i.checkpoint_every = 20;
        i.jobs = o.jobs;
        i.ga.population = population;
        i.ga.max_iters = iters;
        i.ga.rng_seed = o.seed;
        i.oracle = o.oracle;
        cmd_invert(std::move(i));
    });

    timed("verify", [&] {
        VerifyOpts v;
        v.target = target_path;
        v.layout = layout_path;
        v.model = model_path;
        v.out_overlay = path_join(o.workdir, "verify_overlay.csv");
        v.summary = path_join(o.workdir, "verify_summary.json");
        v.oracle = o.oracle;
        cmd_verify(std::move(v));
    });

    const nlohmann::json verify_summary =
        read_json_file(path_join(o.workdir, "verify_summary.json"));
    nlohmann::json summary;
    summary["profile"] = o.profile;
    summary["stages_s"] = timings;
    summary["mean_abs_deviation"] = verify_summary.at("mean_abs_deviation");
    summary["predicted_e"] = verify_summary.at("predicted_e");
    summary["simulated_e"] = verify_summary.at("simulated_e");
    write_json_file(summary, summary_path);

    std::printf("pipeline_summary = %s\n", summary_path.c_str());
    std::printf("mean_abs_deviation = %.6g\n",
                verify_summary.at("mean_abs_deviation").get<double>());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Doherty combiner synthesis toolkit"};
    app.require_subcommand(1);
    int rc = 0;

    // theory
    TheoryOpts theory;
    auto* c_theory = app.add_subcommand(
        "theory", "ideal Doherty drive sweep and feasible phase solutions");
    c_theory->add_option("--beta-b", theory.beta_b, "break-point drive level")
        ->capture_default_str();
    c_theory->add_option("--alpha", theory.alpha, "aux/main peak current ratio")
        ->capture_default_str();
    c_theory->add_option("--r-opt", theory.r_opt, "main optimal load, ohms")
        ->capture_default_str();
    c_theory->add_option("--v-max", theory.v_max, "maximum drain voltage swing")
        ->capture_default_str();
    c_theory->add_option("--theta-deg", theory.theta_deg,
                         "phase for the sweep (default: first feasible)");
    c_theory->add_option("--sweep-points", theory.sweep_points, "rows in the sweep CSV")
        ->capture_default_str();
    c_theory->add_option("--out", theory.out, "sweep CSV path");
    c_theory->callback([&] { rc = cmd_theory(theory); });

    // synthesize
    SynthOpts synth;
    auto* c_synth = app.add_subcommand(
        "synthesize", "derive the combiner target from load-pull measurements");
    c_synth->add_option("--loadpull", synth.loadpull, "load-pull JSON file")->required();
    c_synth->add_option("--out", synth.out_target, "target JSON path");
    c_synth->add_option("--summary", synth.out_summary, "synthesis summary JSON path");
    c_synth->add_option("--select-theta-deg", synth.select_theta_deg,
                        "pick the root nearest this phase (default: smallest residual)");
    c_synth->add_option("--power-tol-db", synth.power_tol_db,
                        "power conservation tolerance override, dB");
    c_synth->add_option("--z-ref", synth.z_ref, "reference impedance, ohms")
        ->capture_default_str();
    synth.freqs.attach(c_synth);
    c_synth->callback([&] { rc = cmd_synthesize(synth); });

    // gen-dataset
    GenDatasetOpts gen;
    auto* c_gen = app.add_subcommand("gen-dataset",
                                     "simulate random layouts into a training dataset");
    c_gen->add_option("--n", gen.cfg.n_samples, "number of structures")->capture_default_str();
    c_gen->add_option("--rows", gen.cfg.rows, "grid rows")->capture_default_str();
    c_gen->add_option("--cols", gen.cfg.cols, "grid columns")->capture_default_str();
    c_gen->add_option("--density-mean", gen.cfg.density_mean, "metal density mean")
        ->capture_default_str();
    c_gen->add_option("--density-std", gen.cfg.density_std, "metal density spread")
        ->capture_default_str();
    c_gen->add_option("--seed", gen.cfg.base_seed, "base RNG seed")->capture_default_str();
    c_gen->add_option("--jobs", gen.cfg.jobs, "worker threads (0 = all)")
        ->capture_default_str();
    c_gen->add_option("--out", gen.out, "dataset JSONL path");
    c_gen->add_option("--stats", gen.stats, "stats JSON path");
    OracleFlags gen_oracle;
    gen_oracle.attach(c_gen);
    FreqFlags gen_freqs;
    gen_freqs.attach(c_gen);
    std::string gen_profile;
    c_gen->add_option("--profile", gen_profile, "preset scale: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    c_gen->callback([&, c_gen] {
        if (gen_profile == "desk") {
            if (c_gen->count("--rows") == 0) gen.cfg.rows = 8;
            if (c_gen->count("--cols") == 0) gen.cfg.cols = 8;
            if (c_gen->count("--n") == 0) gen.cfg.n_samples = 1000;
        }
        gen.cfg.oracle = gen_oracle.params;
        gen.cfg.freqs = gen_freqs.grid;
        rc = cmd_gen_dataset(gen);
    });

    // train
    TrainOpts train;
    auto* c_train = app.add_subcommand("train", "fit the neural surrogate to a dataset");
    c_train->add_option("--dataset", train.dataset, "dataset JSONL file")->required();
    c_train->add_option("--out", train.out_model, "model weights path");
    c_train->add_option("--loss-csv", train.loss_csv, "loss history CSV path");
    c_train->add_option("--arch", train.arch, "network size: auto, desk, or paper")
        ->check(CLI::IsMember({"auto", "desk", "paper"}))
        ->capture_default_str();
    c_train->add_option("--epochs", train.cfg.epochs, "training epochs")
        ->capture_default_str();
    c_train->add_option("--batch-size", train.cfg.batch_size, "minibatch size")
        ->capture_default_str();
    c_train->add_option("--lr", train.cfg.learning_rate, "initial learning rate")
        ->capture_default_str();
    c_train->add_option("--lr-decay", train.cfg.lr_decay_factor, "learning-rate decay factor")
        ->capture_default_str();
    c_train->add_option("--lr-every", train.cfg.lr_decay_every_epochs,
                        "epochs between decays")
        ->capture_default_str();
    c_train->add_option("--val-fraction", train.cfg.val_fraction, "held-out fraction")
        ->capture_default_str();
    c_train->add_option("--seed", train.cfg.rng_seed, "RNG seed")->capture_default_str();
    c_train->add_option("--jobs", train.cfg.jobs, "worker threads (0 = all)")
        ->capture_default_str();
    std::string train_profile;
    c_train->add_option("--profile", train_profile, "preset scale: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    c_train->callback([&, c_train] {
        if (train_profile == "desk") {
            if (c_train->count("--epochs") == 0) train.cfg.epochs = 40;
            if (c_train->count("--batch-size") == 0) train.cfg.batch_size = 64;
            if (c_train->count("--val-fraction") == 0) train.cfg.val_fraction = 0.1;
        }
        rc = cmd_train(train);
    });

    // invert
    InvertOpts invert;
    auto* c_invert = app.add_subcommand("invert",
                                        "evolve a pixel layout toward the combiner target");
    c_invert->add_option("--target", invert.target, "combiner target JSON")->required();
    c_invert->add_option("--model", invert.model, "surrogate weights file");
    c_invert->add_option("--evaluator", invert.evaluator, "surrogate or oracle")
        ->check(CLI::IsMember({"surrogate", "oracle"}))
        ->capture_default_str();
    c_invert->add_option("--out-layout", invert.out_layout, "best layout text path");
    c_invert->add_option("--history", invert.history, "GA history CSV path");
    c_invert->add_option("--summary", invert.summary, "result summary JSON path");
    c_invert->add_option("--population", invert.ga.population, "population size")
        ->capture_default_str();
    c_invert->add_option("--iters", invert.ga.max_iters, "maximum generations")
        ->capture_default_str();
    c_invert->add_option("--elite", invert.ga.elite_count, "elite carried unchanged")
        ->capture_default_str();
    c_invert->add_option("--tournament", invert.ga.tournament_size, "tournament size")
        ->capture_default_str();
    c_invert->add_option("--injection", invert.ga.random_injection_max_fraction,
                         "peak random-injection fraction")
        ->capture_default_str();
    c_invert->add_option("--mutation-min", invert.ga.mutation_rate_min,
                         "minimum mutation rate")
        ->capture_default_str();
    c_invert->add_option("--mutation-max", invert.ga.mutation_rate_max,
                         "maximum mutation rate")
        ->capture_default_str();
    c_invert->add_option("--epsilon", invert.ga.epsilon, "fitness regularizer")
        ->capture_default_str();
    c_invert->add_option("--fitness-target", invert.fitness_target,
                         "stop once best fitness reaches this value");
    c_invert->add_option("--seed", invert.ga.rng_seed, "RNG seed")->capture_default_str();
    c_invert->add_option("--rows", invert.ga.rows, "grid rows (oracle evaluator)")
        ->capture_default_str();
    c_invert->add_option("--cols", invert.ga.cols, "grid columns (oracle evaluator)")
        ->capture_default_str();
    c_invert->add_option("--density-mean", invert.ga.density_mean,
                         "random layout density mean")
        ->capture_default_str();
    c_invert->add_option("--density-std", invert.ga.density_std,
                         "random layout density spread")
        ->capture_default_str();
    c_invert->add_option("--checkpoint", invert.checkpoint, "checkpoint JSON path");
    c_invert->add_option("--checkpoint-every", invert.checkpoint_every,
                         "generations between checkpoints (0 = off)")
        ->capture_default_str();
    c_invert->add_option("--resume", invert.resume, "resume from this checkpoint");
    c_invert->add_option("--log-every", invert.log_every, "print every Nth generation")
        ->capture_default_str();
    c_invert->add_option("--jobs", invert.jobs, "worker threads (0 = all)")
        ->capture_default_str();
    invert.oracle.attach(c_invert);
    std::string invert_profile;
    c_invert->add_option("--profile", invert_profile, "preset scale: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    c_invert->callback([&, c_invert] {
        if (invert_profile == "desk") {
            if (c_invert->count("--population") == 0) invert.ga.population = 200;
            if (c_invert->count("--iters") == 0) invert.ga.max_iters = 60;
            if (c_invert->count("--rows") == 0) invert.ga.rows = 8;
            if (c_invert->count("--cols") == 0) invert.ga.cols = 8;
        }
        invert.rows_set = c_invert->count("--rows") > 0;
        invert.cols_set = c_invert->count("--cols") > 0;
        rc = cmd_invert(invert);
    });

    // verify
    VerifyOpts verify;
    auto* c_verify = app.add_subcommand(
        "verify", "overlay a layout's predicted response against fresh simulation");
    c_verify->add_option("--target", verify.target, "combiner target JSON")->required();
    c_verify->add_option("--layout", verify.layout, "layout text file")->required();
    c_verify->add_option("--model", verify.model, "surrogate weights file");
    c_verify->add_option("--evaluator", verify.evaluator, "surrogate or oracle")
        ->check(CLI::IsMember({"surrogate", "oracle"}))
        ->capture_default_str();
    c_verify->add_option("--out", verify.out_overlay, "overlay CSV path");
    c_verify->add_option("--summary", verify.summary, "summary JSON path");
    c_verify->add_option("--epsilon", verify.epsilon, "fitness regularizer")
        ->capture_default_str();
    verify.oracle.attach(c_verify);
    c_verify->callback([&] { rc = cmd_verify(verify); });

    // export-touchstone
    ExportOpts exp;
    auto* c_exp = app.add_subcommand("export-touchstone",
                                     "simulate a layout and write a Touchstone file");
    c_exp->add_option("--layout", exp.layout, "layout text file")->required();
    c_exp->add_option("--out", exp.out, "output .s4p/.s2p path");
    c_exp->add_flag("--two-port", exp.two_port,
                    "reduce to the combiner 2-port before writing");
    c_exp->add_option("--format", exp.format, "data format: ri or ma")
        ->check(CLI::IsMember({"ri", "ma"}))
        ->capture_default_str();
    exp.oracle.attach(c_exp);
    exp.freqs.attach(c_exp);
    c_exp->callback([&] { rc = cmd_export_touchstone(exp); });

    // pipeline
    PipelineOpts pipeline;
    auto* c_pipe = app.add_subcommand(
        "pipeline", "synthesize, simulate, train, invert, and verify in one run");
    c_pipe->add_option("--loadpull", pipeline.loadpull, "load-pull JSON file")
        ->capture_default_str();
    c_pipe->add_option("--workdir", pipeline.workdir,
                       "directory for all stage outputs (default: output dir)");
    c_pipe->add_option("--profile", pipeline.profile, "preset scale: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}))
        ->capture_default_str();
    c_pipe->add_option("--seed", pipeline.seed, "RNG seed")->capture_default_str();
    c_pipe->add_option("--jobs", pipeline.jobs, "worker threads (0 = all)")
        ->capture_default_str();
    c_pipe->add_option("--n-structures", pipeline.n_structures,
                       "dataset structures (default from profile)");
    c_pipe->add_option("--epochs", pipeline.epochs, "training epochs (default from profile)");
    c_pipe->add_option("--population", pipeline.population,
                       "GA population (default from profile)");
    c_pipe->add_option("--iters", pipeline.iters, "GA generations (default from profile)");
    pipeline.freqs.attach(c_pipe);
    pipeline.oracle.attach(c_pipe);
    c_pipe->callback([&] { rc = cmd_pipeline(pipeline); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const doherty::NoRealSolution& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const loadpull::PowerMismatch& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const loadpull::NoSolution& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return rc;
}
