// khronos: separable kernel-expansion surrogates
//
// Subcommands: fit, solve-poisson, invert, bench-borehole, bench-sobolg.
// Every run writes its result tables (CSV), a JSON summary, and a metadata
// file carrying the seed, the full effective configuration, and its hash.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include "khronos/dataset.hpp"
#include "khronos/inversion.hpp"
#include "khronos/parallel.hpp"
#include "khronos/poisson.hpp"
#include "khronos/report.hpp"
#include "khronos/rng.hpp"
#include "khronos/surrogate.hpp"
#include "khronos/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace khronos;

namespace {

constexpr const char* kVersion = "0.1.0";

std::uint64_t hash_of(const json& config) { return config_hash(config.dump()); }

void write_metadata(const fs::path& dir, const std::string& command, const json& config) {
    json meta;
    meta["command"] = command;
    meta["config"] = config;
    meta["config_hash"] = hash_hex(hash_of(config));
    meta["library_version"] = kVersion;
    meta["threads"] = default_thread_count();
    write_text_file((dir / (command + "_metadata.json")).string(), meta.dump(2) + "\n");
}

void write_json(const fs::path& path, json payload, const json& config) {
    payload["config_hash"] = hash_hex(hash_of(config));
    write_text_file(path.string(), payload.dump(2) + "\n");
}

void write_history_csv(const fs::path& path, const std::vector<double>& losses, int epochs,
                       double lr_start, double lr_end, std::uint64_t hash) {
    CsvWriter csv({"epoch", "lr", "loss"}, hash);
    for (std::size_t e = 0; e < losses.size(); ++e) {
        csv.add_row({static_cast<double>(e), cosine_lr(static_cast<int>(e), epochs, lr_start, lr_end),
                     losses[e]});
    }
    csv.write(path.string());
}

fs::path prepare_out(const std::string& out) {
    fs::path dir(out);
    fs::create_directories(dir);
    return dir;
}

json bench_config_json(const BenchConfig& cfg, const std::string& name) {
    json j;
    j["benchmark"] = name;
    j["samples"] = cfg.samples;
    j["modes"] = cfg.modes;
    j["elements"] = cfg.elements;
    j["epochs"] = cfg.epochs;
    j["lr_start"] = cfg.lr_start;
    j["lr_end"] = cfg.lr_end;
    j["sigma"] = cfg.sigma;
    j["seed"] = cfg.seed;
    j["batch"] = cfg.batch;
    return j;
}

void emit_bench_outputs(const fs::path& dir, const std::string& name, const BenchReport& report,
                        const json& config) {
    const std::uint64_t hash = hash_of(config);
    CsvWriter csv({"dof", "epochs", "test_mse", "test_mse_clean", "wall_time_s", "params_total",
                   "params_free", "r2"},
                  hash);
    csv.add_row({static_cast<double>(report.params_total), static_cast<double>(report.epochs),
                 report.test_mse, report.test_mse_clean, report.wall_train_s,
                 static_cast<double>(report.params_total), static_cast<double>(report.params_total),
                 report.test_r2});
    csv.write((dir / (name + "_report.csv")).string());

    json j;
    j["benchmark"] = report.name;
    j["samples"] = report.samples;
    j["train_rows"] = report.train_rows;
    j["test_rows"] = report.test_rows;
    j["parameter_count"] = report.params_total;
    j["modes"] = report.modes;
    j["elements"] = report.elements;
    j["epochs"] = report.epochs;
    j["sigma"] = report.sigma;
    j["seed"] = report.seed;
    j["test_mse_normalized"] = report.test_mse;
    j["test_mse_clean_normalized"] = report.test_mse_clean;
    j["test_mse_raw"] = report.test_mse_raw;
    j["test_mse_clean_raw"] = report.test_mse_clean_raw;
    j["test_r2"] = report.test_r2;
    j["test_r2_clean"] = report.test_r2_clean;
    j["train_loss"] = report.train_loss;
    j["wall_train_s"] = report.wall_train_s;
    j["wall_data_s"] = report.wall_data_s;
    write_json(dir / (name + "_summary.json"), j, config);
}

int run_bench(const BenchConfig& cfg, const std::string& name, const std::string& out,
              const std::string& save_data) {
    const fs::path dir = prepare_out(out);
    const json config = bench_config_json(cfg, name);
    if (!save_data.empty()) {
        const Dataset data = name == "borehole" ? make_borehole_dataset(cfg.samples, cfg.seed)
                                                : make_sobolg_dataset(cfg.samples, cfg.seed, cfg.sigma);
        save_dataset_cache(data, save_data);
    }
    const BenchReport report =
        name == "borehole" ? run_borehole_bench(cfg) : run_sobolg_bench(cfg);
    emit_bench_outputs(dir, name, report, config);
    write_metadata(dir, "bench-" + name, config);
    std::printf("%s: params=%zu test MSE=%.3e (clean %.3e) R2=%.6f [%.1fs train]\n", name.c_str(),
                report.params_total, report.test_mse, report.test_mse_clean, report.test_r2,
                report.wall_train_s);
    return 0;
}

int run_poisson(const std::vector<int>& dofs, PoissonOptions base, const std::string& out) {
    const fs::path dir = prepare_out(out);
    json config;
    config["dof"] = dofs;
    config["modes"] = base.modes;
    config["epochs"] = base.epochs;
    config["lr_start"] = base.lr_start;
    config["lr_end"] = base.lr_end;
    config["n_gauss"] = base.n_gauss;
    config["src_gauss"] = base.src_gauss;
    config["grid_n"] = base.grid_n;
    config["seed"] = base.seed;
    config["alpha_data"] = base.alpha_data;
    config["alpha_model"] = base.alpha_model;
    config["data_samples"] = base.data_samples;
    const std::uint64_t hash = hash_of(config);

    CsvWriter csv({"dof", "epochs", "L2sq", "H1sq", "wall_time_s", "params_total", "params_free"},
                  hash);
    json rows = json::array();
    for (const int dof : dofs) {
        PoissonOptions opts = base;
        opts.dof = dof;
        const PoissonResult res = solve_poisson(opts);
        csv.add_row({static_cast<double>(dof), static_cast<double>(opts.epochs), res.l2_sq,
                     res.h1_sq, res.wall_train_s, static_cast<double>(res.params_total),
                     static_cast<double>(res.params_free)});
        json row;
        row["dof"] = dof;
        row["n_elements"] = res.n_elements;
        row["L2sq"] = res.l2_sq;
        row["H1sq"] = res.h1_sq;
        row["energy_initial"] = res.energy_initial;
        row["energy_final"] = res.energy_final;
        row["params_total"] = res.params_total;
        row["params_free"] = res.params_free;
        row["wall_train_s"] = res.wall_train_s;
        row["wall_metrics_s"] = res.wall_metrics_s;
        rows.push_back(row);
        res.surrogate.save((dir / ("poisson_surrogate_dof" + std::to_string(dof) + ".json")).string());
        write_history_csv(dir / ("poisson_history_dof" + std::to_string(dof) + ".csv"),
                          res.energy_history, opts.epochs, opts.lr_start, opts.lr_end, hash);
        std::printf("poisson dof=%4d  L2^2=%.3e  H1^2=%.3e  [%.2fs]\n", dof, res.l2_sq, res.h1_sq,
                    res.wall_train_s);
    }
    csv.write((dir / "poisson.csv").string());
    json summary;
    summary["rows"] = rows;
    write_json(dir / "poisson_summary.json", summary, config);
    write_metadata(dir, "solve-poisson", config);
    return 0;
}

int run_invert(const std::vector<int>& batches, const ToyConfig& toy, double target, int iters,
               double fail_threshold, const std::string& surrogate_path, const std::string& out) {
    const fs::path dir = prepare_out(out);
    json config;
    config["batches"] = batches;
    config["target"] = target;
    config["iters"] = iters;
    config["fail_threshold"] = fail_threshold;
    config["toy_samples"] = toy.samples;
    config["toy_elements"] = toy.elements;
    config["toy_modes"] = toy.modes;
    config["toy_epochs"] = toy.epochs;
    config["seed"] = toy.seed;
    config["surrogate"] = surrogate_path;
    const std::uint64_t hash = hash_of(config);

    Surrogate surrogate = [&] {
        if (!surrogate_path.empty()) return Surrogate::load(surrogate_path);
        ToyModel model = make_inversion_toy(toy);
        std::printf("toy surrogate trained: MSE=%.3e [%.1fs]\n", model.train_mse,
                    model.wall_train_s);
        return std::move(model.surrogate);
    }();
    if (surrogate.dims() != 2) {
        throw std::runtime_error("invert: a 2D surrogate is required");
    }
    surrogate.save((dir / "invert_surrogate.json").string());

    json rows = json::array();
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
        const int batch = batches[bi];
        InversionJob job;
        job.targets = {target};
        job.init_points = lhs_sample(static_cast<std::size_t>(batch), 2, rng::key(toy.seed, bi));
        job.max_iters = iters;
        job.fail_threshold = fail_threshold;
        const InversionResult res = invert_batch(surrogate, job);

        json row;
        row["batch"] = batch;
        row["total_ms"] = res.wall_time_s * 1e3;
        row["per_point_us"] = res.wall_time_s * 1e6 / batch;
        row["failure_pct"] = res.failure_rate * 100.0;
        row["rmse"] = res.rmse;
        row["rmse_converged"] = res.rmse_converged;
        rows.push_back(row);

        CsvWriter points({"x", "y", "residual", "converged"}, hash);
        for (std::size_t i = 0; i < res.final_points.rows; ++i) {
            points.add_row({res.final_points.values[2 * i], res.final_points.values[2 * i + 1],
                            res.residuals[i], res.converged[i] ? 1.0 : 0.0});
        }
        points.write((dir / ("invert_points_" + std::to_string(batch) + ".csv")).string());
        std::printf("invert batch=%6d  failure=%.2f%%  rmse=%.2e  [%.1fms]\n", batch,
                    res.failure_rate * 100.0, res.rmse, res.wall_time_s * 1e3);
    }
    json summary;
    summary["rows"] = rows;
    write_json(dir / "invert_summary.json", summary, config);
    write_metadata(dir, "invert", config);
    return 0;
}

int run_fit(const std::string& data_path, int modes, int elements, TrainConfig tc,
            bool sequential, const std::string& out) {
    const fs::path dir = prepare_out(out);
    const Dataset data = load_dataset_cache(data_path);
    const SurrogateConfig model_cfg =
        SurrogateConfig::uniform(static_cast<int>(data.dims()), modes, elements);

    json config;
    config["data"] = data_path;
    config["generator"] = data.generator;
    config["modes"] = model_cfg.modes;
    config["elements"] = model_cfg.elements[0][0];
    config["epochs"] = tc.epochs;
    config["lr_start"] = tc.lr_start;
    config["lr_end"] = tc.lr_end;
    config["batch"] = tc.batch;
    config["seed"] = tc.seed;
    config["sequential"] = sequential;
    config["seq_tolerance"] = tc.seq_tolerance;
    config["max_modes"] = tc.max_modes;
    const std::uint64_t hash = hash_of(config);

    const DataMatrix train_x = data.gather_inputs(data.train_idx);
    const std::vector<double> train_y = data.gather(data.targets, data.train_idx);

    Surrogate s = [&] {
        if (sequential) {
            auto [merged, report] = train_sequential(model_cfg, tc, train_x, train_y);
            write_history_csv(dir / "fit_history.csv", report.loss_history, tc.epochs, tc.lr_start,
                              tc.lr_end, hash);
            json summary;
            summary["final_loss"] = report.final_loss;
            summary["wall_time_s"] = report.wall_time_s;
            summary["modes_used"] = report.modes_used;
            summary["tolerance_met"] = report.tolerance_met;
            summary["residual_history"] = report.residual_history;
            summary["parameter_count"] = merged.param_count();
            write_json(dir / "fit_summary.json", summary, config);
            return std::move(merged);
        }
        Surrogate model(model_cfg, tc.seed);
        const TrainReport report = train_cooperative(model, tc, train_x, train_y);
        write_history_csv(dir / "fit_history.csv", report.loss_history, tc.epochs, tc.lr_start,
                          tc.lr_end, hash);
        json summary;
        summary["final_loss"] = report.final_loss;
        summary["wall_time_s"] = report.wall_time_s;
        summary["modes_used"] = report.modes_used;
        summary["parameter_count"] = model.param_count();
        write_json(dir / "fit_summary.json", summary, config);
        return model;
    }();

    // held-out metrics on the cached split
    const DataMatrix test_x = data.gather_inputs(data.test_idx);
    const std::vector<double> test_y = data.gather(data.targets, data.test_idx);
    DataEvaluator eval(s, test_x);
    std::vector<std::size_t> ids(test_x.rows);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::vector<double> pred(test_x.rows);
    ThreadPool pool(default_thread_count());
    eval.predict(s, ids, pred, &pool);

    CsvWriter csv({"dof", "epochs", "test_mse", "wall_time_s", "params_total", "r2"}, hash);
    csv.add_row({static_cast<double>(s.param_count()), static_cast<double>(tc.epochs),
                 mse(pred, test_y), 0.0, static_cast<double>(s.param_count()),
                 r2_score(pred, test_y)});
    csv.write((dir / "fit_report.csv").string());

    s.save((dir / "fit_surrogate.json").string());
    write_metadata(dir, "fit", config);
    std::printf("fit: params=%zu test MSE=%.3e R2=%.6f\n", s.param_count(), mse(pred, test_y),
                r2_score(pred, test_y));
    return 0;
}

std::vector<int> parse_int_list(const std::string& csv_list) {
    std::vector<int> out;
    std::string token;
    for (const char c : csv_list + ",") {
        if (c == ',') {
            if (!token.empty()) out.push_back(std::stoi(token));
            token.clear();
        } else {
            token += c;
        }
    }
    if (out.empty()) throw CLI::ValidationError("expected a comma-separated integer list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KHRONOS separable kernel-expansion surrogates"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string out = ".";
    std::uint64_t seed = 7;
    app.add_option("--out", out, "output directory")->capture_default_str();
    app.add_option("--seed", seed, "RNG seed recorded in all outputs")->capture_default_str();

    // fit
    auto* fit = app.add_subcommand("fit", "train on a cached dataset (model-free MSE)");
    std::string fit_data;
    int fit_modes = 1, fit_elements = 8, fit_epochs = 1000, fit_batch = 0, fit_max_modes = 8;
    double fit_lr0 = 0.15, fit_lr1 = 0.05, fit_tol = 1e-6;
    bool fit_sequential = false;
    fit->add_option("--data", fit_data, "dataset cache file")->required();
    fit->add_option("--modes", fit_modes)->capture_default_str();
    fit->add_option("--elements", fit_elements)->capture_default_str();
    fit->add_option("--epochs", fit_epochs)->capture_default_str();
    fit->add_option("--batch", fit_batch, "mini-batch size (0 = full batch)")->capture_default_str();
    fit->add_option("--lr-start", fit_lr0)->capture_default_str();
    fit->add_option("--lr-end", fit_lr1)->capture_default_str();
    fit->add_flag("--sequential", fit_sequential, "greedy mode-by-mode training");
    fit->add_option("--seq-tol", fit_tol, "sequential residual tolerance")->capture_default_str();
    fit->add_option("--max-modes", fit_max_modes)->capture_default_str();

    // solve-poisson
    auto* poisson = app.add_subcommand("solve-poisson", "energy-minimization Poisson ladder");
    std::string dof_list = "16,32,64,128,256,512";
    PoissonOptions popts;
    poisson->add_option("--dof", dof_list, "comma-separated DoF ladder")->capture_default_str();
    poisson->add_option("--epochs", popts.epochs)->capture_default_str();
    poisson->add_option("--modes", popts.modes)->capture_default_str();
    poisson->add_option("--lr-start", popts.lr_start)->capture_default_str();
    poisson->add_option("--lr-end", popts.lr_end)->capture_default_str();
    poisson->add_option("--grid", popts.grid_n, "error metric grid resolution")->capture_default_str();
    poisson->add_option("--alpha-data", popts.alpha_data, "mixed loss data weight")
        ->capture_default_str();
    poisson->add_option("--alpha-model", popts.alpha_model, "mixed loss energy weight")
        ->capture_default_str();
    poisson->add_option("--data-samples", popts.data_samples, "LHS samples for the data term")
        ->capture_default_str();

    // invert
    auto* invert = app.add_subcommand("invert", "batched Gauss-Newton level-set recovery");
    std::string batch_list = "500,1000,2000,4000,8000,16000";
    ToyConfig toy;
    double target = 0.0, fail_threshold = 1e-3;
    int iters = 10;
    std::string surrogate_path;
    invert->add_option("--batch", batch_list, "comma-separated batch sizes")->capture_default_str();
    invert->add_option("--iters", iters)->capture_default_str();
    invert->add_option("--target", target, "level-set value z")->capture_default_str();
    invert->add_option("--fail-threshold", fail_threshold)->capture_default_str();
    invert->add_option("--samples", toy.samples, "toy training samples")->capture_default_str();
    invert->add_option("--elements", toy.elements)->capture_default_str();
    invert->add_option("--modes", toy.modes)->capture_default_str();
    invert->add_option("--epochs", toy.epochs)->capture_default_str();
    invert->add_option("--surrogate", surrogate_path, "load a trained surrogate instead");

    // bench-borehole
    auto* borehole_cmd = app.add_subcommand("bench-borehole", "8D borehole regression benchmark");
    BenchConfig bore_cfg;
    bore_cfg.modes = 3;
    bore_cfg.elements = 2;
    bore_cfg.sigma = 0.0;
    std::string bore_save;
    borehole_cmd->add_option("--samples", bore_cfg.samples)->capture_default_str();
    borehole_cmd->add_option("--modes", bore_cfg.modes)->capture_default_str();
    borehole_cmd->add_option("--elements", bore_cfg.elements)->capture_default_str();
    borehole_cmd->add_option("--epochs", bore_cfg.epochs)->capture_default_str();
    borehole_cmd->add_option("--batch", bore_cfg.batch)->capture_default_str();
    borehole_cmd->add_option("--lr-start", bore_cfg.lr_start)->capture_default_str();
    borehole_cmd->add_option("--lr-end", bore_cfg.lr_end)->capture_default_str();
    borehole_cmd->add_option("--save-data", bore_save, "also write the dataset cache here");

    // bench-sobolg
    auto* sobol_cmd = app.add_subcommand("bench-sobolg", "noisy 20D Sobol-G regression benchmark");
    BenchConfig sobol_cfg;
    sobol_cfg.modes = 1;
    sobol_cfg.elements = 40;
    sobol_cfg.sigma = 0.01;
    sobol_cfg.seed = 11;
    std::string sobol_save;
    sobol_cmd->add_option("--samples", sobol_cfg.samples)->capture_default_str();
    sobol_cmd->add_option("--modes", sobol_cfg.modes)->capture_default_str();
    sobol_cmd->add_option("--elements", sobol_cfg.elements)->capture_default_str();
    sobol_cmd->add_option("--epochs", sobol_cfg.epochs)->capture_default_str();
    sobol_cmd->add_option("--batch", sobol_cfg.batch)->capture_default_str();
    sobol_cmd->add_option("--sigma", sobol_cfg.sigma)->capture_default_str();
    sobol_cmd->add_option("--lr-start", sobol_cfg.lr_start)->capture_default_str();
    sobol_cmd->add_option("--lr-end", sobol_cfg.lr_end)->capture_default_str();
    sobol_cmd->add_option("--save-data", sobol_save, "also write the dataset cache here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*fit) {
            TrainConfig tc;
            tc.epochs = fit_epochs;
            tc.lr_start = fit_lr0;
            tc.lr_end = fit_lr1;
            tc.batch = fit_batch;
            tc.seed = seed;
            tc.seq_tolerance = fit_tol;
            tc.max_modes = fit_max_modes;
            return run_fit(fit_data, fit_modes, fit_elements, tc, fit_sequential, out);
        }
        if (*poisson) {
            popts.seed = seed;
            return run_poisson(parse_int_list(dof_list), popts, out);
        }
        if (*invert) {
            toy.seed = seed;
            return run_invert(parse_int_list(batch_list), toy, target, iters, fail_threshold,
                              surrogate_path, out);
        }
        if (*borehole_cmd) {
            bore_cfg.seed = seed;
            return run_bench(bore_cfg, "borehole", out, bore_save);
        }
        if (*sobol_cmd) {
            sobol_cfg.seed = seed;
            return run_bench(sobol_cfg, "sobol_g", out, sobol_save);
        }
    } catch (const std::exception& e) {
        json err;
        err["error"] = e.what();
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 2;
}
