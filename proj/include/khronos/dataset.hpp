#pragma once

#include "khronos/training.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace khronos {

/// y = scale * x + offset, with exact inverse.
struct AffineMap {
    double scale = 1.0;
    double offset = 0.0;
    double apply(double x) const noexcept { return scale * x + offset; }
    double invert(double y) const noexcept { return (y - offset) / scale; }
};

/// Latin Hypercube sample: n x d matrix in [0,1]^d where each dimension's
/// values occupy the n strata [k/n,(k+1)/n) exactly once, jittered uniformly.
/// Deterministic per seed; per-entry jitter uses counter-based streams.
DataMatrix lhs_sample(std::size_t n, std::size_t d, std::uint64_t seed);

inline constexpr std::array<double, 8> kBoreholeLo = {0.05, 100, 63700, 990,
                                                      63.1, 700, 1120, 9855};
inline constexpr std::array<double, 8> kBoreholeHi = {0.15, 50000, 115600, 1110,
                                                      116, 820, 1680, 12045};

/// 8-dimensional borehole water-flow function, physical units. Rejects inputs
/// outside the standard ranges; borehole_formula skips the range check.
double borehole(std::span<const double> p);
double borehole_formula(std::span<const double> p);

/// 20-dimensional Sobol-G product function on [0,1]^20 with
/// a_i = 0 (i<=5), 3/2 (6..10), 4 (11..20).
double sobol_g(std::span<const double> p);

/// Add i.i.d. N(0, sigma^2) noise in place; entry i is keyed by (seed, i).
void add_noise(std::span<double> targets, double sigma, std::uint64_t seed);

/// R^2 = 1 - SS_res / SS_tot. Rejects zero-variance truth and length < 2.
double r2_score(std::span<const double> pred, std::span<const double> truth);
double mse(std::span<const double> pred, std::span<const double> truth);

/// Generated benchmark dataset: normalized inputs on [0,1]^P, normalized
/// targets, the affine maps used, and a deterministic 70/30 train/test split.
/// Noise (if any) is applied to raw targets before normalization; the clean
/// targets are kept alongside for clean-label metrics.
class Dataset {
public:
    DataMatrix inputs;                 // normalized
    std::vector<double> targets;       // normalized, noisy
    std::vector<double> targets_clean; // normalized with the same map
    std::vector<double> raw_targets;       // physical scale, noisy
    std::vector<double> raw_targets_clean; // physical scale
    std::vector<AffineMap> input_maps;  // normalized -> physical
    AffineMap target_map;               // raw -> normalized
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;

    std::string generator;
    std::uint64_t seed = 0;
    double sigma = 0.0;

    std::size_t rows() const noexcept { return inputs.rows; }
    std::size_t dims() const noexcept { return inputs.cols; }

    /// Gather a row subset as a dense matrix + target vector.
    DataMatrix gather_inputs(std::span<const std::size_t> rows_sel) const;
    std::vector<double> gather(std::span<const double> values,
                               std::span<const std::size_t> rows_sel) const;

    /// Row access tracking for tests that prove training never reads the
    /// test split. Off by default.
    void enable_tracking() const;
    std::span<const std::size_t> touched_rows() const;

private:
    mutable bool tracking_ = false;
    mutable std::vector<std::size_t> touched_;
    friend Dataset finalize_dataset(Dataset d);
};

/// Generate the borehole dataset: n LHS points, exact targets, min-max target
/// normalization fit on the 70% train split.
Dataset make_borehole_dataset(std::size_t n, std::uint64_t seed);

/// Generate the noisy Sobol-G dataset (sigma on the raw scale).
Dataset make_sobolg_dataset(std::size_t n, std::uint64_t seed, double sigma = 0.01);

/// Binary dataset cache: header (generator, n, d, seed, sigma, input maps)
/// plus row-major doubles. Round-trips the generated data exactly.
void save_dataset_cache(const Dataset& data, const std::string& path);
Dataset load_dataset_cache(const std::string& path);

/// Full model-free benchmark pipeline: sample, normalize, split, train
/// cooperatively, evaluate on the held-out split.
struct BenchConfig {
    std::size_t samples = 100000;
    int modes = 3;
    int elements = 2;
    int epochs = 1000;
    double lr_start = 0.15;
    double lr_end = 0.05;
    double sigma = 0.01;  // sobol only
    std::uint64_t seed = 7;
    int batch = 0;
    int threads = 0;
};

struct BenchReport {
    std::string name;
    std::size_t samples = 0;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    std::size_t params_total = 0;
    int modes = 0;
    int elements = 0;
    int epochs = 0;
    double test_mse = 0.0;        // normalized scale, against (noisy) labels
    double test_mse_clean = 0.0;  // normalized scale, against clean labels
    double test_mse_raw = 0.0;
    double test_mse_clean_raw = 0.0;
    double test_r2 = 0.0;
    double test_r2_clean = 0.0;
    double train_loss = 0.0;
    double wall_train_s = 0.0;
    double wall_data_s = 0.0;
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

BenchReport run_borehole_bench(const BenchConfig& cfg);
BenchReport run_sobolg_bench(const BenchConfig& cfg);

/// Shared tail of the benchmark pipeline, also used for custom datasets.
BenchReport run_regression_bench(const Dataset& data, const BenchConfig& cfg,
                                 const std::string& name);

}  // namespace khronos
