#include "khronos/dataset.hpp"

#include "khronos/parallel.hpp"
#include "khronos/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace khronos {

namespace {

constexpr std::uint64_t kPermTag = 0x7065726dULL;    // "perm"
constexpr std::uint64_t kJitterTag = 0x6a697474ULL;  // "jitt"
constexpr std::uint64_t kSplitTag = 0x73706c74ULL;   // "splt"

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

DataMatrix lhs_sample(std::size_t n, std::size_t d, std::uint64_t seed) {
    if (n < 1 || d < 1) throw std::invalid_argument("lhs_sample: n and d must be >= 1");
    DataMatrix out(n, d);
    std::vector<std::size_t> perm(n);
    for (std::size_t k = 0; k < d; ++k) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng::SplitMix64 stream(rng::key(seed, k, kPermTag));
        rng::shuffle(std::span<std::size_t>(perm), stream);
        for (std::size_t i = 0; i < n; ++i) {
            const double jitter = rng::u01(rng::key(seed, kJitterTag, k), i);
            out.values[i * d + k] =
                (static_cast<double>(perm[i]) + jitter) / static_cast<double>(n);
        }
    }
    return out;
}

double borehole_formula(std::span<const double> p) {
    if (p.size() != 8) throw std::invalid_argument("borehole: needs 8 inputs");
    const double log_ratio = std::log(p[1] / p[0]);
    const double numerator = 2.0 * std::numbers::pi * p[2] * (p[3] - p[5]);
    const double denominator =
        log_ratio * (1.0 + 2.0 * p[6] * p[2] / (log_ratio * p[0] * p[0] * p[7]) + p[2] / p[4]);
    return numerator / denominator;
}

double borehole(std::span<const double> p) {
    if (p.size() != 8) throw std::invalid_argument("borehole: needs 8 inputs");
    for (std::size_t i = 0; i < 8; ++i) {
        if (!(p[i] >= kBoreholeLo[i] && p[i] <= kBoreholeHi[i])) {
            throw std::domain_error("borehole: input " + std::to_string(i) + " out of range");
        }
    }
    return borehole_formula(p);
}

double sobol_g(std::span<const double> p) {
    if (p.size() != 20) throw std::invalid_argument("sobol_g: needs 20 inputs");
    double prod = 1.0;
    for (std::size_t i = 0; i < 20; ++i) {
        const double a = i < 5 ? 0.0 : (i < 10 ? 1.5 : 4.0);
        prod *= (std::abs(4.0 * p[i] - 2.0) + a) / (1.0 + a);
    }
    return prod;
}

void add_noise(std::span<double> targets, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("add_noise: sigma must be >= 0");
    if (sigma == 0.0) return;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        targets[i] += sigma * rng::gaussian(seed, i);
    }
}

double mse(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size() || pred.size() < 2) {
        throw std::invalid_argument("mse: need equal lengths >= 2");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.size());
}

double r2_score(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size() || pred.size() < 2) {
        throw std::invalid_argument("r2_score: need equal lengths >= 2");
    }
    double mean = 0.0;
    for (const double t : truth) mean += t;
    mean /= static_cast<double>(truth.size());
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ss_res += (pred[i] - truth[i]) * (pred[i] - truth[i]);
        ss_tot += (truth[i] - mean) * (truth[i] - mean);
    }
    if (ss_tot == 0.0) throw std::invalid_argument("r2_score: truth has zero variance");
    return 1.0 - ss_res / ss_tot;
}

DataMatrix Dataset::gather_inputs(std::span<const std::size_t> rows_sel) const {
    DataMatrix out(rows_sel.size(), inputs.cols);
    for (std::size_t i = 0; i < rows_sel.size(); ++i) {
        const auto src = inputs.row(rows_sel[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
        if (tracking_) touched_.push_back(rows_sel[i]);
    }
    return out;
}

std::vector<double> Dataset::gather(std::span<const double> values,
                                    std::span<const std::size_t> rows_sel) const {
    std::vector<double> out(rows_sel.size());
    for (std::size_t i = 0; i < rows_sel.size(); ++i) {
        out[i] = values[rows_sel[i]];
        if (tracking_) touched_.push_back(rows_sel[i]);
    }
    return out;
}

void Dataset::enable_tracking() const {
    tracking_ = true;
    touched_.clear();
}

std::span<const std::size_t> Dataset::touched_rows() const { return touched_; }

/// Split rows 70/30 with a seeded shuffle and fit the target map on the
/// training rows, filling the normalized target arrays.
Dataset finalize_dataset(Dataset d) {
    const std::size_t n = d.rows();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng::SplitMix64 stream(rng::key(d.seed, kSplitTag));
    rng::shuffle(std::span<std::size_t>(order), stream);
    const std::size_t n_train = (n * 7) / 10;
    d.train_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    d.test_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

    double lo = d.raw_targets[d.train_idx.front()];
    double hi = lo;
    for (const std::size_t i : d.train_idx) {
        lo = std::min(lo, d.raw_targets[i]);
        hi = std::max(hi, d.raw_targets[i]);
    }
    if (!(hi > lo)) throw std::runtime_error("dataset: degenerate target range");
    d.target_map.scale = 1.0 / (hi - lo);
    d.target_map.offset = -lo / (hi - lo);

    d.targets.resize(n);
    d.targets_clean.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.targets[i] = d.target_map.apply(d.raw_targets[i]);
        d.targets_clean[i] = d.target_map.apply(d.raw_targets_clean[i]);
    }
    return d;
}

Dataset make_borehole_dataset(std::size_t n, std::uint64_t seed) {
    Dataset d;
    d.generator = "borehole";
    d.seed = seed;
    d.sigma = 0.0;
    d.inputs = lhs_sample(n, 8, seed);
    d.input_maps.resize(8);
    for (std::size_t k = 0; k < 8; ++k) {
        d.input_maps[k] = AffineMap{kBoreholeHi[k] - kBoreholeLo[k], kBoreholeLo[k]};
    }
    d.raw_targets_clean.resize(n);
    std::array<double, 8> phys{};
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = d.inputs.row(i);
        for (std::size_t k = 0; k < 8; ++k) phys[k] = d.input_maps[k].apply(row[k]);
        d.raw_targets_clean[i] = borehole_formula(phys);
    }
    d.raw_targets = d.raw_targets_clean;
    return finalize_dataset(std::move(d));
}

Dataset make_sobolg_dataset(std::size_t n, std::uint64_t seed, double sigma) {
    Dataset d;
    d.generator = "sobol_g";
    d.seed = seed;
    d.sigma = sigma;
    d.inputs = lhs_sample(n, 20, seed);
    d.input_maps.assign(20, AffineMap{1.0, 0.0});
    d.raw_targets_clean.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.raw_targets_clean[i] = sobol_g(d.inputs.row(i));
    }
    d.raw_targets = d.raw_targets_clean;
    add_noise(d.raw_targets, sigma, rng::key(seed, 0x6e6f6973ULL));
    return finalize_dataset(std::move(d));
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
}

constexpr char kCacheMagic[8] = {'K', 'H', 'D', 'S', 'E', 'T', '0', '1'};

}  // namespace

void save_dataset_cache(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset_cache: cannot open " + path);
    out.write(kCacheMagic, sizeof(kCacheMagic));
    write_pod(out, static_cast<std::uint64_t>(data.rows()));
    write_pod(out, static_cast<std::uint64_t>(data.dims()));
    write_pod(out, data.seed);
    write_pod(out, data.sigma);
    const auto name_len = static_cast<std::uint32_t>(data.generator.size());
    write_pod(out, name_len);
    out.write(data.generator.data(), name_len);
    for (const AffineMap& map : data.input_maps) {
        write_pod(out, map.scale);
        write_pod(out, map.offset);
    }
    out.write(reinterpret_cast<const char*>(data.inputs.values.data()),
              static_cast<std::streamsize>(data.inputs.values.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(data.raw_targets.data()),
              static_cast<std::streamsize>(data.raw_targets.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(data.raw_targets_clean.data()),
              static_cast<std::streamsize>(data.raw_targets_clean.size() * sizeof(double)));
    if (!out) throw std::runtime_error("save_dataset_cache: write failed");
}

Dataset load_dataset_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset_cache: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0) {
        throw std::runtime_error("load_dataset_cache: bad header in " + path);
    }
    Dataset d;
    const auto n = read_pod<std::uint64_t>(in);
    const auto dims = read_pod<std::uint64_t>(in);
    d.seed = read_pod<std::uint64_t>(in);
    d.sigma = read_pod<double>(in);
    const auto name_len = read_pod<std::uint32_t>(in);
    d.generator.resize(name_len);
    in.read(d.generator.data(), name_len);
    d.input_maps.resize(dims);
    for (auto& map : d.input_maps) {
        map.scale = read_pod<double>(in);
        map.offset = read_pod<double>(in);
    }
    d.inputs = DataMatrix(n, dims);
    in.read(reinterpret_cast<char*>(d.inputs.values.data()),
            static_cast<std::streamsize>(n * dims * sizeof(double)));
    d.raw_targets.resize(n);
    in.read(reinterpret_cast<char*>(d.raw_targets.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    d.raw_targets_clean.resize(n);
    in.read(reinterpret_cast<char*>(d.raw_targets_clean.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("load_dataset_cache: truncated file " + path);
    return finalize_dataset(std::move(d));
}

BenchReport run_regression_bench(const Dataset& data, const BenchConfig& cfg,
                                 const std::string& name) {
    BenchReport report;
    report.name = name;
    report.samples = data.rows();
    report.train_rows = data.train_idx.size();
    report.test_rows = data.test_idx.size();
    report.modes = cfg.modes;
    report.elements = cfg.elements;
    report.epochs = cfg.epochs;
    report.sigma = data.sigma;
    report.seed = cfg.seed;

    const DataMatrix train_x = data.gather_inputs(data.train_idx);
    const std::vector<double> train_y = data.gather(data.targets, data.train_idx);

    Surrogate s(SurrogateConfig::uniform(static_cast<int>(data.dims()), cfg.modes, cfg.elements),
                cfg.seed);
    report.params_total = s.param_count();

    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.lr_start = cfg.lr_start;
    tc.lr_end = cfg.lr_end;
    tc.seed = cfg.seed;
    tc.batch = cfg.batch;
    tc.threads = cfg.threads;
    const TrainReport train_report = train_cooperative(s, tc, train_x, train_y);
    report.train_loss = train_report.final_loss;
    report.wall_train_s = train_report.wall_time_s;

    const auto t0 = std::chrono::steady_clock::now();
    const DataMatrix test_x = data.gather_inputs(data.test_idx);
    const std::vector<double> test_y = data.gather(data.targets, data.test_idx);
    const std::vector<double> test_y_clean = data.gather(data.targets_clean, data.test_idx);

    DataEvaluator eval(s, test_x);
    std::vector<std::size_t> ids(test_x.rows);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::vector<double> pred(test_x.rows);
    ThreadPool pool(cfg.threads > 0 ? cfg.threads : default_thread_count());
    eval.predict(s, ids, pred, &pool);

    report.test_mse = mse(pred, test_y);
    report.test_mse_clean = mse(pred, test_y_clean);
    report.test_r2 = r2_score(pred, test_y);
    report.test_r2_clean = r2_score(pred, test_y_clean);

    // raw-scale metrics via the inverse target map
    std::vector<double> pred_raw(pred.size());
    std::vector<double> y_raw(pred.size());
    std::vector<double> y_clean_raw(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred_raw[i] = data.target_map.invert(pred[i]);
        y_raw[i] = data.target_map.invert(test_y[i]);
        y_clean_raw[i] = data.target_map.invert(test_y_clean[i]);
    }
    report.test_mse_raw = mse(pred_raw, y_raw);
    report.test_mse_clean_raw = mse(pred_raw, y_clean_raw);
    report.wall_data_s = seconds_since(t0);
    return report;
}

BenchReport run_borehole_bench(const BenchConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset data = make_borehole_dataset(cfg.samples, cfg.seed);
    const double data_s = seconds_since(t0);
    BenchReport report = run_regression_bench(data, cfg, "borehole");
    report.wall_data_s += data_s;
    return report;
}

BenchReport run_sobolg_bench(const BenchConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset data = make_sobolg_dataset(cfg.samples, cfg.seed, cfg.sigma);
    const double data_s = seconds_since(t0);
    BenchReport report = run_regression_bench(data, cfg, "sobol_g");
    report.wall_data_s += data_s;
    return report;
}

}  // namespace khronos
