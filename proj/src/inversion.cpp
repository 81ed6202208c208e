#include "khronos/inversion.hpp"

#include "khronos/dataset.hpp"
#include "khronos/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace khronos {

namespace {

constexpr std::size_t kPointChunk = 512;

double median_of(std::vector<double> values) {
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid),
                     values.end());
    double m = values[mid];
    if (values.size() % 2 == 0) {
        const auto lower = std::max_element(values.begin(),
                                            values.begin() + static_cast<std::ptrdiff_t>(mid));
        m = 0.5 * (m + *lower);
    }
    return m;
}

}  // namespace

std::vector<double> gauss_newton_step(const Surrogate& s, std::span<const double> x, double z,
                                      double grad_floor) {
    std::vector<double> grad(static_cast<std::size_t>(s.dims()));
    const double value = s.forward_and_grad_input(x, grad);
    double grad_sq = 0.0;
    for (const double g : grad) grad_sq += g * g;
    const double step = (value - z) / std::max(grad_sq, grad_floor);
    std::vector<double> next(x.begin(), x.end());
    for (std::size_t p = 0; p < next.size(); ++p) {
        next[p] = std::clamp(next[p] - step * grad[p], 0.0, 1.0);
    }
    return next;
}

InversionResult invert_batch(const Surrogate& s, const InversionJob& job) {
    const std::size_t batch = job.init_points.rows;
    if (batch == 0) throw std::invalid_argument("invert_batch: empty batch");
    if (job.init_points.cols != static_cast<std::size_t>(s.dims())) {
        throw std::invalid_argument("invert_batch: point dimension mismatch");
    }
    if (job.max_iters < 1) throw std::invalid_argument("invert_batch: max_iters must be >= 1");
    std::vector<double> targets = job.targets;
    if (targets.size() == 1) targets.assign(batch, targets.front());
    if (targets.size() != batch) {
        throw std::invalid_argument("invert_batch: target count must match batch (or be 1)");
    }

    const auto t0 = std::chrono::steady_clock::now();
    const int P = s.dims();
    InversionResult result;
    result.final_points = job.init_points;
    result.residuals.assign(batch, 0.0);
    result.converged.assign(batch, false);

    // optional per-iteration residual snapshots for the median trace
    std::vector<std::vector<double>> iter_residuals;
    if (job.track_median) {
        iter_residuals.assign(static_cast<std::size_t>(job.max_iters) + 1,
                              std::vector<double>(batch, 0.0));
    }

    ThreadPool pool(job.threads > 0 ? job.threads : default_thread_count());
    const std::size_t n_chunks = (batch + kPointChunk - 1) / kPointChunk;
    pool.run(static_cast<int>(n_chunks), [&](int c) {
        const std::size_t begin = static_cast<std::size_t>(c) * kPointChunk;
        const std::size_t end = std::min(begin + kPointChunk, batch);
        std::vector<double> grad(static_cast<std::size_t>(P));
        for (std::size_t i = begin; i < end; ++i) {
            auto point = result.final_points.row(i);
            const double z = targets[i];
            if (job.track_median) {
                iter_residuals[0][i] = std::abs(s.forward(point) - z);
            }
            for (int it = 0; it < job.max_iters; ++it) {
                const double value = s.forward_and_grad_input(point, grad);
                double grad_sq = 0.0;
                for (const double g : grad) grad_sq += g * g;
                const double step = (value - z) / std::max(grad_sq, job.grad_floor);
                for (int p = 0; p < P; ++p) {
                    point[static_cast<std::size_t>(p)] = std::clamp(
                        point[static_cast<std::size_t>(p)] - step * grad[static_cast<std::size_t>(p)],
                        0.0, 1.0);
                }
                if (job.track_median) {
                    iter_residuals[static_cast<std::size_t>(it) + 1][i] =
                        std::abs(s.forward(point) - z);
                }
            }
            result.residuals[i] = std::abs(s.forward(point) - z);
        }
    });

    // converged flags are set here: vector<bool> bits must not be written
    // from parallel workers
    std::size_t failures = 0;
    double sq_all = 0.0;
    double sq_conv = 0.0;
    std::size_t n_conv = 0;
    for (std::size_t i = 0; i < batch; ++i) {
        result.converged[i] = result.residuals[i] <= job.fail_threshold;
        sq_all += result.residuals[i] * result.residuals[i];
        if (result.converged[i]) {
            sq_conv += result.residuals[i] * result.residuals[i];
            ++n_conv;
        } else {
            ++failures;
        }
    }
    result.rmse = std::sqrt(sq_all / static_cast<double>(batch));
    result.rmse_converged = n_conv == 0 ? 0.0 : std::sqrt(sq_conv / static_cast<double>(n_conv));
    result.failure_rate = static_cast<double>(failures) / static_cast<double>(batch);
    if (job.track_median) {
        for (auto& snapshot : iter_residuals) {
            result.median_residuals.push_back(median_of(std::move(snapshot)));
        }
    }
    result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

ToyModel make_inversion_toy(const ToyConfig& cfg) {
    using std::numbers::pi;
    auto exact = [](double x, double y) {
        return std::sin(4.0 * pi * x) * std::sin(2.0 * pi * y) +
               0.5 * std::sin(6.0 * pi * x) * std::sin(3.0 * pi * y);
    };

    const DataMatrix X = lhs_sample(cfg.samples, 2, cfg.seed);
    std::vector<double> y(cfg.samples);
    for (std::size_t i = 0; i < cfg.samples; ++i) {
        y[i] = exact(X.row(i)[0], X.row(i)[1]);
    }

    Surrogate s(SurrogateConfig::uniform(2, cfg.modes, cfg.elements), cfg.seed);
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.lr_start = cfg.lr_start;
    tc.lr_end = cfg.lr_end;
    tc.seed = cfg.seed;
    tc.threads = cfg.threads;
    const TrainReport report = train_cooperative(s, tc, X, y);

    ToyModel model{exact, std::move(s)};
    model.train_mse = report.final_loss;
    model.wall_train_s = report.wall_time_s;
    return model;
}

}  // namespace khronos
