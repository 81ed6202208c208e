#pragma once

#include "khronos/surrogate.hpp"
#include "khronos/training.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace khronos {

/// Batched Gauss-Newton drive of u(x) toward target values z.
struct InversionJob {
    std::vector<double> targets;  ///< one per point, or a single value broadcast
    DataMatrix init_points;       ///< batch x P, each row in [0,1]^P
    int max_iters = 10;
    double fail_threshold = 1e-3;  ///< residual above this counts as a failure
    double grad_floor = 1e-12;     ///< floor on |grad u|^2 in the update
    bool track_median = false;     ///< record the median residual per iteration
    int threads = 0;
};

struct InversionResult {
    DataMatrix final_points;
    std::vector<double> residuals;  ///< |u(x) - z|, recomputed at the final points
    std::vector<bool> converged;
    double rmse = 0.0;            ///< over all points, failures included
    double rmse_converged = 0.0;  ///< over converged points only (0 if none)
    double failure_rate = 0.0;
    double wall_time_s = 0.0;
    std::vector<double> median_residuals;  ///< per iteration, when tracked
};

/// One Gauss-Newton update x - ((u-z)/max(|grad u|^2, floor)) * grad u, with
/// the result clamped componentwise to [0,1].
std::vector<double> gauss_newton_step(const Surrogate& s, std::span<const double> x, double z,
                                      double grad_floor = 1e-12);

/// Run the job: max_iters independent Gauss-Newton sweeps per point. Points
/// never interact, so any parallel split gives bitwise-identical results.
InversionResult invert_batch(const Surrogate& s, const InversionJob& job);

/// The level-set toy problem
///   u(x,y) = sin(4 pi x) sin(2 pi y) + 0.5 sin(6 pi x) sin(3 pi y)
/// plus a surrogate trained model-free on LHS samples of it.
struct ToyConfig {
    std::size_t samples = 8000;
    int elements = 32;
    int modes = 2;
    int epochs = 2000;
    double lr_start = 0.15;
    double lr_end = 0.05;
    std::uint64_t seed = 21;
    int threads = 0;
};

struct ToyModel {
    std::function<double(double, double)> exact;
    Surrogate surrogate;
    double train_mse = 0.0;
    double wall_train_s = 0.0;
};

ToyModel make_inversion_toy(const ToyConfig& cfg = {});

}  // namespace khronos
