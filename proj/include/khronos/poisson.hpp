#pragma once

#include "khronos/quadrature.hpp"
#include "khronos/surrogate.hpp"
#include "khronos/training.hpp"

#include <array>
#include <functional>
#include <vector>

namespace khronos {

/// -laplace(u) = f on [0,1]^2 with homogeneous Dirichlet walls, plus the
/// exact solution and gradient for error metrics.
struct PoissonProblem {
    SeparableFunction source;
    std::function<double(double, double)> exact_u;
    std::function<std::array<double, 2>(double, double)> exact_grad;
};

/// The benchmark problem: the [-1,1]^2 system with exact solution
/// sin(pi x) sin(pi y^2), mapped onto [0,1]^2 (source picks up a factor 4).
/// The source is stored in rank-2 separable form.
PoissonProblem make_poisson_problem();

/// Homogeneous Dirichlet constraint by boundary-pair elimination: at each
/// domain end the two overhanging splines carry basis values (1/2, 1/2), so
/// w_0 = -w_1 and w_{n-1} = -w_{n-2} pin the trace to exactly zero. The map
/// translates between the full weight vector and the free interior weights.
class DirichletMap {
public:
    explicit DirichletMap(const Surrogate& s);

    std::size_t free_count() const noexcept { return free_count_; }

    /// Write full weights from free parameters.
    void expand(std::span<const double> free_params, Surrogate& s) const;
    /// Pull a gradient w.r.t. full weights back to the free parameters.
    void reduce_grad(std::span<const double> full_grad, std::span<double> free_grad) const;
    /// Read free parameters out of the surrogate's current weights.
    void extract(const Surrogate& s, std::span<double> free_params) const;

private:
    int modes_ = 0;
    int dims_ = 0;
    std::vector<int> n_basis_;  // per dim
    std::size_t free_count_ = 0;
};

struct PoissonOptions {
    int dof = 16;         ///< reported DoF = modes * sum_p (n_elements_p + 2)
    int modes = 1;
    int epochs = 3000;
    double lr_start = 0.1;
    double lr_end = 1e-5;
    int n_gauss = 3;
    int src_gauss = 5;
    std::uint64_t seed = 0;
    int grid_n = 1000;  ///< error metric grid resolution

    /// Mixed-loss extras: when alpha_data > 0, the loss adds
    /// alpha_data * MSE over data_samples LHS samples of the exact solution.
    double alpha_data = 0.0;
    double alpha_model = 1.0;
    int data_samples = 0;
};

struct PoissonResult {
    Surrogate surrogate;
    double l2_sq = 0.0;
    double h1_sq = 0.0;
    double energy_initial = 0.0;
    double energy_final = 0.0;
    std::size_t params_total = 0;
    std::size_t params_free = 0;
    int n_elements = 0;
    double wall_train_s = 0.0;
    double wall_metrics_s = 0.0;
    std::vector<double> energy_history;
};

/// Map a DoF budget onto a grid (n_elements = dof/(2*modes) - 2; rejects
/// budgets that do not land on a valid grid), train by energy minimization
/// with Adam under Dirichlet elimination, and compute error metrics.
PoissonResult solve_poisson(const PoissonOptions& opts);

/// Composite-trapezoid L2^2 and H1^2 errors against the exact solution on a
/// grid_n x grid_n tensor grid, evaluated through eval_grid.
struct ErrorMetrics {
    double l2_sq = 0.0;
    double h1_sq = 0.0;
};
ErrorMetrics error_metrics(const Surrogate& s, const PoissonProblem& prob, int grid_n);

}  // namespace khronos
