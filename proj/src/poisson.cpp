#include "khronos/poisson.hpp"

#include "khronos/dataset.hpp"
#include "khronos/rng.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace khronos {

namespace {

using std::numbers::pi;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PoissonProblem make_poisson_problem() {
    PoissonProblem prob;
    // original coordinates x = 2*xt - 1, y = 2*yt - 1; source scaled by 4
    auto fx = [](double xt) { return std::sin(pi * (2.0 * xt - 1.0)); };
    auto fy1 = [](double yt) {
        const double y = 2.0 * yt - 1.0;
        return 4.0 * pi * pi * (1.0 + 4.0 * y * y) * std::sin(pi * y * y);
    };
    auto fy2 = [](double yt) {
        const double y = 2.0 * yt - 1.0;
        return -8.0 * pi * std::cos(pi * y * y);
    };
    prob.source.factors = {{fx, fy1}, {fx, fy2}};
    prob.exact_u = [](double xt, double yt) {
        const double x = 2.0 * xt - 1.0;
        const double y = 2.0 * yt - 1.0;
        return std::sin(pi * x) * std::sin(pi * y * y);
    };
    prob.exact_grad = [](double xt, double yt) -> std::array<double, 2> {
        const double x = 2.0 * xt - 1.0;
        const double y = 2.0 * yt - 1.0;
        return {2.0 * pi * std::cos(pi * x) * std::sin(pi * y * y),
                4.0 * pi * y * std::sin(pi * x) * std::cos(pi * y * y)};
    };
    return prob;
}

DirichletMap::DirichletMap(const Surrogate& s) {
    if (s.layers() != 1) {
        throw std::invalid_argument("DirichletMap: single-layer surrogates only");
    }
    modes_ = s.modes();
    dims_ = s.dims();
    for (int p = 0; p < dims_; ++p) {
        const int nb = s.grid(p).n_basis;
        if (nb < 3) {
            throw std::invalid_argument("DirichletMap: need at least 1 element per dimension");
        }
        n_basis_.push_back(nb);
        free_count_ += static_cast<std::size_t>(modes_) * static_cast<std::size_t>(nb - 2);
    }
}

void DirichletMap::expand(std::span<const double> free_params, Surrogate& s) const {
    if (free_params.size() != free_count_) {
        throw std::invalid_argument("DirichletMap::expand: wrong free parameter count");
    }
    std::size_t k = 0;
    for (int j = 0; j < modes_; ++j) {
        for (int p = 0; p < dims_; ++p) {
            auto w = s.weight_block(j, p);
            const int nb = n_basis_[static_cast<std::size_t>(p)];
            for (int i = 1; i < nb - 1; ++i) {
                w[static_cast<std::size_t>(i)] = free_params[k++];
            }
            w[0] = -w[1];
            w[static_cast<std::size_t>(nb - 1)] = -w[static_cast<std::size_t>(nb - 2)];
        }
    }
}

void DirichletMap::reduce_grad(std::span<const double> full_grad,
                               std::span<double> free_grad) const {
    if (free_grad.size() != free_count_) {
        throw std::invalid_argument("DirichletMap::reduce_grad: wrong free parameter count");
    }
    std::size_t k = 0;
    std::size_t off = 0;
    for (int j = 0; j < modes_; ++j) {
        for (int p = 0; p < dims_; ++p) {
            const int nb = n_basis_[static_cast<std::size_t>(p)];
            for (int i = 1; i < nb - 1; ++i) {
                double g = full_grad[off + static_cast<std::size_t>(i)];
                if (i == 1) g -= full_grad[off];
                if (i == nb - 2) g -= full_grad[off + static_cast<std::size_t>(nb - 1)];
                free_grad[k++] = g;
            }
            off += static_cast<std::size_t>(nb);
        }
    }
}

void DirichletMap::extract(const Surrogate& s, std::span<double> free_params) const {
    if (free_params.size() != free_count_) {
        throw std::invalid_argument("DirichletMap::extract: wrong free parameter count");
    }
    std::size_t k = 0;
    for (int j = 0; j < modes_; ++j) {
        for (int p = 0; p < dims_; ++p) {
            const auto w = s.weight_block(j, p);
            const int nb = n_basis_[static_cast<std::size_t>(p)];
            for (int i = 1; i < nb - 1; ++i) {
                free_params[k++] = w[static_cast<std::size_t>(i)];
            }
        }
    }
}

ErrorMetrics error_metrics(const Surrogate& s, const PoissonProblem& prob, int grid_n) {
    if (grid_n < 2) throw std::invalid_argument("error_metrics: grid_n must be >= 2");
    const std::size_t n = static_cast<std::size_t>(grid_n);
    std::vector<double> axis(n);
    std::vector<double> wt(n, 1.0 / static_cast<double>(grid_n - 1));
    for (std::size_t i = 0; i < n; ++i) {
        axis[i] = static_cast<double>(i) / static_cast<double>(grid_n - 1);
    }
    wt.front() *= 0.5;
    wt.back() *= 0.5;

    const std::vector<std::vector<double>> axes = {axis, axis};
    const GridTensor u = s.eval_grid(axes);
    const GridTensor ux = s.eval_grid_deriv(axes, 0);
    const GridTensor uy = s.eval_grid_deriv(axes, 1);

    double l2 = 0.0;
    double h1 = 0.0;
    for (std::size_t ix = 0; ix < n; ++ix) {
        double row_l2 = 0.0;
        double row_h1 = 0.0;
        for (std::size_t iy = 0; iy < n; ++iy) {
            const std::size_t k = ix * n + iy;
            const double eu = prob.exact_u(axis[ix], axis[iy]);
            const auto eg = prob.exact_grad(axis[ix], axis[iy]);
            const double du = u.data[k] - eu;
            const double dx = ux.data[k] - eg[0];
            const double dy = uy.data[k] - eg[1];
            row_l2 += wt[iy] * du * du;
            row_h1 += wt[iy] * (dx * dx + dy * dy);
        }
        l2 += wt[ix] * row_l2;
        h1 += wt[ix] * row_h1;
    }
    return {l2, h1};
}

PoissonResult solve_poisson(const PoissonOptions& opts) {
    if (opts.modes < 1) throw std::invalid_argument("solve_poisson: modes must be >= 1");
    if (opts.alpha_data == 0.0 && opts.alpha_model == 0.0) {
        throw std::invalid_argument("solve_poisson: both loss weights are zero");
    }
    const int denom = 2 * opts.modes;
    if (opts.dof % denom != 0 || opts.dof / denom - 2 < 1) {
        throw std::invalid_argument(
            "solve_poisson: dof budget " + std::to_string(opts.dof) +
            " does not map to a grid (need dof = 2*modes*(n_elements+2), n_elements >= 1)");
    }
    const int n_elements = opts.dof / denom - 2;

    const PoissonProblem prob = make_poisson_problem();
    Surrogate s(SurrogateConfig::uniform(2, opts.modes, n_elements), opts.seed);
    const EnergyAssembly assembly(s, prob.source, opts.n_gauss, opts.src_gauss);
    const DirichletMap dirichlet(s);

    // free interior parameters start at 1 + noise, boundary pairs mirrored
    std::vector<double> params(dirichlet.free_count());
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] = 1.0 + 0.05 * (2.0 * rng::u01(opts.seed, i, 0x706f6973ULL) - 1.0);
    }
    dirichlet.expand(params, s);

    // optional data term for the mixed pathway
    DataMatrix data_x;
    std::vector<double> data_y;
    if (opts.alpha_data != 0.0) {
        if (opts.data_samples < 1) {
            throw std::invalid_argument("solve_poisson: alpha_data > 0 needs data_samples");
        }
        data_x = lhs_sample(static_cast<std::size_t>(opts.data_samples), 2,
                            rng::key(opts.seed, 0x64617461ULL));
        data_y.resize(data_x.rows);
        for (std::size_t i = 0; i < data_x.rows; ++i) {
            data_y[i] = prob.exact_u(data_x.row(i)[0], data_x.row(i)[1]);
        }
    }

    std::vector<double> full_grad(s.param_count());
    const Objective objective = [&](std::span<const double> p, std::span<double> grad) {
        dirichlet.expand(p, s);
        double loss = 0.0;
        if (opts.alpha_data == 0.0) {
            loss = opts.alpha_model * assembly.value_and_grad(s, full_grad);
            if (opts.alpha_model != 1.0) {
                for (double& g : full_grad) g *= opts.alpha_model;
            }
        } else {
            loss = mixed_loss(s, data_x, data_y, assembly, opts.alpha_data, opts.alpha_model,
                              full_grad);
        }
        dirichlet.reduce_grad(full_grad, grad);
        return loss;
    };

    TrainConfig tc;
    tc.epochs = opts.epochs;
    tc.lr_start = opts.lr_start;
    tc.lr_end = opts.lr_end;
    tc.seed = opts.seed;
    const TrainReport train_report = train_objective(params, tc, objective);
    dirichlet.expand(params, s);

    PoissonResult result{std::move(s)};
    result.energy_history = train_report.loss_history;
    result.energy_initial = result.energy_history.front();
    result.energy_final = result.energy_history.back();
    result.params_total = result.surrogate.param_count();
    result.params_free = dirichlet.free_count();
    result.n_elements = n_elements;
    result.wall_train_s = train_report.wall_time_s;

    const auto t0 = std::chrono::steady_clock::now();
    const ErrorMetrics err = error_metrics(result.surrogate, prob, opts.grid_n);
    result.l2_sq = err.l2_sq;
    result.h1_sq = err.h1_sq;
    result.wall_metrics_s = seconds_since(t0);
    return result;
}

}  // namespace khronos
