#include "khronos/kernel_basis.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

namespace khronos {

namespace {

std::atomic<std::uint64_t> g_eval_count{0};

void check_domain(double x) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw std::domain_error("kernel_basis: x = " + std::to_string(x) +
                                " outside [0,1]");
    }
}

}  // namespace

KnotGrid build_knots(int n_elements) {
    if (n_elements < 1) {
        throw std::invalid_argument("build_knots: n_elements must be >= 1");
    }
    KnotGrid grid;
    grid.n_elements = n_elements;
    grid.h = 1.0 / n_elements;
    grid.n_basis = n_elements + 2;
    grid.knots.resize(static_cast<std::size_t>(n_elements) + 5);
    for (int i = 0; i < n_elements + 5; ++i) {
        grid.knots[static_cast<std::size_t>(i)] = (i - 2) * grid.h;
    }
    // pin the domain endpoints exactly
    grid.knots[2] = 0.0;
    grid.knots[static_cast<std::size_t>(n_elements) + 2] = 1.0;
    return grid;
}

BasisTriple eval_basis_local(const KnotGrid& grid, double x) {
    check_domain(x);
    g_eval_count.fetch_add(1, std::memory_order_relaxed);

    int e = static_cast<int>(x * grid.n_elements);
    if (e >= grid.n_elements) e = grid.n_elements - 1;
    const double u = x * grid.n_elements - e;  // local coordinate in [0,1]

    // active bases are e, e+1, e+2; pieces of the cardinal quadratic B-spline
    BasisTriple out;
    out.first = e;
    out.value[0] = 0.5 * (1.0 - u) * (1.0 - u);
    out.value[1] = 0.5 * (-2.0 * u * u + 2.0 * u + 1.0);
    out.value[2] = 0.5 * u * u;
    return out;
}

BasisTriple eval_basis_deriv_local(const KnotGrid& grid, double x) {
    check_domain(x);
    g_eval_count.fetch_add(1, std::memory_order_relaxed);

    int e = static_cast<int>(x * grid.n_elements);
    if (e >= grid.n_elements) e = grid.n_elements - 1;
    const double u = x * grid.n_elements - e;
    const double inv_h = static_cast<double>(grid.n_elements);

    BasisTriple out;
    out.first = e;
    out.value[0] = -(1.0 - u) * inv_h;
    out.value[1] = (1.0 - 2.0 * u) * inv_h;
    out.value[2] = u * inv_h;
    return out;
}

std::vector<double> eval_basis(const KnotGrid& grid, double x) {
    const BasisTriple t = eval_basis_local(grid, x);
    std::vector<double> out(static_cast<std::size_t>(grid.n_basis), 0.0);
    for (int k = 0; k < 3; ++k) {
        out[static_cast<std::size_t>(t.first + k)] = t.value[static_cast<std::size_t>(k)];
    }
    return out;
}

std::vector<double> eval_basis_deriv(const KnotGrid& grid, double x) {
    const BasisTriple t = eval_basis_deriv_local(grid, x);
    std::vector<double> out(static_cast<std::size_t>(grid.n_basis), 0.0);
    for (int k = 0; k < 3; ++k) {
        out[static_cast<std::size_t>(t.first + k)] = t.value[static_cast<std::size_t>(k)];
    }
    return out;
}

std::uint64_t basis_eval_count() noexcept {
    return g_eval_count.load(std::memory_order_relaxed);
}

void reset_basis_eval_count() noexcept {
    g_eval_count.store(0, std::memory_order_relaxed);
}

}  // namespace khronos
