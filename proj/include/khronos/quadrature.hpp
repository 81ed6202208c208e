#pragma once

#include "khronos/kernel_basis.hpp"
#include "khronos/surrogate.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace khronos {

/// Minimal dense row-major matrix; the Gram matrices here are tiny (M x M).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Gauss-Legendre nodes/weights mapped to the reference element [0,1].
/// Exact for polynomials of degree <= 2*n_gauss - 1. Supports n_gauss in [1,10].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
GaussRule gauss_nodes(int n_gauss);

/// Composite per-element Gauss-Legendre rule over [0,1] for one dimension.
struct DimRule {
    std::vector<double> nodes;    // n_gauss * n_elements, strictly inside elements
    std::vector<double> weights;  // positive, summing to 1
};
DimRule make_dim_rule(const KnotGrid& grid, int n_gauss);

/// Per-dimension composite rules for a surrogate's grids.
struct QuadratureRule {
    int n_gauss = 3;
    std::vector<DimRule> dims;
};
QuadratureRule make_rule(const Surrogate& s, int n_gauss);

/// Composite Gauss approximation of the L2 inner product of two univariate
/// functions on [0,1].
double univariate_inner(const DimRule& rule, const std::function<double(double)>& fa,
                        const std::function<double(double)>& fb);

/// f(x) = sum_i prod_p factors[i][p](x_p): a rank-N sum of separable products.
struct SeparableFunction {
    std::vector<std::vector<std::function<double(double)>>> factors;  // [term][dim]

    int rank() const noexcept { return static_cast<int>(factors.size()); }
    int dims() const { return factors.empty() ? 0 : static_cast<int>(factors.front().size()); }
    double eval(std::span<const double> x) const;
};

/// Gram matrices of the 2D energy functional. G/G' pair the x feature maps
/// and their derivatives, H/H' the y maps; A, B project the feature maps onto
/// the separable source factors.
struct GramSet {
    Matrix G, Gp, H, Hp;  // M x M
    Matrix A, B;          // M x N
};

/// Assemble all Gram matrices for a P=2, single-layer surrogate. The
/// stiffness/mass blocks use `rule`; the source projections use a finer
/// src_gauss-point rule since the source is generally not polynomial.
GramSet assemble_grams(const Surrogate& s, const SeparableFunction& f,
                       const QuadratureRule& rule, int src_gauss = 5);

/// Dirichlet energy  0.5*(tr(G'^T H) + tr(H'^T G)) - tr(A^T B).
double energy(const GramSet& grams);

/// d energy / d w for every surrogate weight, laid out like s.weights().
std::vector<double> energy_grad(const Surrogate& s, const SeparableFunction& f,
                                const QuadratureRule& rule, int src_gauss = 5);

/// Precomputed bilinear forms for the energy objective: per-dimension mass and
/// stiffness matrices over the spline basis plus source projection vectors.
/// This is the training fast path; it matches assemble_grams/energy exactly.
class EnergyAssembly {
public:
    EnergyAssembly(const Surrogate& s, const SeparableFunction& f, int n_gauss = 3,
                   int src_gauss = 5);

    /// Energy value and (optionally) its gradient for the current weights.
    double value(const Surrogate& s) const;
    double value_and_grad(const Surrogate& s, std::span<double> grad_out) const;

    const Matrix& mass(int dim) const { return mass_[static_cast<std::size_t>(dim)]; }
    const Matrix& stiffness(int dim) const { return stiff_[static_cast<std::size_t>(dim)]; }

private:
    std::vector<Matrix> mass_;   // per dim, n_basis x n_basis
    std::vector<Matrix> stiff_;  // per dim
    std::vector<Matrix> proj_;   // per dim, N x n_basis: <B_b, f^dim_i>
    int modes_ = 0;
    int rank_ = 0;
};

/// Multiply-accumulate count inside Gram/inner-product assembly, for
/// complexity assertions.
std::uint64_t gram_op_count() noexcept;
void reset_gram_op_count() noexcept;

}  // namespace khronos
