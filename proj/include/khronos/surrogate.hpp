#pragma once

#include "khronos/kernel_basis.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace khronos {

/// Geometry of a surrogate: P input dimensions, M separable modes, L stacked
/// kernel-expansion layers, and a knot grid per (dimension, layer).
struct SurrogateConfig {
    int dims = 1;
    int modes = 1;
    int layers = 1;
    std::vector<std::vector<int>> elements;  // [dim][layer] -> n_elements

    /// Same element count everywhere.
    static SurrogateConfig uniform(int dims, int modes, int n_elements, int layers = 1);
};

/// Dense row-major tensor (last axis fastest) returned by grid evaluation.
struct GridTensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
};

/// Separable kernel-expansion surrogate
///
///   u(x) = sum_j  prod_p  f_{p,j}(x_p),
///
/// where each per-dimension feature map f_{p,j} is a weighted sum of quadratic
/// B-splines (composed through L layers, outputs clamped to [0,1] between
/// layers). Weights are stored flat in document order: mode, then dimension,
/// then layer, then basis index.
class Surrogate {
public:
    Surrogate(const SurrogateConfig& config, std::uint64_t seed);

    int dims() const noexcept { return config_.dims; }
    int modes() const noexcept { return config_.modes; }
    int layers() const noexcept { return config_.layers; }
    const SurrogateConfig& config() const noexcept { return config_; }
    const KnotGrid& grid(int dim, int layer = 0) const;

    std::size_t param_count() const noexcept { return weights_.size(); }
    std::span<double> weights() noexcept { return weights_; }
    std::span<const double> weights() const noexcept { return weights_; }
    std::size_t weight_offset(int mode, int dim, int layer = 0) const;
    std::span<double> weight_block(int mode, int dim, int layer = 0);
    std::span<const double> weight_block(int mode, int dim, int layer = 0) const;

    /// Reset every weight to center + uniform noise in [-noise, noise],
    /// keyed by (seed, weight index). The constructor uses center 1, noise 0.05.
    void init_uniform(double center, double noise, std::uint64_t seed);

    /// Per-dimension feature map f^{(L)}_{p,j}(x_p).
    double feature_map(int mode, int dim, double x) const;
    /// d f^{(L)}_{p,j} / d x_p (zero where an inter-layer clamp is active).
    double feature_map_deriv(int mode, int dim, double x) const;

    /// Surrogate value at a point in [0,1]^P.
    double forward(std::span<const double> x) const;

    /// Input gradient (d u / d x_p) at a point.
    std::vector<double> grad_input(std::span<const double> x) const;

    /// Value and input gradient in one pass; used by inversion.
    double forward_and_grad_input(std::span<const double> x, std::span<double> grad_out) const;

    /// upstream * (d u / d w) for every weight, laid out like weights().
    std::vector<double> grad_params(std::span<const double> x, double upstream) const;
    /// Same, accumulated into an existing buffer without allocating.
    void grad_params_accumulate(std::span<const double> x, double upstream,
                                std::span<double> accum) const;

    /// Evaluate on a tensor-product grid. Each per-dimension feature map is
    /// evaluated once per axis value and the results combined by outer
    /// product, so the cost is O(M * sum_p n_p) basis evaluations rather than
    /// O(prod_p n_p). Rejects outputs larger than element_cap entries.
    GridTensor eval_grid(const std::vector<std::vector<double>>& axes,
                         std::size_t element_cap = kDefaultElementCap) const;

    /// Same grid evaluation but returning d u / d x_{deriv_dim}.
    GridTensor eval_grid_deriv(const std::vector<std::vector<double>>& axes, int deriv_dim,
                               std::size_t element_cap = kDefaultElementCap) const;

    /// JSON (de)serialization; round-trips finite weights bit-exactly.
    std::string to_json() const;
    static Surrogate from_json(const std::string& text);
    void save(const std::string& path) const;
    static Surrogate load(const std::string& path);

    static constexpr std::size_t kDefaultElementCap = std::size_t{1} << 24;

private:
    struct ChainState;  // per-layer scratch for L > 1 paths

    double chain_value(int mode, int dim, double x) const;
    double chain_value_and_deriv(int mode, int dim, double x, double& deriv) const;
    void mode_values_at(double x, int dim, std::span<double> per_mode) const;

    SurrogateConfig config_;
    std::vector<std::vector<KnotGrid>> grids_;  // [dim][layer]
    std::vector<std::size_t> offsets_;          // (mode, dim, layer) -> flat offset
    std::vector<double> weights_;

    friend class DataEvaluator;
};

}  // namespace khronos
