#pragma once

#include "khronos/quadrature.hpp"
#include "khronos/surrogate.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace khronos {

class ThreadPool;

/// Row-major I x P data matrix with rows in [0,1]^P.
struct DataMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    DataMatrix() = default;
    DataMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(values).subspan(i * cols, cols);
    }
    std::span<double> row(std::size_t i) {
        return std::span<double>(values).subspan(i * cols, cols);
    }
};

struct TrainConfig {
    int epochs = 1000;
    double lr_start = 0.15;
    double lr_end = 0.05;
    int batch = 0;  ///< 0 = full batch; otherwise mini-batch size with seeded shuffling
    std::uint64_t seed = 0;
    double seq_tolerance = 1e-6;  ///< sequential: stop when residual RMS < tolerance
    int max_modes = 8;            ///< sequential: mode budget
    bool init_scaled = true;      ///< rescale weights to the target scale before training
    int threads = 0;              ///< 0 = default_thread_count()
};

struct TrainReport {
    std::vector<double> loss_history;      ///< one entry per epoch actually run
    std::vector<double> residual_history;  ///< sequential: residual RMS after each mode
    double wall_time_s = 0.0;
    double final_loss = 0.0;
    int modes_used = 0;
    bool tolerance_met = true;  ///< false when sequential exhausted max_modes
};

/// Cosine schedule from lr_start (epoch 0) to lr_end (last epoch).
double cosine_lr(int epoch, int total, double lr_start, double lr_end);

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update. Throws on non-finite gradients.
void adam_step(std::span<double> weights, std::span<const double> grads, AdamState& state,
               double lr, const AdamOptions& opts = {});

/// Precomputed per-point basis tables over a dataset for fast repeated loss
/// evaluation (single-layer surrogates; deeper surrogates fall back to the
/// generic per-point path). Loss/gradient reductions run over fixed-size row
/// chunks combined in chunk order, so results are bit-identical for any
/// worker count.
class DataEvaluator {
public:
    DataEvaluator(const Surrogate& s, const DataMatrix& X);

    std::size_t rows() const noexcept { return n_rows_; }

    /// Mean squared error over the given rows plus parameter gradient
    /// (overwritten). Pass an empty grad span to skip gradient work.
    double mse_and_grad(const Surrogate& s, std::span<const double> targets,
                        std::span<const std::size_t> row_ids, std::span<double> grad_out,
                        ThreadPool* pool) const;

    /// Surrogate predictions for the given rows.
    void predict(const Surrogate& s, std::span<const std::size_t> row_ids,
                 std::span<double> out, ThreadPool* pool) const;

private:
    void eval_chunk(const Surrogate& s, std::span<const double> targets,
                    std::span<const std::size_t> row_ids, std::size_t begin, std::size_t end,
                    double inv_n, double* loss_out, std::span<double> grad_out) const;

    std::size_t n_rows_ = 0;
    int dims_ = 0;
    bool tabulated_ = false;
    std::vector<std::int32_t> idx_;  // n_rows x P
    std::vector<double> val_;        // n_rows x P x 3
    const DataMatrix* data_ = nullptr;
};

/// Model-free MSE loss (mean over all rows) and, optionally, its parameter
/// gradient. Rejects empty datasets.
double mse_loss(const Surrogate& s, const DataMatrix& X, std::span<const double> targets,
                std::span<double> grad_out = {});

/// Weighted combination  alpha_data * MSE + alpha_model * energy. Gradients
/// are the same weighted combination. Rejects alpha_data = alpha_model = 0.
double mixed_loss(const Surrogate& s, const DataMatrix& X, std::span<const double> targets,
                  const EnergyAssembly& energy, double alpha_data, double alpha_model,
                  std::span<double> grad_out = {});

/// Joint training of all modes against data with Adam + cosine schedule.
/// Aborts with an exception if the loss diverges past 1e6 x initial.
TrainReport train_cooperative(Surrogate& s, const TrainConfig& cfg, const DataMatrix& X,
                              std::span<const double> targets);

/// Greedy mode-by-mode training: mode k fits the residual left by modes
/// 1..k-1, stopping when the residual RMS over the training set drops below
/// cfg.seq_tolerance or cfg.max_modes is reached (reported, not an error).
/// `mode_proto` describes a single mode (modes field ignored).
std::pair<Surrogate, TrainReport> train_sequential(const SurrogateConfig& mode_proto,
                                                   const TrainConfig& cfg, const DataMatrix& X,
                                                   std::span<const double> targets);

/// Full-batch Adam loop over an arbitrary objective (used by the energy and
/// mixed pathways). The objective fills grad_out and returns the loss.
using Objective = std::function<double(std::span<const double> params, std::span<double> grad_out)>;
TrainReport train_objective(std::span<double> params, const TrainConfig& cfg, const Objective& obj);

}  // namespace khronos
