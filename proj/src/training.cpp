#include "khronos/training.hpp"

#include "khronos/parallel.hpp"
#include "khronos/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace khronos {

namespace {

constexpr std::size_t kChunkRows = 2048;

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (!(cfg.lr_start >= cfg.lr_end && cfg.lr_end > 0.0)) {
        throw std::invalid_argument("TrainConfig: need lr_start >= lr_end > 0");
    }
    if (cfg.batch < 0) throw std::invalid_argument("TrainConfig: batch must be >= 0");
}

void check_divergence(double loss, double initial_scale) {
    if (!std::isfinite(loss)) {
        throw std::runtime_error("training aborted: loss is not finite");
    }
    if (loss > 1e6 * initial_scale) {
        throw std::runtime_error("training aborted: loss " + std::to_string(loss) +
                                 " exceeds 1e6 x initial loss");
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

double cosine_lr(int epoch, int total, double lr_start, double lr_end) {
    if (total < 2) return lr_start;
    if (epoch < 0 || epoch >= total) {
        throw std::invalid_argument("cosine_lr: epoch outside [0, total)");
    }
    const double phase = std::numbers::pi * epoch / (total - 1);
    return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(phase));
}

void adam_step(std::span<double> weights, std::span<const double> grads, AdamState& state,
               double lr, const AdamOptions& opts) {
    if (weights.size() != grads.size() || state.m.size() != weights.size()) {
        throw std::invalid_argument("adam_step: size mismatch");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw std::runtime_error("adam_step: non-finite gradient at index " +
                                     std::to_string(i));
        }
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < weights.size(); ++i) {
        state.m[i] = opts.beta1 * state.m[i] + (1.0 - opts.beta1) * grads[i];
        state.v[i] = opts.beta2 * state.v[i] + (1.0 - opts.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        weights[i] -= lr * m_hat / (std::sqrt(v_hat) + opts.eps);
    }
}

DataEvaluator::DataEvaluator(const Surrogate& s, const DataMatrix& X) {
    if (X.rows == 0) throw std::invalid_argument("DataEvaluator: empty dataset");
    if (X.cols != static_cast<std::size_t>(s.dims())) {
        throw std::invalid_argument("DataEvaluator: data dimension does not match surrogate");
    }
    n_rows_ = X.rows;
    dims_ = s.dims();
    data_ = &X;
    tabulated_ = (s.layers() == 1);
    if (!tabulated_) return;

    idx_.resize(n_rows_ * static_cast<std::size_t>(dims_));
    val_.resize(n_rows_ * static_cast<std::size_t>(dims_) * 3);
    for (std::size_t r = 0; r < n_rows_; ++r) {
        for (int p = 0; p < dims_; ++p) {
            const BasisTriple t = eval_basis_local(s.grid(p), X.row(r)[static_cast<std::size_t>(p)]);
            const std::size_t k = r * static_cast<std::size_t>(dims_) + static_cast<std::size_t>(p);
            idx_[k] = t.first;
            val_[3 * k + 0] = t.value[0];
            val_[3 * k + 1] = t.value[1];
            val_[3 * k + 2] = t.value[2];
        }
    }
}

void DataEvaluator::eval_chunk(const Surrogate& s, std::span<const double> targets,
                               std::span<const std::size_t> row_ids, std::size_t begin,
                               std::size_t end, double inv_n, double* loss_out,
                               std::span<double> grad_out) const {
    const int P = dims_;
    const int M = s.modes();
    const bool want_grad = !grad_out.empty();
    const std::span<const double> w = s.weights();

    std::vector<double> feat(static_cast<std::size_t>(P * M));
    std::vector<double> prefix(static_cast<std::size_t>((P + 1) * M));
    std::vector<double> suffix(static_cast<std::size_t>((P + 1) * M));

    double loss = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
        const std::size_t r = row_ids[k];
        double pred = 0.0;
        if (!tabulated_) {
            pred = s.forward(data_->row(r));
            const double resid = pred - targets[r];
            loss += resid * resid * inv_n;
            if (want_grad) s.grad_params_accumulate(data_->row(r), 2.0 * resid * inv_n, grad_out);
            continue;
        }

        const std::size_t base = r * static_cast<std::size_t>(P);
        for (int p = 0; p < P; ++p) {
            const std::size_t k3 = 3 * (base + static_cast<std::size_t>(p));
            const std::int32_t first = idx_[base + static_cast<std::size_t>(p)];
            const double b0 = val_[k3], b1 = val_[k3 + 1], b2 = val_[k3 + 2];
            for (int j = 0; j < M; ++j) {
                const std::size_t off = s.weight_offset(j, p);
                feat[static_cast<std::size_t>(p * M + j)] =
                    b0 * w[off + static_cast<std::size_t>(first)] +
                    b1 * w[off + static_cast<std::size_t>(first) + 1] +
                    b2 * w[off + static_cast<std::size_t>(first) + 2];
            }
        }
        for (int j = 0; j < M; ++j) prefix[static_cast<std::size_t>(j)] = 1.0;
        for (int p = 0; p < P; ++p) {
            for (int j = 0; j < M; ++j) {
                prefix[static_cast<std::size_t>((p + 1) * M + j)] =
                    prefix[static_cast<std::size_t>(p * M + j)] *
                    feat[static_cast<std::size_t>(p * M + j)];
            }
        }
        for (int j = 0; j < M; ++j) {
            pred += prefix[static_cast<std::size_t>(P * M + j)];
        }
        const double resid = pred - targets[r];
        loss += resid * resid * inv_n;
        if (!want_grad) continue;

        for (int j = 0; j < M; ++j) suffix[static_cast<std::size_t>(P * M + j)] = 1.0;
        for (int p = P - 1; p >= 0; --p) {
            for (int j = 0; j < M; ++j) {
                suffix[static_cast<std::size_t>(p * M + j)] =
                    suffix[static_cast<std::size_t>((p + 1) * M + j)] *
                    feat[static_cast<std::size_t>(p * M + j)];
            }
        }
        const double upstream = 2.0 * resid * inv_n;
        for (int j = 0; j < M; ++j) {
            for (int p = 0; p < P; ++p) {
                const double c = upstream * prefix[static_cast<std::size_t>(p * M + j)] *
                                 suffix[static_cast<std::size_t>((p + 1) * M + j)];
                const std::size_t k3 = 3 * (base + static_cast<std::size_t>(p));
                const std::size_t off = s.weight_offset(j, p) +
                                        static_cast<std::size_t>(idx_[base + static_cast<std::size_t>(p)]);
                grad_out[off] += c * val_[k3];
                grad_out[off + 1] += c * val_[k3 + 1];
                grad_out[off + 2] += c * val_[k3 + 2];
            }
        }
    }
    *loss_out = loss;
}

double DataEvaluator::mse_and_grad(const Surrogate& s, std::span<const double> targets,
                                   std::span<const std::size_t> row_ids,
                                   std::span<double> grad_out, ThreadPool* pool) const {
    if (row_ids.empty()) throw std::invalid_argument("mse_and_grad: empty row set");
    const bool want_grad = !grad_out.empty();
    if (want_grad && grad_out.size() != s.param_count()) {
        throw std::invalid_argument("mse_and_grad: gradient buffer has wrong size");
    }
    const double inv_n = 1.0 / static_cast<double>(row_ids.size());
    const std::size_t n_chunks = (row_ids.size() + kChunkRows - 1) / kChunkRows;

    std::vector<double> chunk_loss(n_chunks, 0.0);
    std::vector<double> chunk_grad;
    if (want_grad) chunk_grad.assign(n_chunks * s.param_count(), 0.0);

    auto task = [&](int c) {
        const std::size_t begin = static_cast<std::size_t>(c) * kChunkRows;
        const std::size_t end = std::min(begin + kChunkRows, row_ids.size());
        std::span<double> g;
        if (want_grad) {
            g = std::span<double>(chunk_grad)
                    .subspan(static_cast<std::size_t>(c) * s.param_count(), s.param_count());
        }
        eval_chunk(s, targets, row_ids, begin, end, inv_n, &chunk_loss[static_cast<std::size_t>(c)], g);
    };
    if (pool != nullptr && n_chunks > 1) {
        pool->run(static_cast<int>(n_chunks), task);
    } else {
        for (std::size_t c = 0; c < n_chunks; ++c) task(static_cast<int>(c));
    }

    // combine partials in fixed chunk order so worker count cannot change bits
    double loss = 0.0;
    for (std::size_t c = 0; c < n_chunks; ++c) loss += chunk_loss[c];
    if (want_grad) {
        std::fill(grad_out.begin(), grad_out.end(), 0.0);
        for (std::size_t c = 0; c < n_chunks; ++c) {
            const double* g = chunk_grad.data() + c * s.param_count();
            for (std::size_t i = 0; i < grad_out.size(); ++i) grad_out[i] += g[i];
        }
    }
    return loss;
}

void DataEvaluator::predict(const Surrogate& s, std::span<const std::size_t> row_ids,
                            std::span<double> out, ThreadPool* pool) const {
    if (out.size() != row_ids.size()) {
        throw std::invalid_argument("predict: output size mismatch");
    }
    const int P = dims_;
    const int M = s.modes();
    const std::span<const double> w = s.weights();
    const std::size_t n_chunks = (row_ids.size() + kChunkRows - 1) / kChunkRows;

    auto task = [&](int c) {
        const std::size_t begin = static_cast<std::size_t>(c) * kChunkRows;
        const std::size_t end = std::min(begin + kChunkRows, row_ids.size());
        std::vector<double> prod(static_cast<std::size_t>(M));
        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t r = row_ids[k];
            if (!tabulated_) {
                out[k] = s.forward(data_->row(r));
                continue;
            }
            std::fill(prod.begin(), prod.end(), 1.0);
            const std::size_t base = r * static_cast<std::size_t>(P);
            for (int p = 0; p < P; ++p) {
                const std::size_t k3 = 3 * (base + static_cast<std::size_t>(p));
                const std::int32_t first = idx_[base + static_cast<std::size_t>(p)];
                for (int j = 0; j < M; ++j) {
                    const std::size_t off = s.weight_offset(j, p);
                    prod[static_cast<std::size_t>(j)] *=
                        val_[k3] * w[off + static_cast<std::size_t>(first)] +
                        val_[k3 + 1] * w[off + static_cast<std::size_t>(first) + 1] +
                        val_[k3 + 2] * w[off + static_cast<std::size_t>(first) + 2];
                }
            }
            double sum = 0.0;
            for (int j = 0; j < M; ++j) sum += prod[static_cast<std::size_t>(j)];
            out[k] = sum;
        }
    };
    if (pool != nullptr && n_chunks > 1) {
        pool->run(static_cast<int>(n_chunks), task);
    } else {
        for (std::size_t c = 0; c < n_chunks; ++c) task(static_cast<int>(c));
    }
}

double mse_loss(const Surrogate& s, const DataMatrix& X, std::span<const double> targets,
                std::span<double> grad_out) {
    if (X.rows == 0) throw std::invalid_argument("mse_loss: empty dataset");
    if (X.rows != targets.size()) throw std::invalid_argument("mse_loss: target size mismatch");
    DataEvaluator eval(s, X);
    std::vector<std::size_t> ids(X.rows);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    return eval.mse_and_grad(s, targets, ids, grad_out, nullptr);
}

double mixed_loss(const Surrogate& s, const DataMatrix& X, std::span<const double> targets,
                  const EnergyAssembly& energy, double alpha_data, double alpha_model,
                  std::span<double> grad_out) {
    if (alpha_data == 0.0 && alpha_model == 0.0) {
        throw std::invalid_argument("mixed_loss: both weights are zero");
    }
    const bool want_grad = !grad_out.empty();
    double total = 0.0;
    std::vector<double> part;
    if (want_grad) {
        part.assign(grad_out.size(), 0.0);
        std::fill(grad_out.begin(), grad_out.end(), 0.0);
    }
    if (alpha_data != 0.0) {
        total += alpha_data * mse_loss(s, X, targets, want_grad ? std::span<double>(part)
                                                                : std::span<double>{});
        if (want_grad) {
            for (std::size_t i = 0; i < grad_out.size(); ++i) grad_out[i] += alpha_data * part[i];
        }
    }
    if (alpha_model != 0.0) {
        if (want_grad) {
            total += alpha_model * energy.value_and_grad(s, part);
            for (std::size_t i = 0; i < grad_out.size(); ++i) grad_out[i] += alpha_model * part[i];
        } else {
            total += alpha_model * energy.value(s);
        }
    }
    return total;
}

namespace {

/// Rescale weights so the initial superposition sits at the target scale:
/// every weight becomes (scale/M)^(1/P) plus the usual +-0.05 noise. A unit
/// init overshoots targets by a factor of M and Adam then drives all mode
/// products through zero, where gradients vanish.
void apply_scaled_init(Surrogate& s, std::span<const double> targets, std::uint64_t seed) {
    double mean_abs = 0.0;
    for (const double t : targets) mean_abs += std::abs(t);
    mean_abs /= static_cast<double>(targets.size());
    const double scale = std::max(mean_abs, 1e-3);
    const double center = std::pow(scale / s.modes(), 1.0 / s.dims());
    s.init_uniform(center, 0.05, seed);
}

}  // namespace

TrainReport train_cooperative(Surrogate& s, const TrainConfig& cfg, const DataMatrix& X,
                              std::span<const double> targets) {
    validate_train_config(cfg);
    if (X.rows == 0) throw std::invalid_argument("train_cooperative: empty dataset");
    if (X.rows != targets.size()) {
        throw std::invalid_argument("train_cooperative: target size mismatch");
    }
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.init_scaled) apply_scaled_init(s, targets, cfg.seed);

    ThreadPool pool(cfg.threads > 0 ? cfg.threads : default_thread_count());
    DataEvaluator eval(s, X);
    std::vector<std::size_t> ids(X.rows);
    std::iota(ids.begin(), ids.end(), std::size_t{0});

    AdamState adam(s.param_count());
    std::vector<double> grad(s.param_count());
    TrainReport report;
    report.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));
    double guard_scale = 0.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr_start, cfg.lr_end);
        double epoch_loss = 0.0;
        if (cfg.batch <= 0 || static_cast<std::size_t>(cfg.batch) >= X.rows) {
            epoch_loss = eval.mse_and_grad(s, targets, ids, grad, &pool);
            adam_step(s.weights(), grad, adam, lr);
        } else {
            rng::SplitMix64 stream(rng::key(cfg.seed, static_cast<std::uint64_t>(epoch), 0x73687566ULL));
            rng::shuffle(std::span<std::size_t>(ids), stream);
            const std::size_t b = static_cast<std::size_t>(cfg.batch);
            for (std::size_t start = 0; start < X.rows; start += b) {
                const std::size_t len = std::min(b, X.rows - start);
                const auto batch_ids = std::span<const std::size_t>(ids).subspan(start, len);
                const double batch_loss = eval.mse_and_grad(s, targets, batch_ids, grad, &pool);
                adam_step(s.weights(), grad, adam, lr);
                epoch_loss += batch_loss * static_cast<double>(len);
            }
            epoch_loss /= static_cast<double>(X.rows);
        }
        if (epoch == 0) guard_scale = std::max(std::abs(epoch_loss), 1e-12);
        check_divergence(epoch_loss, guard_scale);
        report.loss_history.push_back(epoch_loss);
    }

    report.final_loss = report.loss_history.back();
    report.modes_used = s.modes();
    report.wall_time_s = seconds_since(t0);
    return report;
}

std::pair<Surrogate, TrainReport> train_sequential(const SurrogateConfig& mode_proto,
                                                   const TrainConfig& cfg, const DataMatrix& X,
                                                   std::span<const double> targets) {
    validate_train_config(cfg);
    if (cfg.seq_tolerance <= 0.0) {
        throw std::invalid_argument("train_sequential: tolerance must be positive");
    }
    if (cfg.max_modes < 1) throw std::invalid_argument("train_sequential: max_modes must be >= 1");
    if (X.rows == 0) throw std::invalid_argument("train_sequential: empty dataset");
    if (X.rows != targets.size()) {
        throw std::invalid_argument("train_sequential: target size mismatch");
    }

    const auto t0 = std::chrono::steady_clock::now();
    SurrogateConfig proto = mode_proto;
    proto.modes = 1;

    std::vector<double> residual(targets.begin(), targets.end());
    std::vector<double> pred(X.rows);
    std::vector<std::size_t> ids(X.rows);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    ThreadPool pool(cfg.threads > 0 ? cfg.threads : default_thread_count());

    std::vector<Surrogate> modes;
    TrainReport report;
    bool met = false;
    while (static_cast<int>(modes.size()) < cfg.max_modes) {
        Surrogate mode(proto, rng::key(cfg.seed, modes.size() + 1));
        TrainConfig mode_cfg = cfg;
        mode_cfg.seed = rng::key(cfg.seed, modes.size() + 1);
        TrainReport mode_report = train_cooperative(mode, mode_cfg, X, residual);
        report.loss_history.insert(report.loss_history.end(), mode_report.loss_history.begin(),
                                   mode_report.loss_history.end());

        DataEvaluator eval(mode, X);
        eval.predict(mode, ids, pred, &pool);
        double sq_sum = 0.0;
        for (std::size_t i = 0; i < X.rows; ++i) {
            residual[i] -= pred[i];
            sq_sum += residual[i] * residual[i];
        }
        const double rms = std::sqrt(sq_sum / static_cast<double>(X.rows));
        report.residual_history.push_back(rms);
        modes.push_back(std::move(mode));
        if (rms < cfg.seq_tolerance) {
            met = true;
            break;
        }
    }

    SurrogateConfig merged_cfg = proto;
    merged_cfg.modes = static_cast<int>(modes.size());
    Surrogate merged(merged_cfg, 0);
    {
        auto w = merged.weights();
        std::size_t off = 0;
        for (const Surrogate& mode : modes) {
            const auto mw = mode.weights();
            std::copy(mw.begin(), mw.end(), w.begin() + static_cast<std::ptrdiff_t>(off));
            off += mw.size();
        }
    }

    report.modes_used = static_cast<int>(modes.size());
    report.tolerance_met = met;
    const double last_rms = report.residual_history.back();
    report.final_loss = last_rms * last_rms;
    report.wall_time_s = seconds_since(t0);
    return {std::move(merged), std::move(report)};
}

TrainReport train_objective(std::span<double> params, const TrainConfig& cfg,
                            const Objective& obj) {
    validate_train_config(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    AdamState adam(params.size());
    std::vector<double> grad(params.size());
    TrainReport report;
    report.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));
    double guard_scale = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double loss = obj(params, grad);
        if (epoch == 0) guard_scale = std::max(std::abs(loss), 1e-12);
        check_divergence(loss, guard_scale);
        report.loss_history.push_back(loss);
        adam_step(params, grad, adam, cosine_lr(epoch, cfg.epochs, cfg.lr_start, cfg.lr_end));
    }
    report.final_loss = report.loss_history.back();
    report.wall_time_s = seconds_since(t0);
    return report;
}

}  // namespace khronos
