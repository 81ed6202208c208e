#include "khronos/surrogate.hpp"

#include "khronos/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace khronos {

using nlohmann::json;

SurrogateConfig SurrogateConfig::uniform(int dims, int modes, int n_elements, int layers) {
    SurrogateConfig cfg;
    cfg.dims = dims;
    cfg.modes = modes;
    cfg.layers = layers;
    cfg.elements.assign(static_cast<std::size_t>(dims),
                        std::vector<int>(static_cast<std::size_t>(layers), n_elements));
    return cfg;
}

namespace {

void validate_config(const SurrogateConfig& cfg) {
    if (cfg.dims < 1 || cfg.modes < 1 || cfg.layers < 1) {
        throw std::invalid_argument("Surrogate: dims, modes and layers must be positive");
    }
    if (cfg.elements.size() != static_cast<std::size_t>(cfg.dims)) {
        throw std::invalid_argument("Surrogate: elements must list every dimension");
    }
    for (const auto& per_layer : cfg.elements) {
        if (per_layer.size() != static_cast<std::size_t>(cfg.layers)) {
            throw std::invalid_argument("Surrogate: elements must list every layer");
        }
    }
}

void validate_point(std::span<const double> x, int dims) {
    if (x.size() != static_cast<std::size_t>(dims)) {
        throw std::invalid_argument("Surrogate: point has wrong dimension");
    }
}

}  // namespace

Surrogate::Surrogate(const SurrogateConfig& config, std::uint64_t seed) : config_(config) {
    validate_config(config_);
    grids_.resize(static_cast<std::size_t>(config_.dims));
    for (int p = 0; p < config_.dims; ++p) {
        for (int l = 0; l < config_.layers; ++l) {
            grids_[static_cast<std::size_t>(p)].push_back(
                build_knots(config_.elements[static_cast<std::size_t>(p)][static_cast<std::size_t>(l)]));
        }
    }
    const std::size_t blocks =
        static_cast<std::size_t>(config_.modes) * static_cast<std::size_t>(config_.dims) *
        static_cast<std::size_t>(config_.layers);
    offsets_.resize(blocks + 1);
    std::size_t off = 0;
    std::size_t b = 0;
    for (int j = 0; j < config_.modes; ++j) {
        for (int p = 0; p < config_.dims; ++p) {
            for (int l = 0; l < config_.layers; ++l) {
                offsets_[b++] = off;
                off += static_cast<std::size_t>(grid(p, l).n_basis);
            }
        }
    }
    offsets_[b] = off;
    weights_.resize(off);
    init_uniform(1.0, 0.05, seed);
}

const KnotGrid& Surrogate::grid(int dim, int layer) const {
    if (dim < 0 || dim >= config_.dims || layer < 0 || layer >= config_.layers) {
        throw std::out_of_range("Surrogate::grid: bad dim/layer");
    }
    return grids_[static_cast<std::size_t>(dim)][static_cast<std::size_t>(layer)];
}

std::size_t Surrogate::weight_offset(int mode, int dim, int layer) const {
    if (mode < 0 || mode >= config_.modes || dim < 0 || dim >= config_.dims || layer < 0 ||
        layer >= config_.layers) {
        throw std::out_of_range("Surrogate::weight_offset: bad index");
    }
    const std::size_t b =
        (static_cast<std::size_t>(mode) * static_cast<std::size_t>(config_.dims) +
         static_cast<std::size_t>(dim)) *
            static_cast<std::size_t>(config_.layers) +
        static_cast<std::size_t>(layer);
    return offsets_[b];
}

std::span<double> Surrogate::weight_block(int mode, int dim, int layer) {
    const std::size_t off = weight_offset(mode, dim, layer);
    return std::span<double>(weights_).subspan(off, static_cast<std::size_t>(grid(dim, layer).n_basis));
}

std::span<const double> Surrogate::weight_block(int mode, int dim, int layer) const {
    const std::size_t off = weight_offset(mode, dim, layer);
    return std::span<const double>(weights_).subspan(off,
                                                     static_cast<std::size_t>(grid(dim, layer).n_basis));
}

void Surrogate::init_uniform(double center, double noise, std::uint64_t seed) {
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        weights_[i] = center + noise * (2.0 * rng::u01(seed, i) - 1.0);
    }
}

double Surrogate::chain_value(int mode, int dim, double x) const {
    double v = x;
    for (int l = 0; l < config_.layers; ++l) {
        if (l > 0) v = std::clamp(v, 0.0, 1.0);
        const BasisTriple t = eval_basis_local(grid(dim, l), v);
        const std::span<const double> w = weight_block(mode, dim, l);
        v = t.value[0] * w[static_cast<std::size_t>(t.first)] +
            t.value[1] * w[static_cast<std::size_t>(t.first) + 1] +
            t.value[2] * w[static_cast<std::size_t>(t.first) + 2];
    }
    return v;
}

double Surrogate::chain_value_and_deriv(int mode, int dim, double x, double& deriv) const {
    double v = x;
    double d = 1.0;
    for (int l = 0; l < config_.layers; ++l) {
        double c = v;
        double clamp_ind = 1.0;
        if (l > 0) {
            if (v < 0.0 || v > 1.0) clamp_ind = 0.0;
            c = std::clamp(v, 0.0, 1.0);
        }
        const BasisTriple tv = eval_basis_local(grid(dim, l), c);
        const BasisTriple td = eval_basis_deriv_local(grid(dim, l), c);
        const std::span<const double> w = weight_block(mode, dim, l);
        const double w0 = w[static_cast<std::size_t>(tv.first)];
        const double w1 = w[static_cast<std::size_t>(tv.first) + 1];
        const double w2 = w[static_cast<std::size_t>(tv.first) + 2];
        const double slope = td.value[0] * w0 + td.value[1] * w1 + td.value[2] * w2;
        v = tv.value[0] * w0 + tv.value[1] * w1 + tv.value[2] * w2;
        d *= clamp_ind * slope;
    }
    deriv = d;
    return v;
}

void Surrogate::mode_values_at(double x, int dim, std::span<double> per_mode) const {
    if (config_.layers == 1) {
        const BasisTriple t = eval_basis_local(grid(dim, 0), x);
        for (int j = 0; j < config_.modes; ++j) {
            const std::span<const double> w = weight_block(j, dim, 0);
            per_mode[static_cast<std::size_t>(j)] =
                t.value[0] * w[static_cast<std::size_t>(t.first)] +
                t.value[1] * w[static_cast<std::size_t>(t.first) + 1] +
                t.value[2] * w[static_cast<std::size_t>(t.first) + 2];
        }
    } else {
        for (int j = 0; j < config_.modes; ++j) {
            per_mode[static_cast<std::size_t>(j)] = chain_value(j, dim, x);
        }
    }
}

double Surrogate::feature_map(int mode, int dim, double x) const {
    if (mode < 0 || mode >= config_.modes) throw std::out_of_range("feature_map: bad mode");
    return chain_value(mode, dim, x);
}

double Surrogate::feature_map_deriv(int mode, int dim, double x) const {
    if (mode < 0 || mode >= config_.modes) throw std::out_of_range("feature_map_deriv: bad mode");
    double d = 0.0;
    chain_value_and_deriv(mode, dim, x, d);
    return d;
}

double Surrogate::forward(std::span<const double> x) const {
    validate_point(x, config_.dims);
    const int M = config_.modes;
    std::vector<double> prod(static_cast<std::size_t>(M), 1.0);
    std::vector<double> vals(static_cast<std::size_t>(M));
    for (int p = 0; p < config_.dims; ++p) {
        mode_values_at(x[static_cast<std::size_t>(p)], p, vals);
        for (int j = 0; j < M; ++j) prod[static_cast<std::size_t>(j)] *= vals[static_cast<std::size_t>(j)];
    }
    double sum = 0.0;
    for (int j = 0; j < M; ++j) sum += prod[static_cast<std::size_t>(j)];
    return sum;
}

double Surrogate::forward_and_grad_input(std::span<const double> x, std::span<double> grad_out) const {
    validate_point(x, config_.dims);
    if (grad_out.size() != static_cast<std::size_t>(config_.dims)) {
        throw std::invalid_argument("forward_and_grad_input: grad_out has wrong size");
    }
    const int P = config_.dims;
    const int M = config_.modes;
    std::vector<double> val(static_cast<std::size_t>(P * M));
    std::vector<double> der(static_cast<std::size_t>(P * M));
    for (int p = 0; p < P; ++p) {
        for (int j = 0; j < M; ++j) {
            double d = 0.0;
            val[static_cast<std::size_t>(p * M + j)] =
                chain_value_and_deriv(j, p, x[static_cast<std::size_t>(p)], d);
            der[static_cast<std::size_t>(p * M + j)] = d;
        }
    }
    // exclusive products over dimensions, per mode
    std::vector<double> prefix(static_cast<std::size_t>((P + 1) * M), 1.0);
    std::vector<double> suffix(static_cast<std::size_t>((P + 1) * M), 1.0);
    for (int p = 0; p < P; ++p) {
        for (int j = 0; j < M; ++j) {
            prefix[static_cast<std::size_t>((p + 1) * M + j)] =
                prefix[static_cast<std::size_t>(p * M + j)] * val[static_cast<std::size_t>(p * M + j)];
        }
    }
    for (int p = P - 1; p >= 0; --p) {
        for (int j = 0; j < M; ++j) {
            suffix[static_cast<std::size_t>(p * M + j)] =
                suffix[static_cast<std::size_t>((p + 1) * M + j)] * val[static_cast<std::size_t>(p * M + j)];
        }
    }
    double value = 0.0;
    for (int j = 0; j < M; ++j) value += prefix[static_cast<std::size_t>(P * M + j)];
    for (int p = 0; p < P; ++p) {
        double g = 0.0;
        for (int j = 0; j < M; ++j) {
            g += der[static_cast<std::size_t>(p * M + j)] *
                 prefix[static_cast<std::size_t>(p * M + j)] *
                 suffix[static_cast<std::size_t>((p + 1) * M + j)];
        }
        grad_out[static_cast<std::size_t>(p)] = g;
    }
    return value;
}

std::vector<double> Surrogate::grad_input(std::span<const double> x) const {
    std::vector<double> g(static_cast<std::size_t>(config_.dims));
    forward_and_grad_input(x, g);
    return g;
}

void Surrogate::grad_params_accumulate(std::span<const double> x, double upstream,
                                       std::span<double> accum) const {
    validate_point(x, config_.dims);
    if (accum.size() != weights_.size()) {
        throw std::invalid_argument("grad_params_accumulate: buffer has wrong size");
    }
    const int P = config_.dims;
    const int M = config_.modes;
    const int L = config_.layers;

    std::vector<double> val(static_cast<std::size_t>(P * M));
    for (int p = 0; p < P; ++p) {
        for (int j = 0; j < M; ++j) {
            val[static_cast<std::size_t>(p * M + j)] = chain_value(j, p, x[static_cast<std::size_t>(p)]);
        }
    }
    std::vector<double> prefix(static_cast<std::size_t>((P + 1) * M), 1.0);
    std::vector<double> suffix(static_cast<std::size_t>((P + 1) * M), 1.0);
    for (int p = 0; p < P; ++p) {
        for (int j = 0; j < M; ++j) {
            prefix[static_cast<std::size_t>((p + 1) * M + j)] =
                prefix[static_cast<std::size_t>(p * M + j)] * val[static_cast<std::size_t>(p * M + j)];
        }
    }
    for (int p = P - 1; p >= 0; --p) {
        for (int j = 0; j < M; ++j) {
            suffix[static_cast<std::size_t>(p * M + j)] =
                suffix[static_cast<std::size_t>((p + 1) * M + j)] * val[static_cast<std::size_t>(p * M + j)];
        }
    }

    // per-layer forward records for the L > 1 backward sweep
    std::vector<double> c_at(static_cast<std::size_t>(L));
    std::vector<double> clamp_ind(static_cast<std::size_t>(L));

    for (int j = 0; j < M; ++j) {
        for (int p = 0; p < P; ++p) {
            const double partner = prefix[static_cast<std::size_t>(p * M + j)] *
                                   suffix[static_cast<std::size_t>((p + 1) * M + j)];
            const double base = upstream * partner;
            if (L == 1) {
                const BasisTriple t = eval_basis_local(grid(p, 0), x[static_cast<std::size_t>(p)]);
                const std::size_t off = weight_offset(j, p, 0);
                for (int k = 0; k < 3; ++k) {
                    accum[off + static_cast<std::size_t>(t.first + k)] +=
                        base * t.value[static_cast<std::size_t>(k)];
                }
                continue;
            }
            // replay the chain, then walk it backwards
            double v = x[static_cast<std::size_t>(p)];
            for (int l = 0; l < L; ++l) {
                double c = v;
                double ind = 1.0;
                if (l > 0) {
                    if (v < 0.0 || v > 1.0) ind = 0.0;
                    c = std::clamp(v, 0.0, 1.0);
                }
                c_at[static_cast<std::size_t>(l)] = c;
                clamp_ind[static_cast<std::size_t>(l)] = ind;
                const BasisTriple tv = eval_basis_local(grid(p, l), c);
                const std::span<const double> w = weight_block(j, p, l);
                v = tv.value[0] * w[static_cast<std::size_t>(tv.first)] +
                    tv.value[1] * w[static_cast<std::size_t>(tv.first) + 1] +
                    tv.value[2] * w[static_cast<std::size_t>(tv.first) + 2];
            }
            double chain = 1.0;
            for (int l = L - 1; l >= 0; --l) {
                const double c = c_at[static_cast<std::size_t>(l)];
                const BasisTriple tv = eval_basis_local(grid(p, l), c);
                const std::size_t off = weight_offset(j, p, l);
                for (int k = 0; k < 3; ++k) {
                    accum[off + static_cast<std::size_t>(tv.first + k)] +=
                        base * chain * tv.value[static_cast<std::size_t>(k)];
                }
                const BasisTriple td = eval_basis_deriv_local(grid(p, l), c);
                const std::span<const double> w = weight_block(j, p, l);
                const double slope = td.value[0] * w[static_cast<std::size_t>(td.first)] +
                                     td.value[1] * w[static_cast<std::size_t>(td.first) + 1] +
                                     td.value[2] * w[static_cast<std::size_t>(td.first) + 2];
                chain *= slope * clamp_ind[static_cast<std::size_t>(l)];
            }
        }
    }
}

std::vector<double> Surrogate::grad_params(std::span<const double> x, double upstream) const {
    std::vector<double> g(weights_.size(), 0.0);
    grad_params_accumulate(x, upstream, g);
    return g;
}

namespace {

std::size_t checked_total(const std::vector<std::vector<double>>& axes, std::size_t cap) {
    std::size_t total = 1;
    for (const auto& axis : axes) {
        if (axis.empty()) throw std::invalid_argument("eval_grid: empty axis");
        if (total > cap / axis.size()) {
            throw std::length_error("eval_grid: output exceeds element cap");
        }
        total *= axis.size();
    }
    if (total > cap) throw std::length_error("eval_grid: output exceeds element cap");
    return total;
}

}  // namespace

GridTensor Surrogate::eval_grid(const std::vector<std::vector<double>>& axes,
                                std::size_t element_cap) const {
    return eval_grid_deriv(axes, -1, element_cap);
}

GridTensor Surrogate::eval_grid_deriv(const std::vector<std::vector<double>>& axes, int deriv_dim,
                                      std::size_t element_cap) const {
    const int P = config_.dims;
    const int M = config_.modes;
    if (axes.size() != static_cast<std::size_t>(P)) {
        throw std::invalid_argument("eval_grid: need one axis per dimension");
    }
    if (deriv_dim >= P) throw std::out_of_range("eval_grid_deriv: bad deriv_dim");
    const std::size_t total = checked_total(axes, element_cap);

    // per-dimension tables: tab[p][j * n_p + i]
    std::vector<std::vector<double>> tab(static_cast<std::size_t>(P));
    std::vector<double> scratch(static_cast<std::size_t>(M));
    for (int p = 0; p < P; ++p) {
        const auto& axis = axes[static_cast<std::size_t>(p)];
        auto& t = tab[static_cast<std::size_t>(p)];
        t.resize(static_cast<std::size_t>(M) * axis.size());
        for (std::size_t i = 0; i < axis.size(); ++i) {
            if (p == deriv_dim) {
                for (int j = 0; j < M; ++j) {
                    double d = 0.0;
                    chain_value_and_deriv(j, p, axis[i], d);
                    t[static_cast<std::size_t>(j) * axis.size() + i] = d;
                }
            } else {
                mode_values_at(axis[i], p, scratch);
                for (int j = 0; j < M; ++j) {
                    t[static_cast<std::size_t>(j) * axis.size() + i] =
                        scratch[static_cast<std::size_t>(j)];
                }
            }
        }
    }

    GridTensor out;
    out.shape.reserve(static_cast<std::size_t>(P));
    for (const auto& axis : axes) out.shape.push_back(axis.size());
    out.data.resize(total);

    if (P == 2) {
        const std::size_t nx = axes[0].size();
        const std::size_t ny = axes[1].size();
        const auto& tx = tab[0];
        const auto& ty = tab[1];
        for (std::size_t ix = 0; ix < nx; ++ix) {
            double* row = out.data.data() + ix * ny;
            std::fill(row, row + ny, 0.0);
            for (int j = 0; j < M; ++j) {
                const double vx = tx[static_cast<std::size_t>(j) * nx + ix];
                const double* vy = ty.data() + static_cast<std::size_t>(j) * ny;
                for (std::size_t iy = 0; iy < ny; ++iy) row[iy] += vx * vy[iy];
            }
        }
        return out;
    }

    // general odometer walk with running per-mode partial products
    std::vector<std::size_t> idx(static_cast<std::size_t>(P), 0);
    std::vector<double> partial(static_cast<std::size_t>((P + 1) * M), 1.0);
    auto rebuild = [&](int p) {
        const std::size_t n_p = axes[static_cast<std::size_t>(p)].size();
        for (int j = 0; j < M; ++j) {
            partial[static_cast<std::size_t>((p + 1) * M + j)] =
                partial[static_cast<std::size_t>(p * M + j)] *
                tab[static_cast<std::size_t>(p)][static_cast<std::size_t>(j) * n_p +
                                                 idx[static_cast<std::size_t>(p)]];
        }
    };
    for (int p = 0; p < P; ++p) rebuild(p);
    for (std::size_t t = 0; t < total; ++t) {
        double sum = 0.0;
        for (int j = 0; j < M; ++j) sum += partial[static_cast<std::size_t>(P * M + j)];
        out.data[t] = sum;
        int p = P - 1;
        while (p >= 0) {
            if (++idx[static_cast<std::size_t>(p)] < axes[static_cast<std::size_t>(p)].size()) break;
            idx[static_cast<std::size_t>(p)] = 0;
            --p;
        }
        if (p < 0) break;
        for (int q = p; q < P; ++q) rebuild(q);
    }
    return out;
}

std::string Surrogate::to_json() const {
    json j;
    j["format"] = "khronos-surrogate";
    j["version"] = 1;
    j["dims"] = config_.dims;
    j["modes"] = config_.modes;
    j["layers"] = config_.layers;
    j["elements"] = config_.elements;
    j["weights"] = weights_;
    return j.dump();
}

Surrogate Surrogate::from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.value("format", "") != "khronos-surrogate" || j.value("version", 0) != 1) {
        throw std::runtime_error("Surrogate::from_json: unrecognized format");
    }
    SurrogateConfig cfg;
    cfg.dims = j.at("dims").get<int>();
    cfg.modes = j.at("modes").get<int>();
    cfg.layers = j.at("layers").get<int>();
    cfg.elements = j.at("elements").get<std::vector<std::vector<int>>>();
    Surrogate s(cfg, 0);
    const auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != s.weights_.size()) {
        throw std::runtime_error("Surrogate::from_json: weight count mismatch");
    }
    s.weights_ = w;
    return s;
}

void Surrogate::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("Surrogate::save: cannot open " + path);
    out << to_json();
    if (!out) throw std::runtime_error("Surrogate::save: write failed for " + path);
}

Surrogate Surrogate::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("Surrogate::load: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

}  // namespace khronos
