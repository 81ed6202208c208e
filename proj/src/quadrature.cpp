#include "khronos/quadrature.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace khronos {

namespace {

std::atomic<std::uint64_t> g_gram_ops{0};

void count_ops(std::uint64_t n) { g_gram_ops.fetch_add(n, std::memory_order_relaxed); }

struct NodeWeight {
    double node;
    double weight;
};

// Gauss-Legendre abscissae/weights on [-1,1], n = 1..10.
const std::vector<std::vector<NodeWeight>> kGauss = {
    {{0.0, 2.0}},
    {{-0.57735026918962576, 1.0}, {0.57735026918962576, 1.0}},
    {{-0.77459666924148338, 0.55555555555555556},
     {0.0, 0.88888888888888889},
     {0.77459666924148338, 0.55555555555555556}},
    {{-0.86113631159405258, 0.34785484513745386},
     {-0.33998104358485626, 0.65214515486254614},
     {0.33998104358485626, 0.65214515486254614},
     {0.86113631159405258, 0.34785484513745386}},
    {{-0.90617984593866399, 0.23692688505618909},
     {-0.53846931010568309, 0.47862867049936647},
     {0.0, 0.56888888888888889},
     {0.53846931010568309, 0.47862867049936647},
     {0.90617984593866399, 0.23692688505618909}},
    {{-0.93246951420315203, 0.17132449237917035},
     {-0.66120938646626451, 0.36076157304813861},
     {-0.23861918608319691, 0.46791393457269105},
     {0.23861918608319691, 0.46791393457269105},
     {0.66120938646626451, 0.36076157304813861},
     {0.93246951420315203, 0.17132449237917035}},
    {{-0.94910791234275852, 0.12948496616886969},
     {-0.74153118559939444, 0.27970539148927667},
     {-0.40584515137739717, 0.38183005050511894},
     {0.0, 0.41795918367346939},
     {0.40584515137739717, 0.38183005050511894},
     {0.74153118559939444, 0.27970539148927667},
     {0.94910791234275852, 0.12948496616886969}},
    {{-0.96028985649753623, 0.10122853629037626},
     {-0.79666647741362674, 0.22238103445337447},
     {-0.52553240991632899, 0.31370664587788729},
     {-0.1834346424956498, 0.36268378337836198},
     {0.1834346424956498, 0.36268378337836198},
     {0.52553240991632899, 0.31370664587788729},
     {0.79666647741362674, 0.22238103445337447},
     {0.96028985649753623, 0.10122853629037626}},
    {{-0.96816023950762609, 0.081274388361574412},
     {-0.83603110732663579, 0.1806481606948574},
     {-0.6133714327005904, 0.26061069640293546},
     {-0.32425342340380893, 0.31234707704000284},
     {0.0, 0.33023935500125976},
     {0.32425342340380893, 0.31234707704000284},
     {0.6133714327005904, 0.26061069640293546},
     {0.83603110732663579, 0.1806481606948574},
     {0.96816023950762609, 0.081274388361574412}},
    {{-0.97390652851717172, 0.066671344308688138},
     {-0.86506336668898451, 0.14945134915058059},
     {-0.67940956829902441, 0.21908636251598204},
     {-0.43339539412924719, 0.26926671930999636},
     {-0.14887433898163121, 0.29552422471475287},
     {0.14887433898163121, 0.29552422471475287},
     {0.43339539412924719, 0.26926671930999636},
     {0.67940956829902441, 0.21908636251598204},
     {0.86506336668898451, 0.14945134915058059},
     {0.97390652851717172, 0.066671344308688138}}};

void require_2d_single_layer(const Surrogate& s, const SeparableFunction& f) {
    if (s.dims() != 2) {
        throw std::invalid_argument("energy path implements the 2D derivation only");
    }
    if (s.layers() != 1) {
        throw std::invalid_argument("energy path requires a single-layer surrogate");
    }
    if (f.dims() != 2) {
        throw std::invalid_argument("energy path: source must be separable in 2 dimensions");
    }
}

}  // namespace

GaussRule gauss_nodes(int n_gauss) {
    if (n_gauss < 1 || n_gauss > 10) {
        throw std::invalid_argument("gauss_nodes: n_gauss must be in [1,10]");
    }
    GaussRule rule;
    for (const auto& [node, weight] : kGauss[static_cast<std::size_t>(n_gauss - 1)]) {
        rule.nodes.push_back(0.5 * (node + 1.0));
        rule.weights.push_back(0.5 * weight);
    }
    return rule;
}

DimRule make_dim_rule(const KnotGrid& grid, int n_gauss) {
    const GaussRule ref = gauss_nodes(n_gauss);
    DimRule rule;
    rule.nodes.reserve(static_cast<std::size_t>(grid.n_elements * n_gauss));
    rule.weights.reserve(rule.nodes.capacity());
    for (int e = 0; e < grid.n_elements; ++e) {
        const double a = e * grid.h;
        for (std::size_t q = 0; q < ref.nodes.size(); ++q) {
            rule.nodes.push_back(a + ref.nodes[q] * grid.h);
            rule.weights.push_back(ref.weights[q] * grid.h);
        }
    }
    return rule;
}

QuadratureRule make_rule(const Surrogate& s, int n_gauss) {
    QuadratureRule rule;
    rule.n_gauss = n_gauss;
    for (int p = 0; p < s.dims(); ++p) {
        rule.dims.push_back(make_dim_rule(s.grid(p), n_gauss));
    }
    return rule;
}

double univariate_inner(const DimRule& rule, const std::function<double(double)>& fa,
                        const std::function<double(double)>& fb) {
    double sum = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        sum += rule.weights[q] * fa(rule.nodes[q]) * fb(rule.nodes[q]);
    }
    count_ops(rule.nodes.size());
    return sum;
}

double SeparableFunction::eval(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(dims())) {
        throw std::invalid_argument("SeparableFunction::eval: wrong point dimension");
    }
    double sum = 0.0;
    for (const auto& term : factors) {
        double prod = 1.0;
        for (std::size_t p = 0; p < term.size(); ++p) prod *= term[p](x[p]);
        sum += prod;
    }
    return sum;
}

GramSet assemble_grams(const Surrogate& s, const SeparableFunction& f,
                       const QuadratureRule& rule, int src_gauss) {
    require_2d_single_layer(s, f);
    if (rule.dims.size() != 2) {
        throw std::invalid_argument("assemble_grams: rule must cover both dimensions");
    }
    const int M = s.modes();
    const int N = f.rank();

    GramSet grams;
    grams.G = Matrix(static_cast<std::size_t>(M), static_cast<std::size_t>(M));
    grams.Gp = grams.G;
    grams.H = grams.G;
    grams.Hp = grams.G;
    grams.A = Matrix(static_cast<std::size_t>(M), static_cast<std::size_t>(N));
    grams.B = grams.A;

    auto g = [&](int m) { return [&s, m](double x) { return s.feature_map(m, 0, x); }; };
    auto gp = [&](int m) { return [&s, m](double x) { return s.feature_map_deriv(m, 0, x); }; };
    auto h = [&](int m) { return [&s, m](double y) { return s.feature_map(m, 1, y); }; };
    auto hp = [&](int m) { return [&s, m](double y) { return s.feature_map_deriv(m, 1, y); }; };

    for (int i = 0; i < M; ++i) {
        for (int j = i; j < M; ++j) {
            const double gij = univariate_inner(rule.dims[0], g(i), g(j));
            const double gpij = univariate_inner(rule.dims[0], gp(i), gp(j));
            const double hij = univariate_inner(rule.dims[1], h(i), h(j));
            const double hpij = univariate_inner(rule.dims[1], hp(i), hp(j));
            grams.G(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = gij;
            grams.G(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = gij;
            grams.Gp(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = gpij;
            grams.Gp(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = gpij;
            grams.H(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = hij;
            grams.H(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = hij;
            grams.Hp(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = hpij;
            grams.Hp(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = hpij;
        }
    }

    const DimRule src_x = make_dim_rule(s.grid(0), src_gauss);
    const DimRule src_y = make_dim_rule(s.grid(1), src_gauss);
    for (int m = 0; m < M; ++m) {
        for (int i = 0; i < N; ++i) {
            grams.A(static_cast<std::size_t>(m), static_cast<std::size_t>(i)) =
                univariate_inner(src_x, g(m), f.factors[static_cast<std::size_t>(i)][0]);
            grams.B(static_cast<std::size_t>(m), static_cast<std::size_t>(i)) =
                univariate_inner(src_y, h(m), f.factors[static_cast<std::size_t>(i)][1]);
        }
    }
    return grams;
}

double energy(const GramSet& grams) {
    const std::size_t M = grams.G.rows;
    if (grams.Gp.rows != M || grams.H.rows != M || grams.Hp.rows != M || grams.A.rows != M ||
        grams.B.rows != M || grams.A.cols != grams.B.cols) {
        throw std::invalid_argument("energy: inconsistent GramSet shapes");
    }
    double quad = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < M; ++j) {
            quad += grams.Gp(i, j) * grams.H(i, j) + grams.Hp(i, j) * grams.G(i, j);
        }
    }
    double src = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t i = 0; i < grams.A.cols; ++i) {
            src += grams.A(m, i) * grams.B(m, i);
        }
    }
    return 0.5 * quad - src;
}

EnergyAssembly::EnergyAssembly(const Surrogate& s, const SeparableFunction& f, int n_gauss,
                               int src_gauss) {
    require_2d_single_layer(s, f);
    modes_ = s.modes();
    rank_ = f.rank();
    for (int p = 0; p < 2; ++p) {
        const KnotGrid& grid = s.grid(p);
        const std::size_t n = static_cast<std::size_t>(grid.n_basis);
        Matrix mass(n, n);
        Matrix stiff(n, n);
        const DimRule rule = make_dim_rule(grid, n_gauss);
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            const BasisTriple bv = eval_basis_local(grid, rule.nodes[q]);
            const BasisTriple bd = eval_basis_deriv_local(grid, rule.nodes[q]);
            const double w = rule.weights[q];
            for (int a = 0; a < 3; ++a) {
                for (int b = 0; b < 3; ++b) {
                    const std::size_t ia = static_cast<std::size_t>(bv.first + a);
                    const std::size_t ib = static_cast<std::size_t>(bv.first + b);
                    mass(ia, ib) += w * bv.value[static_cast<std::size_t>(a)] *
                                    bv.value[static_cast<std::size_t>(b)];
                    stiff(ia, ib) += w * bd.value[static_cast<std::size_t>(a)] *
                                     bd.value[static_cast<std::size_t>(b)];
                }
            }
        }
        count_ops(rule.nodes.size() * 18);

        Matrix proj(static_cast<std::size_t>(rank_), n);
        const DimRule src_rule = make_dim_rule(grid, src_gauss);
        for (int i = 0; i < rank_; ++i) {
            const auto& factor = f.factors[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
            for (std::size_t q = 0; q < src_rule.nodes.size(); ++q) {
                const BasisTriple bv = eval_basis_local(grid, src_rule.nodes[q]);
                const double wf = src_rule.weights[q] * factor(src_rule.nodes[q]);
                for (int a = 0; a < 3; ++a) {
                    proj(static_cast<std::size_t>(i), static_cast<std::size_t>(bv.first + a)) +=
                        wf * bv.value[static_cast<std::size_t>(a)];
                }
            }
        }
        count_ops(src_rule.nodes.size() * static_cast<std::uint64_t>(3 * rank_));

        mass_.push_back(std::move(mass));
        stiff_.push_back(std::move(stiff));
        proj_.push_back(std::move(proj));
    }
}

namespace {

// y = A x for the small dense per-dimension matrices
void matvec(const Matrix& A, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < A.rows; ++i) {
        double sum = 0.0;
        const double* row = A.data.data() + i * A.cols;
        for (std::size_t j = 0; j < A.cols; ++j) sum += row[j] * x[j];
        y[i] = sum;
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

}  // namespace

double EnergyAssembly::value(const Surrogate& s) const {
    return value_and_grad(s, {});
}

double EnergyAssembly::value_and_grad(const Surrogate& s, std::span<double> grad_out) const {
    if (s.modes() != modes_ || s.dims() != 2 || s.layers() != 1) {
        throw std::invalid_argument("EnergyAssembly: surrogate does not match assembly");
    }
    const bool want_grad = !grad_out.empty();
    if (want_grad && grad_out.size() != s.param_count()) {
        throw std::invalid_argument("EnergyAssembly: gradient buffer has wrong size");
    }
    const int M = modes_;
    const int N = rank_;
    const std::size_t nx = static_cast<std::size_t>(s.grid(0).n_basis);
    const std::size_t ny = static_cast<std::size_t>(s.grid(1).n_basis);

    std::vector<double> mass_wx(static_cast<std::size_t>(M) * nx);
    std::vector<double> stiff_wx(static_cast<std::size_t>(M) * nx);
    std::vector<double> mass_wy(static_cast<std::size_t>(M) * ny);
    std::vector<double> stiff_wy(static_cast<std::size_t>(M) * ny);
    for (int m = 0; m < M; ++m) {
        const auto wx = s.weight_block(m, 0);
        const auto wy = s.weight_block(m, 1);
        matvec(mass_[0], wx, std::span<double>(mass_wx).subspan(static_cast<std::size_t>(m) * nx, nx));
        matvec(stiff_[0], wx, std::span<double>(stiff_wx).subspan(static_cast<std::size_t>(m) * nx, nx));
        matvec(mass_[1], wy, std::span<double>(mass_wy).subspan(static_cast<std::size_t>(m) * ny, ny));
        matvec(stiff_[1], wy, std::span<double>(stiff_wy).subspan(static_cast<std::size_t>(m) * ny, ny));
    }

    Matrix G(static_cast<std::size_t>(M), static_cast<std::size_t>(M));
    Matrix Gp = G, H = G, Hp = G;
    for (int m = 0; m < M; ++m) {
        const auto wx = s.weight_block(m, 0);
        const auto wy = s.weight_block(m, 1);
        for (int j = 0; j < M; ++j) {
            G(static_cast<std::size_t>(m), static_cast<std::size_t>(j)) =
                dot(wx, std::span<const double>(mass_wx).subspan(static_cast<std::size_t>(j) * nx, nx));
            Gp(static_cast<std::size_t>(m), static_cast<std::size_t>(j)) =
                dot(wx, std::span<const double>(stiff_wx).subspan(static_cast<std::size_t>(j) * nx, nx));
            H(static_cast<std::size_t>(m), static_cast<std::size_t>(j)) =
                dot(wy, std::span<const double>(mass_wy).subspan(static_cast<std::size_t>(j) * ny, ny));
            Hp(static_cast<std::size_t>(m), static_cast<std::size_t>(j)) =
                dot(wy, std::span<const double>(stiff_wy).subspan(static_cast<std::size_t>(j) * ny, ny));
        }
    }

    Matrix A(static_cast<std::size_t>(M), static_cast<std::size_t>(N));
    Matrix B = A;
    for (int m = 0; m < M; ++m) {
        const auto wx = s.weight_block(m, 0);
        const auto wy = s.weight_block(m, 1);
        for (int i = 0; i < N; ++i) {
            A(static_cast<std::size_t>(m), static_cast<std::size_t>(i)) =
                dot(wx, std::span<const double>(proj_[0].data)
                            .subspan(static_cast<std::size_t>(i) * nx, nx));
            B(static_cast<std::size_t>(m), static_cast<std::size_t>(i)) =
                dot(wy, std::span<const double>(proj_[1].data)
                            .subspan(static_cast<std::size_t>(i) * ny, ny));
        }
    }

    double quad = 0.0;
    double src = 0.0;
    for (int m = 0; m < M; ++m) {
        for (int j = 0; j < M; ++j) {
            quad += Gp(static_cast<std::size_t>(m), static_cast<std::size_t>(j)) *
                        H(static_cast<std::size_t>(m), static_cast<std::size_t>(j)) +
                    Hp(static_cast<std::size_t>(m), static_cast<std::size_t>(j)) *
                        G(static_cast<std::size_t>(m), static_cast<std::size_t>(j));
        }
        for (int i = 0; i < N; ++i) {
            src += A(static_cast<std::size_t>(m), static_cast<std::size_t>(i)) *
                   B(static_cast<std::size_t>(m), static_cast<std::size_t>(i));
        }
    }
    const double value = 0.5 * quad - src;
    if (!want_grad) return value;

    std::fill(grad_out.begin(), grad_out.end(), 0.0);
    for (int m = 0; m < M; ++m) {
        const std::size_t off_x = s.weight_offset(m, 0);
        const std::size_t off_y = s.weight_offset(m, 1);
        for (int j = 0; j < M; ++j) {
            const double h_mj = H(static_cast<std::size_t>(m), static_cast<std::size_t>(j));
            const double hp_mj = Hp(static_cast<std::size_t>(m), static_cast<std::size_t>(j));
            const double g_mj = G(static_cast<std::size_t>(m), static_cast<std::size_t>(j));
            const double gp_mj = Gp(static_cast<std::size_t>(m), static_cast<std::size_t>(j));
            const double* sx = stiff_wx.data() + static_cast<std::size_t>(j) * nx;
            const double* mx = mass_wx.data() + static_cast<std::size_t>(j) * nx;
            const double* sy = stiff_wy.data() + static_cast<std::size_t>(j) * ny;
            const double* my = mass_wy.data() + static_cast<std::size_t>(j) * ny;
            for (std::size_t b = 0; b < nx; ++b) {
                grad_out[off_x + b] += h_mj * sx[b] + hp_mj * mx[b];
            }
            for (std::size_t b = 0; b < ny; ++b) {
                grad_out[off_y + b] += gp_mj * my[b] + g_mj * sy[b];
            }
        }
        for (int i = 0; i < N; ++i) {
            const double a_mi = A(static_cast<std::size_t>(m), static_cast<std::size_t>(i));
            const double b_mi = B(static_cast<std::size_t>(m), static_cast<std::size_t>(i));
            const double* px = proj_[0].data.data() + static_cast<std::size_t>(i) * nx;
            const double* py = proj_[1].data.data() + static_cast<std::size_t>(i) * ny;
            for (std::size_t b = 0; b < nx; ++b) grad_out[off_x + b] -= b_mi * px[b];
            for (std::size_t b = 0; b < ny; ++b) grad_out[off_y + b] -= a_mi * py[b];
        }
    }
    return value;
}

std::vector<double> energy_grad(const Surrogate& s, const SeparableFunction& f,
                                const QuadratureRule& rule, int src_gauss) {
    EnergyAssembly assembly(s, f, rule.n_gauss, src_gauss);
    std::vector<double> grad(s.param_count(), 0.0);
    assembly.value_and_grad(s, grad);
    return grad;
}

std::uint64_t gram_op_count() noexcept { return g_gram_ops.load(std::memory_order_relaxed); }
void reset_gram_op_count() noexcept { g_gram_ops.store(0, std::memory_order_relaxed); }

}  // namespace khronos
