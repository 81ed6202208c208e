#include "khronos/surrogate.hpp"

#include "khronos/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <array>
#include <cmath>

using namespace khronos;

namespace {

Surrogate bubble_product_surrogate() {
    // P=2, M=1 surrogate fitted to x(1-x) * y(1-y)
    Surrogate s(SurrogateConfig::uniform(2, 1, 2), 0);
    auto bubble = [](double x) { return x * (1.0 - x); };
    const auto w = oracles::fit_univariate(s.grid(0), bubble);
    for (int p = 0; p < 2; ++p) {
        auto block = s.weight_block(0, p);
        std::copy(w.begin(), w.end(), block.begin());
    }
    return s;
}

Surrogate random_surrogate(int dims, int modes, int n_el, std::uint64_t seed, int layers = 1) {
    Surrogate s(SurrogateConfig::uniform(dims, modes, n_el, layers), seed);
    auto w = s.weights();
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = rng::uniform(seed, 0x5257ULL, i, 0.2, 1.2);
    }
    return s;
}

std::vector<double> random_point(int dims, std::uint64_t seed, std::uint64_t tag) {
    std::vector<double> x(static_cast<std::size_t>(dims));
    for (std::size_t p = 0; p < x.size(); ++p) {
        x[p] = 0.002 + 0.996 * rng::u01(seed, tag, p);
    }
    return x;
}

}  // namespace

TEST_CASE("feature_map") {
    SUBCASE("unit weights give 1, zero weights give 0") {
        Surrogate s(SurrogateConfig::uniform(3, 2, 4), 1);
        s.init_uniform(1.0, 0.0, 0);
        CHECK(s.feature_map(0, 1, 0.37) == doctest::Approx(1.0).epsilon(1e-14));
        s.init_uniform(0.0, 0.0, 0);
        CHECK(s.feature_map(1, 2, 0.9) == doctest::Approx(0.0));
    }
    SUBCASE("quadratic reproduction through the fit oracle") {
        const Surrogate s = bubble_product_surrogate();
        for (int k = 0; k < 50; ++k) {
            const double x = rng::u01(3, static_cast<std::uint64_t>(k));
            CHECK(std::abs(s.feature_map(0, 0, x) - x * (1.0 - x)) <= 1e-10);
        }
    }
}

TEST_CASE("forward") {
    SUBCASE("product of ones over 20 dimensions") {
        Surrogate s(SurrogateConfig::uniform(20, 1, 3), 0);
        s.init_uniform(1.0, 0.0, 0);
        const std::vector<double> x(20, 0.31);
        CHECK(s.forward(x) == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("opposite-sign modes cancel for odd P") {
        Surrogate s(SurrogateConfig::uniform(3, 2, 2), 0);
        for (int p = 0; p < 3; ++p) {
            for (double& w : s.weight_block(0, p)) w = 1.0;
            for (double& w : s.weight_block(1, p)) w = -1.0;
        }
        const std::vector<double> x = {0.2, 0.5, 0.9};
        CHECK(std::abs(s.forward(x)) <= 1e-14);
    }
    SUBCASE("bubble product at the center") {
        const Surrogate s = bubble_product_surrogate();
        const std::vector<double> x = {0.5, 0.5};
        CHECK(s.forward(x) == doctest::Approx(0.0625).epsilon(1e-10));
    }
    SUBCASE("separability: forward equals the product-sum of feature maps") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const int P = 1 + static_cast<int>(seed % 4);
            const int M = 1 + static_cast<int>(seed % 3);
            const Surrogate s = random_surrogate(P, M, 3, seed);
            const auto x = random_point(P, seed, 1);
            double expected = 0.0;
            for (int j = 0; j < M; ++j) {
                double prod = 1.0;
                for (int p = 0; p < P; ++p) prod *= s.feature_map(j, p, x[static_cast<std::size_t>(p)]);
                expected += prod;
            }
            const double got = s.forward(x);
            CHECK(std::abs(got - expected) <= 1e-14 * std::max(1.0, std::abs(expected)));
        }
    }
    SUBCASE("input validation") {
        Surrogate s(SurrogateConfig::uniform(2, 1, 2), 0);
        const std::vector<double> bad_size = {0.5};
        CHECK_THROWS_AS(s.forward(bad_size), std::invalid_argument);
        const std::vector<double> out_of_domain = {0.5, 1.5};
        CHECK_THROWS_AS(s.forward(out_of_domain), std::domain_error);
    }
}

TEST_CASE("grad_input") {
    SUBCASE("constant feature maps have zero gradient") {
        Surrogate s(SurrogateConfig::uniform(4, 2, 3), 0);
        s.init_uniform(0.8, 0.0, 0);
        const std::vector<double> x = {0.1, 0.4, 0.6, 0.9};
        for (const double g : s.grad_input(x)) CHECK(std::abs(g) <= 1e-12);
    }
    SUBCASE("bubble product analytic derivative") {
        const Surrogate s = bubble_product_surrogate();
        const std::vector<double> x = {0.25, 0.5};
        const auto g = s.grad_input(x);
        CHECK(g[0] == doctest::Approx(0.125).epsilon(1e-9));
    }
    SUBCASE("matches central finite differences on random instances") {
        int checked = 0;
        for (std::uint64_t seed = 0; checked < 100; ++seed) {
            const int P = 1 + static_cast<int>(seed % 4);
            const int M = 1 + static_cast<int>((seed / 4) % 3);
            const int n_el = 1 + static_cast<int>((seed / 12) % 8);
            const Surrogate s = random_surrogate(P, M, n_el, seed);
            const auto x = random_point(P, seed, 2);
            const auto g = s.grad_input(x);
            for (int p = 0; p < P; ++p) {
                auto slice = [&](double t) {
                    auto xx = x;
                    xx[static_cast<std::size_t>(p)] = t;
                    return s.forward(xx);
                };
                const double fd = oracles::central_diff(slice, x[static_cast<std::size_t>(p)], 1e-6);
                const double scale = std::max(std::abs(fd), 1e-3);
                CHECK(std::abs(g[static_cast<std::size_t>(p)] - fd) <= 1e-5 * scale);
            }
            ++checked;
        }
    }
}

TEST_CASE("grad_params") {
    SUBCASE("1D single mode gradient is the basis vector") {
        Surrogate s(SurrogateConfig::uniform(1, 1, 4), 3);
        const std::vector<double> x = {0.63};
        const auto g = s.grad_params(x, 1.0);
        const auto b = eval_basis(s.grid(0), 0.63);
        REQUIRE(g.size() == b.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            CHECK(g[i] == doctest::Approx(b[i]).epsilon(1e-14));
        }
    }
    SUBCASE("weights without support at x get zero gradient") {
        Surrogate s(SurrogateConfig::uniform(1, 1, 8), 3);
        const std::vector<double> x = {0.05};  // first element; bases 0..2 active
        const auto g = s.grad_params(x, 2.0);
        for (std::size_t i = 3; i < g.size(); ++i) CHECK(g[i] == 0.0);
        CHECK(g[0] != 0.0);
    }
    SUBCASE("matches central finite differences on random instances") {
        int checked = 0;
        for (std::uint64_t seed = 50; checked < 100; ++seed) {
            const int P = 1 + static_cast<int>(seed % 3);
            const int M = 1 + static_cast<int>((seed / 3) % 3);
            Surrogate s = random_surrogate(P, M, 2 + static_cast<int>(seed % 4), seed);
            const auto x = random_point(P, seed, 3);
            const double upstream = 1.7;
            const auto g = s.grad_params(x, upstream);
            auto w = s.weights();
            for (std::size_t i = 0; i < w.size(); i += 1 + w.size() / 7) {
                const double saved = w[i];
                const double h = 1e-6;
                w[i] = saved + h;
                const double up = s.forward(x);
                w[i] = saved - h;
                const double down = s.forward(x);
                w[i] = saved;
                const double fd = upstream * (up - down) / (2.0 * h);
                const double scale = std::max(std::abs(fd), 1e-3);
                CHECK(std::abs(g[i] - fd) <= 1e-5 * scale);
            }
            ++checked;
        }
    }
}

TEST_CASE("stacked layers") {
    SUBCASE("gradients stay consistent with finite differences") {
        for (std::uint64_t seed = 200; seed < 210; ++seed) {
            Surrogate s(SurrogateConfig::uniform(2, 2, 3, 2), seed);
            auto w = s.weights();
            // keep layer outputs around [0,1] so clamps stay mostly inactive
            for (std::size_t i = 0; i < w.size(); ++i) {
                w[i] = rng::uniform(seed, 0x4c32ULL, i, 0.3, 0.9);
            }
            const auto x = random_point(2, seed, 4);
            const auto gi = s.grad_input(x);
            for (int p = 0; p < 2; ++p) {
                auto slice = [&](double t) {
                    auto xx = x;
                    xx[static_cast<std::size_t>(p)] = t;
                    return s.forward(xx);
                };
                const double fd = oracles::central_diff(slice, x[static_cast<std::size_t>(p)], 1e-6);
                CHECK(std::abs(gi[static_cast<std::size_t>(p)] - fd) <=
                      1e-5 * std::max(std::abs(fd), 1e-3));
            }
            const auto gp = s.grad_params(x, 1.0);
            for (std::size_t i = 0; i < w.size(); i += 3) {
                const double saved = w[i];
                const double h = 1e-6;
                w[i] = saved + h;
                const double up = s.forward(x);
                w[i] = saved - h;
                const double down = s.forward(x);
                w[i] = saved;
                const double fd = (up - down) / (2.0 * h);
                CHECK(std::abs(gp[i] - fd) <= 1e-5 * std::max(std::abs(fd), 1e-3));
            }
        }
    }
    SUBCASE("active clamp zeroes the input derivative") {
        Surrogate s(SurrogateConfig::uniform(1, 1, 2, 2), 0);
        s.init_uniform(2.0, 0.0, 0);  // first layer outputs 2, clamped to 1
        const std::vector<double> x = {0.5};
        const auto g = s.grad_input(x);
        CHECK(g[0] == 0.0);
        CHECK(std::isfinite(s.forward(x)));
    }
}

TEST_CASE("parameter count matches the configuration") {
    for (const auto& [P, M, n_el] : {std::array<int, 3>{8, 3, 2}, std::array<int, 3>{20, 1, 40},
                                     std::array<int, 3>{2, 1, 6}}) {
        const Surrogate s(SurrogateConfig::uniform(P, M, n_el), 0);
        CHECK(s.param_count() ==
              static_cast<std::size_t>(M) * static_cast<std::size_t>(P) *
                  static_cast<std::size_t>(n_el + 2));
    }
}

TEST_CASE("forward is affine in one dimension's weights of one mode") {
    const Surrogate base = random_surrogate(3, 2, 3, 9);
    const auto x = random_point(3, 9, 5);
    std::vector<double> direction(base.weight_block(1, 2).size());
    for (std::size_t i = 0; i < direction.size(); ++i) {
        direction[i] = rng::uniform(9, 0xd1ULL, i, -1.0, 1.0);
    }
    auto value_at = [&](double t) {
        Surrogate s = base;
        auto block = s.weight_block(1, 2);
        for (std::size_t i = 0; i < block.size(); ++i) block[i] += t * direction[i];
        return s.forward(x);
    };
    const double f0 = value_at(0.0);
    const double f1 = value_at(1.0);
    const double fmid = value_at(0.5);
    CHECK(fmid == doctest::Approx(0.5 * (f0 + f1)).epsilon(1e-12));
}

TEST_CASE("eval_grid") {
    SUBCASE("matches pointwise forward on a 10x10 grid") {
        const Surrogate s = random_surrogate(2, 3, 4, 17);
        std::vector<double> axis(10);
        for (int i = 0; i < 10; ++i) axis[static_cast<std::size_t>(i)] = i / 9.0;
        const GridTensor grid = s.eval_grid({axis, axis});
        REQUIRE(grid.shape == std::vector<std::size_t>{10, 10});
        for (int ix = 0; ix < 10; ++ix) {
            for (int iy = 0; iy < 10; ++iy) {
                const std::vector<double> x = {axis[static_cast<std::size_t>(ix)],
                                               axis[static_cast<std::size_t>(iy)]};
                const double ref = s.forward(x);
                const double got = grid.data[static_cast<std::size_t>(ix) * 10 +
                                             static_cast<std::size_t>(iy)];
                CHECK(std::abs(got - ref) <= 1e-14 * std::max(1.0, std::abs(ref)));
            }
        }
    }
    SUBCASE("matches pointwise forward in three dimensions") {
        const Surrogate s = random_surrogate(3, 2, 2, 23);
        std::vector<double> axis = {0.0, 0.3, 0.8, 1.0};
        const GridTensor grid = s.eval_grid({axis, axis, axis});
        for (std::size_t ix = 0; ix < 4; ++ix) {
            for (std::size_t iy = 0; iy < 4; ++iy) {
                for (std::size_t iz = 0; iz < 4; ++iz) {
                    const std::vector<double> x = {axis[ix], axis[iy], axis[iz]};
                    const double ref = s.forward(x);
                    CHECK(grid.data[(ix * 4 + iy) * 4 + iz] ==
                          doctest::Approx(ref).epsilon(1e-14));
                }
            }
        }
    }
    SUBCASE("constant surrogate gives a constant tensor") {
        Surrogate s(SurrogateConfig::uniform(2, 2, 3), 0);
        s.init_uniform(1.0, 0.0, 0);
        std::vector<double> axis = {0.0, 0.25, 0.5, 0.75, 1.0};
        const GridTensor grid = s.eval_grid({axis, axis});
        for (const double v : grid.data) CHECK(v == doctest::Approx(2.0).epsilon(1e-14));
    }
    SUBCASE("derivative grid matches grad_input") {
        const Surrogate s = random_surrogate(2, 2, 5, 29);
        std::vector<double> axis = {0.1, 0.4, 0.75};
        const GridTensor gx = s.eval_grid_deriv({axis, axis}, 0);
        const GridTensor gy = s.eval_grid_deriv({axis, axis}, 1);
        for (std::size_t ix = 0; ix < 3; ++ix) {
            for (std::size_t iy = 0; iy < 3; ++iy) {
                const std::vector<double> x = {axis[ix], axis[iy]};
                const auto g = s.grad_input(x);
                CHECK(gx.data[ix * 3 + iy] == doctest::Approx(g[0]).epsilon(1e-13));
                CHECK(gy.data[ix * 3 + iy] == doctest::Approx(g[1]).epsilon(1e-13));
            }
        }
    }
    SUBCASE("element cap guards memory") {
        const Surrogate s = random_surrogate(2, 1, 2, 31);
        std::vector<double> axis(1000);
        for (int i = 0; i < 1000; ++i) axis[static_cast<std::size_t>(i)] = i / 999.0;
        CHECK_THROWS_AS(s.eval_grid({axis, axis}, 1000), std::length_error);
    }
    SUBCASE("large grids avoid per-node basis evaluation") {
        const Surrogate s = random_surrogate(2, 2, 8, 37);
        std::vector<double> axis(1000);
        for (int i = 0; i < 1000; ++i) axis[static_cast<std::size_t>(i)] = i / 999.0;
        reset_basis_eval_count();
        const GridTensor grid = s.eval_grid({axis, axis});
        const std::uint64_t evals = basis_eval_count();
        CHECK(grid.data.size() == 1000000);
        CHECK(evals <= static_cast<std::uint64_t>(s.modes()) * 2000);
    }
}

TEST_CASE("serialization") {
    SUBCASE("JSON round trip is bit exact") {
        const Surrogate s = random_surrogate(3, 2, 5, 41);
        const Surrogate restored = Surrogate::from_json(s.to_json());
        REQUIRE(restored.param_count() == s.param_count());
        const auto a = s.weights();
        const auto b = restored.weights();
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
        CHECK(restored.dims() == s.dims());
        CHECK(restored.modes() == s.modes());
    }
    SUBCASE("file round trip") {
        const Surrogate s = random_surrogate(2, 1, 3, 43);
        const std::string path = "surrogate_roundtrip_test.json";
        s.save(path);
        const Surrogate restored = Surrogate::load(path);
        const auto a = s.weights();
        const auto b = restored.weights();
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
        std::remove(path.c_str());
    }
    SUBCASE("rejects malformed input") {
        CHECK_THROWS(Surrogate::from_json("{\"format\":\"something-else\"}"));
        CHECK_THROWS(Surrogate::load("does_not_exist.json"));
    }
}
