#include "khronos/training.hpp"

#include "khronos/dataset.hpp"
#include "khronos/poisson.hpp"
#include "khronos/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace khronos;

namespace {

DataMatrix random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
    DataMatrix X(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < d; ++p) {
            X.values[i * d + p] = rng::u01(seed, i, p);
        }
    }
    return X;
}

}  // namespace

TEST_CASE("cosine_lr") {
    CHECK(cosine_lr(0, 1000, 0.15, 0.05) == doctest::Approx(0.15).epsilon(1e-14));
    CHECK(cosine_lr(999, 1000, 0.15, 0.05) == doctest::Approx(0.05).epsilon(1e-14));
    // odd epoch count puts an exact midpoint on the schedule
    CHECK(cosine_lr(500, 1001, 0.15, 0.05) == doctest::Approx(0.10).epsilon(1e-14));
    SUBCASE("monotone nonincreasing") {
        double prev = cosine_lr(0, 300, 0.2, 0.01);
        for (int e = 1; e < 300; ++e) {
            const double lr = cosine_lr(e, 300, 0.2, 0.01);
            CHECK(lr <= prev + 1e-15);
            prev = lr;
        }
    }
    SUBCASE("degenerate totals return lr_start") {
        CHECK(cosine_lr(0, 1, 0.15, 0.05) == 0.15);
        CHECK(cosine_lr(0, 0, 0.15, 0.05) == 0.15);
    }
}

TEST_CASE("adam_step") {
    SUBCASE("zero gradient from a fresh state leaves weights unchanged") {
        std::vector<double> w = {1.0, -2.0};
        const std::vector<double> g = {0.0, 0.0};
        AdamState state(2);
        adam_step(w, g, state, 0.1);
        CHECK(w[0] == 1.0);
        CHECK(w[1] == -2.0);
    }
    SUBCASE("zero gradient decays existing moments") {
        std::vector<double> w = {1.0};
        AdamState state(1);
        const std::vector<double> g1 = {2.0};
        adam_step(w, g1, state, 0.1);
        const double m_before = state.m[0];
        const double v_before = state.v[0];
        const std::vector<double> g0 = {0.0};
        adam_step(w, g0, state, 0.1);
        CHECK(state.m[0] == doctest::Approx(0.9 * m_before).epsilon(1e-14));
        CHECK(state.v[0] == doctest::Approx(0.999 * v_before).epsilon(1e-14));
    }
    SUBCASE("first step magnitude is about lr") {
        std::vector<double> w = {5.0, -1.0};
        const std::vector<double> g = {3.0, -0.01};
        AdamState state(2);
        adam_step(w, g, state, 0.1);
        CHECK(std::abs(w[0] - (5.0 - 0.1)) <= 1e-6);
        CHECK(std::abs(w[1] - (-1.0 + 0.1)) <= 1e-4);
    }
    SUBCASE("200 steps on the quadratic bowl") {
        std::vector<double> w = {1.0, 1.0};
        AdamState state(2);
        std::vector<double> g(2);
        for (int t = 0; t < 200; ++t) {
            g[0] = 2.0 * w[0];
            g[1] = 2.0 * w[1];
            adam_step(w, g, state, 0.1);
        }
        CHECK(std::sqrt(w[0] * w[0] + w[1] * w[1]) <= 1e-2);
    }
    SUBCASE("non-finite gradient aborts") {
        std::vector<double> w = {1.0};
        AdamState state(1);
        const std::vector<double> g = {std::numeric_limits<double>::quiet_NaN()};
        CHECK_THROWS_AS(adam_step(w, g, state, 0.1), std::runtime_error);
    }
}

TEST_CASE("mse_loss") {
    SUBCASE("self-targets give zero loss and zero gradients") {
        Surrogate s(SurrogateConfig::uniform(2, 2, 3), 5);
        const DataMatrix X = random_points(50, 2, 5);
        std::vector<double> y(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i) y[i] = s.forward(X.row(i));
        std::vector<double> grad(s.param_count());
        CHECK(mse_loss(s, X, y, grad) == 0.0);
        for (const double g : grad) CHECK(g == 0.0);
    }
    SUBCASE("single point arithmetic") {
        Surrogate s(SurrogateConfig::uniform(1, 1, 2), 0);
        s.init_uniform(0.0, 0.0, 0);
        DataMatrix X(1, 1);
        X.values[0] = 0.4;
        const std::vector<double> y = {2.0};
        CHECK(mse_loss(s, X, y) == doctest::Approx(4.0).epsilon(1e-14));
    }
    SUBCASE("gradient matches finite differences") {
        Surrogate s(SurrogateConfig::uniform(3, 2, 2), 7);
        const DataMatrix X = random_points(40, 3, 7);
        std::vector<double> y(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i) y[i] = rng::u01(9, i);
        std::vector<double> grad(s.param_count());
        mse_loss(s, X, y, grad);
        auto w = s.weights();
        for (std::size_t i = 0; i < w.size(); i += 5) {
            const double saved = w[i];
            const double h = 1e-6;
            w[i] = saved + h;
            const double up = mse_loss(s, X, y);
            w[i] = saved - h;
            const double down = mse_loss(s, X, y);
            w[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            CHECK(std::abs(grad[i] - fd) <= 1e-5 * std::max(std::abs(fd), 1e-3));
        }
    }
    SUBCASE("rejects an empty dataset") {
        Surrogate s(SurrogateConfig::uniform(1, 1, 2), 0);
        DataMatrix X;
        X.cols = 1;
        CHECK_THROWS_AS(mse_loss(s, X, {}), std::invalid_argument);
    }
}

TEST_CASE("train_cooperative") {
    SUBCASE("convex realizable problem reaches 1e-10") {
        Surrogate s(SurrogateConfig::uniform(1, 1, 4), 11);
        const DataMatrix X = random_points(400, 1, 11);
        std::vector<double> y(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i) {
            const double x = X.values[i];
            y[i] = x * (1.0 - x);
        }
        TrainConfig cfg;
        cfg.epochs = 2000;
        cfg.lr_start = 0.1;
        cfg.lr_end = 1e-7;
        cfg.seed = 11;
        const TrainReport report = train_cooperative(s, cfg, X, y);
        CHECK(report.final_loss <= 1e-10);
        CHECK(static_cast<int>(report.loss_history.size()) == cfg.epochs);
        CHECK(report.loss_history.back() <= report.loss_history.front());
    }
    SUBCASE("single mode fits an exactly representable separable product") {
        Surrogate s(SurrogateConfig::uniform(2, 1, 2), 13);
        const DataMatrix X = random_points(600, 2, 13);
        std::vector<double> y(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i) {
            const auto r = X.row(i);
            y[i] = (0.5 + r[0] * (1.0 - r[0])) * (0.7 + 0.2 * r[1] * r[1]);
        }
        TrainConfig cfg;
        cfg.epochs = 3000;
        cfg.lr_start = 0.1;
        cfg.lr_end = 1e-8;
        cfg.seed = 13;
        const TrainReport report = train_cooperative(s, cfg, X, y);
        CHECK(report.final_loss <= 1e-8);
    }
    SUBCASE("deterministic: identical config gives identical history") {
        auto run = [](int threads) {
            Surrogate s(SurrogateConfig::uniform(2, 2, 3), 17);
            const DataMatrix X = random_points(3000, 2, 17);
            std::vector<double> y(X.rows);
            for (std::size_t i = 0; i < X.rows; ++i) {
                const auto r = X.row(i);
                y[i] = std::sin(3.0 * r[0]) * r[1] + 0.2;
            }
            TrainConfig cfg;
            cfg.epochs = 40;
            cfg.lr_start = 0.1;
            cfg.lr_end = 0.01;
            cfg.seed = 17;
            cfg.threads = threads;
            return train_cooperative(s, cfg, X, y).loss_history;
        };
        const auto h1 = run(1);
        const auto h1b = run(1);
        const auto h2 = run(2);
        const auto h4 = run(4);
        REQUIRE(h1.size() == h2.size());
        for (std::size_t i = 0; i < h1.size(); ++i) {
            CHECK(h1[i] == h1b[i]);
            CHECK(h1[i] == h2[i]);  // bitwise: worker count cannot matter
            CHECK(h1[i] == h4[i]);
        }
    }
    SUBCASE("mini-batch training is deterministic and improves the loss") {
        auto run = [] {
            Surrogate s(SurrogateConfig::uniform(2, 1, 3), 19);
            const DataMatrix X = random_points(2000, 2, 19);
            std::vector<double> y(X.rows);
            for (std::size_t i = 0; i < X.rows; ++i) {
                const auto r = X.row(i);
                y[i] = 0.4 + 0.3 * r[0] - 0.2 * r[1] * r[0];
            }
            TrainConfig cfg;
            cfg.epochs = 30;
            cfg.lr_start = 0.05;
            cfg.lr_end = 0.005;
            cfg.batch = 256;
            cfg.seed = 19;
            return train_cooperative(s, cfg, X, y);
        };
        const TrainReport a = run();
        const TrainReport b = run();
        REQUIRE(a.loss_history.size() == b.loss_history.size());
        for (std::size_t i = 0; i < a.loss_history.size(); ++i) {
            CHECK(a.loss_history[i] == b.loss_history[i]);
        }
        CHECK(a.final_loss < a.loss_history.front());
    }
    SUBCASE("divergence guard aborts runaway training") {
        Surrogate s(SurrogateConfig::uniform(4, 1, 2), 23);
        const DataMatrix X = random_points(100, 4, 23);
        std::vector<double> y(X.rows, 0.5);
        TrainConfig cfg;
        cfg.epochs = 2000;
        cfg.lr_start = 50.0;
        cfg.lr_end = 50.0;
        cfg.seed = 23;
        CHECK_THROWS_AS(train_cooperative(s, cfg, X, y), std::runtime_error);
    }
    SUBCASE("configuration validation") {
        Surrogate s(SurrogateConfig::uniform(1, 1, 2), 0);
        DataMatrix X = random_points(10, 1, 0);
        std::vector<double> y(10, 0.5);
        TrainConfig cfg;
        cfg.lr_start = 0.01;
        cfg.lr_end = 0.1;  // violates lr_start >= lr_end
        CHECK_THROWS_AS(train_cooperative(s, cfg, X, y), std::invalid_argument);
        cfg = TrainConfig{};
        cfg.epochs = 0;
        CHECK_THROWS_AS(train_cooperative(s, cfg, X, y), std::invalid_argument);
    }
}

TEST_CASE("train_sequential") {
    // tensor-grid training data keeps the empirical metric separable, which
    // greedy rank-1 deflation needs to terminate at the true rank
    auto grid_data = [](std::size_t side) {
        DataMatrix X(side * side, 2);
        for (std::size_t i = 0; i < side; ++i) {
            for (std::size_t j = 0; j < side; ++j) {
                X.values[(i * side + j) * 2] = (static_cast<double>(i) + 0.5) / static_cast<double>(side);
                X.values[(i * side + j) * 2 + 1] =
                    (static_cast<double>(j) + 0.5) / static_cast<double>(side);
            }
        }
        return X;
    };
    auto legendre1 = [](double v) { return std::sqrt(3.0) * (2.0 * v - 1.0); };

    SUBCASE("rank-1 target stops after one mode") {
        const DataMatrix X = grid_data(30);
        std::vector<double> y(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i) {
            const auto r = X.row(i);
            y[i] = (1.0 + r[0]) * (1.0 + 0.5 * r[1]);
        }
        TrainConfig cfg;
        cfg.epochs = 1500;
        cfg.lr_start = 0.1;
        cfg.lr_end = 1e-6;
        cfg.seed = 29;
        cfg.seq_tolerance = 1e-3;
        cfg.max_modes = 4;
        const auto [s, report] = train_sequential(SurrogateConfig::uniform(2, 1, 2), cfg, X, y);
        CHECK(report.modes_used == 1);
        CHECK(report.tolerance_met);
        CHECK(s.modes() == 1);
    }
    SUBCASE("rank-2 target needs exactly two modes at 1e-6") {
        const DataMatrix X = grid_data(50);
        std::vector<double> y(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i) {
            const auto r = X.row(i);
            y[i] = 3.0 + 0.5 * legendre1(r[0]) * legendre1(r[1]);
        }
        TrainConfig cfg;
        cfg.epochs = 4000;
        cfg.lr_start = 0.1;
        cfg.lr_end = 1e-8;
        cfg.seed = 31;
        cfg.seq_tolerance = 1e-6;
        cfg.max_modes = 4;
        const auto [s, report] = train_sequential(SurrogateConfig::uniform(2, 1, 2), cfg, X, y);
        CHECK(report.modes_used == 2);
        CHECK(report.tolerance_met);
        REQUIRE(report.residual_history.size() == 2);
        CHECK(report.residual_history[1] < 1e-6);
        // residual norms cannot grow as modes are accepted
        CHECK(report.residual_history[1] <= report.residual_history[0]);
        // the merged surrogate superposes the modes it trained
        const std::vector<double> probe = {0.3, 0.8};
        CHECK(std::abs(s.forward(probe) - (3.0 + 0.5 * legendre1(0.3) * legendre1(0.8))) <= 1e-5);
    }
    SUBCASE("mode budget exhaustion is reported, not thrown") {
        const DataMatrix X = grid_data(20);
        std::vector<double> y(X.rows);
        for (std::size_t i = 0; i < X.rows; ++i) {
            const auto r = X.row(i);
            y[i] = std::sin(6.0 * r[0] + 4.0 * r[1]);  // far from rank 1
        }
        TrainConfig cfg;
        cfg.epochs = 150;
        cfg.lr_start = 0.1;
        cfg.lr_end = 0.01;
        cfg.seed = 37;
        cfg.seq_tolerance = 1e-12;
        cfg.max_modes = 2;
        const auto [s, report] = train_sequential(SurrogateConfig::uniform(2, 1, 3), cfg, X, y);
        CHECK(report.modes_used == 2);
        CHECK_FALSE(report.tolerance_met);
        CHECK(s.modes() == 2);
    }
}

TEST_CASE("mixed_loss") {
    const PoissonProblem prob = make_poisson_problem();
    Surrogate s(SurrogateConfig::uniform(2, 1, 4), 41);
    const EnergyAssembly assembly(s, prob.source);
    const DataMatrix X = random_points(30, 2, 41);
    std::vector<double> y(X.rows);
    for (std::size_t i = 0; i < X.rows; ++i) y[i] = prob.exact_u(X.row(i)[0], X.row(i)[1]);

    std::vector<double> g_mixed(s.param_count());
    std::vector<double> g_mse(s.param_count());
    std::vector<double> g_energy(s.param_count());

    SUBCASE("alpha_model = 0 reduces to the MSE loss") {
        const double mixed = mixed_loss(s, X, y, assembly, 1.0, 0.0, g_mixed);
        const double plain = mse_loss(s, X, y, g_mse);
        CHECK(mixed == plain);
        for (std::size_t i = 0; i < g_mixed.size(); ++i) CHECK(g_mixed[i] == g_mse[i]);
    }
    SUBCASE("alpha_data = 0 reduces to the energy objective") {
        const double mixed = mixed_loss(s, X, y, assembly, 0.0, 1.0, g_mixed);
        const double e = assembly.value_and_grad(s, g_energy);
        CHECK(mixed == e);
        for (std::size_t i = 0; i < g_mixed.size(); ++i) CHECK(g_mixed[i] == g_energy[i]);
    }
    SUBCASE("unit weights add the two components") {
        const double mixed = mixed_loss(s, X, y, assembly, 1.0, 1.0);
        const double sum = mse_loss(s, X, y) + assembly.value(s);
        CHECK(std::abs(mixed - sum) <= 1e-14 * std::max(1.0, std::abs(sum)));
    }
    SUBCASE("rejects a fully zeroed combination") {
        CHECK_THROWS_AS(mixed_loss(s, X, y, assembly, 0.0, 0.0), std::invalid_argument);
    }
}
