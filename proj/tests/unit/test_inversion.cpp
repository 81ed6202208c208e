#include "khronos/inversion.hpp"

#include "khronos/dataset.hpp"
#include "khronos/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace khronos;

namespace {

Surrogate fit_1d(const std::function<double(double)>& g, int n_elements) {
    Surrogate s(SurrogateConfig::uniform(1, 1, n_elements), 0);
    const auto w = oracles::fit_univariate(s.grid(0), g);
    auto block = s.weight_block(0, 0);
    std::copy(w.begin(), w.end(), block.begin());
    return s;
}

}  // namespace

TEST_CASE("gauss_newton_step") {
    SUBCASE("affine surrogate converges in one step") {
        const Surrogate s = fit_1d([](double x) { return x; }, 4);
        const std::vector<double> x0 = {0.1};
        const auto x1 = gauss_newton_step(s, x0, 0.5);
        CHECK(x1[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(std::abs(s.forward(x1) - 0.5) <= 1e-12);
    }
    SUBCASE("constant surrogate stays put under the gradient floor") {
        Surrogate s(SurrogateConfig::uniform(2, 1, 3), 0);
        s.init_uniform(0.9, 0.0, 0);
        const std::vector<double> x0 = {0.3, 0.7};
        const auto x1 = gauss_newton_step(s, x0, 0.2);
        // the gradient only cancels to roundoff, so the floored update can
        // creep at the 1e-4 scale, never more
        CHECK(std::abs(x1[0] - 0.3) <= 1e-3);
        CHECK(std::abs(x1[1] - 0.7) <= 1e-3);
    }
    SUBCASE("quadratic surrogate follows the hand-iterated update") {
        const Surrogate s = fit_1d([](double x) { return x * x; }, 8);
        std::vector<double> x = {1.0};
        x = gauss_newton_step(s, x, 0.25);
        // x1 = 1 - (1 - 0.25)/(2*1)^2 * 2 = 0.625
        CHECK(x[0] == doctest::Approx(0.625).epsilon(1e-9));
        for (int it = 0; it < 9; ++it) x = gauss_newton_step(s, x, 0.25);
        CHECK(x[0] == doctest::Approx(0.5).epsilon(1e-8));
    }
    SUBCASE("iterates stay clamped to the domain") {
        const Surrogate s = fit_1d([](double x) { return 0.5 + 0.01 * x; }, 4);
        const std::vector<double> x0 = {0.9};
        const auto x1 = gauss_newton_step(s, x0, -5.0);  // huge residual, shallow slope
        CHECK(x1[0] >= 0.0);
        CHECK(x1[0] <= 1.0);
    }
}

TEST_CASE("invert_batch") {
    SUBCASE("already-solved points stay solved") {
        const Surrogate s = fit_1d([](double x) { return x; }, 4);
        InversionJob job;
        job.init_points = DataMatrix(5, 1);
        job.targets.resize(5);
        for (std::size_t i = 0; i < 5; ++i) {
            job.init_points.values[i] = 0.1 + 0.2 * static_cast<double>(i);
            job.targets[i] = s.forward(job.init_points.row(i));
        }
        const InversionResult res = invert_batch(s, job);
        CHECK(res.failure_rate == 0.0);
        CHECK(res.rmse <= 1e-14);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(res.final_points.values[i] == doctest::Approx(job.init_points.values[i]));
        }
    }
    SUBCASE("constant surrogate fails every point") {
        Surrogate s(SurrogateConfig::uniform(2, 1, 3), 0);
        s.init_uniform(0.9, 0.0, 0);
        InversionJob job;
        job.targets = {0.0};
        job.init_points = lhs_sample(64, 2, 3);
        const InversionResult res = invert_batch(s, job);
        CHECK(res.failure_rate == 1.0);
        // the gradient is zero up to roundoff; under the floored division the
        // iterates may creep at the 1e-4-per-step scale but no further
        for (std::size_t i = 0; i < 64; ++i) {
            CHECK(std::abs(res.final_points.values[2 * i] - job.init_points.values[2 * i]) <=
                  1e-2);
            CHECK(std::abs(res.residuals[i] - 0.81) <= 1e-3);
        }
    }
    SUBCASE("permuting the batch permutes the results bitwise") {
        const Surrogate s = fit_1d([](double x) { return x * x; }, 8);
        const std::size_t n = 37;
        InversionJob job;
        job.targets = {0.3};
        job.init_points = DataMatrix(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            job.init_points.values[i] = rng::u01(77, i);
        }
        const InversionResult base = invert_batch(s, job);

        InversionJob reversed = job;
        for (std::size_t i = 0; i < n; ++i) {
            reversed.init_points.values[i] = job.init_points.values[n - 1 - i];
        }
        const InversionResult rev = invert_batch(s, reversed);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(rev.final_points.values[i] == base.final_points.values[n - 1 - i]);
            CHECK(rev.residuals[i] == base.residuals[n - 1 - i]);
        }
        CHECK(rev.failure_rate == base.failure_rate);
    }
    SUBCASE("residuals are recomputed from the final points") {
        const Surrogate s = fit_1d([](double x) { return std::cos(3.0 * x); }, 16);
        InversionJob job;
        job.targets = {0.4};
        job.init_points = lhs_sample(50, 1, 5);
        const InversionResult res = invert_batch(s, job);
        for (std::size_t i = 0; i < 50; ++i) {
            const double direct = std::abs(s.forward(res.final_points.row(i)) - 0.4);
            CHECK(res.residuals[i] == direct);
        }
    }
    SUBCASE("thread count does not change results") {
        const Surrogate s = fit_1d([](double x) { return x * x; }, 8);
        InversionJob job;
        job.targets = {0.3};
        job.init_points = lhs_sample(999, 1, 9);
        job.threads = 1;
        const InversionResult a = invert_batch(s, job);
        job.threads = 4;
        const InversionResult b = invert_batch(s, job);
        CHECK(a.final_points.values == b.final_points.values);
        CHECK(a.residuals == b.residuals);
    }
    SUBCASE("input validation") {
        const Surrogate s = fit_1d([](double x) { return x; }, 4);
        InversionJob job;
        job.targets = {0.0, 1.0};
        job.init_points = lhs_sample(3, 1, 1);
        CHECK_THROWS_AS(invert_batch(s, job), std::invalid_argument);
    }
}

TEST_CASE("inversion toy target values") {
    const auto exact = [](double x, double y) {
        using std::numbers::pi;
        return std::sin(4.0 * pi * x) * std::sin(2.0 * pi * y) +
               0.5 * std::sin(6.0 * pi * x) * std::sin(3.0 * pi * y);
    };
    CHECK(std::abs(exact(0.5, 0.5)) <= 1e-14);
    CHECK(exact(0.125, 0.25) == doctest::Approx(1.25).epsilon(1e-14));
}
