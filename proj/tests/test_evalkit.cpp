#include <doctest.h>

#include <cmath>
#include <numeric>

#include "wellml/evalkit.hpp"
#include "wellml/rng.hpp"

using namespace wellml;

namespace {

// Predicts the training mean; ignores the seed.
std::vector<double> mean_trainer(const Matrix&, std::span<const double> y, const Matrix& X_test, std::uint64_t) {
    const double m = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    return std::vector<double>(X_test.rows(), m);
}

struct Data {
    Matrix X;
    std::vector<double> y;
};

Data linear_data(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    Data d{Matrix(n, 2), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        d.X(i, 0) = rng.uniform();
        d.X(i, 1) = rng.uniform();
        d.y[i] = 3.0 * d.X(i, 0) - d.X(i, 1) + 0.2 * rng.normal();
    }
    return d;
}

}  // namespace

TEST_CASE("metrics: perfect prediction") {
    const std::vector<double> y = {1, 2, 3, 4};
    const MetricsReport m = metrics(y, y);
    CHECK(m.mse == 0.0);
    CHECK(m.rmse == 0.0);
    CHECK(m.mae == 0.0);
    REQUIRE(m.r2);
    CHECK(*m.r2 == 1.0);
    CHECK(m.n == 4);
}

TEST_CASE("metrics: reported MSE values reproduce the reported RMSEs") {
    // Residuals of constant magnitude sqrt(mse) reproduce a given MSE exactly.
    for (auto [mse, rmse] : {std::pair{400.53, 20.01}, std::pair{342.47, 18.51}, std::pair{53.98, 7.35}}) {
        const std::vector<double> t = {0.0, 0.0};
        const std::vector<double> p = {std::sqrt(mse), -std::sqrt(mse)};
        const MetricsReport m = metrics(t, p);
        CHECK(m.mse == doctest::Approx(mse).epsilon(1e-14));
        CHECK(std::abs(m.rmse - rmse) <= 0.005);
    }
}

TEST_CASE("metrics: y_true=[0,0], y_pred=[3,4]") {
    const MetricsReport m = metrics(std::vector<double>{0, 0}, std::vector<double>{3, 4}, "thousand barrels");
    CHECK(m.mse == 12.5);
    CHECK(m.rmse == doctest::Approx(3.5355339059).epsilon(1e-10));
    CHECK(m.mae == 3.5);
    CHECK_FALSE(m.r2.has_value());
    CHECK(m.units == "thousand barrels");
    const auto j = to_json(m);
    CHECK(j["r2"].is_null());
}

TEST_CASE("metrics: errors") {
    CHECK_THROWS_AS(metrics(std::vector<double>{1}, std::vector<double>{1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(metrics(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
    CHECK_THROWS_AS(metrics(std::vector<double>{NAN}, std::vector<double>{1}), std::invalid_argument);
}

TEST_CASE("property: rmse = sqrt(mse), mae <= rmse, r2 <= 1 and shift invariance") {
    Rng rng(1);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 2 + rng.index(50);
        std::vector<double> t(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = rng.normal(0.0, 10.0);
            p[i] = t[i] + rng.normal(0.0, rng.uniform(0.1, 20.0));
        }
        const MetricsReport m = metrics(t, p);
        CHECK(std::abs(m.rmse - std::sqrt(m.mse)) <= 1e-12 * std::max(1.0, m.rmse));
        CHECK(m.mae <= m.rmse * (1.0 + 1e-12));
        REQUIRE(m.r2);
        CHECK(*m.r2 <= 1.0);
        const double shift = rng.normal(0.0, 100.0);
        std::vector<double> ts = t, ps = p;
        for (std::size_t i = 0; i < n; ++i) {
            ts[i] += shift;
            ps[i] += shift;
        }
        CHECK(*metrics(ts, ps).r2 == doctest::Approx(*m.r2).epsilon(1e-9));
    }
}

TEST_CASE("two_sided_z and confidence_interval examples") {
    CHECK(two_sided_z(0.95) == doctest::Approx(1.959964).epsilon(1e-6));
    CHECK_THROWS(two_sided_z(1.0));

    const auto [clo, chi] = confidence_interval(std::vector<double>{4.2, 4.2, 4.2});
    CHECK(clo == 4.2);
    CHECK(chi == 4.2);

    const auto [lo, hi] = confidence_interval(std::vector<double>{1, 2, 3, 4, 5}, 0.95);
    const double half = 1.959963984540054 * std::sqrt(2.5) / std::sqrt(5.0);
    CHECK(lo == doctest::Approx(3.0 - half).epsilon(1e-12));
    CHECK(hi == doctest::Approx(3.0 + half).epsilon(1e-12));
    CHECK(lo == doctest::Approx(1.614).epsilon(1e-3));
    CHECK(hi == doctest::Approx(4.386).epsilon(1e-3));
    CHECK_THROWS(confidence_interval(std::vector<double>{1.0}));
}

TEST_CASE("property: CI contains the mean and shrinks as 1/sqrt(n)") {
    Rng rng(2);
    double ratio_sum = 0.0;
    const int repeats = 50;
    for (int rep = 0; rep < repeats; ++rep) {
        const std::size_t n = 100;
        std::vector<double> small(n), large(4 * n);
        for (auto& v : small) v = rng.normal(5.0, 2.0);
        for (auto& v : large) v = rng.normal(5.0, 2.0);
        const auto [lo, hi] = confidence_interval(small);
        const double mean = std::accumulate(small.begin(), small.end(), 0.0) / static_cast<double>(n);
        CHECK(lo <= mean);
        CHECK(mean <= hi);
        const auto [lo4, hi4] = confidence_interval(large);
        ratio_sum += (hi4 - lo4) / (hi - lo);
    }
    const double ratio = ratio_sum / repeats;
    CHECK(ratio >= 0.4);
    CHECK(ratio <= 0.6);
}

TEST_CASE("sturges_histogram") {
    std::vector<double> s(500);
    Rng rng(3);
    for (auto& v : s) v = rng.normal();
    const auto bins = sturges_histogram(s);
    CHECK(bins.size() == 10);
    std::size_t total = 0;
    for (const auto& b : bins) total += b.count;
    CHECK(total == 500);
    CHECK(bins.front().left == *std::min_element(s.begin(), s.end()));
    CHECK(bins.back().right == *std::max_element(s.begin(), s.end()));

    const auto flat = sturges_histogram(std::vector<double>{2.0, 2.0});
    CHECK(flat.front().left == 1.5);
    CHECK(flat.back().right == 2.5);
    CHECK(sturges_histogram(std::vector<double>(100, 1.0)).size() == 8);
}

TEST_CASE("realizations: deterministic trainer on a fixed split") {
    const Data d = linear_data(4, 60);
    RealizationOptions opt;
    opt.n_realizations = 12;
    opt.vary_split = false;
    const UncertaintyReport r = realizations(mean_trainer, d.X, d.y, opt);
    REQUIRE(r.rmses.size() == 12);
    for (double v : r.rmses) CHECK(v == r.rmses[0]);
    CHECK(r.ci_lo == r.mean);
    CHECK(r.ci_hi == r.mean);
    CHECK(r.n_failed == 0);
}

TEST_CASE("realizations equal a loop of single runs, for any worker count") {
    const Data d = linear_data(5, 80);
    RealizationOptions opt;
    opt.n_realizations = 20;
    opt.master_seed = 9;
    const UncertaintyReport one = realizations(mean_trainer, d.X, d.y, opt);
    opt.workers = 3;
    const UncertaintyReport three = realizations(mean_trainer, d.X, d.y, opt);
    for (std::size_t r = 0; r < 20; ++r) {
        const double want = realization_rmse(mean_trainer, d.X, d.y, opt, r);
        CHECK(one.rmses[r] == want);
        CHECK(three.rmses[r] == want);
    }
    CHECK(one.ci_lo <= one.mean);
    CHECK(one.mean <= one.ci_hi);
    CHECK(to_json(one)["rmses"].size() == 20);
}

TEST_CASE("realizations: CI tightens from 100 to 500") {
    const Data d = linear_data(6, 120);
    RealizationOptions opt;
    opt.n_realizations = 100;
    const UncertaintyReport small = realizations(mean_trainer, d.X, d.y, opt);
    opt.n_realizations = 500;
    const UncertaintyReport large = realizations(mean_trainer, d.X, d.y, opt);
    CHECK(large.ci_hi - large.ci_lo < small.ci_hi - small.ci_lo);
}

TEST_CASE("realizations: failure policy") {
    const Data d = linear_data(7, 40);
    RealizationOptions opt;
    opt.n_realizations = 20;
    std::size_t calls = 0;
    // Two failures in twenty is the 10% cap and is tolerated.
    const Trainer sometimes = [&](const Matrix& a, std::span<const double> b, const Matrix& c, std::uint64_t s) {
        if (calls++ % 10 == 3) throw std::runtime_error("boom");
        return mean_trainer(a, b, c, s);
    };
    const UncertaintyReport r = realizations(sometimes, d.X, d.y, opt);
    CHECK(r.n_failed == 2);
    CHECK(r.rmses.size() == 18);

    const Trainer often = [](const Matrix&, std::span<const double>, const Matrix& c, std::uint64_t s) {
        if (s % 3 == 0) throw std::runtime_error("boom");
        return std::vector<double>(c.rows(), 0.0);
    };
    opt.n_realizations = 60;
    CHECK_THROWS_AS(realizations(often, d.X, d.y, opt), std::runtime_error);
    opt.n_realizations = 1;
    CHECK_THROWS_AS(realizations(mean_trainer, d.X, d.y, opt), std::invalid_argument);
}
