#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "wellml/forest.hpp"
#include "wellml/rng.hpp"

using namespace wellml;

namespace {

struct Data {
    Matrix X;
    std::vector<double> y;
};

Data make_data(std::uint64_t seed, std::size_t n, std::size_t d) {
    Rng rng(seed);
    Data out{Matrix(n, d), std::vector<double>(n)};
    for (std::size_t r = 0; r < n; ++r) {
        double signal = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            out.X(r, c) = rng.uniform();
            signal += static_cast<double>(c + 1) * out.X(r, c);
        }
        out.y[r] = signal + 0.3 * rng.normal();
    }
    return out;
}

double variance(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST_CASE("bootstrap_sample examples") {
    Rng one(3);
    CHECK(bootstrap_sample(1, one) == std::vector<std::size_t>{0});

    Rng a(17), b(17);
    CHECK(bootstrap_sample(50, a) == bootstrap_sample(50, b));

    Rng rng(2024);
    const auto rows = bootstrap_sample(1000, rng);
    CHECK(rows.size() == 1000);
    CHECK(*std::max_element(rows.begin(), rows.end()) < 1000);
    const double distinct = static_cast<double>(std::set<std::size_t>(rows.begin(), rows.end()).size()) / 1000.0;
    CHECK(distinct >= 0.60);
    CHECK(distinct <= 0.67);

    CHECK_THROWS_AS(bootstrap_sample(0, rng), std::invalid_argument);
}

TEST_CASE("bootstrap distinct fraction stays near 1 - 1/e across seeds") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(derive_seed(99, s));
        const auto rows = bootstrap_sample(1000, rng);
        const double distinct = static_cast<double>(std::set<std::size_t>(rows.begin(), rows.end()).size()) / 1000.0;
        CHECK(distinct >= 0.60);
        CHECK(distinct <= 0.67);
    }
}

TEST_CASE("single tree without resampling equals fit_tree") {
    const Data d = make_data(1, 80, 4);
    RfParams p;
    p.n_estimators = 1;
    p.bootstrap = false;
    p.tree.feature_subset_size = 4;
    const Forest f = fit_forest(d.X, d.y, p);
    Rng rng(0);
    const RegressionTree t = fit_tree(d.X, d.y, p.tree, rng);
    REQUIRE(f.trees.size() == 1);
    CHECK(f.trees[0] == t);
    for (std::size_t r = 0; r < d.X.rows(); ++r) CHECK(predict_forest(f, d.X.row(r)) == t.predict(d.X.row(r)));
}

TEST_CASE("same seed gives bit-identical forests regardless of workers") {
    const Data d = make_data(2, 120, 5);
    RfParams p;
    p.n_estimators = 24;
    p.seed = 77;
    const Forest a = fit_forest(d.X, d.y, p, 1);
    const Forest b = fit_forest(d.X, d.y, p, 1);
    const Forest c = fit_forest(d.X, d.y, p, 4);
    const Data probe = make_data(3, 40, 5);
    CHECK(predict_forest(a, probe.X) == predict_forest(b, probe.X));
    CHECK(predict_forest(a, probe.X) == predict_forest(c, probe.X));
    CHECK(a.trees == c.trees);
    CHECK(a.seeds == c.seeds);

    p.seed = 78;
    const Forest other = fit_forest(d.X, d.y, p, 1);
    CHECK(predict_forest(a, probe.X) != predict_forest(other, probe.X));
}

TEST_CASE("recorded seeds regenerate identical trees") {
    const Data d = make_data(4, 60, 6);
    RfParams p;
    p.n_estimators = 5;
    const Forest f = fit_forest(d.X, d.y, p);
    TreeParams tp = p.tree;
    tp.feature_subset_size = default_forest_subset(6);
    for (std::size_t b = 0; b < f.trees.size(); ++b) {
        Rng rng(f.seeds[b]);
        const auto rows = bootstrap_sample(d.X.rows(), rng);
        CHECK(fit_tree(d.X, d.y, rows, tp, rng) == f.trees[b]);
    }
}

TEST_CASE("default feature subset is max(1, floor(d/3))") {
    CHECK(default_forest_subset(1) == 1);
    CHECK(default_forest_subset(2) == 1);
    CHECK(default_forest_subset(3) == 1);
    CHECK(default_forest_subset(8) == 2);
    CHECK(default_forest_subset(12) == 4);
}

TEST_CASE("tuned settings (200, 23, 3, 2) fit a 500-row dataset") {
    const Data d = make_data(5, 500, 8);
    RfParams p;
    p.n_estimators = 200;
    p.tree.max_depth = 23;
    p.tree.min_samples_split = 3;
    p.tree.min_samples_leaf = 2;
    const Forest f = fit_forest(d.X, d.y, p, 2);
    CHECK(f.trees.size() == 200);
    for (const auto& t : f.trees) CHECK(t.depth() <= 23);
    const auto pred = predict_forest(f, d.X);
    double sse = 0.0, sst = 0.0, mean = 0.0;
    for (double v : d.y) mean += v;
    mean /= 500.0;
    for (std::size_t i = 0; i < 500; ++i) {
        sse += (pred[i] - d.y[i]) * (pred[i] - d.y[i]);
        sst += (d.y[i] - mean) * (d.y[i] - mean);
    }
    CHECK(sse < sst);
}

TEST_CASE("two constant trees predicting 2 and 4 average to 3") {
    const Matrix X(3, 1, std::vector<double>{0, 1, 2});
    Rng rng(1);
    Forest f;
    f.trees.push_back(fit_tree(X, std::vector<double>(3, 2.0), TreeParams{}, rng));
    f.trees.push_back(fit_tree(X, std::vector<double>(3, 4.0), TreeParams{}, rng));
    f.seeds = {0, 1};
    CHECK(predict_forest(f, std::vector<double>{0.5}) == 3.0);

    Forest same;
    same.trees.assign(4, f.trees[0]);
    same.seeds.assign(4, 0);
    CHECK(predict_forest(same, std::vector<double>{9.0}) == 2.0);

    CHECK_THROWS(predict_forest(Forest{}, std::vector<double>{0.0}));
    CHECK_THROWS(predict_forest(f, std::vector<double>{0.0, 1.0}));
}

TEST_CASE("property: forest output is the mean of member trees and lies within their range") {
    Rng gen(31);
    for (int rep = 0; rep < 25; ++rep) {
        const std::size_t n = 5 + gen.index(120);
        const std::size_t dim = 1 + gen.index(6);
        const Data d = make_data(gen.next(), n, dim);
        RfParams p;
        p.n_estimators = 1 + gen.index(15);
        p.tree.max_depth = 1 + gen.index(8);
        p.seed = gen.next();
        const Forest f = fit_forest(d.X, d.y, p);
        for (int k = 0; k < 20; ++k) {
            std::vector<double> x(dim);
            for (auto& v : x) v = gen.uniform(-0.2, 1.2);
            double sum = 0.0;
            double lo = INFINITY, hi = -INFINITY;
            for (const auto& t : f.trees) {
                const double v = predict_tree(t, x);
                sum += v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            const double got = predict_forest(f, x);
            CHECK(std::abs(got - sum / static_cast<double>(f.trees.size())) <= 1e-12 * std::max(1.0, std::abs(got)));
            CHECK(got >= lo - 1e-12);
            CHECK(got <= hi + 1e-12);
        }
    }
}

TEST_CASE("prediction variance across seeds shrinks roughly as 1/B") {
    const Data d = make_data(6, 100, 3);
    const std::vector<double> probe = {0.5, 0.5, 0.5};
    std::vector<double> small, large;
    for (std::uint64_t s = 0; s < 40; ++s) {
        RfParams p;
        p.seed = derive_seed(1000, s);
        p.n_estimators = 10;
        small.push_back(predict_forest(fit_forest(d.X, d.y, p), probe));
        p.seed = derive_seed(2000, s);
        p.n_estimators = 50;
        large.push_back(predict_forest(fit_forest(d.X, d.y, p), probe));
    }
    const double ratio = variance(small) / variance(large);
    // Expected 5; a 40-sample variance ratio stays well inside these bounds.
    CHECK(ratio > 2.0);
    CHECK(ratio < 12.5);
}

TEST_CASE("forest JSON round trip") {
    const Data d = make_data(7, 50, 3);
    RfParams p;
    p.n_estimators = 4;
    const Forest f = fit_forest(d.X, d.y, p);
    const Forest back = forest_from_json(nlohmann::json::parse(forest_to_json(f).dump()));
    CHECK(back.trees == f.trees);
    CHECK(back.seeds == f.seeds);
    auto doc = forest_to_json(f);
    doc["format"] = "other";
    CHECK_THROWS(forest_from_json(doc));
}

TEST_CASE("invalid parameters are rejected") {
    const Data d = make_data(8, 10, 2);
    RfParams p;
    p.n_estimators = 0;
    CHECK_THROWS_AS(fit_forest(d.X, d.y, p), std::invalid_argument);
    p.n_estimators = 2;
    p.tree.feature_subset_size = 3;
    CHECK_THROWS_AS(fit_forest(d.X, d.y, p), std::invalid_argument);
}
