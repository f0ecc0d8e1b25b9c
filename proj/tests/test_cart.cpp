#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "wellml/cart.hpp"
#include "wellml/rng.hpp"

using namespace wellml;

namespace {

Matrix column_matrix(const std::vector<double>& x) { return Matrix(x.size(), 1, x); }

TreeParams all_features(std::size_t depth = kUnlimitedDepth) {
    TreeParams p;
    p.max_depth = depth;
    return p;
}

Matrix random_matrix(Rng& rng, std::size_t n, std::size_t d, bool coarse) {
    Matrix X(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) X(r, c) = coarse ? static_cast<double>(rng.index(4)) : rng.normal();
    }
    return X;
}

}  // namespace

TEST_CASE("constant y gives a single leaf") {
    Rng rng(1);
    const Matrix X = column_matrix({3, 1, 4, 1, 5});
    const std::vector<double> y(5, 2.5);
    const RegressionTree t = fit_tree(X, y, all_features(), rng);
    CHECK(t.nodes().size() == 1);
    CHECK(t.predict(std::vector<double>{100.0}) == 2.5);
    CHECK(t.nodes()[0].count == 5);
}

TEST_CASE("X=[0,1,2,3], y=[0,0,10,10], depth 1") {
    Rng rng(1);
    const Matrix X = column_matrix({0, 1, 2, 3});
    const std::vector<double> y = {0, 0, 10, 10};
    const RegressionTree t = fit_tree(X, y, all_features(1), rng);
    REQUIRE(t.nodes().size() == 3);
    CHECK(t.nodes()[0].feature == 0);
    CHECK(t.nodes()[0].threshold == 1.5);
    CHECK(predict_tree(t, std::vector<double>{0.7}) == 0.0);
    CHECK(predict_tree(t, std::vector<double>{1.6}) == 10.0);
    // Boundary goes left.
    CHECK(predict_tree(t, std::vector<double>{1.5}) == 0.0);
    CHECK(t.depth() == 1);
    CHECK(t.leaf_count() == 2);
}

TEST_CASE("ties: lower feature, then lower threshold") {
    Rng rng(1);
    // Both features separate y identically; feature 0 must win.
    Matrix X(4, 2, std::vector<double>{0, 10, 1, 11, 2, 12, 3, 13});
    const std::vector<double> y = {0, 0, 5, 5};
    const RegressionTree t = fit_tree(X, y, all_features(1), rng);
    CHECK(t.nodes()[0].feature == 0);

    // y symmetric around the middle: thresholds 0.5 and 2.5 score the same.
    const Matrix X1 = column_matrix({0, 1, 2, 3});
    const std::vector<double> y1 = {1, 0, 0, 1};
    const RegressionTree t1 = fit_tree(X1, y1, all_features(1), rng);
    CHECK(t1.nodes()[0].threshold == 0.5);
}

TEST_CASE("dimension mismatch and empty input are errors") {
    Rng rng(1);
    const Matrix X = column_matrix({0, 1});
    const std::vector<double> y = {0, 1};
    const RegressionTree t = fit_tree(X, y, all_features(), rng);
    CHECK_THROWS_AS(t.predict(std::vector<double>{1, 2}), std::invalid_argument);
    CHECK_THROWS(fit_tree(Matrix(0, 1), std::vector<double>{}, all_features(), rng));
    TreeParams bad;
    bad.min_samples_split = 1;
    CHECK_THROWS_AS(fit_tree(X, y, bad, rng), std::invalid_argument);
    bad = {};
    bad.feature_subset_size = 2;
    CHECK_THROWS_AS(fit_tree(X, y, bad, rng), std::invalid_argument);
}

TEST_CASE("split_threshold stays strictly below the upper value") {
    CHECK(split_threshold(1.0, 2.0) == 1.5);
    const double a = 1.0;
    const double b = std::nextafter(a, 2.0);
    const double t = split_threshold(a, b);
    CHECK(t >= a);
    CHECK(t < b);
    CHECK(split_threshold(-1e308, 1e308) == 0.0);
}

TEST_CASE("n=10, depth <= 3: training SSE equals the brute-force oracle") {
    Rng data(2024);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t d = 1 + data.index(3);
        const Matrix X = random_matrix(data, 10, d, rep % 2 == 0);
        std::vector<double> y(10);
        for (auto& v : y) v = data.normal();
        TreeParams p = all_features(1 + data.index(3));
        p.min_samples_leaf = 1 + data.index(2);
        Rng rng(7);
        const RegressionTree t = fit_tree(X, y, p, rng);
        std::vector<std::vector<std::size_t>> leaves;
        std::vector<std::size_t> rows(10);
        for (std::size_t i = 0; i < 10; ++i) rows[i] = i;
        oracle::brute_force_leaves(X, y, rows, p, 0, leaves);
        const auto want = oracle::canonical(leaves);
        const auto got = oracle::tree_leaves(t, X);
        CHECK(got == want);
        CHECK(oracle::partition_sse(got, y) == oracle::partition_sse(want, y));
    }
}

TEST_CASE("structural invariants on random data") {
    Rng data(5);
    for (int rep = 0; rep < 60; ++rep) {
        const std::size_t n = 2 + data.index(60);
        const std::size_t d = 1 + data.index(4);
        const Matrix X = random_matrix(data, n, d, rep % 3 == 0);
        std::vector<double> y(n);
        for (auto& v : y) v = data.normal();
        TreeParams p;
        p.max_depth = 1 + data.index(6);
        p.min_samples_split = 2 + data.index(5);
        p.min_samples_leaf = 1 + data.index(4);
        Rng rng(rep);
        const RegressionTree t = fit_tree(X, y, p, rng);
        CHECK(t.depth() <= p.max_depth);
        std::size_t total = 0;
        for (const auto& node : t.nodes()) {
            if (!node.is_leaf()) continue;
            total += node.count;
            if (t.nodes().size() > 1) CHECK(node.count >= p.min_samples_leaf);
        }
        CHECK(total == n);
        // Leaf value is the mean of its rows.
        const auto leaves = oracle::tree_leaves(t, X);
        for (const auto& l : leaves) {
            double mean = 0;
            for (auto r : l) mean += y[r];
            mean /= static_cast<double>(l.size());
            CHECK(t.predict(X.row(l[0])) == doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("unlimited depth on distinct x reaches zero training SSE") {
    Rng data(6);
    const std::size_t n = 200;
    Matrix X(n, 2);
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        X(r, 0) = static_cast<double>(r) + data.uniform() * 0.1;
        X(r, 1) = data.normal();
        y[r] = data.normal();
    }
    Rng rng(1);
    const RegressionTree t = fit_tree(X, y, all_features(), rng);
    double sse = 0;
    for (std::size_t r = 0; r < n; ++r) sse += std::pow(t.predict(X.row(r)) - y[r], 2);
    CHECK(sse == 0.0);
}

TEST_CASE("prediction is piecewise constant within a leaf cell") {
    Rng data(7);
    const Matrix X = random_matrix(data, 40, 2, false);
    std::vector<double> y(40);
    for (auto& v : y) v = data.normal();
    Rng rng(1);
    const RegressionTree t = fit_tree(X, y, all_features(4), rng);
    for (std::size_t r = 0; r < 40; ++r) {
        std::vector<double> x(X.row(r).begin(), X.row(r).end());
        const std::size_t leaf = t.leaf_index(x);
        // Find the tightest thresholds on the path and perturb inside them.
        double lo0 = -INFINITY, hi0 = INFINITY;
        std::size_t idx = 0;
        while (!t.nodes()[idx].is_leaf()) {
            const auto& node = t.nodes()[idx];
            if (node.feature == 0) {
                if (x[0] <= node.threshold) {
                    hi0 = std::min(hi0, node.threshold);
                } else {
                    lo0 = std::max(lo0, node.threshold);
                }
            }
            idx = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                                         : node.right);
        }
        const double target = std::isfinite(hi0) ? hi0 : x[0] + 1.0;
        std::vector<double> moved = x;
        moved[0] = std::isfinite(lo0) ? std::max(target, std::nextafter(lo0, INFINITY)) : target;
        CHECK(t.leaf_index(moved) == leaf);
        CHECK(t.predict(moved) == t.predict(x));
    }
}

TEST_CASE("feature subsets: deterministic given the seed") {
    Rng data(8);
    const Matrix X = random_matrix(data, 80, 6, false);
    std::vector<double> y(80);
    for (auto& v : y) v = data.normal();
    TreeParams p;
    p.feature_subset_size = 2;
    Rng a(99), b(99), c(100);
    const RegressionTree ta = fit_tree(X, y, p, a);
    const RegressionTree tb = fit_tree(X, y, p, b);
    const RegressionTree tc = fit_tree(X, y, p, c);
    CHECK(ta == tb);
    CHECK_FALSE(ta == tc);
}

TEST_CASE("bootstrap rows with duplicates") {
    Rng rng(1);
    const Matrix X = column_matrix({0, 1, 2, 3});
    const std::vector<double> y = {0, 1, 2, 3};
    const std::vector<std::size_t> rows = {0, 0, 0, 3};
    const RegressionTree t = fit_tree(X, y, rows, all_features(), rng);
    CHECK(t.predict(std::vector<double>{0.0}) == 0.0);
    CHECK(t.predict(std::vector<double>{3.0}) == 3.0);
    CHECK(t.nodes()[0].threshold == 1.5);
}

TEST_CASE("JSON round trip") {
    Rng data(9);
    const Matrix X = random_matrix(data, 50, 3, false);
    std::vector<double> y(50);
    for (auto& v : y) v = data.normal();
    Rng rng(1);
    const RegressionTree t = fit_tree(X, y, all_features(5), rng);
    const auto doc = tree_to_json(t);
    CHECK(doc["format"] == "wellml.tree");
    const RegressionTree back = tree_from_json(nlohmann::json::parse(doc.dump()));
    CHECK(back == t);
    auto broken = doc;
    broken["version"] = 99;
    CHECK_THROWS(tree_from_json(broken));
}
