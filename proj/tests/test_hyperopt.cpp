#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "wellml/hyperopt.hpp"

using namespace wellml;

namespace {

SearchSpace mixed_space() {
    return {{Dimension::int_uniform("n", 2, 9), Dimension::float_uniform("x", -1.5, 2.5),
             Dimension::log_uniform("lr", 1e-4, 0.5), Dimension::categorical("kind", {"a", "b", "c"})}};
}

double mixed_objective(const Assignment& a) {
    const double kind_penalty = a.at("kind") == 1.0 ? 0.0 : 1.0;
    return std::pow(a.at("n") - 5.0, 2) + std::pow(a.at("x") - 0.5, 2) + std::pow(std::log10(a.at("lr")) + 2.0, 2) +
           kind_penalty;
}

std::vector<double> mean_trainer(const Matrix&, std::span<const double> y, const Matrix& X_test, std::uint64_t) {
    double m = 0.0;
    for (double v : y) m += v;
    return std::vector<double>(X_test.rows(), m / static_cast<double>(y.size()));
}

}  // namespace

TEST_CASE("kfold_indices: partition, sizes and determinism") {
    const auto folds = kfold_indices(23, 5, 7);
    REQUIRE(folds.size() == 5);
    std::vector<std::size_t> sizes;
    std::set<std::size_t> seen;
    for (const auto& f : folds) {
        sizes.push_back(f.size());
        seen.insert(f.begin(), f.end());
    }
    CHECK(sizes == std::vector<std::size_t>{5, 5, 5, 4, 4});
    CHECK(seen.size() == 23);
    CHECK(*seen.rbegin() == 22);
    CHECK(kfold_indices(23, 5, 7) == folds);
    CHECK(kfold_indices(23, 5, 8) != folds);
    CHECK_THROWS_AS(kfold_indices(3, 5, 1), std::invalid_argument);
    CHECK_THROWS_AS(kfold_indices(10, 1, 1), std::invalid_argument);
}

TEST_CASE("cv_mse: constant-mean predictor on y=[0,0,10,10] with folds {0,2} and {1,3}") {
    const Matrix X(4, 1, std::vector<double>{0, 1, 2, 3});
    const std::vector<double> y = {0, 0, 10, 10};
    const std::vector<std::vector<std::size_t>> folds = {{0, 2}, {1, 3}};
    CHECK(cv_mse(mean_trainer, X, y, folds, 0) == 25.0);

    const Trainer oracle_trainer = [&](const Matrix&, std::span<const double>, const Matrix& X_test, std::uint64_t) {
        std::vector<double> out;
        for (std::size_t r = 0; r < X_test.rows(); ++r) out.push_back(y[static_cast<std::size_t>(X_test(r, 0))]);
        return out;
    };
    CHECK(cv_mse(oracle_trainer, X, y, folds, 0) == 0.0);
}

TEST_CASE("kfold_cv_objective is deterministic") {
    Rng rng(3);
    Matrix X(60, 3);
    std::vector<double> y(60);
    for (std::size_t r = 0; r < 60; ++r) {
        for (std::size_t c = 0; c < 3; ++c) X(r, c) = rng.uniform();
        y[r] = X(r, 0) * 4.0 + rng.normal();
    }
    const Assignment rf = {{"n_estimators", 10}, {"max_depth", 4}};
    const double a = kfold_cv_objective(ModelKind::RandomForest, rf, X, y, 5, 11);
    CHECK(a == kfold_cv_objective(ModelKind::RandomForest, rf, X, y, 5, 11));
    CHECK(a > 0.0);
    const Assignment gbm = {{"n_estimators", 20}, {"learning_rate", 0.1}, {"max_depth", 3}};
    const double b = kfold_cv_objective(ModelKind::GradientBoosting, gbm, X, y, 3, 11);
    CHECK(b == kfold_cv_objective(ModelKind::GradientBoosting, gbm, X, y, 3, 11));
    CHECK_THROWS(kfold_cv_objective(ModelKind::RandomForest, {{"bogus", 1}}, X, y, 5, 11));
}

TEST_CASE("tpe_suggest: empty history gives a uniform draw within bounds") {
    Study study;
    study.space = mixed_space();
    const Assignment a = tpe_suggest(study);
    for (const auto& d : study.space.dimensions) CHECK(d.contains(a.at(d.name)));
    CHECK(tpe_suggest(study) == a);
}

TEST_CASE("property: 10^4 suggestions respect every dimension's bounds") {
    Study study;
    study.space = mixed_space();
    study.seed = 5;
    Rng rng(6);
    // Seed the history so both the uniform and the TPE branch are exercised.
    for (std::size_t i = 0; i < 30; ++i) {
        Trial t;
        t.id = i;
        t.params = uniform_suggest(study.space, rng);
        t.value = mixed_objective(t.params);
        if (i % 7 == 3) t.status = TrialStatus::Failed;
        study.trials.push_back(t);
    }
    std::size_t int_hits_lo = 0, int_hits_hi = 0;
    for (std::size_t id = 0; id < 10000; ++id) {
        const Assignment a = tpe_suggest(study, 30 + id);
        for (const auto& d : study.space.dimensions) {
            const double v = a.at(d.name);
            CHECK(d.contains(v));
        }
        int_hits_lo += a.at("n") == 2.0;
        int_hits_hi += a.at("n") == 9.0;
    }
    for (std::size_t id = 0; id < 10000; ++id) {
        Rng r(id);
        const Assignment a = uniform_suggest(study.space, r);
        for (const auto& d : study.space.dimensions) CHECK(d.contains(a.at(d.name)));
        int_hits_lo += a.at("n") == 2.0;
        int_hits_hi += a.at("n") == 9.0;
    }
    // Endpoints of integer ranges stay reachable.
    CHECK(int_hits_lo > 0);
    CHECK(int_hits_hi > 0);
}

TEST_CASE("TPE beats random search on the 1-D quadratic") {
    const SearchSpace space{{Dimension::float_uniform("x", -10.0, 10.0)}};
    const auto objective = [](const Assignment& a) { return std::pow(a.at("x") - 3.0, 2); };
    std::vector<double> tpe_best, random_best;
    int close = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        StudyOptions opt;
        opt.n_trials = 60;
        opt.seed = derive_seed(2024, s);
        const Study study = run_study(space, objective, opt);
        const Trial* best = study.best();
        REQUIRE(best);
        tpe_best.push_back(best->value);
        close += std::abs(best->params.at("x") - 3.0) < 0.5;
        random_best.push_back(oracle::random_search_best(space, objective, 60, derive_seed(4048, s)));
    }
    std::sort(tpe_best.begin(), tpe_best.end());
    std::sort(random_best.begin(), random_best.end());
    const double tpe_median = 0.5 * (tpe_best[9] + tpe_best[10]);
    const double random_median = 0.5 * (random_best[9] + random_best[10]);
    CHECK(tpe_median < random_median);
    CHECK(close >= 18);
}

TEST_CASE("run_study: replay, best monotonicity and failures") {
    const SearchSpace space = mixed_space();
    StudyOptions opt;
    opt.n_trials = 25;
    opt.seed = 77;
    const Study a = run_study(space, mixed_objective, opt);
    const Study b = run_study(space, mixed_objective, opt);
    REQUIRE(a.trials.size() == 25);
    for (std::size_t i = 0; i < 25; ++i) {
        CHECK(a.trials[i].id == i);
        CHECK(a.trials[i].params == b.trials[i].params);
        CHECK(a.trials[i].value == b.trials[i].value);
    }
    double running = INFINITY;
    for (const auto& t : a.trials) {
        running = std::min(running, t.value);
        Study prefix = a;
        prefix.trials.resize(t.id + 1);
        CHECK(prefix.best()->value == running);
    }

    opt.n_trials = 1;
    const Study one = run_study(space, mixed_objective, opt);
    CHECK(one.trials.size() == 1);
    CHECK(one.trials[0].params == tpe_suggest(Study{space, 77, {}, {}}, 0));

    opt.n_trials = 8;
    std::size_t calls = 0;
    const auto flaky = [&](const Assignment& p) -> double {
        ++calls;
        if (calls % 3 == 0) throw std::runtime_error("diverged");
        if (calls % 4 == 0) return NAN;
        return mixed_objective(p);
    };
    const Study mixed = run_study(space, flaky, opt);
    std::size_t failed = 0;
    for (const auto& t : mixed.trials) failed += t.status == TrialStatus::Failed;
    CHECK(failed == 4);  // calls 3, 4, 6 and 8
    CHECK(mixed.best()->status == TrialStatus::Complete);

    const auto always = [](const Assignment&) -> double { throw std::runtime_error("nope"); };
    CHECK_THROWS(run_study(space, always, opt));
}

TEST_CASE("run_study: resumed history continues the same sequence") {
    const SearchSpace space = mixed_space();
    StudyOptions opt;
    opt.n_trials = 20;
    opt.seed = 9;
    const Study full = run_study(space, mixed_objective, opt);

    std::stringstream log;
    StudyOptions first = opt;
    first.n_trials = 12;
    first.on_trial = [&](const Trial& t) { append_trial(log, t, space, {{"model", "test"}}); };
    run_study(space, mixed_objective, first);

    std::istringstream in(log.str());
    auto history = read_trials(in, space);
    REQUIRE(history.size() == 12);
    const Study resumed = run_study(space, mixed_objective, opt, history);
    REQUIRE(resumed.trials.size() == 20);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(resumed.trials[i].params == full.trials[i].params);
        CHECK(resumed.trials[i].value == full.trials[i].value);
    }
}

TEST_CASE("trial JSON lines") {
    const SearchSpace space = mixed_space();
    Trial t;
    t.id = 0;
    t.params = {{"n", 4}, {"x", 0.1}, {"lr", 0.01}, {"kind", 2}};
    t.value = 1.25;
    const auto j = trial_to_json(t, space);
    CHECK(j["trial"] == 0);
    CHECK(j["state"] == "COMPLETE");
    CHECK(j["params"]["n"].is_number_integer());
    CHECK(j["params"]["kind"] == "c");
    const Trial back = trial_from_json(j, space);
    CHECK(back.params == t.params);
    CHECK(back.value == 1.25);

    t.status = TrialStatus::Failed;
    t.error = "boom";
    const auto f = trial_to_json(t, space);
    CHECK(f["value"].is_null());
    CHECK(f["error"] == "boom");

    std::istringstream gap(trial_to_json(t, space).dump() + "\n" + j.dump() + "\n");
    CHECK_THROWS(read_trials(gap, space));
}

TEST_CASE("default spaces contain the reported optima") {
    const SearchSpace rf = default_space(ModelKind::RandomForest);
    CHECK(rf.at("n_estimators").contains(200));
    CHECK(rf.at("max_depth").contains(23));
    CHECK(rf.at("min_samples_split").contains(3));
    CHECK(rf.at("min_samples_leaf").contains(2));

    const SearchSpace gbm = default_space(ModelKind::GradientBoosting);
    CHECK(gbm.at("learning_rate").contains(0.0219));
    CHECK(gbm.at("max_depth").contains(9));
    CHECK(gbm.at("n_estimators").contains(937));
    CHECK(gbm.at("subsample").contains(0.734));
    CHECK(gbm.at("colsample_bytree").contains(0.708));
    CHECK(gbm.at("min_child_weight").contains(5));
    CHECK(gbm.at("gamma").contains(0.275));
    CHECK(gbm.at("reg_alpha").contains(0.998));
    CHECK(gbm.at("learning_rate").kind == DimensionKind::FloatLogUniform);
}

TEST_CASE("assignments map onto model parameters") {
    const RfParams rf = rf_params_from({{"n_estimators", 200}, {"max_depth", 23}, {"min_samples_split", 3},
                                        {"min_samples_leaf", 2}});
    CHECK(rf.n_estimators == 200);
    CHECK(rf.tree.max_depth == 23);
    CHECK(rf.tree.min_samples_split == 3);
    CHECK(rf.tree.min_samples_leaf == 2);
    const GbmParams g = gbm_params_from({{"learning_rate", 0.0219}, {"reg_alpha", 0.998}});
    CHECK(g.learning_rate == 0.0219);
    CHECK(g.reg_alpha == 0.998);
    CHECK_THROWS(gbm_params_from({{"depth", 3}}));
}

TEST_CASE("search space validation") {
    CHECK_THROWS(SearchSpace{}.validate());
    CHECK_THROWS(SearchSpace{{Dimension::float_uniform("x", 1, 1)}}.validate());
    CHECK_THROWS(SearchSpace{{Dimension::log_uniform("x", 0, 1)}}.validate());
    CHECK_THROWS(SearchSpace{{Dimension::categorical("c", {})}}.validate());
    CHECK_THROWS(mixed_space().at("missing"));
}
