#include <doctest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "wellml/report.hpp"

using namespace wellml;

namespace {

std::vector<double> column_values(const Table& t, const std::string& name) { return t.column(name).values; }

std::vector<std::pair<double, double>> polyline_points(const std::string& svg, const std::string& cls) {
    const auto pts = testutil::attribute_values(svg, "polyline", cls, "points");
    std::vector<std::pair<double, double>> out;
    if (pts.empty()) return out;
    std::istringstream in(pts[0]);
    std::string pair;
    while (in >> pair) {
        const auto comma = pair.find(',');
        out.emplace_back(std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1)));
    }
    return out;
}

}  // namespace

TEST_CASE("format_number: shortest round-trip text") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(-0.0) == "0");
    CHECK(format_number(1e21) == "1e+21");
    CHECK(format_number(3.0) == "3");
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.normal() * std::pow(10.0, rng.uniform(-30.0, 30.0));
        CHECK(std::stod(format_number(v)) == v);
    }
    CHECK_THROWS(format_number(NAN));
    CHECK_THROWS(format_number(INFINITY));
}

TEST_CASE("property: CSV round trip with quoting-hostile labels") {
    Rng rng(2);
    for (int rep = 0; rep < 60; ++rep) {
        const Table t = testutil::random_table(rng, 1 + rng.index(25), 1 + rng.index(6), rng.uniform() * 0.5);
        const std::string text = to_csv(t);
        const Table back = parse_csv_table(text, schema_of(t));
        CHECK(testutil::same_cells(t, back));
    }
}

TEST_CASE("write_csv goes through the file reader") {
    testutil::TempDir dir("csv");
    Table t(3);
    t.add_numeric("x", {1.5, 0.0, -2.0}, {0, 1, 0});
    t.add_categorical("name", {0, 1, 0}, {0, 0, 0}, {"NA", "a,b"});
    write_csv(t, dir / "t.csv");
    CHECK(read_text(dir / "t.csv") == "x,name\n1.5,\"NA\"\n,\"a,b\"\n-2,\"NA\"\n");
    CHECK(testutil::same_cells(load_csv(dir / "t.csv"), t));
}

TEST_CASE("scatter: perfect predictions sit on the reference line") {
    testutil::TempDir dir("scatter");
    const std::vector<double> y = {10, 20, 35, 12.5, 40};
    emit_scatter(y, y, dir / "scatter.svg", {"Predicted vs actual", "thousand barrels"});
    const Table side = load_csv(dir / "scatter.csv");
    CHECK(column_values(side, "actual") == column_values(side, "predicted"));
    CHECK(column_values(side, "actual") == y);

    const std::string svg = read_text(dir / "scatter.svg");
    CHECK(testutil::xml_well_formed(svg));
    CHECK(testutil::count_of(svg, "<circle") == 5);
    const auto cx = testutil::attribute_values(svg, "circle", "point", "cx");
    const auto cy = testutil::attribute_values(svg, "circle", "point", "cy");
    const PlotFrame f = scatter_frame(y, y);
    const auto x1 = std::stod(testutil::attribute_values(svg, "line", "reference", "x1").at(0));
    const auto y1 = std::stod(testutil::attribute_values(svg, "line", "reference", "y1").at(0));
    const auto x2 = std::stod(testutil::attribute_values(svg, "line", "reference", "x2").at(0));
    const auto y2 = std::stod(testutil::attribute_values(svg, "line", "reference", "y2").at(0));
    for (std::size_t i = 0; i < cx.size(); ++i) {
        CHECK(std::stod(cx[i]) == f.px(y[i]));
        // Point lies on the segment from (x1, y1) to (x2, y2).
        const double cross = (x2 - x1) * (std::stod(cy[i]) - y1) - (y2 - y1) * (std::stod(cx[i]) - x1);
        CHECK(std::abs(cross) < 1e-6);
    }
    CHECK(svg.find("thousand barrels") != std::string::npos);
}

TEST_CASE("scatter: circle count and empty plot") {
    Rng rng(3);
    std::vector<double> a(137), b(137);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = rng.normal(50, 10);
        b[i] = a[i] + rng.normal();
    }
    const std::string svg = render_scatter_svg(a, b);
    CHECK(testutil::xml_well_formed(svg));
    CHECK(testutil::count_of(svg, "<circle") == 137);

    const std::string empty = render_scatter_svg({}, {});
    CHECK(testutil::xml_well_formed(empty));
    CHECK(testutil::count_of(empty, "<circle") == 0);
    CHECK(testutil::count_of(empty, "class=\"x-axis\"") == 1);
    CHECK(testutil::count_of(empty, "class=\"y-axis\"") == 1);

    CHECK_THROWS(render_scatter_svg(std::vector<double>{1}, std::vector<double>{}));
}

TEST_CASE("validation curve: 9 epochs and a single epoch") {
    testutil::TempDir dir("curve");
    const std::vector<double> train = {0.53, 0.45, 0.40, 0.36, 0.31, 0.29, 0.27, 0.25, 0.23};
    const std::vector<double> val = {0.60, 0.50, 0.44, 0.41, 0.37, 0.36, 0.34, 0.33, 0.33};
    emit_validation_curve(train, val, dir / "curve.svg");
    const std::string svg = read_text(dir / "curve.svg");
    CHECK(testutil::xml_well_formed(svg));
    const auto t_pts = polyline_points(svg, "train");
    const auto v_pts = polyline_points(svg, "val");
    CHECK(t_pts.size() == 9);
    CHECK(v_pts.size() == 9);
    const PlotFrame f = validation_curve_frame(train, val);
    for (std::size_t e = 0; e < 9; ++e) {
        CHECK(t_pts[e].first == f.px(static_cast<double>(e + 1)));
        CHECK(t_pts[e].second == f.py(train[e]));
    }
    const Table side = load_csv(dir / "curve.csv");
    CHECK(column_values(side, "train") == train);
    CHECK(column_values(side, "val") == val);
    CHECK(column_values(side, "epoch") == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});

    const std::string one = render_validation_curve_svg(std::vector<double>{0.4}, std::vector<double>{0.5});
    CHECK(testutil::xml_well_formed(one));
    CHECK(testutil::count_of(one, "<polyline") == 0);
    CHECK(testutil::attribute_values(one, "circle", "train", "cx").size() == 1);
    CHECK(testutil::attribute_values(one, "circle", "val", "cx").size() == 1);

    CHECK_THROWS(render_validation_curve_svg(std::vector<double>{}, std::vector<double>{}));
    CHECK_THROWS(render_validation_curve_svg(std::vector<double>{1, 2}, std::vector<double>{1}));
}

TEST_CASE("histogram: Sturges bins, CI marker positions, constant samples") {
    testutil::TempDir dir("hist");
    Rng rng(4);
    std::vector<double> s(500);
    for (auto& v : s) v = rng.normal(20.0, 0.5);
    const std::pair<double, double> ci = {19.96, 20.05};
    emit_histogram(s, ci, dir / "hist.svg", "thousand barrels");
    const std::string svg = read_text(dir / "hist.svg");
    CHECK(testutil::xml_well_formed(svg));
    CHECK(testutil::count_of(svg, "<rect class=\"bin\"") == 10);
    const Table side = load_csv(dir / "hist.csv");
    CHECK(side.n_rows() == 10);
    double total = 0;
    for (double c : column_values(side, "count")) total += c;
    CHECK(total == 500);

    const auto bins = sturges_histogram(s);
    const PlotFrame f = histogram_frame(bins, ci);
    const auto lo_x = testutil::attribute_values(svg, "line", "ci-lo", "x1");
    const auto hi_x = testutil::attribute_values(svg, "line", "ci-hi", "x1");
    REQUIRE(lo_x.size() == 1);
    REQUIRE(hi_x.size() == 1);
    CHECK(std::stod(lo_x[0]) == f.px(ci.first));
    CHECK(std::stod(hi_x[0]) == f.px(ci.second));

    const std::vector<double> flat(40, 3.0);
    const auto flat_bins = sturges_histogram(flat);
    std::size_t occupied = 0;
    for (const auto& b : flat_bins) occupied += b.count > 0;
    CHECK(occupied == 1);
    const std::string flat_svg = render_histogram_svg(flat_bins, {3.0, 3.0});
    CHECK(testutil::xml_well_formed(flat_svg));
}

TEST_CASE("regenerating figures from sidecars is idempotent") {
    testutil::TempDir dir("regen");
    Rng rng(5);
    std::vector<double> a(30), b(30), s(100);
    for (std::size_t i = 0; i < 30; ++i) {
        a[i] = rng.normal(5, 1);
        b[i] = a[i] + rng.normal(0, 0.1);
    }
    for (auto& v : s) v = rng.normal(3, 1);
    emit_scatter(a, b, dir / "scatter_rf.svg", {"RF", "thousand barrels"});
    emit_validation_curve(std::vector<double>{0.5, 0.4, 0.3}, std::vector<double>{0.6, 0.5, 0.45},
                          dir / "validation_curve_lstm.svg");
    emit_histogram(s, confidence_interval(s), dir / "uncertainty_rf.svg", "thousand barrels");

    const std::vector<std::string> names = {"scatter_rf.svg", "validation_curve_lstm.svg", "uncertainty_rf.svg"};
    std::vector<std::string> before;
    for (const auto& n : names) before.push_back(read_text(dir / n));
    CHECK(regenerate_figures(dir.path()) == 3);
    for (std::size_t i = 0; i < names.size(); ++i) CHECK(read_text(dir / names[i]) == before[i]);
    CHECK(regenerate_figures(dir.path()) == 3);
    for (std::size_t i = 0; i < names.size(); ++i) CHECK(read_text(dir / names[i]) == before[i]);

    // The sidecar is the source of truth: editing it changes the figure.
    Table side = load_csv(dir / "scatter_rf.csv");
    std::vector<double> actual = side.column("actual").values;
    actual.pop_back();
    std::vector<double> predicted = side.column("predicted").values;
    predicted.pop_back();
    Table trimmed(actual.size());
    trimmed.add_numeric("actual", actual);
    trimmed.add_numeric("predicted", predicted);
    write_csv(trimmed, dir / "scatter_rf.csv");
    regenerate_figures(dir.path());
    CHECK(testutil::count_of(read_text(dir / "scatter_rf.svg"), "<circle") == 29);
}

TEST_CASE("PlotFrame maps corners and widens degenerate ranges") {
    const PlotFrame f(0.0, 10.0, -1.0, 1.0);
    CHECK(f.px(0.0) == PlotFrame::kLeft);
    CHECK(f.px(10.0) == PlotFrame::kWidth - PlotFrame::kRight);
    CHECK(f.py(-1.0) == PlotFrame::kHeight - PlotFrame::kBottom);
    CHECK(f.py(1.0) == PlotFrame::kTop);
    const PlotFrame g(2.0, 2.0, 5.0, 5.0);
    CHECK(g.x_lo == 1.5);
    CHECK(g.x_hi == 2.5);
    CHECK(sidecar_path("out/a.svg") == std::filesystem::path("out/a.csv"));
}
