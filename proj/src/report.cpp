#include "wellml/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace wellml {

std::string format_number(double value) {
    if (!std::isfinite(value)) throw std::invalid_argument("format_number: non-finite value");
    if (value == 0.0) return "0";  // also folds -0
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return {buf, res.ptr};
}

namespace {

bool needs_quotes(std::string_view field) {
    if (field.empty() || is_missing_token(field)) return true;
    if (field.front() == ' ' || field.back() == ' ') return true;
    return field.find_first_of(",\"\r\n") != std::string_view::npos;
}

std::string quote(std::string_view field) {
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string csv_field(std::string_view field) { return needs_quotes(field) ? quote(field) : std::string(field); }

}  // namespace

std::string to_csv(const Table& table) {
    if (table.n_cols() == 0) throw std::invalid_argument("to_csv: table has no columns");
    std::string out;
    for (std::size_t c = 0; c < table.n_cols(); ++c) {
        if (c) out += ',';
        out += csv_field(table.column(c).name);
    }
    out += '\n';
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        for (std::size_t c = 0; c < table.n_cols(); ++c) {
            if (c) out += ',';
            const Column& col = table.column(c);
            if (col.is_missing(r)) {
                // A lone empty field would be a blank line, which readers skip.
                if (table.n_cols() == 1) out += "NA";
                continue;
            }
            if (col.kind == ColumnKind::Numeric) {
                out += format_number(col.values[r]);
            } else {
                out += csv_field(col.label(r));
            }
        }
        out += '\n';
    }
    return out;
}

SchemaHints schema_of(const Table& table) {
    SchemaHints hints;
    for (const auto& c : table.columns()) hints.emplace(c.name, c.kind);
    return hints;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    f.close();
    if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_csv(const Table& table, const std::filesystem::path& path) { write_text(path, to_csv(table)); }

PlotFrame::PlotFrame(double xl, double xh, double yl, double yh) : x_lo(xl), x_hi(xh), y_lo(yl), y_hi(yh) {
    if (!(x_hi > x_lo)) {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if (!(y_hi > y_lo)) {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
}

double PlotFrame::px(double x) const { return kLeft + (x - x_lo) / (x_hi - x_lo) * (kWidth - kLeft - kRight); }

double PlotFrame::py(double y) const {
    return kHeight - kBottom - (y - y_lo) / (y_hi - y_lo) * (kHeight - kTop - kBottom);
}

std::filesystem::path sidecar_path(const std::filesystem::path& svg_path) {
    auto p = svg_path;
    p.replace_extension(".csv");
    return p;
}

namespace {

std::filesystem::path ci_sidecar_path(const std::filesystem::path& svg_path) {
    auto p = svg_path;
    p.replace_filename(svg_path.stem().string() + "_ci.csv");
    return p;
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string fmt(double v) { return format_number(v); }

class SvgWriter {
public:
    SvgWriter(const std::string& kind, const std::string& units, const std::string& title = {}) {
        out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
             << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(PlotFrame::kWidth) << "\" height=\""
             << fmt(PlotFrame::kHeight) << "\" data-kind=\"" << kind << "\" data-units=\"" << xml_escape(units)
             << "\"";
        if (!title.empty()) out_ << " data-title=\"" << xml_escape(title) << "\"";
        out_ << ">\n"
             << "<rect x=\"0\" y=\"0\" width=\"" << fmt(PlotFrame::kWidth) << "\" height=\""
             << fmt(PlotFrame::kHeight) << "\" fill=\"white\"/>\n";
    }

    void axes(const PlotFrame& f, const std::string& x_label, const std::string& y_label, const std::string& title) {
        const double x0 = PlotFrame::kLeft;
        const double x1 = PlotFrame::kWidth - PlotFrame::kRight;
        const double y0 = PlotFrame::kHeight - PlotFrame::kBottom;
        const double y1 = PlotFrame::kTop;
        out_ << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
        line(x0, y0, x1, y0, "x-axis");
        line(x0, y0, x0, y1, "y-axis");
        out_ << "</g>\n";
        text(x0, y0 + 16, fmt(f.x_lo), "start");
        text(x1, y0 + 16, fmt(f.x_hi), "end");
        text(x0 - 6, y0, fmt(f.y_lo), "end");
        text(x0 - 6, y1 + 10, fmt(f.y_hi), "end");
        text((x0 + x1) / 2, PlotFrame::kHeight - 20, x_label, "middle");
        out_ << "<text x=\"16\" y=\"" << fmt((y0 + y1) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
             << fmt((y0 + y1) / 2) << ")\" font-size=\"12\">" << xml_escape(y_label) << "</text>\n";
        text(PlotFrame::kWidth / 2, 18, title, "middle");
    }

    void line(double x1, double y1, double x2, double y2, const std::string& cls, const std::string& extra = {}) {
        out_ << "<line class=\"" << cls << "\" x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2)
             << "\" y2=\"" << fmt(y2) << "\"" << extra << "/>\n";
    }

    void circle(double cx, double cy, const std::string& cls, const std::string& fill) {
        out_ << "<circle class=\"" << cls << "\" cx=\"" << fmt(cx) << "\" cy=\"" << fmt(cy) << "\" r=\"3\" fill=\""
             << fill << "\"/>\n";
    }

    void text(double x, double y, const std::string& s, const char* anchor) {
        out_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" text-anchor=\"" << anchor
             << "\" font-size=\"12\">" << xml_escape(s) << "</text>\n";
    }

    std::ostringstream& raw() { return out_; }

    std::string finish() {
        out_ << "</svg>\n";
        return out_.str();
    }

private:
    std::ostringstream out_;
};

std::string with_units(const std::string& label, const std::string& units) {
    return units.empty() ? label : label + " (" + units + ")";
}

void check_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
    }
}

}  // namespace

PlotFrame scatter_frame(std::span<const double> y_true, std::span<const double> y_pred) {
    if (y_true.empty()) return {0.0, 1.0, 0.0, 1.0};
    const auto [a_lo, a_hi] = std::minmax_element(y_true.begin(), y_true.end());
    const auto [b_lo, b_hi] = std::minmax_element(y_pred.begin(), y_pred.end());
    const double lo = std::min(*a_lo, *b_lo);
    const double hi = std::max(*a_hi, *b_hi);
    return {lo, hi, lo, hi};
}

std::string render_scatter_svg(std::span<const double> y_true, std::span<const double> y_pred,
                               const ScatterStyle& style) {
    if (y_true.size() != y_pred.size()) throw std::invalid_argument("scatter: length mismatch");
    check_finite(y_true, "scatter");
    check_finite(y_pred, "scatter");
    const PlotFrame f = scatter_frame(y_true, y_pred);
    SvgWriter w("scatter", style.units, style.title);
    w.axes(f, with_units("Actual", style.units), with_units("Predicted", style.units), style.title);
    w.line(f.px(f.x_lo), f.py(f.x_lo), f.px(f.x_hi), f.py(f.x_hi), "reference",
           " stroke=\"gray\" stroke-dasharray=\"4 4\"");
    for (std::size_t i = 0; i < y_true.size(); ++i) w.circle(f.px(y_true[i]), f.py(y_pred[i]), "point", "steelblue");
    return w.finish();
}

void emit_scatter(std::span<const double> y_true, std::span<const double> y_pred, const std::filesystem::path& path,
                  const ScatterStyle& style) {
    if (y_true.size() != y_pred.size()) throw std::invalid_argument("scatter: length mismatch");
    Table t(y_true.size());
    t.add_numeric("actual", {y_true.begin(), y_true.end()});
    t.add_numeric("predicted", {y_pred.begin(), y_pred.end()});
    write_csv(t, sidecar_path(path));
    write_text(path, render_scatter_svg(y_true, y_pred, style));
}

PlotFrame validation_curve_frame(std::span<const double> train, std::span<const double> val) {
    double lo = std::min(*std::min_element(train.begin(), train.end()), *std::min_element(val.begin(), val.end()));
    double hi = std::max(*std::max_element(train.begin(), train.end()), *std::max_element(val.begin(), val.end()));
    return {1.0, static_cast<double>(train.size()), lo, hi};
}

std::string render_validation_curve_svg(std::span<const double> train, std::span<const double> val) {
    if (train.size() != val.size() || train.empty()) {
        throw std::invalid_argument("validation curve: need equal lengths >= 1");
    }
    check_finite(train, "validation curve");
    check_finite(val, "validation curve");
    const PlotFrame f = validation_curve_frame(train, val);
    SvgWriter w("validation_curve", "");
    w.axes(f, "Epoch", "Loss (MSE)", "Validation curve");
    const auto series = [&](std::span<const double> v, const char* cls, const char* color) {
        if (v.size() == 1) {
            w.circle(f.px(1.0), f.py(v[0]), cls, color);
            return;
        }
        auto& out = w.raw();
        out << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << color << "\" points=\"";
        for (std::size_t e = 0; e < v.size(); ++e) {
            if (e) out << ' ';
            out << fmt(f.px(static_cast<double>(e + 1))) << ',' << fmt(f.py(v[e]));
        }
        out << "\"/>\n";
    };
    series(train, "train", "steelblue");
    series(val, "val", "darkorange");
    w.text(PlotFrame::kWidth - PlotFrame::kRight - 4, PlotFrame::kTop + 14, "train (blue), validation (orange)", "end");
    return w.finish();
}

void emit_validation_curve(std::span<const double> train, std::span<const double> val,
                           const std::filesystem::path& path) {
    const std::string svg = render_validation_curve_svg(train, val);
    Table t(train.size());
    std::vector<double> epoch(train.size());
    for (std::size_t e = 0; e < epoch.size(); ++e) epoch[e] = static_cast<double>(e + 1);
    t.add_numeric("epoch", std::move(epoch));
    t.add_numeric("train", {train.begin(), train.end()});
    t.add_numeric("val", {val.begin(), val.end()});
    write_csv(t, sidecar_path(path));
    write_text(path, svg);
}

PlotFrame histogram_frame(std::span<const HistogramBin> bins, std::pair<double, double> ci) {
    double lo = ci.first, hi = ci.second;
    std::size_t top = 0;
    for (const auto& b : bins) {
        lo = std::min(lo, b.left);
        hi = std::max(hi, b.right);
        top = std::max(top, b.count);
    }
    return {lo, hi, 0.0, static_cast<double>(std::max<std::size_t>(top, 1))};
}

std::string render_histogram_svg(std::span<const HistogramBin> bins, std::pair<double, double> ci,
                                 const std::string& units) {
    if (bins.empty()) throw std::invalid_argument("histogram: no bins");
    if (!std::isfinite(ci.first) || !std::isfinite(ci.second) || ci.first > ci.second) {
        throw std::invalid_argument("histogram: bad confidence interval");
    }
    const PlotFrame f = histogram_frame(bins, ci);
    SvgWriter w("histogram", units);
    w.axes(f, with_units("RMSE", units), "Count", "RMSE distribution");
    auto& out = w.raw();
    for (const auto& b : bins) {
        const double x = f.px(b.left);
        const double y = f.py(static_cast<double>(b.count));
        out << "<rect class=\"bin\" x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(f.px(b.right) - x)
            << "\" height=\"" << fmt(f.py(0.0) - y) << "\" fill=\"lightsteelblue\" stroke=\"black\"/>\n";
    }
    const std::string style = " stroke=\"firebrick\" stroke-width=\"2\"";
    w.line(f.px(ci.first), f.py(f.y_lo), f.px(ci.first), f.py(f.y_hi), "ci-lo", style);
    w.line(f.px(ci.second), f.py(f.y_lo), f.px(ci.second), f.py(f.y_hi), "ci-hi", style);
    return w.finish();
}

void emit_histogram(std::span<const double> samples, std::pair<double, double> ci,
                    const std::filesystem::path& path, const std::string& units) {
    if (samples.empty()) throw std::invalid_argument("histogram: no samples");
    const auto bins = sturges_histogram(samples);
    const std::string svg = render_histogram_svg(bins, ci, units);
    Table t(bins.size());
    std::vector<double> left, right, count;
    for (const auto& b : bins) {
        left.push_back(b.left);
        right.push_back(b.right);
        count.push_back(static_cast<double>(b.count));
    }
    t.add_numeric("bin_left", std::move(left));
    t.add_numeric("bin_right", std::move(right));
    t.add_numeric("count", std::move(count));
    write_csv(t, sidecar_path(path));
    Table c(1);
    c.add_numeric("ci_lo", {ci.first});
    c.add_numeric("ci_hi", {ci.second});
    write_csv(c, ci_sidecar_path(path));
    write_text(path, svg);
}

namespace {

std::string svg_attribute(const std::string& svg, const std::string& name) {
    const std::string key = name + "=\"";
    const auto pos = svg.find(key);
    if (pos == std::string::npos) return {};
    const auto end = svg.find('"', pos + key.size());
    std::string v = svg.substr(pos + key.size(), end - pos - key.size());
    // Undo xml_escape for the few entities it produces.
    const std::pair<const char*, char> entities[] = {{"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&amp;", '&'}};
    for (const auto& [ent, ch] : entities) {
        for (auto p = v.find(ent); p != std::string::npos; p = v.find(ent, p + 1)) v.replace(p, std::strlen(ent), 1, ch);
    }
    return v;
}

std::vector<double> numeric_column(const Table& t, std::string_view name) {
    const Column& c = t.column(name);
    if (c.kind != ColumnKind::Numeric || c.missing_count() != 0) {
        throw std::runtime_error("sidecar column '" + std::string(name) + "' must be fully numeric");
    }
    return c.values;
}

}  // namespace

std::size_t regenerate_figures(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> svgs;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".svg" && std::filesystem::exists(sidecar_path(entry.path()))) {
            svgs.push_back(entry.path());
        }
    }
    std::sort(svgs.begin(), svgs.end());
    for (const auto& svg_path : svgs) {
        const std::string old_svg = read_text(svg_path);
        const std::string kind = svg_attribute(old_svg, "data-kind");
        const std::string units = svg_attribute(old_svg, "data-units");
        const Table data = load_csv(sidecar_path(svg_path));
        std::string svg;
        if (kind == "scatter") {
            ScatterStyle style;
            style.units = units;
            if (auto title = svg_attribute(old_svg, "data-title"); !title.empty()) style.title = std::move(title);
            svg = render_scatter_svg(numeric_column(data, "actual"), numeric_column(data, "predicted"), style);
        } else if (kind == "validation_curve") {
            svg = render_validation_curve_svg(numeric_column(data, "train"), numeric_column(data, "val"));
        } else if (kind == "histogram") {
            const auto left = numeric_column(data, "bin_left");
            const auto right = numeric_column(data, "bin_right");
            const auto count = numeric_column(data, "count");
            std::vector<HistogramBin> bins;
            for (std::size_t i = 0; i < left.size(); ++i) {
                bins.push_back({left[i], right[i], static_cast<std::size_t>(count[i])});
            }
            const Table ci = load_csv(ci_sidecar_path(svg_path));
            svg = render_histogram_svg(bins, {numeric_column(ci, "ci_lo").at(0), numeric_column(ci, "ci_hi").at(0)},
                                       units);
        } else {
            throw std::runtime_error("'" + svg_path.string() + "' is not a figure this tool emits");
        }
        write_text(svg_path, svg);
    }
    return svgs.size();
}

}  // namespace wellml
