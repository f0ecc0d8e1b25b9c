#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wellml/data_core.hpp"
#include "wellml/evalkit.hpp"

namespace wellml {

/// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

/// CSV text in the dialect parse_csv_table reads: masked cells are empty
/// (unquoted NA in single-column tables),
/// labels that would read back as missing or need escaping are quoted.
std::string to_csv(const Table& table);
void write_csv(const Table& table, const std::filesystem::path& path);

/// Column kinds of a table as load hints. Reading a written table back with
/// these hints reproduces it exactly; without them a categorical column of
/// numeric-looking labels re-infers as Numeric.
SchemaHints schema_of(const Table& table);

/// Writes text to a file, replacing it. Throws on I/O failure.
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

/// Linear map from a data rectangle to the plot area of a 640x480 figure.
struct PlotFrame {
    static constexpr double kWidth = 640.0;
    static constexpr double kHeight = 480.0;
    static constexpr double kLeft = 70.0;
    static constexpr double kRight = 20.0;
    static constexpr double kTop = 30.0;
    static constexpr double kBottom = 60.0;

    double x_lo = 0.0, x_hi = 1.0;
    double y_lo = 0.0, y_hi = 1.0;

    /// Degenerate ranges are widened by 0.5 on each side.
    PlotFrame(double x_lo, double x_hi, double y_lo, double y_hi);

    double px(double x) const;
    double py(double y) const;
};

/// Sidecar path of a figure: same stem, .csv extension.
std::filesystem::path sidecar_path(const std::filesystem::path& svg_path);

struct ScatterStyle {
    std::string title = "Predicted vs actual";
    std::string units;
};

/// SVG text for a predicted-vs-actual scatter with a 45 degree line.
std::string render_scatter_svg(std::span<const double> y_true, std::span<const double> y_pred,
                               const ScatterStyle& style = {});
PlotFrame scatter_frame(std::span<const double> y_true, std::span<const double> y_pred);
/// Writes the sidecar (actual, predicted) and the SVG rendered from it.
void emit_scatter(std::span<const double> y_true, std::span<const double> y_pred,
                  const std::filesystem::path& path, const ScatterStyle& style = {});

std::string render_validation_curve_svg(std::span<const double> train, std::span<const double> val);
PlotFrame validation_curve_frame(std::span<const double> train, std::span<const double> val);
/// Sidecar columns: epoch (1-based), train, val.
void emit_validation_curve(std::span<const double> train, std::span<const double> val,
                           const std::filesystem::path& path);

std::string render_histogram_svg(std::span<const HistogramBin> bins, std::pair<double, double> ci,
                                 const std::string& units = {});
PlotFrame histogram_frame(std::span<const HistogramBin> bins, std::pair<double, double> ci);
/// Sturges bins of the samples; sidecar columns bin_left, bin_right, count.
void emit_histogram(std::span<const double> samples, std::pair<double, double> ci,
                    const std::filesystem::path& path, const std::string& units = {});

/// Re-renders every *.svg in `dir` that has a sidecar, from the sidecar
/// alone. Histogram CI bounds are read from the SVG's own metadata.
std::size_t regenerate_figures(const std::filesystem::path& dir);

}  // namespace wellml
