#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wellml/data_core.hpp"

namespace wellml {

enum class SplitMode { Shuffled, Chronological };

struct SplitSpec {
    std::vector<double> fractions{0.8, 0.2};
    std::uint64_t seed = 121;
    SplitMode mode = SplitMode::Shuffled;
    /// Numeric, fully observed column used to order rows in Chronological mode.
    std::string order_column;

    void validate() const;
};

struct ScalerEntry {
    std::string column;
    double center = 0.0;
    double scale = 1.0;
};

/// Per numeric column center/scale. Scale is the population std, or 1 when
/// the std is 0 or the column has no observed values.
struct ScalerParams {
    std::vector<ScalerEntry> entries;

    const ScalerEntry* find(std::string_view column) const;
};

/// Spearman rank correlations over the numeric columns of a table.
struct CorrMatrix {
    std::vector<std::string> names;
    std::vector<double> values;      // row-major d x d
    std::vector<std::uint8_t> defined;

    std::size_t size() const noexcept { return names.size(); }
    double at(std::size_t i, std::size_t j) const { return values[i * names.size() + j]; }
    bool is_defined(std::size_t i, std::size_t j) const { return defined[i * names.size() + j] != 0; }
};

/// Drops every column whose missing fraction is >= threshold.
Table missingness_filter(const Table& table, double threshold = 0.25);

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

CorrMatrix spearman_matrix(const Table& table);

/// Greedy pass in column order: for every pair with |rho| >= cutoff the later
/// column is dropped. Undefined entries count as 0. Non-numeric columns are
/// kept.
Table prune_collinear(const Table& table, const CorrMatrix& corr, double cutoff = 0.95);

struct OneHotBlock {
    std::string source;
    std::vector<std::string> labels;   // code -> label of the source column
    std::vector<std::string> columns;  // generated column names, one per label
};

struct OneHotEncoding {
    Table table;
    std::vector<OneHotBlock> blocks;

    /// Label of `source` for `row`, recovered from the indicator block.
    /// Empty when the row's block is masked.
    std::optional<std::string> decode(std::string_view source, std::size_t row) const;
};

/// Replaces each listed categorical column (all categorical columns when
/// `columns` is empty) with 0/1 indicator columns named `col=label`, placed
/// where the source column was.
OneHotEncoding one_hot_encode(const Table& table, std::span<const std::string> columns = {});

struct KnnImputeOptions {
    std::size_t k = 5;
    /// Columns left untouched (e.g. the response or an identifier).
    std::vector<std::string> exclude;
};

Table knn_impute(const Table& table, const KnnImputeOptions& options = {});

struct IterativeImputeOptions {
    std::size_t max_rounds = 10;
    double tol = 1e-3;
    double ridge = 1e-3;
    std::vector<std::string> exclude;
};

struct IterativeImputeResult {
    Table table;
    /// Max absolute change of any imputed cell per round, standardized units.
    std::vector<double> round_deltas;
};

IterativeImputeResult iterative_impute(const Table& table, const IterativeImputeOptions& options = {});

/// Row indices of each part. Parts are disjoint and cover [0, n).
std::vector<std::vector<std::size_t>> split_indices(const Table& table, const SplitSpec& spec);
/// Shuffled-mode partition of [0, n).
std::vector<std::vector<std::size_t>> split_indices(std::size_t n, const SplitSpec& spec);
std::vector<Table> split(const Table& table, const SplitSpec& spec);

ScalerParams fit_scaler(const Table& fit_on, std::span<const std::string> columns = {});
Table apply_scaler(const Table& table, const ScalerParams& params);
Table invert_scaler(const Table& table, const ScalerParams& params);

/// Standardizes the numeric columns of `table` using center/scale fitted on
/// `fit_on` only.
std::pair<Table, ScalerParams> standardize(const Table& table, const Table& fit_on);

}  // namespace wellml
