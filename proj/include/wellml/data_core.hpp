#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wellml {

enum class ColumnKind { Numeric, Categorical };

std::string_view to_string(ColumnKind kind);

/// One column of a Table. Categorical cells hold dense integer codes into
/// `labels`; masked cells hold a placeholder that is never read.
struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<double> values;
    std::vector<std::uint8_t> missing;
    std::vector<std::string> labels;

    std::size_t size() const noexcept { return values.size(); }
    bool is_missing(std::size_t row) const { return missing[row] != 0; }
    std::size_t missing_count() const;
    /// Code of a categorical cell. Only valid for observed cells.
    std::size_t code(std::size_t row) const { return static_cast<std::size_t>(values[row]); }
    const std::string& label(std::size_t row) const { return labels[code(row)]; }
};

/// Column-major table with a per-cell missing mask. Columns are validated on
/// insertion; operations in this library return new tables instead of
/// mutating inputs.
class Table {
public:
    Table() = default;
    explicit Table(std::size_t n_rows) : n_rows_(n_rows) {}

    std::size_t n_rows() const noexcept { return n_rows_; }
    std::size_t n_cols() const noexcept { return columns_.size(); }

    const Column& column(std::size_t index) const { return columns_.at(index); }
    const Column& column(std::string_view name) const;
    std::optional<std::size_t> find(std::string_view name) const;
    bool has_column(std::string_view name) const { return find(name).has_value(); }
    std::vector<std::string> column_names() const;
    const std::vector<Column>& columns() const noexcept { return columns_; }

    /// Observed numeric values are required to be finite; masked cells may
    /// hold anything and are normalized to NaN.
    void add_numeric(std::string name, std::vector<double> values,
                     std::vector<std::uint8_t> missing = {});
    /// Codes must lie in [0, labels.size()) for observed cells.
    void add_categorical(std::string name, std::vector<std::size_t> codes,
                         std::vector<std::uint8_t> missing, std::vector<std::string> labels);
    void add_column(Column column);

    /// Rows in the given order; duplicates allowed.
    Table take_rows(std::span<const std::size_t> rows) const;

    /// Cell- and mask-exact equality. Categorical cells compare by label so
    /// that tables whose dictionaries were built in a different order still
    /// compare equal; masked cells are ignored.
    bool operator==(const Table& other) const;

private:
    std::size_t n_rows_ = 0;
    std::vector<Column> columns_;
};

struct ColumnSummary {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    double missing_fraction = 0.0;
    std::size_t missing_count = 0;
    // Moments are empty for categorical columns and for all-missing columns.
    std::optional<double> mean;
    std::optional<double> std;
    std::optional<double> min;
    std::optional<double> max;
    std::size_t cardinality = 0;
};

using ColumnStats = std::vector<ColumnSummary>;

/// Per-column kind overrides for load_csv.
using SchemaHints = std::map<std::string, ColumnKind, std::less<>>;

/// True for the tokens that denote a missing cell when unquoted:
/// empty, NA, NaN, null (case-insensitive).
bool is_missing_token(std::string_view field);

/// Parses a full field as a finite decimal number.
std::optional<double> parse_number(std::string_view field);

/// One parsed CSV record. `quoted[i]` is true if field i was quoted.
struct CsvRecord {
    std::vector<std::string> fields;
    std::vector<bool> quoted;
};

/// RFC-4180 style reader: comma separator, double-quote quoting with ""
/// escapes, quoted fields may span lines, CRLF or LF line endings. Blank
/// lines are skipped.
std::vector<CsvRecord> parse_csv(std::string_view text);

Table parse_csv_table(std::string_view text, const SchemaHints& hints = {});
Table load_csv(const std::filesystem::path& path, const SchemaHints& hints = {});

ColumnStats column_stats(const Table& table);

Table select_columns(const Table& table, std::span<const std::string> keep);
Table drop_columns(const Table& table, std::span<const std::string> drop);

}  // namespace wellml
