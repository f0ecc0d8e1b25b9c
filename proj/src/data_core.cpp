#include "wellml/data_core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace wellml {

std::string_view to_string(ColumnKind kind) {
    return kind == ColumnKind::Numeric ? "numeric" : "categorical";
}

std::size_t Column::missing_count() const {
    return static_cast<std::size_t>(std::count(missing.begin(), missing.end(), std::uint8_t{1}));
}

const Column& Table::column(std::string_view name) const {
    if (auto idx = find(name)) return columns_[*idx];
    throw std::out_of_range("no column named '" + std::string(name) + "'");
}

std::optional<std::size_t> Table::find(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i].name == name) return i;
    }
    return std::nullopt;
}

std::vector<std::string> Table::column_names() const {
    std::vector<std::string> names;
    names.reserve(columns_.size());
    for (const auto& c : columns_) names.push_back(c.name);
    return names;
}

void Table::add_numeric(std::string name, std::vector<double> values,
                        std::vector<std::uint8_t> missing) {
    Column c;
    c.name = std::move(name);
    c.kind = ColumnKind::Numeric;
    if (missing.empty()) missing.assign(values.size(), 0);
    c.values = std::move(values);
    c.missing = std::move(missing);
    add_column(std::move(c));
}

void Table::add_categorical(std::string name, std::vector<std::size_t> codes,
                            std::vector<std::uint8_t> missing, std::vector<std::string> labels) {
    Column c;
    c.name = std::move(name);
    c.kind = ColumnKind::Categorical;
    if (missing.empty()) missing.assign(codes.size(), 0);
    c.values.reserve(codes.size());
    for (auto code : codes) c.values.push_back(static_cast<double>(code));
    c.missing = std::move(missing);
    c.labels = std::move(labels);
    add_column(std::move(c));
}

void Table::add_column(Column c) {
    if (c.values.size() != n_rows_ || c.missing.size() != n_rows_) {
        throw std::invalid_argument("column '" + c.name + "' has " + std::to_string(c.values.size()) +
                                    " cells, table has " + std::to_string(n_rows_) + " rows");
    }
    if (has_column(c.name)) {
        throw std::invalid_argument("duplicate column name '" + c.name + "'");
    }
    for (std::size_t r = 0; r < n_rows_; ++r) {
        if (c.missing[r]) {
            c.missing[r] = 1;
            c.values[r] = c.kind == ColumnKind::Numeric ? std::numeric_limits<double>::quiet_NaN() : 0.0;
            continue;
        }
        const double v = c.values[r];
        if (c.kind == ColumnKind::Numeric) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("column '" + c.name + "' row " + std::to_string(r) +
                                            ": observed value is not finite");
            }
        } else if (!(v >= 0.0) || v >= static_cast<double>(c.labels.size()) || v != std::floor(v)) {
            throw std::invalid_argument("column '" + c.name + "' row " + std::to_string(r) +
                                        ": categorical code out of range");
        }
    }
    columns_.push_back(std::move(c));
}

Table Table::take_rows(std::span<const std::size_t> rows) const {
    Table out(rows.size());
    for (const auto& c : columns_) {
        Column copy;
        copy.name = c.name;
        copy.kind = c.kind;
        copy.labels = c.labels;
        copy.values.reserve(rows.size());
        copy.missing.reserve(rows.size());
        for (auto r : rows) {
            if (r >= n_rows_) throw std::out_of_range("take_rows: row index out of range");
            copy.values.push_back(c.values[r]);
            copy.missing.push_back(c.missing[r]);
        }
        out.columns_.push_back(std::move(copy));
    }
    return out;
}

bool Table::operator==(const Table& other) const {
    if (n_rows_ != other.n_rows_ || columns_.size() != other.columns_.size()) return false;
    for (std::size_t j = 0; j < columns_.size(); ++j) {
        const Column& a = columns_[j];
        const Column& b = other.columns_[j];
        if (a.name != b.name || a.kind != b.kind || a.missing != b.missing) return false;
        for (std::size_t r = 0; r < n_rows_; ++r) {
            if (a.missing[r]) continue;
            if (a.kind == ColumnKind::Numeric) {
                if (a.values[r] != b.values[r]) return false;
            } else if (a.label(r) != b.label(r)) {
                return false;
            }
        }
    }
    return true;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

bool is_blank_record(const CsvRecord& rec) {
    return rec.fields.size() == 1 && !rec.quoted[0] && rec.fields[0].empty();
}

}  // namespace

bool is_missing_token(std::string_view field) {
    field = trim(field);
    return field.empty() || iequals(field, "NA") || iequals(field, "NaN") || iequals(field, "null");
}

std::optional<double> parse_number(std::string_view field) {
    field = trim(field);
    if (field.empty()) return std::nullopt;
    if (field.front() == '+') field.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value,
                                           std::chars_format::general);
    if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(value)) {
        return std::nullopt;
    }
    return value;
}

std::vector<CsvRecord> parse_csv(std::string_view text) {
    std::vector<CsvRecord> records;
    CsvRecord current;
    std::string field;
    bool in_quotes = false;
    bool field_quoted = false;
    bool record_started = false;

    auto end_field = [&] {
        current.fields.push_back(std::move(field));
        current.quoted.push_back(field_quoted);
        field.clear();
        field_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        if (!is_blank_record(current)) records.push_back(std::move(current));
        current = CsvRecord{};
        record_started = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        record_started = true;
        switch (ch) {
        case '"':
            if (trim(field).empty()) {
                field.clear();
                in_quotes = true;
                field_quoted = true;
            } else {
                field.push_back(ch);
            }
            break;
        case ',':
            end_field();
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_record();
            break;
        case '\n':
            end_record();
            break;
        default:
            // Whitespace after a closing quote is dropped.
            if (field_quoted && (ch == ' ' || ch == '\t')) break;
            field.push_back(ch);
        }
    }
    if (in_quotes) throw std::runtime_error("csv: unterminated quoted field");
    if (record_started || !field.empty()) end_record();
    return records;
}

Table parse_csv_table(std::string_view text, const SchemaHints& hints) {
    const auto records = parse_csv(text);
    if (records.empty()) throw std::runtime_error("csv: empty file (no header)");

    const auto& header = records.front().fields;
    const std::size_t n_cols = header.size();
    {
        std::set<std::string_view> seen;
        for (const auto& name : header) {
            if (!seen.insert(name).second) {
                throw std::runtime_error("csv: duplicate column name '" + name + "'");
            }
        }
    }
    for (const auto& [name, kind] : hints) {
        if (std::find(header.begin(), header.end(), name) == header.end()) {
            throw std::runtime_error("csv: schema hint for unknown column '" + name + "'");
        }
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].fields.size() != n_cols) {
            // Row numbers count the header as row 1.
            throw std::runtime_error("csv: row " + std::to_string(r + 1) + " has " +
                                     std::to_string(records[r].fields.size()) + " fields, expected " +
                                     std::to_string(n_cols));
        }
    }

    const std::size_t n_rows = records.size() - 1;
    Table table(n_rows);
    for (std::size_t j = 0; j < n_cols; ++j) {
        std::vector<std::uint8_t> missing(n_rows, 0);
        std::vector<double> numbers(n_rows, 0.0);
        bool all_numeric = true;
        for (std::size_t r = 0; r < n_rows; ++r) {
            const auto& rec = records[r + 1];
            if (!rec.quoted[j] && is_missing_token(rec.fields[j])) {
                missing[r] = 1;
                continue;
            }
            if (auto v = parse_number(rec.fields[j])) {
                numbers[r] = *v;
            } else {
                all_numeric = false;
            }
        }

        ColumnKind kind = all_numeric ? ColumnKind::Numeric : ColumnKind::Categorical;
        if (auto it = hints.find(header[j]); it != hints.end()) kind = it->second;

        if (kind == ColumnKind::Numeric) {
            if (!all_numeric) {
                for (std::size_t r = 0; r < n_rows; ++r) {
                    const auto& f = records[r + 1].fields[j];
                    if (!missing[r] && !parse_number(f)) {
                        throw std::runtime_error("csv: column '" + header[j] + "' row " +
                                                 std::to_string(r + 2) + ": '" + f + "' is not numeric");
                    }
                }
            }
            table.add_numeric(header[j], std::move(numbers), std::move(missing));
        } else {
            std::vector<std::string> labels;
            std::unordered_map<std::string, std::size_t> index;
            std::vector<std::size_t> codes(n_rows, 0);
            for (std::size_t r = 0; r < n_rows; ++r) {
                if (missing[r]) continue;
                const auto& f = records[r + 1].fields[j];
                auto [it, inserted] = index.try_emplace(f, labels.size());
                if (inserted) labels.push_back(f);
                codes[r] = it->second;
            }
            table.add_categorical(header[j], std::move(codes), std::move(missing), std::move(labels));
        }
    }
    return table;
}

Table load_csv(const std::filesystem::path& path, const SchemaHints& hints) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("csv: cannot open '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) throw std::runtime_error("csv: read error on '" + path.string() + "'");
    return parse_csv_table(buffer.str(), hints);
}

ColumnStats column_stats(const Table& table) {
    ColumnStats stats;
    stats.reserve(table.n_cols());
    for (const auto& c : table.columns()) {
        ColumnSummary s;
        s.name = c.name;
        s.kind = c.kind;
        s.missing_count = c.missing_count();
        s.missing_fraction = table.n_rows() == 0
                                 ? 0.0
                                 : static_cast<double>(s.missing_count) / static_cast<double>(table.n_rows());
        if (c.kind == ColumnKind::Categorical) {
            s.cardinality = c.labels.size();
        } else if (s.missing_count < c.size()) {
            double sum = 0.0;
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            std::size_t n = 0;
            for (std::size_t r = 0; r < c.size(); ++r) {
                if (c.is_missing(r)) continue;
                sum += c.values[r];
                lo = std::min(lo, c.values[r]);
                hi = std::max(hi, c.values[r]);
                ++n;
            }
            const double mean = sum / static_cast<double>(n);
            double ss = 0.0;
            for (std::size_t r = 0; r < c.size(); ++r) {
                if (c.is_missing(r)) continue;
                ss += (c.values[r] - mean) * (c.values[r] - mean);
            }
            s.mean = mean;
            s.std = std::sqrt(ss / static_cast<double>(n));
            s.min = lo;
            s.max = hi;
        }
        stats.push_back(std::move(s));
    }
    return stats;
}

Table select_columns(const Table& table, std::span<const std::string> keep) {
    std::vector<std::string> unknown;
    std::set<std::string_view> seen;
    for (const auto& name : keep) {
        if (!table.has_column(name)) unknown.push_back(name);
        if (!seen.insert(name).second) {
            throw std::invalid_argument("select_columns: '" + name + "' listed twice");
        }
    }
    if (!unknown.empty()) {
        std::string msg = "select_columns: unknown column(s):";
        for (const auto& u : unknown) msg += " '" + u + "'";
        throw std::invalid_argument(msg);
    }
    Table out(table.n_rows());
    for (const auto& name : keep) out.add_column(table.column(name));
    return out;
}

Table drop_columns(const Table& table, std::span<const std::string> drop) {
    for (const auto& name : drop) {
        if (!table.has_column(name)) {
            throw std::invalid_argument("drop_columns: unknown column '" + name + "'");
        }
    }
    std::vector<std::string> keep;
    for (const auto& c : table.columns()) {
        if (std::find(drop.begin(), drop.end(), c.name) == drop.end()) keep.push_back(c.name);
    }
    return select_columns(table, keep);
}

}  // namespace wellml
