#include "wellml/preprocess.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "wellml/rng.hpp"

namespace wellml {

void SplitSpec::validate() const {
    if (fractions.empty()) throw std::invalid_argument("split: no fractions given");
    double total = 0.0;
    for (double f : fractions) {
        if (!(f >= 0.0)) throw std::invalid_argument("split: fractions must be non-negative");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split: fractions must sum to 1");
    if (mode == SplitMode::Chronological && order_column.empty()) {
        throw std::invalid_argument("split: chronological mode needs an order column");
    }
}

const ScalerEntry* ScalerParams::find(std::string_view column) const {
    for (const auto& e : entries) {
        if (e.column == column) return &e;
    }
    return nullptr;
}

Table missingness_filter(const Table& table, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw std::invalid_argument("missingness_filter: threshold must lie in (0, 1]");
    }
    std::vector<std::string> keep;
    for (const auto& s : column_stats(table)) {
        if (s.missing_fraction < threshold) keep.push_back(s.name);
    }
    return select_columns(table, keep);
}

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        // Positions i..j-1 (0-based) share rank mean((i+1)..j).
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
        i = j;
    }
    return ranks;
}

namespace {

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2) return std::nullopt;
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<std::size_t> numeric_columns(const Table& table, std::span<const std::string> exclude = {}) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < table.n_cols(); ++j) {
        const auto& c = table.column(j);
        if (c.kind != ColumnKind::Numeric) continue;
        if (std::find(exclude.begin(), exclude.end(), c.name) != exclude.end()) continue;
        out.push_back(j);
    }
    return out;
}

struct Moments {
    double mean = 0.0;
    double scale = 1.0;
    std::size_t observed = 0;
};

Moments observed_moments(const Column& c) {
    Moments m;
    double sum = 0.0;
    for (std::size_t r = 0; r < c.size(); ++r) {
        if (c.is_missing(r)) continue;
        sum += c.values[r];
        ++m.observed;
    }
    if (m.observed == 0) return m;
    m.mean = sum / static_cast<double>(m.observed);
    double ss = 0.0;
    for (std::size_t r = 0; r < c.size(); ++r) {
        if (!c.is_missing(r)) ss += (c.values[r] - m.mean) * (c.values[r] - m.mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(m.observed));
    m.scale = sd > 0.0 ? sd : 1.0;
    return m;
}

/// Most frequent observed code; ties go to the lowest code.
std::optional<std::size_t> column_mode(const Column& c, std::span<const std::size_t> rows) {
    std::vector<std::size_t> counts(c.labels.size(), 0);
    bool any = false;
    for (auto r : rows) {
        if (c.is_missing(r)) continue;
        ++counts[c.code(r)];
        any = true;
    }
    if (!any) return std::nullopt;
    return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

Table rebuild(const Table& source, std::vector<Column> columns) {
    Table out(source.n_rows());
    for (auto& c : columns) out.add_column(std::move(c));
    return out;
}

}  // namespace

CorrMatrix spearman_matrix(const Table& table) {
    const auto cols = numeric_columns(table);
    const std::size_t d = cols.size();
    CorrMatrix m;
    m.values.assign(d * d, 0.0);
    m.defined.assign(d * d, 0);
    for (auto j : cols) m.names.push_back(table.column(j).name);

    for (std::size_t a = 0; a < d; ++a) {
        m.values[a * d + a] = 1.0;
        m.defined[a * d + a] = 1;
        const Column& ca = table.column(cols[a]);
        for (std::size_t b = a + 1; b < d; ++b) {
            const Column& cb = table.column(cols[b]);
            std::vector<double> xa, xb;
            for (std::size_t r = 0; r < table.n_rows(); ++r) {
                if (ca.is_missing(r) || cb.is_missing(r)) continue;
                xa.push_back(ca.values[r]);
                xb.push_back(cb.values[r]);
            }
            if (xa.size() < 2) continue;
            const auto rho = pearson(average_ranks(xa), average_ranks(xb));
            if (!rho) continue;
            m.values[a * d + b] = m.values[b * d + a] = *rho;
            m.defined[a * d + b] = m.defined[b * d + a] = 1;
        }
    }
    return m;
}

Table prune_collinear(const Table& table, const CorrMatrix& corr, double cutoff) {
    if (!(cutoff > 0.0 && cutoff <= 1.0)) {
        throw std::invalid_argument("prune_collinear: cutoff must lie in (0, 1]");
    }
    // Walk the correlation entries in table column order.
    std::vector<std::size_t> order;
    for (const auto& c : table.columns()) {
        auto it = std::find(corr.names.begin(), corr.names.end(), c.name);
        if (it != corr.names.end()) order.push_back(static_cast<std::size_t>(it - corr.names.begin()));
    }
    std::vector<bool> dropped(corr.size(), false);
    for (std::size_t a = 0; a < order.size(); ++a) {
        if (dropped[order[a]]) continue;
        for (std::size_t b = a + 1; b < order.size(); ++b) {
            const std::size_t i = order[a], j = order[b];
            if (dropped[j] || !corr.is_defined(i, j)) continue;
            if (std::abs(corr.at(i, j)) >= cutoff) dropped[j] = true;
        }
    }
    std::vector<std::string> drop;
    for (std::size_t i = 0; i < corr.size(); ++i) {
        if (dropped[i]) drop.push_back(corr.names[i]);
    }
    return drop_columns(table, drop);
}

std::optional<std::string> OneHotEncoding::decode(std::string_view source, std::size_t row) const {
    for (const auto& block : blocks) {
        if (block.source != source) continue;
        for (std::size_t k = 0; k < block.columns.size(); ++k) {
            const Column& c = table.column(block.columns[k]);
            if (c.is_missing(row)) return std::nullopt;
            if (c.values[row] == 1.0) return block.labels[k];
        }
        return std::nullopt;
    }
    throw std::invalid_argument("one-hot: no block for column '" + std::string(source) + "'");
}

OneHotEncoding one_hot_encode(const Table& table, std::span<const std::string> columns) {
    std::vector<std::string> targets;
    if (columns.empty()) {
        for (const auto& c : table.columns()) {
            if (c.kind == ColumnKind::Categorical) targets.push_back(c.name);
        }
    } else {
        for (const auto& name : columns) {
            if (table.column(name).kind != ColumnKind::Categorical) {
                throw std::invalid_argument("one_hot_encode: column '" + name + "' is numeric");
            }
            targets.push_back(name);
        }
    }

    OneHotEncoding enc;
    enc.table = Table(table.n_rows());
    for (const auto& c : table.columns()) {
        if (std::find(targets.begin(), targets.end(), c.name) == targets.end()) {
            enc.table.add_column(c);
            continue;
        }
        OneHotBlock block;
        block.source = c.name;
        block.labels = c.labels;
        for (std::size_t code = 0; code < c.labels.size(); ++code) {
            std::vector<double> values(c.size(), 0.0);
            for (std::size_t r = 0; r < c.size(); ++r) {
                if (!c.is_missing(r) && c.code(r) == code) values[r] = 1.0;
            }
            std::string name = c.name + "=" + c.labels[code];
            enc.table.add_numeric(name, std::move(values), c.missing);
            block.columns.push_back(std::move(name));
        }
        enc.blocks.push_back(std::move(block));
    }
    return enc;
}

Table knn_impute(const Table& table, const KnnImputeOptions& options) {
    if (options.k < 1) throw std::invalid_argument("knn_impute: k must be >= 1");
    const std::size_t n = table.n_rows();
    const auto coords = numeric_columns(table, options.exclude);
    const std::size_t d = coords.size();

    // Standardized coordinates over observed values.
    std::vector<std::vector<double>> z(d, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < d; ++a) {
        const Column& c = table.column(coords[a]);
        const Moments m = observed_moments(c);
        for (std::size_t r = 0; r < n; ++r) {
            if (!c.is_missing(r)) z[a][r] = (c.values[r] - m.mean) / m.scale;
        }
    }

    std::vector<Column> out(table.columns());
    std::vector<std::size_t> targets;
    for (std::size_t j = 0; j < table.n_cols(); ++j) {
        const auto& c = table.column(j);
        if (std::find(options.exclude.begin(), options.exclude.end(), c.name) != options.exclude.end()) continue;
        if (c.missing_count() > 0) targets.push_back(j);
    }
    if (targets.empty()) return table;

    std::vector<std::size_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0);

    std::vector<std::pair<double, std::size_t>> neighbours;
    for (std::size_t r = 0; r < n; ++r) {
        bool incomplete = false;
        for (auto j : targets) incomplete = incomplete || table.column(j).is_missing(r);
        if (!incomplete) continue;

        neighbours.clear();
        for (std::size_t q = 0; q < n; ++q) {
            if (q == r) continue;
            double ss = 0.0;
            std::size_t shared = 0;
            for (std::size_t a = 0; a < d; ++a) {
                const Column& c = table.column(coords[a]);
                if (c.is_missing(r) || c.is_missing(q)) continue;
                const double diff = z[a][r] - z[a][q];
                ss += diff * diff;
                ++shared;
            }
            if (shared == 0) continue;
            neighbours.emplace_back(std::sqrt(ss * static_cast<double>(d) / static_cast<double>(shared)), q);
        }
        std::sort(neighbours.begin(), neighbours.end());

        for (auto j : targets) {
            const Column& c = table.column(j);
            if (!c.is_missing(r)) continue;
            std::vector<std::size_t> donors;
            for (const auto& [dist, q] : neighbours) {
                if (c.is_missing(q)) continue;
                donors.push_back(q);
                if (donors.size() == options.k) break;
            }
            if (c.kind == ColumnKind::Numeric) {
                double value;
                if (!donors.empty()) {
                    double sum = 0.0;
                    for (auto q : donors) sum += c.values[q];
                    value = sum / static_cast<double>(donors.size());
                } else {
                    const Moments m = observed_moments(c);
                    if (m.observed == 0) {
                        throw std::invalid_argument("knn_impute: column '" + c.name + "' has no observed values");
                    }
                    value = m.mean;
                }
                out[j].values[r] = value;
            } else {
                auto mode = column_mode(c, donors.empty() ? std::span<const std::size_t>(all_rows)
                                                          : std::span<const std::size_t>(donors));
                if (!mode) {
                    throw std::invalid_argument("knn_impute: column '" + c.name + "' has no observed values");
                }
                out[j].values[r] = static_cast<double>(*mode);
            }
            out[j].missing[r] = 0;
        }
    }
    return rebuild(table, std::move(out));
}

IterativeImputeResult iterative_impute(const Table& table, const IterativeImputeOptions& options) {
    const std::size_t n = table.n_rows();
    const auto cols = numeric_columns(table, options.exclude);
    const std::size_t d = cols.size();
    if (d < 2) throw std::invalid_argument("iterative_impute: needs at least two numeric columns");

    // Work in standardized units; cells start at the column mean (0).
    std::vector<Moments> moments(d);
    std::vector<std::vector<double>> z(d, std::vector<double>(n, 0.0));
    std::vector<std::size_t> incomplete;
    for (std::size_t a = 0; a < d; ++a) {
        const Column& c = table.column(cols[a]);
        moments[a] = observed_moments(c);
        if (moments[a].observed == 0) {
            throw std::invalid_argument("iterative_impute: column '" + c.name + "' has no observed values");
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (!c.is_missing(r)) z[a][r] = (c.values[r] - moments[a].mean) / moments[a].scale;
        }
        if (moments[a].observed < n) incomplete.push_back(a);
    }

    IterativeImputeResult result;
    for (std::size_t round = 0; round < options.max_rounds && !incomplete.empty(); ++round) {
        double max_delta = 0.0;
        for (auto a : incomplete) {
            const Column& target = table.column(cols[a]);
            // Design: intercept + every other numeric column.
            const Eigen::Index p = static_cast<Eigen::Index>(d);
            Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(p, p);
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
            Eigen::VectorXd x(p);
            auto fill_row = [&](std::size_t r) {
                x(0) = 1.0;
                Eigen::Index k = 1;
                for (std::size_t b = 0; b < d; ++b) {
                    if (b != a) x(k++) = z[b][r];
                }
            };
            for (std::size_t r = 0; r < n; ++r) {
                if (target.is_missing(r)) continue;
                fill_row(r);
                normal.selfadjointView<Eigen::Lower>().rankUpdate(x);
                rhs += z[a][r] * x;
            }
            normal = normal.selfadjointView<Eigen::Lower>();
            for (Eigen::Index k = 1; k < p; ++k) normal(k, k) += options.ridge;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
            if (ldlt.info() != Eigen::Success) continue;
            const Eigen::VectorXd beta = ldlt.solve(rhs);
            if (!beta.allFinite()) continue;

            for (std::size_t r = 0; r < n; ++r) {
                if (!target.is_missing(r)) continue;
                fill_row(r);
                const double predicted = x.dot(beta);
                max_delta = std::max(max_delta, std::abs(predicted - z[a][r]));
                z[a][r] = predicted;
            }
        }
        result.round_deltas.push_back(max_delta);
        if (max_delta < options.tol) break;
    }

    std::vector<Column> out(table.columns());
    for (auto a : incomplete) {
        Column& c = out[cols[a]];
        for (std::size_t r = 0; r < n; ++r) {
            if (!c.is_missing(r)) continue;
            c.values[r] = moments[a].mean + moments[a].scale * z[a][r];
            c.missing[r] = 0;
        }
    }
    result.table = rebuild(table, std::move(out));
    return result;
}

namespace {

std::vector<std::vector<std::size_t>> partition(const std::vector<std::size_t>& order, const SplitSpec& spec) {
    const std::size_t n = order.size();
    const std::size_t parts = spec.fractions.size();
    std::vector<std::size_t> sizes(parts);
    std::size_t assigned = 0;
    for (std::size_t p = 0; p < parts; ++p) {
        sizes[p] = static_cast<std::size_t>(std::floor(spec.fractions[p] * static_cast<double>(n) + 1e-9));
        assigned += sizes[p];
    }
    sizes[0] += n - assigned;

    std::vector<std::vector<std::size_t>> out(parts);
    std::size_t pos = 0;
    for (std::size_t p = 0; p < parts; ++p) {
        out[p].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                      order.begin() + static_cast<std::ptrdiff_t>(pos + sizes[p]));
        pos += sizes[p];
    }
    return out;
}

void check_part_count(std::size_t n, const SplitSpec& spec) {
    spec.validate();
    if (n < spec.fractions.size()) {
        throw std::invalid_argument("split: " + std::to_string(n) + " rows cannot fill " +
                                    std::to_string(spec.fractions.size()) + " parts");
    }
}

}  // namespace

std::vector<std::vector<std::size_t>> split_indices(std::size_t n, const SplitSpec& spec) {
    check_part_count(n, spec);
    if (spec.mode != SplitMode::Shuffled) {
        throw std::invalid_argument("split: chronological mode needs the table's order column");
    }
    Rng rng(spec.seed);
    return partition(rng.permutation(n), spec);
}

std::vector<std::vector<std::size_t>> split_indices(const Table& table, const SplitSpec& spec) {
    const std::size_t n = table.n_rows();
    check_part_count(n, spec);
    if (spec.mode == SplitMode::Shuffled) return split_indices(n, spec);

    std::vector<std::size_t> order;
    {
        const Column& key = table.column(spec.order_column);
        if (key.kind != ColumnKind::Numeric || key.missing_count() > 0) {
            throw std::invalid_argument("split: order column must be numeric and fully observed");
        }
        order.resize(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return key.values[a] < key.values[b]; });
    }

    return partition(order, spec);
}

std::vector<Table> split(const Table& table, const SplitSpec& spec) {
    std::vector<Table> out;
    for (const auto& idx : split_indices(table, spec)) out.push_back(table.take_rows(idx));
    return out;
}

ScalerParams fit_scaler(const Table& fit_on, std::span<const std::string> columns) {
    ScalerParams params;
    for (const auto& c : fit_on.columns()) {
        if (c.kind != ColumnKind::Numeric) continue;
        if (!columns.empty() && std::find(columns.begin(), columns.end(), c.name) == columns.end()) continue;
        const Moments m = observed_moments(c);
        params.entries.push_back({c.name, m.mean, m.scale});
    }
    return params;
}

namespace {

Table transform(const Table& table, const ScalerParams& params, bool inverse) {
    std::vector<Column> out(table.columns());
    for (auto& c : out) {
        const ScalerEntry* e = params.find(c.name);
        if (e == nullptr) continue;
        if (c.kind != ColumnKind::Numeric) {
            throw std::invalid_argument("scaler: column '" + c.name + "' is not numeric");
        }
        for (std::size_t r = 0; r < c.size(); ++r) {
            if (c.is_missing(r)) continue;
            c.values[r] = inverse ? c.values[r] * e->scale + e->center : (c.values[r] - e->center) / e->scale;
        }
    }
    return rebuild(table, std::move(out));
}

}  // namespace

Table apply_scaler(const Table& table, const ScalerParams& params) { return transform(table, params, false); }

Table invert_scaler(const Table& table, const ScalerParams& params) { return transform(table, params, true); }

std::pair<Table, ScalerParams> standardize(const Table& table, const Table& fit_on) {
    for (const auto& c : fit_on.columns()) {
        if (c.kind != ColumnKind::Numeric) continue;
        auto idx = table.find(c.name);
        if (!idx || table.column(*idx).kind != ColumnKind::Numeric) {
            throw std::invalid_argument("standardize: column '" + c.name + "' missing from table");
        }
    }
    ScalerParams params = fit_scaler(fit_on);
    return {apply_scaler(table, params), std::move(params)};
}

}  // namespace wellml
