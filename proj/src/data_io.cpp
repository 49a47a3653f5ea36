#include "spsafs/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "spsafs/rng.hpp"

namespace spsafs {

namespace {

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "na" || cell == "N/A" || cell == "?";
}

std::string trimmed(const std::string& s) {
    std::size_t begin = 0, end = s.size();
    while (begin < end && (s[begin] == ' ' || s[begin] == '\t')) ++begin;
    while (end > begin && (s[end - 1] == ' ' || s[end - 1] == '\t' || s[end - 1] == '\r')) --end;
    return s.substr(begin, end - begin);
}

// Character-level CSV reader: handles quoted fields, "" escapes and
// newlines inside quotes.
std::vector<std::vector<std::string>> read_rows(std::istream& in, char delimiter) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_has_content = false;
    char c;

    auto end_field = [&] {
        row.push_back(trimmed(field));
        field.clear();
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
        row_has_content = false;
    };

    while (in.get(c)) {
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get(c);
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
            row_has_content = true;
        } else if (c == delimiter) {
            end_field();
            row_has_content = true;
        } else if (c == '\n') {
            if (row_has_content || !field.empty() || !row.empty()) end_row();
        } else if (c != '\r') {
            field.push_back(c);
            row_has_content = true;
        }
    }
    if (row_has_content || !field.empty() || !row.empty()) end_row();
    return rows;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
    const std::string t = trimmed(cell);
    double value = 0.0;
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        std::ostringstream msg;
        msg << "non-numeric value '" << t << "' at data row " << row + 1 << ", column '"
            << column << "'";
        throw std::invalid_argument(msg.str());
    }
    return value;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open csv file: " + path);

    auto rows = read_rows(in, schema.delimiter);
    if (rows.empty()) throw std::invalid_argument("empty csv file: " + path);

    std::vector<std::string> columns;
    std::size_t first_data_row = 0;
    if (schema.has_header) {
        columns = rows[0];
        first_data_row = 1;
    } else {
        columns.resize(rows[0].size());
        for (std::size_t j = 0; j < columns.size(); ++j) columns[j] = "c" + std::to_string(j);
    }

    const auto column_index = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end())
            throw std::invalid_argument("column '" + name + "' not present in " + path);
        return static_cast<std::size_t>(it - columns.begin());
    };

    const std::size_t target_idx = column_index(schema.target_column);
    std::vector<bool> dropped(columns.size(), false);
    for (const auto& id : schema.id_columns_to_drop) dropped[column_index(id)] = true;
    if (dropped[target_idx])
        throw std::invalid_argument("target column cannot be dropped as an id column");

    Dataset data;
    data.task = schema.task_kind;
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (j != target_idx && !dropped[j]) data.feature_names.push_back(columns[j]);
    }
    data.p = data.feature_names.size();
    if (data.p == 0) throw std::invalid_argument("no feature columns remain after drops");

    std::map<std::string, int> label_codes;
    for (std::size_t r = first_data_row; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const std::size_t data_row = r - first_data_row;
        if (row.size() != columns.size()) {
            std::ostringstream msg;
            msg << "data row " << data_row + 1 << " has " << row.size() << " cells, expected "
                << columns.size();
            throw std::invalid_argument(msg.str());
        }

        bool missing = false;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (dropped[j] || !is_missing(row[j])) continue;
            if (schema.missing == MissingPolicy::drop_row) {
                missing = true;
                break;
            }
            std::ostringstream msg;
            msg << "missing value at data row " << data_row + 1 << ", column '" << columns[j]
                << "'";
            throw std::invalid_argument(msg.str());
        }
        if (missing) continue;

        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j == target_idx || dropped[j]) continue;
            data.x.push_back(parse_number(row[j], data_row, columns[j]));
        }
        if (schema.task_kind == TaskKind::classification) {
            const auto [it, inserted] =
                label_codes.try_emplace(row[target_idx], static_cast<int>(data.label_table.size()));
            if (inserted) data.label_table.push_back(row[target_idx]);
            data.labels.push_back(it->second);
        } else {
            data.y.push_back(parse_number(row[target_idx], data_row, columns[target_idx]));
        }
        ++data.n;
    }

    data.validate();
    return data;
}

void write_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot open csv file for writing: " + path);

    for (const auto& name : data.feature_names) out << name << ',';
    out << "target\n";

    char buffer[40];
    for (std::size_t i = 0; i < data.n; ++i) {
        for (std::size_t j = 0; j < data.p; ++j) {
            std::snprintf(buffer, sizeof(buffer), "%.17g", data.at(i, j));
            out << buffer << ',';
        }
        if (data.task == TaskKind::classification) {
            out << data.label_table[static_cast<std::size_t>(data.labels[i])];
        } else {
            std::snprintf(buffer, sizeof(buffer), "%.17g", data.y[i]);
            out << buffer;
        }
        out << '\n';
    }
}

Dataset make_synthetic(const SyntheticSpec& spec) {
    if (spec.n < 2) throw std::invalid_argument("synthetic n must be >= 2");
    if (spec.p < 1) throw std::invalid_argument("synthetic p must be >= 1");
    for (std::size_t j : spec.informative_indices) {
        if (j >= spec.p) throw std::invalid_argument("informative index out of range");
    }

    Dataset data;
    data.n = spec.n;
    data.p = spec.p;
    data.task = spec.task_kind;
    data.x.resize(spec.n * spec.p);
    data.feature_names.reserve(spec.p);
    for (std::size_t j = 0; j < spec.p; ++j) data.feature_names.push_back("f" + std::to_string(j));

    for (std::uint64_t attempt = 0;; ++attempt) {
        Xoshiro256 rng(derive_seed(spec.seed, "synthetic", attempt));
        data.labels.clear();
        data.y.clear();

        for (std::size_t i = 0; i < spec.n; ++i) {
            double score;
            for (;;) {
                for (std::size_t j = 0; j < spec.p; ++j) data.x[i * spec.p + j] = rng.normal();
                score = 0.0;
                for (std::size_t j : spec.informative_indices) score += data.x[i * spec.p + j];
                if (spec.noise_sd > 0.0) score += spec.noise_sd * rng.normal();
                if (spec.task_kind != TaskKind::classification) break;
                if (spec.informative_indices.empty()) break;
                if (std::abs(score) >= spec.margin) break;
            }
            if (spec.task_kind == TaskKind::classification) {
                data.labels.push_back(score > 0.0 ? 1 : 0);
            } else {
                data.y.push_back(score);
            }
        }

        if (spec.task_kind != TaskKind::classification) break;
        // regenerate in the vanishingly unlikely single-class case
        const bool has_both =
            std::find(data.labels.begin(), data.labels.end(), 0) != data.labels.end() &&
            std::find(data.labels.begin(), data.labels.end(), 1) != data.labels.end();
        if (has_both) break;
    }

    if (spec.task_kind == TaskKind::classification) data.label_table = {"0", "1"};
    data.validate();
    return data;
}

}  // namespace spsafs
