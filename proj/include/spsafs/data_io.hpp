#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spsafs/core.hpp"

namespace spsafs {

enum class MissingPolicy { reject, drop_row };

struct CsvSchema {
    std::string target_column;
    std::vector<std::string> id_columns_to_drop;
    TaskKind task_kind = TaskKind::classification;
    char delimiter = ',';
    bool has_header = true;  // without a header, columns are named c0, c1, ...
    MissingPolicy missing = MissingPolicy::reject;
};

// Parses an RFC-4180-style delimited file (quoted fields, doubled-quote
// escapes, embedded newlines) into a validated Dataset. Feature cells must
// be numeric; classification targets are interned to integer codes in order
// of first appearance. Empty cells and the tokens NA, N/A, na and ? count
// as missing: rejected with the cell's coordinates by default, or the whole
// row is dropped under MissingPolicy::drop_row.
Dataset load_csv(const std::string& path, const CsvSchema& schema);

// Writes features plus the target as the last column, with a header row.
// Values are printed with enough digits that load_csv(write_csv(d)) restores
// the matrix exactly.
void write_csv(const Dataset& data, const std::string& path);

struct SyntheticSpec {
    std::size_t n = 100;
    std::size_t p = 10;
    std::vector<std::size_t> informative_indices;  // 0-based
    double noise_sd = 0.0;
    TaskKind task_kind = TaskKind::classification;
    std::uint64_t seed = 0;
    // Classification rows whose score magnitude falls below this margin are
    // redrawn, so a noiseless dataset is strictly separable on the
    // informative features.
    double margin = 0.25;
};

// Deterministic synthetic benchmark data. All features are standard normal
// draws from one xoshiro256++ stream consumed row-major. The score of a row
// is the sum of its informative features plus N(0, noise_sd); regression
// uses the score as the response, classification thresholds it at zero
// (rows inside the margin are redrawn whole).
Dataset make_synthetic(const SyntheticSpec& spec);

}  // namespace spsafs
