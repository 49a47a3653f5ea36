#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spsafs/baselines.hpp"
#include "spsafs/data_io.hpp"
#include "spsafs/evaluators.hpp"
#include "spsafs/spsa.hpp"

namespace spsafs {

inline constexpr int kSchemaVersion = 1;

// exit codes shared by the harness and the CLI
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartialFailure = 1;
inline constexpr int kExitConfigError = 2;

// Flat key-value config text with [section] headers, '#'/';' comments and
// later duplicates overriding earlier ones. Keys before any header live in
// the "" section.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_text(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback = "") const;
    void set(const std::string& section, const std::string& key, const std::string& value);

    // Deterministic (sorted) rendering of the merged configuration.
    std::string render() const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

enum class DatasetSourceKind { synthetic, csv };

struct ExperimentConfig {
    int schema_version = kSchemaVersion;

    DatasetSourceKind source_kind = DatasetSourceKind::synthetic;
    SyntheticSpec synthetic;
    std::string csv_path;
    CsvSchema csv_schema;

    ModelSpec model;
    std::vector<ModelSpec> rank_models;
    CvConfig cv;

    std::vector<std::string> methods;
    std::size_t repetitions = 10;
    std::uint64_t root_seed = 0;
    std::string output_dir = "out";
    std::size_t jobs = 1;

    SpsaFsConfig spsafs;
    MonotoneGainConfig bspsa_gain;
    std::size_t bspsa_iterations = 100;
    std::map<std::string, SearchBudget> budgets;  // sfs/sbs/sffs/sfbs
    std::size_t relief_samples = 0;               // 0 = all instances

    std::vector<std::size_t> rank_m_list;
    std::vector<int> regress_percentages;

    // Builds the typed config from parsed key-values; unknown keys and bad
    // values are reported as "section.key: message" strings.
    static ExperimentConfig from_key_values(const KeyValueConfig& kv,
                                            std::vector<std::string>& errors);

    KeyValueConfig to_key_values() const;

    // Mode-specific validation ("run", "rank", "regress"); appends
    // field-path-tagged messages.
    void validate(const std::string& mode, std::vector<std::string>& errors) const;

    Dataset load_dataset() const;
};

// Per-cell outcome collected by cmd_run.
struct CellResult {
    std::string method;
    std::size_t repetition = 0;
    bool failed = false;
    std::string error;
    FeatureMask mask;        // subset the method returned
    double search_loss = 0;  // the method's own best evaluated loss
    double shared_loss = 0;  // cv loss of `mask` under the repetition's shared seed
    std::size_t evaluations = 0;
    double wall_time_seconds = 0;
};

struct RunOutputs {
    std::vector<CellResult> cells;
    int exit_code = kExitOk;
};

// Executes every configured method x repetition, writing per-cell trace CSVs
// and summary JSONs plus a cross-method summary table into the output
// directory. Failures are recorded per cell and the run continues.
RunOutputs cmd_run(const ExperimentConfig& config);

// Top-m evaluation sweep: for every ranking method, m in m_list and model in
// rank_models, evaluates the top-m subset and writes one long-format CSV.
int cmd_rank(const ExperimentConfig& config);

// Regression sweep over subset sizes at {10,...,100}% of p with the OLS
// model, one curve row per (method, percentage).
int cmd_regress(const ExperimentConfig& config);

}  // namespace spsafs
