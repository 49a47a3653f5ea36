#include "spsafs/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace spsafs {

namespace {

std::string fmt_double(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.17g", v);
    return buffer;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(s);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

const std::vector<std::string> kRunMethods = {"spsafs", "bspsa", "sfs",        "sbs",
                                              "sffs",   "sfbs",  "correlation", "relief",
                                              "exhaustive", "full"};
const std::vector<std::string> kRankMethods = {"spsafs", "bspsa", "sfs",  "sbs",
                                               "sffs",   "sfbs",  "correlation", "relief"};
const std::vector<std::string> kRegressMethods = {"spsafs", "bspsa", "sfs", "sbs",
                                                  "sffs",   "sfbs",  "correlation"};

bool contains(const std::vector<std::string>& haystack, const std::string& needle) {
    return std::find(haystack.begin(), haystack.end(), needle) != haystack.end();
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_text(buffer.str());
}

KeyValueConfig KeyValueConfig::parse_text(const std::string& text) {
    KeyValueConfig kv;
    std::string section;
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::invalid_argument("config line " + std::to_string(line_no) +
                                            ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected key = value");
        }
        kv.set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
}

bool KeyValueConfig::has(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
}

std::string KeyValueConfig::get(const std::string& section, const std::string& key,
                                const std::string& fallback) const {
    const auto it = sections_.find(section);
    if (it == sections_.end()) return fallback;
    const auto kit = it->second.find(key);
    return kit == it->second.end() ? fallback : kit->second;
}

void KeyValueConfig::set(const std::string& section, const std::string& key,
                         const std::string& value) {
    sections_[section][key] = value;
}

std::string KeyValueConfig::render() const {
    std::ostringstream out;
    const auto root = sections_.find("");
    if (root != sections_.end()) {
        for (const auto& [key, value] : root->second) out << key << " = " << value << "\n";
    }
    for (const auto& [section, keys] : sections_) {
        if (section.empty()) continue;
        out << "\n[" << section << "]\n";
        for (const auto& [key, value] : keys) out << key << " = " << value << "\n";
    }
    return out.str();
}

namespace {

// Typed readers that funnel parse problems into the error list with their
// "section.key" path.
struct ConfigReader {
    const KeyValueConfig& kv;
    std::vector<std::string>& errors;

    void fail(const std::string& section, const std::string& key,
              const std::string& message) const {
        errors.push_back((section.empty() ? key : section + "." + key) + ": " + message);
    }

    std::string str(const std::string& section, const std::string& key,
                    const std::string& fallback) const {
        return kv.get(section, key, fallback);
    }

    double number(const std::string& section, const std::string& key, double fallback) {
        if (!kv.has(section, key)) return fallback;
        const std::string raw = kv.get(section, key);
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
        if (ec != std::errc{} || ptr != raw.data() + raw.size()) {
            fail(section, key, "not a number: '" + raw + "'");
            return fallback;
        }
        return value;
    }

    std::uint64_t uinteger(const std::string& section, const std::string& key,
                           std::uint64_t fallback) {
        if (!kv.has(section, key)) return fallback;
        const std::string raw = kv.get(section, key);
        std::uint64_t value = 0;
        const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
        if (ec != std::errc{} || ptr != raw.data() + raw.size()) {
            fail(section, key, "not a nonnegative integer: '" + raw + "'");
            return fallback;
        }
        return value;
    }

    bool boolean(const std::string& section, const std::string& key, bool fallback) {
        if (!kv.has(section, key)) return fallback;
        const std::string raw = kv.get(section, key);
        if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
        if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
        fail(section, key, "not a boolean: '" + raw + "'");
        return fallback;
    }
};

ModelSpec parse_model(ConfigReader& reader, const std::string& section,
                      const std::string& kind_name) {
    ModelSpec model;
    try {
        model.kind = model_kind_from_name(kind_name);
    } catch (const std::exception& e) {
        reader.fail(section, "kind", e.what());
    }
    model.k = reader.uinteger(section, "k", model.k);
    model.max_depth = reader.uinteger(section, "max_depth", model.max_depth);
    model.min_leaf = reader.uinteger(section, "min_leaf", model.min_leaf);
    return model;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_key_values(const KeyValueConfig& kv,
                                                   std::vector<std::string>& errors) {
    ConfigReader reader{kv, errors};
    ExperimentConfig config;

    config.schema_version =
        static_cast<int>(reader.uinteger("", "schema_version", kSchemaVersion));

    const std::string source = reader.str("dataset", "kind", "synthetic");
    if (source == "synthetic") {
        config.source_kind = DatasetSourceKind::synthetic;
    } else if (source == "csv") {
        config.source_kind = DatasetSourceKind::csv;
    } else {
        reader.fail("dataset", "kind", "must be 'synthetic' or 'csv'");
    }

    const std::string task = reader.str("dataset", "task", "classification");
    TaskKind task_kind = TaskKind::classification;
    if (task == "regression") {
        task_kind = TaskKind::regression;
    } else if (task != "classification") {
        reader.fail("dataset", "task", "must be 'classification' or 'regression'");
    }

    config.synthetic.task_kind = task_kind;
    config.synthetic.n = reader.uinteger("dataset", "n", 100);
    config.synthetic.p = reader.uinteger("dataset", "p", 10);
    config.synthetic.noise_sd = reader.number("dataset", "noise_sd", 0.0);
    config.synthetic.margin = reader.number("dataset", "margin", 0.25);
    config.synthetic.seed = reader.uinteger("dataset", "seed", 0);
    for (const std::string& item : split_list(reader.str("dataset", "informative", ""))) {
        std::size_t value = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
        if (ec != std::errc{} || ptr != item.data() + item.size()) {
            reader.fail("dataset", "informative", "bad index '" + item + "'");
        } else {
            config.synthetic.informative_indices.push_back(value);
        }
    }

    config.csv_path = reader.str("dataset", "path", "");
    config.csv_schema.task_kind = task_kind;
    config.csv_schema.target_column = reader.str("dataset", "target", "target");
    config.csv_schema.id_columns_to_drop = split_list(reader.str("dataset", "drop", ""));
    const std::string delim = reader.str("dataset", "delimiter", ",");
    if (delim.size() != 1) {
        reader.fail("dataset", "delimiter", "must be a single character");
    } else {
        config.csv_schema.delimiter = delim[0];
    }
    config.csv_schema.has_header = reader.boolean("dataset", "header", true);
    const std::string missing = reader.str("dataset", "missing", "reject");
    if (missing == "drop_row") {
        config.csv_schema.missing = MissingPolicy::drop_row;
    } else if (missing != "reject") {
        reader.fail("dataset", "missing", "must be 'reject' or 'drop_row'");
    }

    config.model = parse_model(reader, "model", reader.str("model", "kind", "knn"));
    // rank-mode models share the [model] hyperparameters; only the kind list
    // varies
    for (const std::string& name : split_list(reader.str("rank", "models", ""))) {
        config.rank_models.push_back(parse_model(reader, "model", name));
    }
    if (config.rank_models.empty()) config.rank_models.push_back(config.model);

    config.cv.folds = reader.uinteger("cv", "folds", 5);
    config.cv.stratified = reader.boolean("cv", "stratified", true);
    config.cv.shuffle_seed_base = reader.uinteger("cv", "shuffle_seed_base", 0);

    config.methods = split_list(reader.str("experiment", "methods", "spsafs"));
    config.repetitions = reader.uinteger("experiment", "repetitions", 10);
    config.root_seed = reader.uinteger("experiment", "root_seed", 0);
    config.output_dir = reader.str("experiment", "output_dir", "out");
    config.jobs = reader.uinteger("experiment", "jobs", 1);

    config.spsafs.max_iterations = reader.uinteger("spsafs", "iterations", 100);
    config.spsafs.c = reader.number("spsafs", "c", 0.05);
    config.spsafs.t_max = reader.uinteger("spsafs", "t_max", 2);
    const std::string window = reader.str("spsafs", "gradient_window", "all");
    if (window == "all") {
        config.spsafs.gradient_avg = GradientAveraging::all();
    } else {
        std::size_t m = 0;
        const auto [ptr, ec] = std::from_chars(window.data(), window.data() + window.size(), m);
        if (ec != std::errc{} || ptr != window.data() + window.size()) {
            reader.fail("spsafs", "gradient_window", "must be 'all' or an integer");
        } else {
            config.spsafs.gradient_avg = GradientAveraging::fixed(m);
        }
    }
    const std::string variant = reader.str("spsafs", "bb_variant", "gg");
    if (variant == "gg") {
        config.spsafs.bb_variant = BbVariant::ratio_gg;
    } else if (variant == "xx") {
        config.spsafs.bb_variant = BbVariant::ratio_xx;
    } else {
        reader.fail("spsafs", "bb_variant", "must be 'gg' or 'xx'");
    }
    config.spsafs.use_bb = reader.boolean("spsafs", "use_bb", true);
    config.spsafs.fallback_gain.a = reader.number("spsafs", "a", 0.75);
    config.spsafs.fallback_gain.A = reader.number("spsafs", "A", 100.0);
    config.spsafs.fallback_gain.alpha = reader.number("spsafs", "alpha", 0.6);
    config.spsafs.fallback_gain.c = config.spsafs.c;
    if (kv.has("spsafs", "stall_tolerance")) {
        config.spsafs.stall_tolerance = reader.number("spsafs", "stall_tolerance", 0.0);
    }

    config.bspsa_iterations = reader.uinteger("bspsa", "iterations", 100);
    config.bspsa_gain.a = reader.number("bspsa", "a", 0.75);
    config.bspsa_gain.A = reader.number("bspsa", "A", 100.0);
    config.bspsa_gain.alpha = reader.number("bspsa", "alpha", 0.6);
    config.bspsa_gain.c = reader.number("bspsa", "c", 0.05);

    for (const std::string& name : {"sfs", "sbs", "sffs", "sfbs"}) {
        SearchBudget budget;
        budget.max_evaluations = reader.uinteger(
            name, "max_evaluations", std::numeric_limits<std::size_t>::max());
        if (kv.has(name, "target_size")) {
            budget.target_subset_size = reader.uinteger(name, "target_size", 1);
        }
        config.budgets[name] = budget;
    }
    config.relief_samples = reader.uinteger("relief", "num_samples", 0);

    for (const std::string& item : split_list(reader.str("rank", "m_list", ""))) {
        std::size_t m = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), m);
        if (ec != std::errc{} || ptr != item.data() + item.size() || m == 0) {
            reader.fail("rank", "m_list", "bad subset size '" + item + "'");
        } else {
            config.rank_m_list.push_back(m);
        }
    }

    const std::string pct_raw =
        reader.str("regress", "percentages", "10,20,30,40,50,60,70,80,90,100");
    for (const std::string& item : split_list(pct_raw)) {
        int pct = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), pct);
        if (ec != std::errc{} || ptr != item.data() + item.size() || pct < 1 || pct > 100) {
            reader.fail("regress", "percentages", "bad percentage '" + item + "'");
        } else {
            config.regress_percentages.push_back(pct);
        }
    }

    return config;
}

KeyValueConfig ExperimentConfig::to_key_values() const {
    KeyValueConfig kv;
    kv.set("", "schema_version", std::to_string(schema_version));

    kv.set("dataset", "kind", source_kind == DatasetSourceKind::synthetic ? "synthetic" : "csv");
    kv.set("dataset", "task",
           synthetic.task_kind == TaskKind::classification ? "classification" : "regression");
    if (source_kind == DatasetSourceKind::synthetic) {
        kv.set("dataset", "n", std::to_string(synthetic.n));
        kv.set("dataset", "p", std::to_string(synthetic.p));
        std::string informative;
        for (std::size_t j : synthetic.informative_indices) {
            if (!informative.empty()) informative += ",";
            informative += std::to_string(j);
        }
        kv.set("dataset", "informative", informative);
        kv.set("dataset", "noise_sd", fmt_double(synthetic.noise_sd));
        kv.set("dataset", "margin", fmt_double(synthetic.margin));
        kv.set("dataset", "seed", std::to_string(synthetic.seed));
    } else {
        kv.set("dataset", "path", csv_path);
        kv.set("dataset", "target", csv_schema.target_column);
        std::string drops;
        for (const auto& d : csv_schema.id_columns_to_drop) {
            if (!drops.empty()) drops += ",";
            drops += d;
        }
        kv.set("dataset", "drop", drops);
        kv.set("dataset", "delimiter", std::string(1, csv_schema.delimiter));
        kv.set("dataset", "header", csv_schema.has_header ? "true" : "false");
        kv.set("dataset", "missing",
               csv_schema.missing == MissingPolicy::reject ? "reject" : "drop_row");
    }

    kv.set("model", "kind", model.name());
    kv.set("model", "k", std::to_string(model.k));
    kv.set("model", "max_depth", std::to_string(model.max_depth));
    kv.set("model", "min_leaf", std::to_string(model.min_leaf));

    kv.set("cv", "folds", std::to_string(cv.folds));
    kv.set("cv", "stratified", cv.stratified ? "true" : "false");
    kv.set("cv", "shuffle_seed_base", std::to_string(cv.shuffle_seed_base));

    std::string methods_joined;
    for (const auto& m : methods) {
        if (!methods_joined.empty()) methods_joined += ",";
        methods_joined += m;
    }
    kv.set("experiment", "methods", methods_joined);
    kv.set("experiment", "repetitions", std::to_string(repetitions));
    kv.set("experiment", "root_seed", std::to_string(root_seed));
    kv.set("experiment", "output_dir", output_dir);
    kv.set("experiment", "jobs", std::to_string(jobs));

    kv.set("spsafs", "iterations", std::to_string(spsafs.max_iterations));
    kv.set("spsafs", "c", fmt_double(spsafs.c));
    kv.set("spsafs", "t_max", std::to_string(spsafs.t_max));
    kv.set("spsafs", "gradient_window",
           spsafs.gradient_avg.all_history ? "all" : std::to_string(spsafs.gradient_avg.window));
    kv.set("spsafs", "bb_variant", spsafs.bb_variant == BbVariant::ratio_gg ? "gg" : "xx");
    kv.set("spsafs", "use_bb", spsafs.use_bb ? "true" : "false");
    kv.set("spsafs", "a", fmt_double(spsafs.fallback_gain.a));
    kv.set("spsafs", "A", fmt_double(spsafs.fallback_gain.A));
    kv.set("spsafs", "alpha", fmt_double(spsafs.fallback_gain.alpha));

    kv.set("bspsa", "iterations", std::to_string(bspsa_iterations));
    kv.set("bspsa", "a", fmt_double(bspsa_gain.a));
    kv.set("bspsa", "A", fmt_double(bspsa_gain.A));
    kv.set("bspsa", "alpha", fmt_double(bspsa_gain.alpha));
    kv.set("bspsa", "c", fmt_double(bspsa_gain.c));

    for (const auto& [name, budget] : budgets) {
        if (budget.max_evaluations != std::numeric_limits<std::size_t>::max()) {
            kv.set(name, "max_evaluations", std::to_string(budget.max_evaluations));
        }
        if (budget.target_subset_size) {
            kv.set(name, "target_size", std::to_string(*budget.target_subset_size));
        }
    }
    if (relief_samples > 0) kv.set("relief", "num_samples", std::to_string(relief_samples));

    if (!rank_m_list.empty()) {
        std::string m_joined;
        for (std::size_t m : rank_m_list) {
            if (!m_joined.empty()) m_joined += ",";
            m_joined += std::to_string(m);
        }
        kv.set("rank", "m_list", m_joined);
    }
    if (!rank_models.empty()) {
        std::string names;
        for (const auto& m : rank_models) {
            if (!names.empty()) names += ",";
            names += m.name();
        }
        kv.set("rank", "models", names);
    }
    if (!regress_percentages.empty()) {
        std::string pct_joined;
        for (int pct : regress_percentages) {
            if (!pct_joined.empty()) pct_joined += ",";
            pct_joined += std::to_string(pct);
        }
        kv.set("regress", "percentages", pct_joined);
    }
    return kv;
}

Dataset ExperimentConfig::load_dataset() const {
    if (source_kind == DatasetSourceKind::synthetic) return make_synthetic(synthetic);
    return load_csv(csv_path, csv_schema);
}

void ExperimentConfig::validate(const std::string& mode,
                                std::vector<std::string>& errors) const {
    if (schema_version != kSchemaVersion) {
        errors.push_back("schema_version: unsupported version " +
                         std::to_string(schema_version));
    }
    if (methods.empty()) errors.push_back("experiment.methods: at least one method required");
    if (repetitions < 1) errors.push_back("experiment.repetitions: must be >= 1");
    if (cv.folds < 1) errors.push_back("cv.folds: must be >= 1");
    if (source_kind == DatasetSourceKind::csv && csv_path.empty()) {
        errors.push_back("dataset.path: required for csv datasets");
    }
    if (source_kind == DatasetSourceKind::csv && !csv_path.empty() && !fs::exists(csv_path)) {
        errors.push_back("dataset.path: file not found: " + csv_path);
    }

    const std::size_t p =
        source_kind == DatasetSourceKind::synthetic ? synthetic.p : std::size_t{0};
    const bool regression = synthetic.task_kind == TaskKind::regression;

    const auto& allowed = mode == "run"    ? kRunMethods
                          : mode == "rank" ? kRankMethods
                                           : kRegressMethods;
    for (const auto& method : methods) {
        if (!contains(allowed, method)) {
            errors.push_back("experiment.methods: '" + method + "' is not valid for " + mode);
            continue;
        }
        if (method == "exhaustive" && p > 20) {
            errors.push_back("experiment.methods: exhaustive requires p <= 20");
        }
        if (method == "relief" && regression) {
            errors.push_back("experiment.methods: relief requires a classification dataset");
        }
    }

    if (mode == "run" || mode == "rank") {
        const bool needs_classifier = !regression;
        if (needs_classifier && model.is_regression_model()) {
            errors.push_back("model.kind: ols cannot score a classification dataset");
        }
        if (regression && !model.is_regression_model()) {
            errors.push_back("model.kind: regression datasets require the ols model");
        }
    }
    if (mode == "rank") {
        if (rank_m_list.empty()) errors.push_back("rank.m_list: required for the rank command");
        for (std::size_t m : rank_m_list) {
            if (p > 0 && m > p) {
                errors.push_back("rank.m_list: m = " + std::to_string(m) +
                                 " exceeds p = " + std::to_string(p));
            }
        }
    }
    if (mode == "regress") {
        if (!regression) errors.push_back("dataset.task: regress requires a regression dataset");
        if (!model.is_regression_model()) {
            errors.push_back("model.kind: regress requires the ols model");
        }
        if (regress_percentages.empty()) {
            errors.push_back("regress.percentages: at least one percentage required");
        }
    }
}

namespace {

struct MaskLoss {
    // Empty subsets never reach the evaluator.
    static double of(const Dataset& data, const FeatureMask& mask, const ModelSpec& model,
                     const CvConfig& cv, std::uint64_t seed) {
        if (mask.none()) return kEmptyMaskLoss;
        return cv_loss(data, mask, model, cv, seed);
    }
};

struct TraceRow {
    std::string k;
    std::string y_plus;
    std::string y_minus;
    std::string gain_used;
    std::string running_best_loss;
    std::string mask_plus_hex;
    std::string mask_minus_hex;
};

void write_trace_csv(const fs::path& path, const std::vector<TraceRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write trace file: " + path.string());
    out << "# schema_version=" << kSchemaVersion << "\n";
    out << "k,y_plus,y_minus,gain_used,running_best_loss,mask_plus_hex,mask_minus_hex\n";
    for (const auto& row : rows) {
        out << row.k << ',' << row.y_plus << ',' << row.y_minus << ',' << row.gain_used << ','
            << row.running_best_loss << ',' << row.mask_plus_hex << ',' << row.mask_minus_hex
            << '\n';
    }
}

std::vector<TraceRow> trace_rows_from_run(const RunTrace& trace) {
    std::vector<TraceRow> rows;
    rows.reserve(trace.records.size());
    double running_best = std::numeric_limits<double>::infinity();
    for (const auto& rec : trace.records) {
        running_best = std::min({running_best, rec.y_plus, rec.y_minus});
        rows.push_back({std::to_string(rec.k), fmt_double(rec.y_plus), fmt_double(rec.y_minus),
                        fmt_double(rec.gain_used), fmt_double(running_best),
                        rec.mask_plus.to_hex(), rec.mask_minus.to_hex()});
    }
    return rows;
}

std::vector<TraceRow> trace_rows_from_search(const SearchResult& result) {
    std::vector<TraceRow> rows;
    rows.reserve(result.steps.size());
    double running_best = std::numeric_limits<double>::infinity();
    for (const auto& step : result.steps) {
        running_best = std::min(running_best, step.loss);
        rows.push_back({std::to_string(step.step), fmt_double(step.loss), "", "",
                        fmt_double(running_best), "", ""});
    }
    return rows;
}

struct CellFiles {
    fs::path trace;
    fs::path summary;
};

CellFiles cell_files(const fs::path& dir, const std::string& method, std::size_t rep) {
    return {dir / ("trace_" + method + "_rep" + std::to_string(rep) + ".csv"),
            dir / ("summary_" + method + "_rep" + std::to_string(rep) + ".json")};
}

// Runs one (method, repetition) cell and writes its trace file; fills the
// CellResult. The shared per-repetition seed makes losses comparable across
// methods.
CellResult run_cell(const ExperimentConfig& config, const Dataset& data,
                    const std::string& method, std::size_t rep, const fs::path& dir) {
    CellResult cell;
    cell.method = method;
    cell.repetition = rep;

    const std::uint64_t run_seed = derive_seed(config.root_seed, "run:" + method, rep);
    const std::uint64_t shared_seed = derive_seed(config.root_seed, "noise", rep);
    const CellFiles files = cell_files(dir, method, rep);

    const auto t0 = std::chrono::steady_clock::now();
    try {
        CvLossEvaluator evaluator(data, config.model, config.cv);
        std::vector<TraceRow> rows;

        if (method == "spsafs" || method == "bspsa") {
            RunTrace trace;
            if (method == "spsafs") {
                SpsaFsConfig cfg = config.spsafs;
                cfg.seed = run_seed;
                trace = run_spsafs(evaluator, data.p, cfg,
                                   WeightVector(data.p, 0.5));
            } else {
                trace = run_bspsa(evaluator, data.p, config.bspsa_gain,
                                  config.bspsa_iterations, WeightVector(data.p, 0.5),
                                  run_seed);
            }
            rows = trace_rows_from_run(trace);
            cell.mask = trace.final_mask;
            cell.search_loss = trace.best_loss;
            cell.evaluations = trace.evaluations;
        } else if (method == "sfs" || method == "sbs" || method == "sffs" ||
                   method == "sfbs") {
            const SearchBudget budget = config.budgets.at(method);
            CountingEvaluator counted(evaluator);
            SearchResult result;
            if (method == "sfs") result = sfs(counted, data.p, budget, shared_seed);
            if (method == "sbs") result = sbs(counted, data.p, budget, shared_seed);
            if (method == "sffs") result = sffs(counted, data.p, budget, shared_seed);
            if (method == "sfbs") result = sfbs(counted, data.p, budget, shared_seed);
            rows = trace_rows_from_search(result);
            cell.mask = result.mask;
            cell.search_loss = result.loss;
            cell.evaluations = counted.count();
        } else if (method == "exhaustive") {
            CountingEvaluator counted(evaluator);
            const SearchResult result = exhaustive_best(counted, data.p, shared_seed);
            rows.push_back({"0", fmt_double(result.loss), "", "", fmt_double(result.loss),
                            result.mask.to_hex(), ""});
            cell.mask = result.mask;
            cell.search_loss = result.loss;
            cell.evaluations = counted.count();
        } else if (method == "full") {
            cell.mask = FeatureMask::all_ones(data.p);
            cell.search_loss = MaskLoss::of(data, cell.mask, config.model, config.cv,
                                            shared_seed);
            cell.evaluations = 1;
            rows.push_back({"0", fmt_double(cell.search_loss), "", "",
                            fmt_double(cell.search_loss), cell.mask.to_hex(), ""});
        } else if (method == "correlation" || method == "relief") {
            std::vector<std::size_t> order;
            if (method == "correlation") {
                for (const auto& r : rank_correlation(data)) order.push_back(r.feature);
            } else {
                const std::size_t samples =
                    config.relief_samples == 0 ? data.n : config.relief_samples;
                for (const auto& r : rank_relief(data, samples, run_seed).ranking) {
                    order.push_back(r.feature);
                }
            }
            const std::size_t top_m = std::max<std::size_t>(1, (data.p + 1) / 2);
            order.resize(std::min(top_m, order.size()));
            cell.mask = FeatureMask::from_indices(data.p, order);
            cell.search_loss =
                MaskLoss::of(data, cell.mask, config.model, config.cv, shared_seed);
            cell.evaluations = 1;
            rows.push_back({"0", fmt_double(cell.search_loss), "", "",
                            fmt_double(cell.search_loss), cell.mask.to_hex(), ""});
        } else {
            throw std::invalid_argument("unknown method: " + method);
        }

        cell.shared_loss =
            MaskLoss::of(data, cell.mask, config.model, config.cv, shared_seed);
        write_trace_csv(files.trace, rows);
    } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
    }
    cell.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json summary;
    summary["schema_version"] = kSchemaVersion;
    summary["method"] = method;
    summary["repetition"] = rep;
    summary["run_seed"] = run_seed;
    summary["shared_noise_seed"] = shared_seed;
    if (cell.failed) {
        summary["error"] = cell.error;
    } else {
        summary["mask_hex"] = cell.mask.to_hex();
        summary["mask_indices"] = cell.mask.indices();
        summary["mask_size"] = cell.mask.count();
        summary["search_loss"] = cell.search_loss;
        summary["loss"] = cell.shared_loss;
        summary["evaluations"] = cell.evaluations;
    }
    summary["wall_time_seconds"] = cell.wall_time_seconds;

    std::ofstream out(files.summary, std::ios::binary);
    out << summary.dump(2) << "\n";
    return cell;
}

void write_summary_table(const fs::path& path, const ExperimentConfig& config,
                         const std::vector<CellResult>& cells) {
    std::ofstream out(path, std::ios::binary);
    out << "# schema_version=" << kSchemaVersion << "\n";
    out << "method,repetitions,failures,mean_loss,sd_loss,mean_search_loss,"
           "mean_evaluations,mean_wall_time_seconds\n";
    for (const auto& method : config.methods) {
        std::vector<const CellResult*> ok;
        std::size_t failures = 0;
        for (const auto& cell : cells) {
            if (cell.method != method) continue;
            if (cell.failed) {
                ++failures;
            } else {
                ok.push_back(&cell);
            }
        }
        out << method << ',' << config.repetitions << ',' << failures << ',';
        if (ok.empty()) {
            out << ",,,,";
        } else {
            const double n = static_cast<double>(ok.size());
            double mean_loss = 0, mean_search = 0, mean_evals = 0, mean_wall = 0;
            for (const auto* cell : ok) {
                mean_loss += cell->shared_loss;
                mean_search += cell->search_loss;
                mean_evals += static_cast<double>(cell->evaluations);
                mean_wall += cell->wall_time_seconds;
            }
            mean_loss /= n;
            mean_search /= n;
            mean_evals /= n;
            mean_wall /= n;
            double var = 0;
            for (const auto* cell : ok) {
                var += (cell->shared_loss - mean_loss) * (cell->shared_loss - mean_loss);
            }
            const double sd = std::sqrt(var / n);
            out << fmt_double(mean_loss) << ',' << fmt_double(sd) << ','
                << fmt_double(mean_search) << ',' << fmt_double(mean_evals) << ','
                << fmt_double(mean_wall);
        }
        out << '\n';
    }
}

}  // namespace

RunOutputs cmd_run(const ExperimentConfig& config) {
    RunOutputs outputs;
    const fs::path dir(config.output_dir);
    fs::create_directories(dir);
    const Dataset data = config.load_dataset();

    struct CellKey {
        std::string method;
        std::size_t rep;
    };
    std::vector<CellKey> keys;
    for (const auto& method : config.methods) {
        for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
            keys.push_back({method, rep});
        }
    }

    outputs.cells.resize(keys.size());
    const std::size_t jobs = std::max<std::size_t>(1, config.jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < keys.size(); ++i) {
            outputs.cells[i] = run_cell(config, data, keys[i].method, keys[i].rep, dir);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        const std::size_t worker_count = std::min(jobs, keys.size());
        workers.reserve(worker_count);
        for (std::size_t w = 0; w < worker_count; ++w) {
            workers.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= keys.size()) return;
                    outputs.cells[i] = run_cell(config, data, keys[i].method, keys[i].rep, dir);
                }
            });
        }
        for (auto& worker : workers) worker.join();
    }

    write_summary_table(dir / "summary_table.csv", config, outputs.cells);

    for (const auto& cell : outputs.cells) {
        if (cell.failed) outputs.exit_code = kExitPartialFailure;
    }
    return outputs;
}

namespace {

std::vector<std::size_t> complete_order(std::vector<std::size_t> order, std::size_t p) {
    std::vector<bool> seen(p, false);
    for (std::size_t j : order) seen[j] = true;
    for (std::size_t j = 0; j < p; ++j) {
        if (!seen[j]) order.push_back(j);
    }
    return order;
}

// Full feature ordering for one (method, model) pair. Wrapper methods rank
// with the supplied model's evaluator; filters ignore the model.
std::vector<std::size_t> method_ranking(const ExperimentConfig& config, const Dataset& data,
                                        const std::string& method, const ModelSpec& model) {
    const std::uint64_t seed =
        derive_seed(config.root_seed, "ranking:" + method + ":" + model.name(), 0);

    if (method == "correlation") {
        std::vector<std::size_t> order;
        for (const auto& r : rank_correlation(data)) order.push_back(r.feature);
        return order;
    }
    if (method == "relief") {
        const std::size_t samples = config.relief_samples == 0 ? data.n : config.relief_samples;
        std::vector<std::size_t> order;
        for (const auto& r : rank_relief(data, samples, seed).ranking) {
            order.push_back(r.feature);
        }
        return order;
    }

    CvLossEvaluator evaluator(data, model, config.cv);
    if (method == "spsafs" || method == "bspsa") {
        RunTrace trace;
        if (method == "spsafs") {
            SpsaFsConfig cfg = config.spsafs;
            cfg.seed = seed;
            trace = run_spsafs(evaluator, data.p, cfg, WeightVector(data.p, 0.5));
        } else {
            trace = run_bspsa(evaluator, data.p, config.bspsa_gain, config.bspsa_iterations,
                              WeightVector(data.p, 0.5), seed);
        }
        return rank_features(trace, data.p);
    }

    // sequential searches run to a forced target so the visit order defines
    // a full ranking
    SearchBudget budget = config.budgets.at(method);
    const bool forward = method == "sfs" || method == "sffs";
    budget.target_subset_size = forward ? data.p : 1;
    SearchResult result;
    if (method == "sfs") result = sfs(evaluator, data.p, budget, seed);
    if (method == "sbs") result = sbs(evaluator, data.p, budget, seed);
    if (method == "sffs") result = sffs(evaluator, data.p, budget, seed);
    if (method == "sfbs") result = sfbs(evaluator, data.p, budget, seed);
    return complete_order(result.insertion_order, data.p);
}

struct LossStats {
    double mean = 0;
    double sd = 0;
};

LossStats loss_over_repetitions(const ExperimentConfig& config, const Dataset& data,
                                const FeatureMask& mask, const ModelSpec& model) {
    std::vector<double> losses;
    losses.reserve(config.repetitions);
    for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
        const std::uint64_t shared_seed = derive_seed(config.root_seed, "noise", rep);
        losses.push_back(MaskLoss::of(data, mask, model, config.cv, shared_seed));
    }
    LossStats stats;
    for (double v : losses) stats.mean += v;
    stats.mean /= static_cast<double>(losses.size());
    for (double v : losses) stats.sd += (v - stats.mean) * (v - stats.mean);
    stats.sd = std::sqrt(stats.sd / static_cast<double>(losses.size()));
    return stats;
}

}  // namespace

int cmd_rank(const ExperimentConfig& config) {
    const fs::path dir(config.output_dir);
    fs::create_directories(dir);
    const Dataset data = config.load_dataset();

    for (std::size_t m : config.rank_m_list) {
        if (m > data.p) {
            throw std::invalid_argument("rank.m_list: m = " + std::to_string(m) +
                                        " exceeds p = " + std::to_string(data.p));
        }
    }

    std::ofstream out(dir / "rank_results.csv", std::ios::binary);
    out << "# schema_version=" << kSchemaVersion << "\n";
    out << "method,m,model,mean_loss,sd_loss\n";

    for (const auto& method : config.methods) {
        for (const auto& model : config.rank_models) {
            const std::vector<std::size_t> order = method_ranking(config, data, method, model);
            for (std::size_t m : config.rank_m_list) {
                std::vector<std::size_t> top(order.begin(), order.begin() + m);
                const FeatureMask mask = FeatureMask::from_indices(data.p, top);
                const LossStats stats = loss_over_repetitions(config, data, mask, model);
                out << method << ',' << m << ',' << model.name() << ','
                    << fmt_double(stats.mean) << ',' << fmt_double(stats.sd) << '\n';
            }
        }
    }
    return kExitOk;
}

int cmd_regress(const ExperimentConfig& config) {
    const fs::path dir(config.output_dir);
    fs::create_directories(dir);
    const Dataset data = config.load_dataset();
    if (data.task != TaskKind::regression) {
        throw std::invalid_argument("dataset.task: regress requires a regression dataset");
    }

    std::ofstream out(dir / "regress_results.csv", std::ios::binary);
    out << "# schema_version=" << kSchemaVersion << "\n";
    out << "method,percent,subset_size,mean_loss,sd_loss\n";

    for (const auto& method : config.methods) {
        const std::vector<std::size_t> order =
            method_ranking(config, data, method, config.model);
        for (int pct : config.regress_percentages) {
            std::size_t size = pct >= 100
                                   ? data.p
                                   : static_cast<std::size_t>(std::llround(
                                         static_cast<double>(pct) * static_cast<double>(data.p) /
                                         100.0));
            size = std::clamp<std::size_t>(size, 1, data.p);
            std::vector<std::size_t> top(order.begin(), order.begin() + size);
            const FeatureMask mask = FeatureMask::from_indices(data.p, top);
            const LossStats stats = loss_over_repetitions(config, data, mask, config.model);
            out << method << ',' << pct << ',' << size << ',' << fmt_double(stats.mean) << ','
                << fmt_double(stats.sd) << '\n';
        }
    }
    return kExitOk;
}

}  // namespace spsafs
