// pybind11 surface over the core library: dataset construction, the two
// SPSA optimizers, the cross-validated evaluators and the baselines.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spsafs/baselines.hpp"
#include "spsafs/data_io.hpp"
#include "spsafs/evaluators.hpp"
#include "spsafs/spsa.hpp"

namespace py = pybind11;
using namespace spsafs;

namespace {

// Adapts a Python callable (mask_indices, noise_seed) -> float.
class PyCallableEvaluator : public LossEvaluator {
public:
    explicit PyCallableEvaluator(py::function fn) : fn_(std::move(fn)) {}
    double evaluate(const FeatureMask& mask, std::uint64_t noise_seed) const override {
        py::gil_scoped_acquire gil;
        return fn_(mask.indices(), noise_seed).cast<double>();
    }

private:
    py::function fn_;
};

FeatureMask mask_from_indices_list(std::size_t p, const std::vector<std::size_t>& indices) {
    return FeatureMask::from_indices(p, indices);
}

struct EvaluatorHandle {
    // exactly one of these backs the handle
    std::unique_ptr<CvLossEvaluator> cv;
    std::unique_ptr<PyCallableEvaluator> fn;
    // keeps the dataset alive for cv evaluators
    std::shared_ptr<Dataset> data;

    const LossEvaluator& get() const { return cv ? static_cast<const LossEvaluator&>(*cv) : *fn; }
};

EvaluatorHandle make_cv_evaluator(std::shared_ptr<Dataset> data, const ModelSpec& model,
                                  const CvConfig& cv) {
    EvaluatorHandle handle;
    handle.data = std::move(data);
    handle.cv = std::make_unique<CvLossEvaluator>(*handle.data, model, cv);
    return handle;
}

}  // namespace

PYBIND11_MODULE(_spsafs, m) {
    m.doc() = "binary SPSA / SPSA-FS feature selection core";
    m.attr("__version__") = "1.0.0";

    py::enum_<TaskKind>(m, "TaskKind")
        .value("classification", TaskKind::classification)
        .value("regression", TaskKind::regression);

    py::enum_<BbVariant>(m, "BbVariant")
        .value("ratio_gg", BbVariant::ratio_gg)
        .value("ratio_xx", BbVariant::ratio_xx);

    py::class_<FeatureMask>(m, "FeatureMask")
        .def(py::init(&mask_from_indices_list), py::arg("p"), py::arg("indices"))
        .def_static("all_ones", &FeatureMask::all_ones)
        .def("indices", &FeatureMask::indices)
        .def("count", &FeatureMask::count)
        .def("to_hex", &FeatureMask::to_hex)
        .def("__len__", &FeatureMask::size)
        .def("__eq__", [](const FeatureMask& a, const FeatureMask& b) { return a == b; })
        .def("__repr__", [](const FeatureMask& mask) {
            return "FeatureMask(p=" + std::to_string(mask.size()) + ", hex=" + mask.to_hex() +
                   ")";
        });

    py::class_<Dataset, std::shared_ptr<Dataset>>(m, "Dataset")
        .def_readonly("n", &Dataset::n)
        .def_readonly("p", &Dataset::p)
        .def_readonly("task", &Dataset::task)
        .def_readonly("feature_names", &Dataset::feature_names)
        .def_readonly("labels", &Dataset::labels)
        .def_readonly("y", &Dataset::y)
        .def("row", [](const Dataset& d, std::size_t i) {
            if (i >= d.n) throw py::index_error();
            return std::vector<double>(d.x.begin() + static_cast<std::ptrdiff_t>(i * d.p),
                                       d.x.begin() + static_cast<std::ptrdiff_t>((i + 1) * d.p));
        });

    py::class_<MonotoneGainConfig>(m, "MonotoneGainConfig")
        .def(py::init<>())
        .def_readwrite("a", &MonotoneGainConfig::a)
        .def_readwrite("A", &MonotoneGainConfig::A)
        .def_readwrite("alpha", &MonotoneGainConfig::alpha)
        .def_readwrite("c", &MonotoneGainConfig::c)
        .def_readwrite("gamma", &MonotoneGainConfig::gamma);

    py::class_<SpsaFsConfig>(m, "SpsaFsConfig")
        .def(py::init<>())
        .def_readwrite("c", &SpsaFsConfig::c)
        .def_readwrite("max_iterations", &SpsaFsConfig::max_iterations)
        .def_readwrite("t_max", &SpsaFsConfig::t_max)
        .def_readwrite("bb_variant", &SpsaFsConfig::bb_variant)
        .def_readwrite("use_bb", &SpsaFsConfig::use_bb)
        .def_readwrite("fallback_gain", &SpsaFsConfig::fallback_gain)
        .def_readwrite("seed", &SpsaFsConfig::seed)
        .def("set_gradient_window",
             [](SpsaFsConfig& cfg, std::optional<std::size_t> window) {
                 cfg.gradient_avg = window ? GradientAveraging::fixed(*window)
                                           : GradientAveraging::all();
             },
             py::arg("window") = py::none(),
             "None averages all history; an integer m keeps the last m gradients");

    py::class_<CvConfig>(m, "CvConfig")
        .def(py::init<>())
        .def_readwrite("folds", &CvConfig::folds)
        .def_readwrite("shuffle_seed_base", &CvConfig::shuffle_seed_base)
        .def_readwrite("stratified", &CvConfig::stratified);

    py::class_<ModelSpec>(m, "ModelSpec")
        .def(py::init([](const std::string& kind, std::size_t k, std::size_t max_depth,
                         std::size_t min_leaf) {
                 ModelSpec spec;
                 spec.kind = model_kind_from_name(kind);
                 spec.k = k;
                 spec.max_depth = max_depth;
                 spec.min_leaf = min_leaf;
                 spec.validate();
                 return spec;
             }),
             py::arg("kind") = "knn", py::arg("k") = 5, py::arg("max_depth") = 4,
             py::arg("min_leaf") = 1)
        .def_readwrite("k", &ModelSpec::k)
        .def_readwrite("max_depth", &ModelSpec::max_depth)
        .def_readwrite("min_leaf", &ModelSpec::min_leaf)
        .def("name", &ModelSpec::name);

    py::class_<IterationRecord>(m, "IterationRecord")
        .def_readonly("k", &IterationRecord::k)
        .def_readonly("y_plus", &IterationRecord::y_plus)
        .def_readonly("y_minus", &IterationRecord::y_minus)
        .def_readonly("gain_used", &IterationRecord::gain_used)
        .def_readonly("mask_plus", &IterationRecord::mask_plus)
        .def_readonly("mask_minus", &IterationRecord::mask_minus);

    py::class_<RunTrace>(m, "RunTrace")
        .def_readonly("records", &RunTrace::records)
        .def_readonly("final_mask", &RunTrace::final_mask)
        .def_readonly("final_weights", &RunTrace::final_weights)
        .def_readonly("best_mask", &RunTrace::best_mask)
        .def_readonly("best_loss", &RunTrace::best_loss)
        .def_readonly("iterations_run", &RunTrace::iterations_run)
        .def_readonly("evaluations", &RunTrace::evaluations)
        .def_readonly("wall_time_seconds", &RunTrace::wall_time_seconds);

    py::class_<SearchResult>(m, "SearchResult")
        .def_readonly("mask", &SearchResult::mask)
        .def_readonly("loss", &SearchResult::loss)
        .def_readonly("evaluations", &SearchResult::evaluations)
        .def_readonly("truncated", &SearchResult::truncated)
        .def_readonly("insertion_order", &SearchResult::insertion_order);

    m.def("derive_seed", &derive_seed, py::arg("root"), py::arg("label"), py::arg("index"));
    m.def("bound", &bound, py::arg("weights"));
    m.def("round_mask", [](const WeightVector& w) { return round_mask(w); }, py::arg("weights"));

    m.def(
        "make_synthetic",
        [](std::size_t n, std::size_t p, const std::vector<std::size_t>& informative,
           double noise_sd, TaskKind task, std::uint64_t seed, double margin) {
            SyntheticSpec spec;
            spec.n = n;
            spec.p = p;
            spec.informative_indices = informative;
            spec.noise_sd = noise_sd;
            spec.task_kind = task;
            spec.seed = seed;
            spec.margin = margin;
            return std::make_shared<Dataset>(make_synthetic(spec));
        },
        py::arg("n"), py::arg("p"), py::arg("informative"), py::arg("noise_sd") = 0.0,
        py::arg("task") = TaskKind::classification, py::arg("seed") = 0,
        py::arg("margin") = 0.25);

    m.def(
        "load_csv",
        [](const std::string& path, const std::string& target, TaskKind task,
           const std::vector<std::string>& drop, char delimiter, bool header,
           const std::string& missing) {
            CsvSchema schema;
            schema.target_column = target;
            schema.task_kind = task;
            schema.id_columns_to_drop = drop;
            schema.delimiter = delimiter;
            schema.has_header = header;
            if (missing == "drop_row") {
                schema.missing = MissingPolicy::drop_row;
            } else if (missing != "reject") {
                throw std::invalid_argument("missing policy must be 'reject' or 'drop_row'");
            }
            return std::make_shared<Dataset>(load_csv(path, schema));
        },
        py::arg("path"), py::arg("target"), py::arg("task") = TaskKind::classification,
        py::arg("drop") = std::vector<std::string>{}, py::arg("delimiter") = ',',
        py::arg("header") = true, py::arg("missing") = "reject");

    m.def("write_csv",
          [](const Dataset& data, const std::string& path) { write_csv(data, path); },
          py::arg("dataset"), py::arg("path"));

    m.def(
        "cv_loss",
        [](std::shared_ptr<Dataset> data, const FeatureMask& mask, const ModelSpec& model,
           const CvConfig& cv, std::uint64_t noise_seed) {
            return cv_loss(*data, mask, model, cv, noise_seed);
        },
        py::arg("dataset"), py::arg("mask"), py::arg("model"), py::arg("cv"),
        py::arg("noise_seed"));

    m.def(
        "run_bspsa",
        [](std::shared_ptr<Dataset> data, const ModelSpec& model, const CvConfig& cv,
           const MonotoneGainConfig& gain, std::size_t iterations, std::uint64_t seed,
           std::optional<WeightVector> w0) {
            const EvaluatorHandle handle = make_cv_evaluator(std::move(data), model, cv);
            const WeightVector start = w0 ? *w0 : WeightVector(handle.data->p, 0.5);
            py::gil_scoped_release release;
            return run_bspsa(handle.get(), handle.data->p, gain, iterations, start, seed);
        },
        py::arg("dataset"), py::arg("model"), py::arg("cv"),
        py::arg("gain") = MonotoneGainConfig{}, py::arg("iterations") = 100,
        py::arg("seed") = 0, py::arg("w0") = py::none());

    m.def(
        "run_spsafs",
        [](std::shared_ptr<Dataset> data, const ModelSpec& model, const CvConfig& cv,
           SpsaFsConfig cfg, std::optional<WeightVector> w0) {
            const EvaluatorHandle handle = make_cv_evaluator(std::move(data), model, cv);
            const WeightVector start = w0 ? *w0 : WeightVector(handle.data->p, 0.5);
            py::gil_scoped_release release;
            return run_spsafs(handle.get(), handle.data->p, cfg, start);
        },
        py::arg("dataset"), py::arg("model"), py::arg("cv"), py::arg("config") = SpsaFsConfig{},
        py::arg("w0") = py::none());

    m.def(
        "run_bspsa_with_evaluator",
        [](py::function evaluator, std::size_t p, const MonotoneGainConfig& gain,
           std::size_t iterations, std::uint64_t seed, std::optional<WeightVector> w0) {
            PyCallableEvaluator adapter(std::move(evaluator));
            const WeightVector start = w0 ? *w0 : WeightVector(p, 0.5);
            return run_bspsa(adapter, p, gain, iterations, start, seed);
        },
        py::arg("evaluator"), py::arg("p"), py::arg("gain") = MonotoneGainConfig{},
        py::arg("iterations") = 100, py::arg("seed") = 0, py::arg("w0") = py::none(),
        "evaluator(mask_indices, noise_seed) -> loss");

    m.def("rank_features", &rank_features, py::arg("trace"), py::arg("m"));

    const auto bind_search = [&m](const char* name, auto fn, const char* doc) {
        m.def(
            name,
            [fn](std::shared_ptr<Dataset> data, const ModelSpec& model, const CvConfig& cv,
                 std::size_t max_evaluations, std::optional<std::size_t> target,
                 std::uint64_t noise_seed) {
                const EvaluatorHandle handle = make_cv_evaluator(std::move(data), model, cv);
                SearchBudget budget;
                budget.max_evaluations = max_evaluations;
                budget.target_subset_size = target;
                py::gil_scoped_release release;
                return fn(handle.get(), handle.data->p, budget, noise_seed);
            },
            py::arg("dataset"), py::arg("model"), py::arg("cv"),
            py::arg("max_evaluations") = std::numeric_limits<std::size_t>::max(),
            py::arg("target_size") = py::none(), py::arg("noise_seed") = 0, doc);
    };
    bind_search("sfs", [](const LossEvaluator& e, std::size_t p, const SearchBudget& b,
                          std::uint64_t s) { return sfs(e, p, b, s); },
                "sequential forward selection");
    bind_search("sbs", [](const LossEvaluator& e, std::size_t p, const SearchBudget& b,
                          std::uint64_t s) { return sbs(e, p, b, s); },
                "sequential backward selection");
    bind_search("sffs", [](const LossEvaluator& e, std::size_t p, const SearchBudget& b,
                           std::uint64_t s) { return sffs(e, p, b, s); },
                "sequential forward floating selection");
    bind_search("sfbs", [](const LossEvaluator& e, std::size_t p, const SearchBudget& b,
                           std::uint64_t s) { return sfbs(e, p, b, s); },
                "sequential backward floating selection");

    m.def(
        "exhaustive_best",
        [](std::shared_ptr<Dataset> data, const ModelSpec& model, const CvConfig& cv,
           std::uint64_t noise_seed) {
            const EvaluatorHandle handle = make_cv_evaluator(std::move(data), model, cv);
            py::gil_scoped_release release;
            return exhaustive_best(handle.get(), handle.data->p, noise_seed);
        },
        py::arg("dataset"), py::arg("model"), py::arg("cv"), py::arg("noise_seed") = 0);

    m.def(
        "rank_correlation",
        [](std::shared_ptr<Dataset> data) {
            std::vector<std::pair<std::size_t, double>> out;
            for (const auto& r : rank_correlation(*data)) out.emplace_back(r.feature, r.score);
            return out;
        },
        py::arg("dataset"));

    m.def(
        "rank_relief",
        [](std::shared_ptr<Dataset> data, std::optional<std::size_t> num_samples,
           std::uint64_t seed) {
            const auto result =
                rank_relief(*data, num_samples ? *num_samples : data->n, seed);
            std::vector<std::pair<std::size_t, double>> out;
            for (const auto& r : result.ranking) out.emplace_back(r.feature, r.score);
            return py::make_tuple(out, result.hit_term_skipped);
        },
        py::arg("dataset"), py::arg("num_samples") = py::none(), py::arg("seed") = 0);
}
