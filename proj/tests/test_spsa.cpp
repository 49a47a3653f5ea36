#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "spsafs/data_io.hpp"
#include "spsafs/evaluators.hpp"
#include "spsafs/spsa.hpp"

using namespace spsafs;

namespace {

// Scripted perturbation draws for replaying worked iterations.
class ScriptedDeltas : public DeltaSource {
public:
    explicit ScriptedDeltas(std::vector<PerturbationVector> draws) : draws_(std::move(draws)) {}
    PerturbationVector sample(std::size_t k, std::size_t) override { return draws_.at(k); }

private:
    std::vector<PerturbationVector> draws_;
};

// Returns scripted losses in call order regardless of the mask.
class SequenceEvaluator : public LossEvaluator {
public:
    explicit SequenceEvaluator(std::vector<double> values) : values_(std::move(values)) {}
    double evaluate(const FeatureMask&, std::uint64_t) const override {
        return values_.at(next_++);
    }

private:
    std::vector<double> values_;
    mutable std::size_t next_ = 0;
};

class ConstantEvaluator : public LossEvaluator {
public:
    explicit ConstantEvaluator(double value) : value_(value) {}
    double evaluate(const FeatureMask&, std::uint64_t) const override { return value_; }

private:
    double value_;
};

class ThrowingEvaluator : public LossEvaluator {
public:
    double evaluate(const FeatureMask&, std::uint64_t) const override {
        throw std::runtime_error("boom");
    }
};

// Loss keyed by subset, with a per-seed wobble so CV-noise-style variation
// exists when asked for.
class TableEvaluator : public LossEvaluator {
public:
    TableEvaluator(std::map<std::string, double> table, double wobble = 0.0)
        : table_(std::move(table)), wobble_(wobble) {}
    double evaluate(const FeatureMask& mask, std::uint64_t seed) const override {
        const double base = table_.at(mask.to_hex());
        if (wobble_ == 0.0) return base;
        Xoshiro256 rng(seed);
        return base + wobble_ * (rng.uniform() - 0.5);
    }

private:
    std::map<std::string, double> table_;
    double wobble_;
};

const std::vector<PerturbationVector> kWorkedDeltas = {
    {-1, -1, 1, 1, -1, 1},
    {-1, 1, 1, -1, 1, 1},
};

MonotoneGainConfig worked_example_gain() {
    MonotoneGainConfig cfg;
    cfg.a = 0.75;
    cfg.A = 100.0;
    cfg.alpha = 0.6;
    cfg.c = 0.05;
    return cfg;
}

bool traces_identical(const RunTrace& a, const RunTrace& b) {
    if (a.records.size() != b.records.size()) return false;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        const auto& ra = a.records[i];
        const auto& rb = b.records[i];
        if (ra.k != rb.k || ra.y_plus != rb.y_plus || ra.y_minus != rb.y_minus ||
            ra.gain_used != rb.gain_used || !(ra.mask_plus == rb.mask_plus) ||
            !(ra.mask_minus == rb.mask_minus) || ra.weights_mean != rb.weights_mean) {
            return false;
        }
    }
    return a.final_weights == b.final_weights && a.final_mask == b.final_mask &&
           a.best_mask == b.best_mask && a.best_loss == b.best_loss &&
           a.evaluations == b.evaluations && a.iterations_run == b.iterations_run;
}

}  // namespace

TEST_CASE("monotone gain matches the worked schedule") {
    const MonotoneGainConfig cfg = worked_example_gain();
    CHECK(std::abs(monotone_gain(0, cfg) - 0.047) < 0.001);
    CHECK(std::abs(monotone_gain(1, cfg) - 0.047) < 0.001);

    MonotoneGainConfig degenerate;
    degenerate.a = 1.0;
    degenerate.A = 0.0;
    degenerate.alpha = 1.0;
    CHECK(monotone_gain(0, degenerate) == 1.0);  // (A + k + 1) guard
    CHECK(monotone_gain(1, degenerate) == 1.0);  // back on the plain schedule
}

TEST_CASE("gain schedule is positive and non-increasing") {
    const MonotoneGainConfig cfg = worked_example_gain();
    double prev = monotone_gain(0, cfg);
    for (std::size_t k = 1; k < 500; ++k) {
        const double cur = monotone_gain(k, cfg);
        CHECK(cur > 0.0);
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("estimate_gradient replays the first worked iteration") {
    SequenceEvaluator eval({0.32, 0.53});
    const WeightVector w(6, 0.5);
    const auto est = estimate_gradient(w, kWorkedDeltas[0], 0.05, eval, {1, 1});

    CHECK(est.mask_plus.bits() == std::vector<std::uint8_t>{0, 0, 1, 1, 0, 1});
    CHECK(est.mask_minus.bits() == std::vector<std::uint8_t>{1, 1, 0, 0, 1, 0});
    CHECK(est.y_plus == 0.32);
    CHECK(est.y_minus == 0.53);
    const std::vector<double> expected = {2.1, 2.1, -2.1, -2.1, 2.1, -2.1};
    for (std::size_t j = 0; j < 6; ++j) {
        CHECK(est.gradient[j] == doctest::Approx(expected[j]).epsilon(1e-9));
    }
}

TEST_CASE("estimate_gradient replays the second worked iteration") {
    SequenceEvaluator eval({0.53, 0.38});
    const WeightVector w = {0.4013, 0.4013, 0.5987, 0.5987, 0.4013, 0.5987};
    const auto est = estimate_gradient(w, kWorkedDeltas[1], 0.05, eval, {1, 1});

    // both perturbations round to the same subset here
    CHECK(est.mask_plus == est.mask_minus);
    CHECK(est.mask_plus.bits() == std::vector<std::uint8_t>{0, 0, 1, 1, 0, 1});
    const std::vector<double> expected = {-1.5, 1.5, 1.5, -1.5, 1.5, 1.5};
    for (std::size_t j = 0; j < 6; ++j) {
        CHECK(est.gradient[j] == doctest::Approx(expected[j]).epsilon(1e-9));
    }
}

TEST_CASE("equal measurements give a zero gradient") {
    SequenceEvaluator eval({0.4, 0.4});
    const WeightVector w(4, 0.3);
    const auto est = estimate_gradient(w, {1, -1, 1, -1}, 0.05, eval, {5, 5});
    for (double g : est.gradient) CHECK(g == 0.0);
}

TEST_CASE("identical rounded masks get distinct tie sub-seeds") {
    // deterministic evaluator keyed on the seed: with a shared seed the
    // difference would vanish, the tie split keeps it alive
    class SeedEcho : public LossEvaluator {
    public:
        double evaluate(const FeatureMask&, std::uint64_t seed) const override {
            return static_cast<double>(seed % 1000) / 1000.0;
        }
    };
    SeedEcho eval;
    const WeightVector w = {0.7, 0.7, 0.3, 0.3};  // +/- c stays on one side of 0.5
    const PerturbationVector delta = {1, 1, -1, -1};
    const auto est = estimate_gradient(w, delta, 0.05, eval, {42, 42});
    CHECK(est.mask_plus == est.mask_minus);
    CHECK(est.y_plus != est.y_minus);
}

TEST_CASE("empty rounded subsets are charged the substitute loss, not evaluated") {
    ThrowingEvaluator eval;
    const WeightVector w(4, 0.2);
    const PerturbationVector delta = {1, 1, 1, 1};
    // w +/- 0.05 stays below 0.5 everywhere: both masks are empty
    const auto est = estimate_gradient(w, delta, 0.05, eval, {3, 3});
    CHECK(est.mask_plus.none());
    CHECK(est.mask_minus.none());
    CHECK(est.y_plus == kEmptyMaskLoss);
    CHECK(est.y_minus == kEmptyMaskLoss);
    CHECK_FALSE(est.plus_evaluated);
    CHECK_FALSE(est.minus_evaluated);
}

TEST_CASE("evaluator failures carry the offending mask") {
    ThrowingEvaluator eval;
    const WeightVector w(4, 0.6);
    try {
        estimate_gradient(w, {1, 1, 1, 1}, 0.05, eval, {3, 3});
        FAIL("expected EvaluatorError");
    } catch (const EvaluatorError& e) {
        CHECK(e.mask().bits() == std::vector<std::uint8_t>{1, 1, 1, 1});
        CHECK(std::string(e.what()).find("boom") != std::string::npos);
    }
}

TEST_CASE("run_bspsa replays the two-iteration worked example") {
    const MonotoneGainConfig cfg = worked_example_gain();
    const WeightVector w0(6, 0.5);

    SUBCASE("first iterate") {
        ScriptedDeltas deltas({kWorkedDeltas[0]});
        SequenceEvaluator eval({0.32, 0.53});
        const RunTrace trace = run_bspsa(eval, 6, cfg, 1, w0, 0, &deltas);
        const std::vector<double> expected = {0.4013, 0.4013, 0.5987, 0.5987, 0.4013, 0.5987};
        REQUIRE(trace.final_weights.size() == 6);
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(std::abs(trace.final_weights[j] - expected[j]) < 0.001);
        }
    }

    SUBCASE("second iterate and final mask") {
        ScriptedDeltas deltas({kWorkedDeltas[0], kWorkedDeltas[1]});
        SequenceEvaluator eval({0.32, 0.53, 0.53, 0.38});
        const RunTrace trace = run_bspsa(eval, 6, cfg, 2, w0, 0, &deltas);
        const std::vector<double> expected = {0.471, 0.33, 0.529, 0.67, 0.33, 0.529};
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(std::abs(trace.final_weights[j] - expected[j]) < 0.001);
        }
        CHECK(trace.final_mask.indices() == std::vector<std::size_t>{2, 3, 5});
        CHECK(trace.evaluations == 4);
        REQUIRE(trace.records.size() == 2);
        CHECK(trace.records[0].mask_minus.bits() == std::vector<std::uint8_t>{1, 1, 0, 0, 1, 0});
        CHECK(trace.records[1].mask_plus == trace.records[1].mask_minus);
        CHECK(trace.best_loss == 0.32);
    }
}

TEST_CASE("run_bspsa rejects degenerate calls") {
    ConstantEvaluator eval(0.5);
    const MonotoneGainConfig cfg = worked_example_gain();
    CHECK_THROWS_AS(run_bspsa(eval, 6, cfg, 0, WeightVector(6, 0.5), 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_bspsa(eval, 0, cfg, 1, {}, 0), std::invalid_argument);
    CHECK_THROWS_AS(run_bspsa(eval, 6, cfg, 1, WeightVector(4, 0.5), 0),
                    std::invalid_argument);
}

TEST_CASE("a mask-independent loss leaves the iterate untouched") {
    ConstantEvaluator eval(0.37);
    const WeightVector w0 = {0.3, 0.6, 0.5, 0.8};
    const RunTrace trace =
        run_bspsa(eval, 4, worked_example_gain(), 25, w0, 17);
    CHECK(trace.final_weights == bound(w0));
    CHECK(trace.final_mask == round_mask(bound(w0)));

    SpsaFsConfig cfg;
    cfg.max_iterations = 25;
    cfg.seed = 17;
    const RunTrace fs = run_spsafs(eval, 4, cfg, w0);
    CHECK(fs.final_mask == round_mask(bound(w0)));
}

TEST_CASE("bb_gain identity and scaling cases") {
    GainState state;
    state.iterate_prev = {0.0, 0.0};
    state.gradient_prev = {0.0, 0.0};

    SUBCASE("identical differences give exactly 1") {
        state.iterate_curr = {0.1, -0.1};
        state.gradient_curr = {0.1, -0.1};
        CHECK(bb_gain(state, BbVariant::ratio_gg).value() == 1.0);
        CHECK(bb_gain(state, BbVariant::ratio_xx).value() == 1.0);
    }

    SUBCASE("doubled gradient difference gives exactly 0.5 in both forms") {
        state.iterate_curr = {0.1, -0.1};
        state.gradient_curr = {0.2, -0.2};
        CHECK(bb_gain(state, BbVariant::ratio_gg).value() == 0.5);
        CHECK(bb_gain(state, BbVariant::ratio_xx).value() == 0.5);
    }

    SUBCASE("orthogonal differences give 0 in the gg form") {
        state.iterate_curr = {0.1, 0.1};
        state.gradient_curr = {-0.2, 0.2};
        // independent dot-product oracle
        const double dw_dg = 0.1 * -0.2 + 0.1 * 0.2;
        const double dg_dg = 0.2 * 0.2 + 0.2 * 0.2;
        CHECK(bb_gain(state, BbVariant::ratio_gg).value() ==
              doctest::Approx(dw_dg / dg_dg).epsilon(1e-15));
        CHECK(bb_gain(state, BbVariant::ratio_gg).value() == 0.0);
    }

    SUBCASE("vanishing denominators are signalled, not divided") {
        state.iterate_curr = {0.1, -0.1};
        state.gradient_curr = {0.0, 0.0};
        CHECK_FALSE(bb_gain(state, BbVariant::ratio_gg).has_value());
        state.iterate_curr = {0.0, 0.0};
        state.gradient_curr = {0.3, 0.4};
        CHECK_FALSE(bb_gain(state, BbVariant::ratio_xx).has_value());
    }

    SUBCASE("missing history is signalled") {
        GainState empty;
        empty.iterate_curr = {0.1, 0.2};
        CHECK_FALSE(bb_gain(empty, BbVariant::ratio_gg).has_value());
    }
}

TEST_CASE("clip_gain clamps into the accepted envelope") {
    GainState state;
    state.accepted_gains = {0.02, 0.05, 0.04};

    // independent clamp oracle: max(lo, min(x, hi))
    const auto clamp_oracle = [](double x, double lo, double hi) {
        return std::max(lo, std::min(x, hi));
    };

    CHECK(clip_gain(0.03, state, 0.5) == 0.03);
    CHECK(clip_gain(0.03, state, 0.5) == clamp_oracle(0.03, 0.02, 0.05));
    CHECK(clip_gain(-1.7, state, 0.5) == 0.02);
    CHECK(clip_gain(0.9, state, 0.5) == 0.05);

    GainState empty;
    CHECK(clip_gain(123.0, empty, 0.047) == 0.047);
    CHECK(clip_gain(std::nullopt, empty, 0.047) == 0.047);

    const double bad_inputs[] = {std::nan(""), std::numeric_limits<double>::infinity(),
                                 -std::numeric_limits<double>::infinity(), -1.7, 0.0};
    for (double raw : bad_inputs) {
        const double clipped = clip_gain(raw, state, 0.5);
        CHECK(clipped > 0.0);
        CHECK(std::isfinite(clipped));
    }
    CHECK(clip_gain(std::nullopt, state, 0.5) == 0.02);
}

TEST_CASE("smooth_gain averages the trailing clipped gains") {
    SUBCASE("cold start is a window of one") {
        GainState state;
        state.iteration = 0;
        CHECK(smooth_gain(state, 0.05) == 0.05);
    }
    SUBCASE("window of three matches the mean oracle") {
        GainState state;
        state.iteration = 2;
        state.clipped_gains = {0.03, 0.06};
        const double mean_oracle = (0.03 + 0.03 + 0.06) / 3.0;
        CHECK(smooth_gain(state, 0.03) == doctest::Approx(mean_oracle).epsilon(1e-12));
        CHECK(smooth_gain(state, 0.03) == doctest::Approx(0.04).epsilon(1e-12));
    }
    SUBCASE("constant history is a fixed point") {
        GainState state;
        state.iteration = 1;
        state.clipped_gains = {0.05};
        CHECK(smooth_gain(state, 0.05) == doctest::Approx(0.05).epsilon(1e-15));
    }
}

TEST_CASE("average_gradient windows") {
    GainState state;
    SUBCASE("no history returns the current estimate unchanged") {
        const std::vector<double> g = {1.0, -2.0};
        CHECK(average_gradient(state, g, GradientAveraging::all()) == g);
    }
    SUBCASE("all-history mean matches the oracle") {
        state.raw_gradients = {{2.0, -2.0}};
        const auto avg = average_gradient(state, {0.0, 0.0}, GradientAveraging::all());
        CHECK(avg == std::vector<double>{1.0, -1.0});
    }
    SUBCASE("fixed window zero is the identity for any history") {
        state.raw_gradients = {{5.0, 5.0}, {7.0, -7.0}};
        const std::vector<double> g = {0.25, 0.5};
        CHECK(average_gradient(state, g, GradientAveraging::fixed(0)) == g);
    }
}

TEST_CASE("smoothing and averaging stay inside the window envelope") {
    Xoshiro256 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        GainState state;
        const std::size_t hist = rng.below(5);
        for (std::size_t i = 0; i < hist; ++i) {
            state.clipped_gains.push_back(0.01 + rng.uniform());
        }
        state.iteration = 10;
        const double current = 0.01 + rng.uniform();
        const double smoothed = smooth_gain(state, current);
        const std::size_t t = std::min<std::size_t>(2, state.clipped_gains.size());
        double lo = current, hi = current;
        for (std::size_t i = 0; i < t; ++i) {
            const double v = state.clipped_gains[state.clipped_gains.size() - 1 - i];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(smoothed >= lo - 1e-15);
        CHECK(smoothed <= hi + 1e-15);

        std::vector<double> g(3);
        for (auto& x : g) x = rng.normal();
        for (std::size_t i = 0; i < hist; ++i) {
            std::vector<double> h(3);
            for (auto& x : h) x = rng.normal();
            state.raw_gradients.push_back(h);
        }
        const auto avg = average_gradient(state, g, GradientAveraging::all());
        for (std::size_t j = 0; j < 3; ++j) {
            double glo = g[j], ghi = g[j];
            for (const auto& h : state.raw_gradients) {
                glo = std::min(glo, h[j]);
                ghi = std::max(ghi, h[j]);
            }
            CHECK(avg[j] >= glo - 1e-12);
            CHECK(avg[j] <= ghi + 1e-12);
        }
    }
}

TEST_CASE("spsa-fs first step coincides with bspsa under the fallback gain") {
    const MonotoneGainConfig gain = worked_example_gain();
    const WeightVector w0(6, 0.5);

    ScriptedDeltas deltas_a({kWorkedDeltas[0]});
    SequenceEvaluator eval_a({0.32, 0.53});
    const RunTrace bspsa_trace = run_bspsa(eval_a, 6, gain, 1, w0, 0, &deltas_a);

    SpsaFsConfig cfg;
    cfg.max_iterations = 1;
    cfg.fallback_gain = gain;
    cfg.c = gain.c;
    ScriptedDeltas deltas_b({kWorkedDeltas[0]});
    SequenceEvaluator eval_b({0.32, 0.53});
    const RunTrace fs_trace = run_spsafs(eval_b, 6, cfg, w0, &deltas_b);

    CHECK(fs_trace.final_weights == bspsa_trace.final_weights);
    const std::vector<double> expected = {0.4013, 0.4013, 0.5987, 0.5987, 0.4013, 0.5987};
    for (std::size_t j = 0; j < 6; ++j) {
        CHECK(std::abs(fs_trace.final_weights[j] - expected[j]) < 0.001);
    }
}

namespace {

Dataset small_classification(std::uint64_t seed, std::size_t n = 80, std::size_t p = 12) {
    SyntheticSpec spec;
    spec.n = n;
    spec.p = p;
    spec.informative_indices = {0, 3, 7};
    spec.noise_sd = 0.4;
    spec.seed = seed;
    return make_synthetic(spec);
}

}  // namespace

TEST_CASE("spsa-fs with bb disabled reproduces bspsa step for step") {
    const Dataset data = small_classification(5);
    ModelSpec model;
    model.kind = ModelKind::knn;
    model.k = 3;
    CvConfig cv;
    cv.folds = 4;
    CvLossEvaluator evaluator(data, model, cv);

    const MonotoneGainConfig gain = worked_example_gain();
    const RunTrace bspsa_trace =
        run_bspsa(evaluator, data.p, gain, 40, WeightVector(data.p, 0.5), 2024);

    SpsaFsConfig cfg;
    cfg.use_bb = false;
    cfg.t_max = 0;
    cfg.gradient_avg = GradientAveraging::fixed(0);
    cfg.fallback_gain = gain;
    cfg.c = gain.c;
    cfg.max_iterations = 40;
    cfg.seed = 2024;
    const RunTrace fs_trace = run_spsafs(evaluator, data.p, cfg, WeightVector(data.p, 0.5));

    CHECK(traces_identical(bspsa_trace, fs_trace));
}

TEST_CASE("identical seeds give bit-identical traces") {
    const Dataset data = small_classification(6);
    ModelSpec model;
    model.kind = ModelKind::knn;
    model.k = 3;
    CvConfig cv;
    cv.folds = 4;
    CvLossEvaluator evaluator(data, model, cv);

    SpsaFsConfig cfg;
    cfg.max_iterations = 30;
    cfg.seed = 99;
    const RunTrace a = run_spsafs(evaluator, data.p, cfg, WeightVector(data.p, 0.5));
    const RunTrace b = run_spsafs(evaluator, data.p, cfg, WeightVector(data.p, 0.5));
    CHECK(traces_identical(a, b));

    cfg.seed = 100;
    const RunTrace c = run_spsafs(evaluator, data.p, cfg, WeightVector(data.p, 0.5));
    CHECK_FALSE(traces_identical(a, c));
}

TEST_CASE("best loss is the running minimum of recorded measurements") {
    const Dataset data = small_classification(7);
    ModelSpec model;
    model.kind = ModelKind::knn;
    model.k = 3;
    CvConfig cv;
    cv.folds = 4;
    CvLossEvaluator evaluator(data, model, cv);

    SpsaFsConfig cfg;
    cfg.max_iterations = 25;
    cfg.seed = 3;
    const RunTrace trace = run_spsafs(evaluator, data.p, cfg, WeightVector(data.p, 0.5));

    double running = std::numeric_limits<double>::infinity();
    for (const auto& rec : trace.records) {
        running = std::min({running, rec.y_plus, rec.y_minus});
    }
    CHECK(trace.best_loss == running);
}

TEST_CASE("gain pipeline keeps every used gain positive and finite") {
    const Dataset data = small_classification(8);
    ModelSpec model;
    model.kind = ModelKind::knn;
    model.k = 3;
    CvConfig cv;
    cv.folds = 4;
    CvLossEvaluator evaluator(data, model, cv);

    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        SpsaFsConfig cfg;
        cfg.max_iterations = 60;
        cfg.seed = seed;
        const RunTrace trace = run_spsafs(evaluator, data.p, cfg, WeightVector(data.p, 0.5));
        for (const auto& rec : trace.records) {
            CHECK(rec.gain_used > 0.0);
            CHECK(std::isfinite(rec.gain_used));
        }
    }
}

TEST_CASE("gradient estimator is exactly unbiased over the full sign ensemble") {
    // enumeration oracle: averaging over all 2^p perturbations recovers a
    // linear loss's coefficient vector identically
    const std::size_t p = 10;
    const std::vector<double> v = {1.5, -2.0, 0.75, 3.0, -1.0, 2.5, -0.5, 1.0, -3.0, 2.0};
    const double c = 0.05;
    std::vector<double> mean(p, 0.0);
    const std::size_t total = std::size_t{1} << p;
    for (std::size_t pattern = 0; pattern < total; ++pattern) {
        PerturbationVector delta(p);
        for (std::size_t j = 0; j < p; ++j) delta[j] = (pattern >> j) & 1 ? 1 : -1;
        double y_plus = 0.0, y_minus = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            y_plus += v[j] * (0.5 + c * delta[j]);
            y_minus += v[j] * (0.5 - c * delta[j]);
        }
        const auto g = gradient_from_measurements(y_plus, y_minus, c, delta);
        for (std::size_t j = 0; j < p; ++j) mean[j] += g[j];
    }
    for (std::size_t j = 0; j < p; ++j) {
        CHECK(mean[j] / static_cast<double>(total) == doctest::Approx(v[j]).epsilon(1e-9));
    }
}

TEST_CASE("gradient estimator converges on sampled perturbations") {
    const std::size_t p = 10;
    const std::vector<double> v(p, 5.0);
    const double c = 0.05;
    const std::size_t draws = 400000;
    std::vector<double> mean(p, 0.0);
    for (std::size_t d = 0; d < draws; ++d) {
        const PerturbationVector delta = sample_perturbation(p, derive_seed(4242, "delta", d));
        double diff = 0.0;
        for (std::size_t j = 0; j < p; ++j) diff += v[j] * 2.0 * c * delta[j];
        const auto g = gradient_from_measurements(diff, 0.0, c, delta);
        for (std::size_t j = 0; j < p; ++j) mean[j] += g[j];
    }
    for (std::size_t j = 0; j < p; ++j) {
        const double m = mean[j] / static_cast<double>(draws);
        CHECK(std::abs(m - v[j]) / std::abs(v[j]) < 0.02);
    }
}

TEST_CASE("rank_features orders by final weight with index tie-breaks") {
    RunTrace trace;
    trace.final_weights = {0.471, 0.33, 0.529, 0.67, 0.33, 0.529};

    // weights from the worked second iterate: top three are features
    // 3, 2, 5 (0-based)
    CHECK(rank_features(trace, 3) == std::vector<std::size_t>{3, 2, 5});
    CHECK(rank_features(trace, 6) == std::vector<std::size_t>{3, 2, 5, 0, 1, 4});

    RunTrace flat;
    flat.final_weights = WeightVector(5, 0.5);
    CHECK(rank_features(flat, 3) == std::vector<std::size_t>{0, 1, 2});

    CHECK_THROWS_AS(rank_features(trace, 0), std::invalid_argument);
    CHECK_THROWS_AS(rank_features(trace, 7), std::invalid_argument);
}

TEST_CASE("stall tolerance stops a flat run early") {
    ConstantEvaluator eval(0.5);
    SpsaFsConfig cfg;
    cfg.max_iterations = 300;
    cfg.seed = 1;
    cfg.stall_tolerance = 1e-9;
    const RunTrace trace = run_spsafs(eval, 6, cfg, WeightVector(6, 0.5));
    CHECK(trace.iterations_run < 300);
}
