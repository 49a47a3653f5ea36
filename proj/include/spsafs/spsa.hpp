#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spsafs/core.hpp"

namespace spsafs {

// Loss substituted when a perturbed iterate rounds to the empty subset: the
// subset-selection problem is defined over non-empty masks, so the evaluator
// is never called with one. 1.0 is the error rate of an always-wrong
// classifier and the 1-R^2 of the mean predictor alike.
inline constexpr double kEmptyMaskLoss = 1.0;

// Noisy loss measurement contract. Implementations must be deterministic for
// a fixed (mask, noise_seed) pair and safe to call concurrently.
class LossEvaluator {
public:
    virtual ~LossEvaluator() = default;
    virtual double evaluate(const FeatureMask& mask, std::uint64_t noise_seed) const = 0;
};

// Wraps an evaluator and counts invocations. One evaluate() call is the
// budget unit shared by every search method.
class CountingEvaluator : public LossEvaluator {
public:
    explicit CountingEvaluator(const LossEvaluator& inner) : inner_(inner) {}
    double evaluate(const FeatureMask& mask, std::uint64_t noise_seed) const override {
        ++count_;
        return inner_.evaluate(mask, noise_seed);
    }
    std::size_t count() const { return count_; }

private:
    const LossEvaluator& inner_;
    mutable std::size_t count_ = 0;
};

// Evaluator failure with the offending mask attached.
class EvaluatorError : public std::runtime_error {
public:
    EvaluatorError(const std::string& what, FeatureMask mask)
        : std::runtime_error(what), mask_(std::move(mask)) {}
    const FeatureMask& mask() const { return mask_; }

private:
    FeatureMask mask_;
};

// Decaying gain schedule a_k = a / (A + k)^alpha. In binary mode the
// perturbation gain c_k stays constant at c (gamma pinned to 1).
struct MonotoneGainConfig {
    double a = 0.75;
    double A = 100.0;
    double alpha = 0.6;
    double c = 0.05;
    double gamma = 1.0;

    void validate() const;
};

// a / (A + k)^alpha. The degenerate base A + k == 0 (only possible when
// A == 0 and k == 0) falls back to (A + k + 1)^alpha so the schedule stays
// finite for every k >= 0.
double monotone_gain(std::size_t k, const MonotoneGainConfig& cfg);

enum class BbVariant {
    ratio_gg,  // (dw . dg) / (dg . dg)
    ratio_xx,  // (dw . dw) / (dw . dg)
};

// all_history averages every raw gradient to date (window grows with k);
// fixed window m averages the last min(m, k) previous gradients plus the
// current one. fixed(0) disables averaging.
struct GradientAveraging {
    bool all_history = true;
    std::size_t window = 0;

    static GradientAveraging all() { return {true, 0}; }
    static GradientAveraging fixed(std::size_t m) { return {false, m}; }
};

struct SpsaFsConfig {
    double c = 0.05;
    std::size_t max_iterations = 100;
    std::size_t t_max = 2;  // gain smoothing window
    GradientAveraging gradient_avg = GradientAveraging::all();
    BbVariant bb_variant = BbVariant::ratio_gg;
    // When false the gain is pinned to the monotone fallback schedule every
    // iteration (no BB, no clipping, no smoothing) and the run degenerates
    // to BSPSA step for step.
    bool use_bb = true;
    MonotoneGainConfig fallback_gain{};
    std::uint64_t seed = 0;
    // Optional early stop: halt once the running best loss has improved by
    // less than this over the trailing 50 iterations. Off (paper-faithful,
    // M is the only stopping rule) unless set.
    std::optional<double> stall_tolerance;

    void validate() const;
};

// Rolling optimizer history feeding the BB step, clipping, smoothing and
// gradient averaging.
//
// Two gain lists coexist on purpose. `accepted_gains` is the gain sequence
// whose min/max bound the clip: the cold-start fallback plus every strictly
// positive finite raw BB quotient observed so far. `clipped_gains` holds the
// per-iteration post-clip values and is the smoothing window's source. If
// the envelope were built from post-clip values it could never expand past
// the cold-start gain and every subsequent gain would collapse onto it.
struct GainState {
    std::size_t iteration = 0;  // k
    WeightVector iterate_prev;
    WeightVector iterate_curr;
    std::vector<std::vector<double>> raw_gradients;  // averaging history
    std::vector<double> gradient_prev;  // raw estimate at k-1
    std::vector<double> gradient_curr;  // raw estimate at k
    std::vector<double> accepted_gains;
    std::vector<double> clipped_gains;
    std::size_t t_max = 2;
};

// Two-point BB quotient from the last iterate and effective-gradient
// differences. Empty when fewer than two iterates/gradients exist or when
// |denominator| < 1e-12; the caller must clip the result either way.
std::optional<double> bb_gain(const GainState& state, BbVariant variant);

// Clamps a raw BB gain into the [min, max] envelope of the accepted gain
// sequence. Empty history -> fallback; degenerate, non-finite or negative
// values land on the envelope minimum. Always strictly positive given
// fallback > 0.
double clip_gain(std::optional<double> raw, const GainState& state, double fallback);

// Mean of the current gain and the last t = min(t_max, k) recorded
// post-clip gains.
double smooth_gain(const GainState& state, double current);

// Componentwise mean of the chosen window of raw gradient estimates
// including the current one.
std::vector<double> average_gradient(const GainState& state,
                                     const std::vector<double>& current,
                                     const GradientAveraging& mode);

// The pure SPSA estimator arithmetic: component j is
// (y_plus - y_minus) / (2 c delta_j); delta_j in {-1,+1} is its own inverse.
std::vector<double> gradient_from_measurements(double y_plus, double y_minus,
                                               double c,
                                               const PerturbationVector& delta);

struct GradientEstimate {
    std::vector<double> gradient;
    double y_plus = 0.0;
    double y_minus = 0.0;
    FeatureMask mask_plus;
    FeatureMask mask_minus;
    bool plus_evaluated = false;   // false when the empty-mask loss was substituted
    bool minus_evaluated = false;
};

// Perturbs w by +/- c*delta, bounds and rounds both sides, measures both
// losses and assembles the two-point gradient estimate.
//
// seed_pair carries the noise seeds for the plus and minus evaluations; the
// engine passes the same seed twice so both masks see identical CV folds
// (common random numbers). When the two masks round to the same subset,
// distinct sub-seeds are derived instead so the measured difference is pure
// evaluation noise rather than exactly zero.
GradientEstimate estimate_gradient(const WeightVector& w,
                                   const PerturbationVector& delta, double c,
                                   const LossEvaluator& evaluator,
                                   std::pair<std::uint64_t, std::uint64_t> seed_pair);

struct IterationRecord {
    std::size_t k = 0;
    double y_plus = 0.0;
    double y_minus = 0.0;
    double gain_used = 0.0;
    FeatureMask mask_plus;
    FeatureMask mask_minus;
    double weights_mean = 0.0;  // mean of the bounded iterate entering step k
};

struct RunTrace {
    std::vector<IterationRecord> records;
    FeatureMask final_mask;      // round_mask(bound(w_M))
    WeightVector final_weights;  // bound(w_M), drives feature ranking
    FeatureMask best_mask;       // argmin loss over every recorded mask
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t iterations_run = 0;
    std::size_t evaluations = 0;  // evaluator invocation count
    double wall_time_seconds = 0.0;
};

// Injection point for the perturbation stream; tests script exact draws.
class DeltaSource {
public:
    virtual ~DeltaSource() = default;
    virtual PerturbationVector sample(std::size_t k, std::size_t p) = 0;
};

// Production source: iteration k draws from the stream derive_seed(seed,
// "delta", k).
class SeededDeltaSource : public DeltaSource {
public:
    explicit SeededDeltaSource(std::uint64_t run_seed) : run_seed_(run_seed) {}
    PerturbationVector sample(std::size_t k, std::size_t p) override {
        return sample_perturbation(p, derive_seed(run_seed_, "delta", k));
    }

private:
    std::uint64_t run_seed_;
};

// BSPSA: the binary SPSA recursion with constant perturbation gain c and
// monotone decaying step a_k. Runs exactly M iterations.
RunTrace run_bspsa(const LossEvaluator& evaluator, std::size_t p,
                   const MonotoneGainConfig& cfg, std::size_t max_iterations,
                   const WeightVector& w0, std::uint64_t seed,
                   DeltaSource* delta_override = nullptr);

// SPSA-FS: BSPSA accelerated with BB gains, gain clipping and smoothing, and
// gradient averaging. Iteration 0 uses the monotone fallback gain; BB kicks
// in once an iterate and gradient difference exist.
RunTrace run_spsafs(const LossEvaluator& evaluator, std::size_t p,
                    const SpsaFsConfig& cfg, const WeightVector& w0,
                    DeltaSource* delta_override = nullptr);

// Top-m features by final bounded (unrounded) weight, descending, ties to
// the lower index. 0-based indices. Requires 1 <= m <= p.
std::vector<std::size_t> rank_features(const RunTrace& trace, std::size_t m);

}  // namespace spsafs
