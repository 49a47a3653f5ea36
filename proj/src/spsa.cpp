#include "spsafs/spsa.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace spsafs {

namespace {

constexpr double kBbDenominatorFloor = 1e-12;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
    return s;
}

double mean_of(const WeightVector& w) {
    if (w.empty()) return 0.0;
    return std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
}

}  // namespace

void MonotoneGainConfig::validate() const {
    if (!(a > 0.0)) throw std::invalid_argument("gain a must be positive");
    if (!(A >= 0.0)) throw std::invalid_argument("gain A must be nonnegative");
    if (!(alpha > 0.0)) throw std::invalid_argument("gain alpha must be positive");
    if (!(c > 0.0)) throw std::invalid_argument("perturbation gain c must be positive");
    if (!(gamma >= 1.0)) throw std::invalid_argument("gamma must be >= 1");
}

void SpsaFsConfig::validate() const {
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    if (!(c > 0.0)) throw std::invalid_argument("perturbation gain c must be positive");
    fallback_gain.validate();
}

double monotone_gain(std::size_t k, const MonotoneGainConfig& cfg) {
    double base = cfg.A + static_cast<double>(k);
    if (base <= 0.0) base += 1.0;
    return cfg.a / std::pow(base, cfg.alpha);
}

std::optional<double> bb_gain(const GainState& state, BbVariant variant) {
    const std::size_t p = state.iterate_curr.size();
    if (p == 0 || state.iterate_prev.size() != p) return std::nullopt;
    if (state.gradient_curr.size() != p || state.gradient_prev.size() != p)
        return std::nullopt;

    std::vector<double> dw(p), dg(p);
    for (std::size_t j = 0; j < p; ++j) {
        dw[j] = state.iterate_curr[j] - state.iterate_prev[j];
        dg[j] = state.gradient_curr[j] - state.gradient_prev[j];
    }
    double numerator, denominator;
    if (variant == BbVariant::ratio_gg) {
        numerator = dot(dw, dg);
        denominator = dot(dg, dg);
    } else {
        numerator = dot(dw, dw);
        denominator = dot(dw, dg);
    }
    if (std::abs(denominator) < kBbDenominatorFloor) return std::nullopt;
    return numerator / denominator;
}

double clip_gain(std::optional<double> raw, const GainState& state, double fallback) {
    if (state.accepted_gains.empty()) return fallback;
    const auto [lo_it, hi_it] =
        std::minmax_element(state.accepted_gains.begin(), state.accepted_gains.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!raw.has_value() || !std::isfinite(*raw)) return lo;
    return std::clamp(*raw, lo, hi);
}

double smooth_gain(const GainState& state, double current) {
    const std::size_t t =
        std::min({state.t_max, state.iteration, state.clipped_gains.size()});
    double sum = current;
    for (std::size_t i = 0; i < t; ++i) {
        sum += state.clipped_gains[state.clipped_gains.size() - 1 - i];
    }
    return sum / static_cast<double>(t + 1);
}

std::vector<double> average_gradient(const GainState& state,
                                     const std::vector<double>& current,
                                     const GradientAveraging& mode) {
    const std::size_t available = state.raw_gradients.size();
    const std::size_t take = mode.all_history ? available : std::min(mode.window, available);
    if (take == 0) return current;

    std::vector<double> out = current;
    for (std::size_t i = 0; i < take; ++i) {
        const auto& g = state.raw_gradients[available - 1 - i];
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += g[j];
    }
    const double denom = static_cast<double>(take + 1);
    for (double& v : out) v /= denom;
    return out;
}

std::vector<double> gradient_from_measurements(double y_plus, double y_minus,
                                               double c,
                                               const PerturbationVector& delta) {
    const double scale = (y_plus - y_minus) / (2.0 * c);
    std::vector<double> g(delta.size());
    for (std::size_t j = 0; j < delta.size(); ++j) {
        g[j] = scale * static_cast<double>(delta[j]);  // delta_j^{-1} == delta_j
    }
    return g;
}

namespace {

double measure(const LossEvaluator& evaluator, const FeatureMask& mask,
               std::uint64_t noise_seed, bool& evaluated) {
    if (mask.none()) {
        evaluated = false;
        return kEmptyMaskLoss;
    }
    evaluated = true;
    try {
        return evaluator.evaluate(mask, noise_seed);
    } catch (const EvaluatorError&) {
        throw;
    } catch (const std::exception& e) {
        throw EvaluatorError(std::string("loss evaluation failed for mask ") +
                                 mask.to_hex() + ": " + e.what(),
                             mask);
    }
}

}  // namespace

GradientEstimate estimate_gradient(const WeightVector& w,
                                   const PerturbationVector& delta, double c,
                                   const LossEvaluator& evaluator,
                                   std::pair<std::uint64_t, std::uint64_t> seed_pair) {
    if (delta.size() != w.size()) throw std::invalid_argument("delta size mismatch");
    if (!(c > 0.0)) throw std::invalid_argument("perturbation gain c must be positive");

    WeightVector w_plus(w.size()), w_minus(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) {
        const double step = c * static_cast<double>(delta[j]);
        w_plus[j] = w[j] + step;
        w_minus[j] = w[j] - step;
    }

    GradientEstimate est;
    est.mask_plus = round_mask(bound(w_plus));
    est.mask_minus = round_mask(bound(w_minus));

    std::uint64_t seed_plus = seed_pair.first;
    std::uint64_t seed_minus = seed_pair.second;
    if (est.mask_plus == est.mask_minus) {
        // Identical subsets: split the noise streams so y+ - y- measures
        // evaluation noise instead of collapsing to zero.
        seed_plus = derive_seed(seed_pair.first, "tie", 0);
        seed_minus = derive_seed(seed_pair.second, "tie", 1);
    }

    est.y_plus = measure(evaluator, est.mask_plus, seed_plus, est.plus_evaluated);
    est.y_minus = measure(evaluator, est.mask_minus, seed_minus, est.minus_evaluated);
    est.gradient = gradient_from_measurements(est.y_plus, est.y_minus, c, delta);
    return est;
}

namespace {

struct GainPolicy {
    bool use_bb = false;
    MonotoneGainConfig monotone{};
    BbVariant variant = BbVariant::ratio_gg;
    std::size_t t_max = 2;
};

void consider_best(RunTrace& trace, const FeatureMask& mask, double loss) {
    if (loss < trace.best_loss) {
        trace.best_loss = loss;
        trace.best_mask = mask;
    } else if (loss == trace.best_loss && trace.best_mask.none() && !mask.none()) {
        trace.best_mask = mask;  // prefer a usable subset at equal loss
    }
}

RunTrace run_loop(const LossEvaluator& evaluator, std::size_t p,
                  std::size_t max_iterations, const WeightVector& w0,
                  std::uint64_t seed, double c, const GainPolicy& policy,
                  const GradientAveraging& averaging,
                  std::optional<double> stall_tolerance,
                  DeltaSource* delta_override) {
    if (p == 0) throw std::invalid_argument("p must be >= 1");
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    if (w0.size() != p) throw std::invalid_argument("w0 length must equal p");

    const auto t_start = std::chrono::steady_clock::now();

    SeededDeltaSource default_source(seed);
    DeltaSource& deltas = delta_override ? *delta_override : default_source;
    CountingEvaluator counted(evaluator);

    GainState state;
    state.t_max = policy.t_max;
    state.iterate_curr = w0;

    RunTrace trace;
    trace.records.reserve(max_iterations);

    constexpr std::size_t kStallWindow = 50;
    std::vector<double> best_history;

    WeightVector w = w0;
    for (std::size_t k = 0; k < max_iterations; ++k) {
        const PerturbationVector delta = deltas.sample(k, p);
        const std::uint64_t eval_seed = derive_seed(seed, "eval", k);
        GradientEstimate est =
            estimate_gradient(w, delta, c, counted, {eval_seed, eval_seed});

        const std::vector<double> effective =
            average_gradient(state, est.gradient, averaging);
        // BB differences use the raw two-point estimates at the last two
        // iterates; the averaged gradient only steers the update
        state.gradient_prev = std::move(state.gradient_curr);
        state.gradient_curr = est.gradient;
        state.raw_gradients.push_back(std::move(est.gradient));

        double gain;
        if (!policy.use_bb) {
            gain = monotone_gain(k, policy.monotone);
        } else {
            const double fallback = monotone_gain(k, policy.monotone);
            std::optional<double> raw;
            if (k > 0) raw = bb_gain(state, policy.variant);
            const double clipped = clip_gain(raw, state, fallback);
            gain = smooth_gain(state, clipped);
            state.clipped_gains.push_back(clipped);
            state.accepted_gains.push_back(clipped);
        }

        IterationRecord rec;
        rec.k = k;
        rec.y_plus = est.y_plus;
        rec.y_minus = est.y_minus;
        rec.gain_used = gain;
        rec.mask_plus = est.mask_plus;
        rec.mask_minus = est.mask_minus;
        rec.weights_mean = mean_of(bound(w));
        trace.records.push_back(std::move(rec));

        consider_best(trace, trace.records.back().mask_plus, est.y_plus);
        consider_best(trace, trace.records.back().mask_minus, est.y_minus);

        WeightVector w_next(p);
        for (std::size_t j = 0; j < p; ++j) {
            w_next[j] = w[j] - gain * effective[j];
        }
        state.iterate_prev = std::move(state.iterate_curr);
        state.iterate_curr = w_next;
        state.iteration = k + 1;
        w = std::move(w_next);

        if (stall_tolerance.has_value()) {
            best_history.push_back(trace.best_loss);
            if (best_history.size() > kStallWindow) {
                const double then = best_history[best_history.size() - 1 - kStallWindow];
                if (then - trace.best_loss < *stall_tolerance) {
                    trace.iterations_run = k + 1;
                    break;
                }
            }
        }
    }

    if (trace.iterations_run == 0) trace.iterations_run = max_iterations;
    trace.final_weights = bound(w);
    trace.final_mask = round_mask(trace.final_weights);
    trace.evaluations = counted.count();
    trace.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return trace;
}

}  // namespace

RunTrace run_bspsa(const LossEvaluator& evaluator, std::size_t p,
                   const MonotoneGainConfig& cfg, std::size_t max_iterations,
                   const WeightVector& w0, std::uint64_t seed,
                   DeltaSource* delta_override) {
    cfg.validate();
    GainPolicy policy;
    policy.use_bb = false;
    policy.monotone = cfg;
    return run_loop(evaluator, p, max_iterations, w0, seed, cfg.c, policy,
                    GradientAveraging::fixed(0), std::nullopt, delta_override);
}

RunTrace run_spsafs(const LossEvaluator& evaluator, std::size_t p,
                    const SpsaFsConfig& cfg, const WeightVector& w0,
                    DeltaSource* delta_override) {
    cfg.validate();
    GainPolicy policy;
    policy.use_bb = cfg.use_bb;
    policy.monotone = cfg.fallback_gain;
    policy.variant = cfg.bb_variant;
    policy.t_max = cfg.t_max;
    return run_loop(evaluator, p, cfg.max_iterations, w0, cfg.seed, cfg.c, policy,
                    cfg.gradient_avg, cfg.stall_tolerance, delta_override);
}

std::vector<std::size_t> rank_features(const RunTrace& trace, std::size_t m) {
    const std::size_t p = trace.final_weights.size();
    if (m < 1 || m > p) throw std::invalid_argument("rank size m out of range");
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return trace.final_weights[a] > trace.final_weights[b];
    });
    order.resize(m);
    return order;
}

}  // namespace spsafs
