#include "spsafs/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace spsafs {

void SearchBudget::validate() const {
    if (max_evaluations < 1) throw std::invalid_argument("max_evaluations must be >= 1");
}

namespace {

// Bookkeeping shared by the four sequential searches: budget, the best
// subset ever evaluated, and the best loss seen per subset size (the
// floating variants' acceptance reference).
struct SearchContext {
    const LossEvaluator& evaluator;
    std::uint64_t noise_seed;
    std::size_t budget;
    std::size_t evaluations = 0;
    bool exhausted = false;
    FeatureMask best_mask;
    double best_loss = std::numeric_limits<double>::infinity();
    std::map<std::size_t, double> best_at_size;

    // Returns nothing when the budget is exhausted.
    std::optional<double> score(const FeatureMask& mask) {
        if (evaluations >= budget) {
            exhausted = true;
            return std::nullopt;
        }
        ++evaluations;
        const double loss = evaluator.evaluate(mask, noise_seed);
        if (loss < best_loss) {
            best_loss = loss;
            best_mask = mask;
        }
        const auto [it, inserted] = best_at_size.try_emplace(mask.count(), loss);
        if (!inserted && loss < it->second) it->second = loss;
        return loss;
    }

    double known_best_at(std::size_t size) const {
        const auto it = best_at_size.find(size);
        return it == best_at_size.end() ? std::numeric_limits<double>::infinity() : it->second;
    }
};

struct Candidate {
    std::size_t feature = 0;
    double loss = std::numeric_limits<double>::infinity();
    bool valid = false;
};

// Scans candidate single-feature flips in ascending index order; the first
// strictly better loss wins, which is the lower-index tie rule.
Candidate scan_candidates(SearchContext& ctx, const std::vector<std::uint8_t>& bits,
                          bool adding) {
    Candidate best;
    for (std::size_t j = 0; j < bits.size(); ++j) {
        if (adding == (bits[j] != 0)) continue;
        std::vector<std::uint8_t> flipped = bits;
        flipped[j] = adding ? 1 : 0;
        const auto loss = ctx.score(FeatureMask(std::move(flipped)));
        if (!loss.has_value()) break;
        if (!best.valid || *loss < best.loss) {
            best = {j, *loss, true};
        }
    }
    return best;
}

SearchResult finish(SearchContext& ctx, std::vector<std::uint8_t> bits, double loss,
                    std::vector<SearchStep> steps, std::vector<std::size_t> insertion_order) {
    SearchResult result;
    result.evaluations = ctx.evaluations;
    result.truncated = ctx.exhausted;
    result.steps = std::move(steps);
    result.insertion_order = std::move(insertion_order);
    if (ctx.exhausted && ctx.best_mask.size() > 0) {
        result.mask = ctx.best_mask;
        result.loss = ctx.best_loss;
    } else {
        result.mask = FeatureMask(std::move(bits));
        result.loss = loss;
    }
    return result;
}

SearchResult sequential_search(const LossEvaluator& evaluator, std::size_t p,
                               const SearchBudget& budget, std::uint64_t noise_seed,
                               bool forward, bool floating) {
    if (p < 1) throw std::invalid_argument("p must be >= 1");
    budget.validate();
    if (budget.target_subset_size && (*budget.target_subset_size < 1 ||
                                      *budget.target_subset_size > p)) {
        throw std::invalid_argument("target_subset_size out of range");
    }

    SearchContext ctx{evaluator, noise_seed, budget.max_evaluations};
    std::vector<std::uint8_t> bits(p, forward ? 0 : 1);
    std::vector<SearchStep> steps;
    std::vector<std::size_t> insertion_order;  // forward: features as added
    std::vector<std::size_t> removal_log;      // backward: features as removed

    double current_loss;
    std::size_t current_size;
    if (forward) {
        current_loss = kEmptyMaskLoss;  // empty-set baseline
        current_size = 0;
    } else {
        const auto full = ctx.score(FeatureMask(bits));
        if (!full.has_value()) {
            return finish(ctx, std::move(bits), kEmptyMaskLoss, std::move(steps),
                          std::move(insertion_order));
        }
        current_loss = *full;
        current_size = p;
    }

    const auto target = budget.target_subset_size;
    std::size_t step_counter = 0;

    for (;;) {
        if (target && current_size == *target) break;
        const bool can_main_step = forward ? current_size < p : current_size > 1;
        if (!can_main_step) break;

        const Candidate cand = scan_candidates(ctx, bits, forward);
        if (ctx.exhausted || !cand.valid) break;
        const bool improves = cand.loss < current_loss;
        if (!improves && !target) break;

        bits[cand.feature] = forward ? 1 : 0;
        current_loss = cand.loss;
        current_size += forward ? 1 : std::size_t(-1);
        steps.push_back({step_counter++, forward, cand.feature, cand.loss});
        if (forward) {
            insertion_order.push_back(cand.feature);
        } else {
            removal_log.push_back(cand.feature);
        }

        if (!floating) continue;

        // conditional counter-steps while they strictly beat the best loss
        // known at the resulting size
        for (;;) {
            const bool can_counter = forward ? current_size > 1 : current_size < p;
            if (!can_counter) break;
            const std::size_t counter_size = current_size + (forward ? std::size_t(-1) : 1);
            if (target && (forward ? counter_size < *target : counter_size > *target)) break;
            // the acceptance reference is the best loss known at that size
            // before this scan's own evaluations land
            const double reference = ctx.known_best_at(counter_size);
            const Candidate counter = scan_candidates(ctx, bits, !forward);
            if (ctx.exhausted || !counter.valid) break;
            if (!(counter.loss < reference)) break;
            bits[counter.feature] = forward ? 0 : 1;
            current_loss = counter.loss;
            current_size = counter_size;
            steps.push_back({step_counter++, !forward, counter.feature, counter.loss});
            if (forward) {
                std::erase(insertion_order, counter.feature);
            } else {
                std::erase(removal_log, counter.feature);
            }
        }
        if (ctx.exhausted) break;
    }

    if (!forward) {
        // survivors rank first (ascending index), evicted features follow in
        // reverse removal order
        for (std::size_t j = 0; j < p; ++j) {
            if (bits[j]) insertion_order.push_back(j);
        }
        insertion_order.insert(insertion_order.end(), removal_log.rbegin(), removal_log.rend());
    }

    return finish(ctx, std::move(bits), current_loss, std::move(steps),
                  std::move(insertion_order));
}

}  // namespace

SearchResult sfs(const LossEvaluator& evaluator, std::size_t p, const SearchBudget& budget,
                 std::uint64_t noise_seed) {
    return sequential_search(evaluator, p, budget, noise_seed, true, false);
}

SearchResult sbs(const LossEvaluator& evaluator, std::size_t p, const SearchBudget& budget,
                 std::uint64_t noise_seed) {
    return sequential_search(evaluator, p, budget, noise_seed, false, false);
}

SearchResult sffs(const LossEvaluator& evaluator, std::size_t p, const SearchBudget& budget,
                  std::uint64_t noise_seed) {
    return sequential_search(evaluator, p, budget, noise_seed, true, true);
}

SearchResult sfbs(const LossEvaluator& evaluator, std::size_t p, const SearchBudget& budget,
                  std::uint64_t noise_seed) {
    return sequential_search(evaluator, p, budget, noise_seed, false, true);
}

std::vector<RankedFeature> rank_correlation(const Dataset& data) {
    std::vector<double> response(data.n);
    if (data.task == TaskKind::classification) {
        for (std::size_t i = 0; i < data.n; ++i) response[i] = data.labels[i];
    } else {
        response = data.y;
    }

    const double y_mean = std::accumulate(response.begin(), response.end(), 0.0) /
                          static_cast<double>(data.n);
    double y_ss = 0.0;
    for (double v : response) y_ss += (v - y_mean) * (v - y_mean);

    std::vector<RankedFeature> ranked(data.p);
    for (std::size_t j = 0; j < data.p; ++j) {
        double x_mean = 0.0;
        for (std::size_t i = 0; i < data.n; ++i) x_mean += data.at(i, j);
        x_mean /= static_cast<double>(data.n);
        double x_ss = 0.0, xy = 0.0;
        for (std::size_t i = 0; i < data.n; ++i) {
            const double dx = data.at(i, j) - x_mean;
            x_ss += dx * dx;
            xy += dx * (response[i] - y_mean);
        }
        double score = 0.0;
        if (x_ss > 0.0 && y_ss > 0.0) score = std::abs(xy / std::sqrt(x_ss * y_ss));
        ranked[j] = {j, score};
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RankedFeature& a, const RankedFeature& b) {
                         return a.score > b.score;
                     });
    return ranked;
}

ReliefResult rank_relief(const Dataset& data, std::size_t num_samples, std::uint64_t seed) {
    if (data.task != TaskKind::classification) {
        throw std::invalid_argument("relief requires a classification dataset");
    }
    if (data.n_classes() < 2) throw std::invalid_argument("relief requires >= 2 classes");
    if (num_samples < 1) throw std::invalid_argument("relief needs >= 1 sample");

    std::vector<double> range(data.p, 0.0);
    for (std::size_t j = 0; j < data.p; ++j) {
        double lo = data.at(0, j), hi = data.at(0, j);
        for (std::size_t i = 1; i < data.n; ++i) {
            lo = std::min(lo, data.at(i, j));
            hi = std::max(hi, data.at(i, j));
        }
        range[j] = hi - lo;
    }

    std::vector<std::size_t> samples;
    if (num_samples >= data.n) {
        samples.resize(data.n);
        std::iota(samples.begin(), samples.end(), 0);
    } else {
        std::vector<std::size_t> order(data.n);
        std::iota(order.begin(), order.end(), 0);
        Xoshiro256 rng(derive_seed(seed, "relief", 0));
        for (std::size_t i = 0; i < num_samples; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(data.n - i));
            std::swap(order[i], order[j]);
        }
        samples.assign(order.begin(), order.begin() + num_samples);
    }

    const auto normalized_distance2 = [&](std::size_t a, std::size_t b) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < data.p; ++j) {
            if (range[j] <= 0.0) continue;
            const double diff = (data.at(a, j) - data.at(b, j)) / range[j];
            d2 += diff * diff;
        }
        return d2;
    };

    ReliefResult result;
    std::vector<double> weights(data.p, 0.0);
    for (std::size_t i : samples) {
        std::size_t hit = data.n, miss = data.n;
        double hit_d2 = std::numeric_limits<double>::infinity();
        double miss_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t other = 0; other < data.n; ++other) {
            if (other == i) continue;
            const double d2 = normalized_distance2(i, other);
            if (data.labels[other] == data.labels[i]) {
                if (d2 < hit_d2) {
                    hit_d2 = d2;
                    hit = other;
                }
            } else if (d2 < miss_d2) {
                miss_d2 = d2;
                miss = other;
            }
        }
        if (hit == data.n) result.hit_term_skipped = true;
        for (std::size_t j = 0; j < data.p; ++j) {
            if (range[j] <= 0.0) continue;
            double update = std::abs(data.at(i, j) - data.at(miss, j));
            if (hit != data.n) update -= std::abs(data.at(i, j) - data.at(hit, j));
            weights[j] += update / range[j];
        }
    }

    result.ranking.resize(data.p);
    for (std::size_t j = 0; j < data.p; ++j) {
        result.ranking[j] = {j, weights[j] / static_cast<double>(samples.size())};
    }
    std::stable_sort(result.ranking.begin(), result.ranking.end(),
                     [](const RankedFeature& a, const RankedFeature& b) {
                         return a.score > b.score;
                     });
    return result;
}

SearchResult exhaustive_best(const LossEvaluator& evaluator, std::size_t p,
                             std::uint64_t noise_seed) {
    if (p < 1) throw std::invalid_argument("p must be >= 1");
    if (p > 20) throw std::invalid_argument("exhaustive search is guarded to p <= 20");

    SearchResult result;
    std::vector<std::size_t> best_indices;
    const std::uint64_t total = (std::uint64_t{1} << p) - 1;
    for (std::uint64_t v = 1; v <= total; ++v) {
        std::vector<std::uint8_t> bits(p, 0);
        for (std::size_t j = 0; j < p; ++j) bits[j] = (v >> j) & 1u;
        FeatureMask mask(std::move(bits));
        const double loss = evaluator.evaluate(mask, noise_seed);
        ++result.evaluations;

        bool better = loss < result.loss;
        if (!better && loss == result.loss) {
            const auto indices = mask.indices();
            better = indices.size() < best_indices.size() ||
                     (indices.size() == best_indices.size() &&
                      std::lexicographical_compare(indices.begin(), indices.end(),
                                                   best_indices.begin(), best_indices.end()));
        }
        if (better) {
            result.loss = loss;
            result.mask = mask;
            best_indices = mask.indices();
        }
    }
    return result;
}

}  // namespace spsafs
