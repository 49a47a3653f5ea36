#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "spsafs/core.hpp"
#include "spsafs/spsa.hpp"

namespace spsafs {

// Fair-comparison accounting: one LossEvaluator::evaluate call costs one
// budget unit for every search method.
struct SearchBudget {
    std::size_t max_evaluations = std::numeric_limits<std::size_t>::max();
    // When set, sequential searches keep stepping toward exactly this size
    // even without improvement (top-m ranking protocol).
    std::optional<std::size_t> target_subset_size;

    void validate() const;
};

struct SearchStep {
    std::size_t step = 0;
    bool added = true;  // false = removed
    std::size_t feature = 0;
    double loss = 0.0;  // loss of the subset after this step
};

struct SearchResult {
    FeatureMask mask;
    double loss = std::numeric_limits<double>::infinity();
    std::vector<SearchStep> steps;   // accepted steps in order
    std::size_t evaluations = 0;
    bool truncated = false;          // budget ran out mid-step
    // Order in which features entered the subset (forward searches) or the
    // survivors by removal order reversed (backward); used by the ranking
    // protocols.
    std::vector<std::size_t> insertion_order;
};

// Sequential forward selection: greedily add the feature minimizing the
// evaluated loss, starting against the empty-set baseline loss of 1.0; stop
// once no addition strictly improves. Ties break toward the lower feature
// index. A truncated run returns the best subset evaluated so far.
SearchResult sfs(const LossEvaluator& evaluator, std::size_t p, const SearchBudget& budget,
                 std::uint64_t noise_seed);

// Sequential backward selection from the full set; never removes the last
// feature.
SearchResult sbs(const LossEvaluator& evaluator, std::size_t p, const SearchBudget& budget,
                 std::uint64_t noise_seed);

// Floating variants: after each accepted forward (resp. backward) step, take
// conditional backward (resp. forward) steps while they strictly improve the
// best loss seen at the resulting subset size.
SearchResult sffs(const LossEvaluator& evaluator, std::size_t p, const SearchBudget& budget,
                  std::uint64_t noise_seed);
SearchResult sfbs(const LossEvaluator& evaluator, std::size_t p, const SearchBudget& budget,
                  std::uint64_t noise_seed);

struct RankedFeature {
    std::size_t feature = 0;
    double score = 0.0;
};

// Filter ranking by |Pearson r(X_j, Y)|, descending; classification labels
// enter as their numeric codes. Zero-variance columns score 0. Ties keep
// the lower index first.
std::vector<RankedFeature> rank_correlation(const Dataset& data);

struct ReliefResult {
    std::vector<RankedFeature> ranking;
    // Set when some sampled instance had no same-class partner, so its hit
    // term was skipped.
    bool hit_term_skipped = false;
};

// Classic RELIEF: per sampled instance, the nearest hit and nearest miss
// under range-normalized Euclidean distance over all features update each
// feature weight by (|x_j - miss_j| - |x_j - hit_j|) / range_j; weights are
// then divided by the number of samples. num_samples >= n means every
// instance is used once, in order (fully deterministic); fewer samples are
// drawn without replacement from the seeded stream.
ReliefResult rank_relief(const Dataset& data, std::size_t num_samples, std::uint64_t seed);

// Evaluates every non-empty subset (2^p - 1 of them, p <= 20) under one
// noise seed. Ties prefer fewer features, then the lexicographically
// smaller index set.
SearchResult exhaustive_best(const LossEvaluator& evaluator, std::size_t p,
                             std::uint64_t noise_seed);

}  // namespace spsafs
