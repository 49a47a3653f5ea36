#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "spsafs/rng.hpp"

namespace spsafs {

// Continuous optimizer iterate over [0,1]^p (components may leave the box
// between bounding steps). Plain vector: the engine does arithmetic on it.
using WeightVector = std::vector<double>;

// Simultaneous perturbation directions, every component exactly -1 or +1.
using PerturbationVector = std::vector<int>;

// Binary indicator of a candidate feature subset. Immutable by convention:
// operations return new masks.
class FeatureMask {
public:
    FeatureMask() = default;
    explicit FeatureMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {}

    static FeatureMask all_ones(std::size_t p);
    static FeatureMask from_indices(std::size_t p, const std::vector<std::size_t>& indices);

    std::size_t size() const { return bits_.size(); }
    bool test(std::size_t j) const { return bits_[j] != 0; }
    std::size_t count() const;
    bool none() const { return count() == 0; }

    const std::vector<std::uint8_t>& bits() const { return bits_; }

    // Sorted 0-based indices of the selected features.
    std::vector<std::size_t> indices() const;

    // Bit j of the mask maps to bit j of a big-endian hex string of
    // ceil(p/4) digits, so masks of any width round-trip exactly.
    std::string to_hex() const;
    static FeatureMask from_hex(std::size_t p, const std::string& hex);

    bool operator==(const FeatureMask&) const = default;

private:
    std::vector<std::uint8_t> bits_;
};

// Component-wise clamp into [0,1]. Idempotent.
WeightVector bound(const WeightVector& w);

// Component-wise rounding to {0,1}; the 0.5 tie resolves to 1 (half-up), so
// an untouched all-0.5 start never rounds to the empty subset.
FeatureMask round_mask(const WeightVector& w);

// Draws a p-component +/-1 vector, each component independent with
// probability 1/2, from a stream seeded by `seed`.
PerturbationVector sample_perturbation(std::size_t p, std::uint64_t seed);

enum class TaskKind { classification, regression };

// In-memory dataset: row-major feature matrix, plus either interned integer
// class codes (classification) or a real-valued response (regression).
// Immutable after construction; validated by validate().
struct Dataset {
    std::size_t n = 0;
    std::size_t p = 0;
    std::vector<double> x;                  // n * p, row-major
    std::vector<int> labels;                // classification codes, size n
    std::vector<std::string> label_table;   // code -> original label text
    std::vector<double> y;                  // regression response, size n
    std::vector<std::string> feature_names;
    TaskKind task = TaskKind::classification;

    double at(std::size_t i, std::size_t j) const { return x[i * p + j]; }
    std::size_t n_classes() const { return label_table.size(); }

    // Throws std::invalid_argument on any violated invariant (n >= 2,
    // p >= 1, matching sizes, >= 2 classes for classification, finite cells).
    void validate() const;
};

}  // namespace spsafs
