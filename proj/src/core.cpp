#include "spsafs/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spsafs {

FeatureMask FeatureMask::all_ones(std::size_t p) {
    return FeatureMask(std::vector<std::uint8_t>(p, 1));
}

FeatureMask FeatureMask::from_indices(std::size_t p, const std::vector<std::size_t>& indices) {
    std::vector<std::uint8_t> bits(p, 0);
    for (std::size_t j : indices) {
        if (j >= p) throw std::invalid_argument("feature index out of range");
        bits[j] = 1;
    }
    return FeatureMask(std::move(bits));
}

std::size_t FeatureMask::count() const {
    std::size_t c = 0;
    for (auto b : bits_) c += b;
    return c;
}

std::vector<std::size_t> FeatureMask::indices() const {
    std::vector<std::size_t> out;
    out.reserve(count());
    for (std::size_t j = 0; j < bits_.size(); ++j) {
        if (bits_[j]) out.push_back(j);
    }
    return out;
}

std::string FeatureMask::to_hex() const {
    const std::size_t p = bits_.size();
    const std::size_t digits = (p + 3) / 4;
    std::string out(digits, '0');
    static const char* kHex = "0123456789abcdef";
    for (std::size_t j = 0; j < p; ++j) {
        if (!bits_[j]) continue;
        const std::size_t nibble = j / 4;
        const int bit = static_cast<int>(j % 4);
        // digit 0 of the string is the most significant nibble
        const std::size_t pos = digits - 1 - nibble;
        const int value = (out[pos] <= '9') ? out[pos] - '0' : out[pos] - 'a' + 10;
        out[pos] = kHex[value | (1 << bit)];
    }
    return out;
}

FeatureMask FeatureMask::from_hex(std::size_t p, const std::string& hex) {
    const std::size_t digits = (p + 3) / 4;
    if (hex.size() != digits) throw std::invalid_argument("mask hex width mismatch");
    std::vector<std::uint8_t> bits(p, 0);
    for (std::size_t pos = 0; pos < digits; ++pos) {
        const char c = hex[pos];
        int value;
        if (c >= '0' && c <= '9') value = c - '0';
        else if (c >= 'a' && c <= 'f') value = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') value = c - 'A' + 10;
        else throw std::invalid_argument("invalid hex digit in mask");
        const std::size_t nibble = digits - 1 - pos;
        for (int bit = 0; bit < 4; ++bit) {
            if (!(value & (1 << bit))) continue;
            const std::size_t j = nibble * 4 + static_cast<std::size_t>(bit);
            if (j >= p) throw std::invalid_argument("mask hex sets bit past p");
            bits[j] = 1;
        }
    }
    return FeatureMask(std::move(bits));
}

WeightVector bound(const WeightVector& w) {
    WeightVector out(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) {
        out[j] = std::clamp(w[j], 0.0, 1.0);
    }
    return out;
}

FeatureMask round_mask(const WeightVector& w) {
    std::vector<std::uint8_t> bits(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) {
        bits[j] = w[j] >= 0.5 ? 1 : 0;
    }
    return FeatureMask(std::move(bits));
}

PerturbationVector sample_perturbation(std::size_t p, std::uint64_t seed) {
    Xoshiro256 rng(seed);
    PerturbationVector delta(p);
    for (auto& d : delta) d = rng.sign();
    return delta;
}

void Dataset::validate() const {
    if (n < 2) throw std::invalid_argument("dataset needs at least 2 rows");
    if (p < 1) throw std::invalid_argument("dataset needs at least 1 feature");
    if (x.size() != n * p) throw std::invalid_argument("feature matrix size mismatch");
    if (feature_names.size() != p) throw std::invalid_argument("feature name count mismatch");
    for (double v : x) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");
    }
    if (task == TaskKind::classification) {
        if (labels.size() != n) throw std::invalid_argument("label column size mismatch");
        if (label_table.size() < 2) throw std::invalid_argument("classification needs >= 2 classes");
        for (int code : labels) {
            if (code < 0 || static_cast<std::size_t>(code) >= label_table.size())
                throw std::invalid_argument("label code out of range");
        }
    } else {
        if (y.size() != n) throw std::invalid_argument("response column size mismatch");
        for (double v : y) {
            if (!std::isfinite(v)) throw std::invalid_argument("non-finite response value");
        }
    }
}

}  // namespace spsafs
