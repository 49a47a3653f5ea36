#include "spsafs/rng.hpp"

#include <cmath>

namespace spsafs {

std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                          std::uint64_t index) noexcept {
    std::uint64_t h = mix64(root);
    for (unsigned char c : label) {
        h = mix64(h ^ static_cast<std::uint64_t>(c));
    }
    return mix64(h ^ index);
}

double Xoshiro256::normal() noexcept {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;  // log(0) guard
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    cached_normal_ = radius * std::sin(angle);
    has_cached_normal_ = true;
    return radius * std::cos(angle);
}

std::uint64_t Xoshiro256::below(std::uint64_t bound) noexcept {
    if (bound < 2) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % bound;
    std::uint64_t draw;
    do {
        draw = next();
    } while (draw >= limit);
    return draw % bound;
}

}  // namespace spsafs
