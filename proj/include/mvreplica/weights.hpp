/**
 * @file weights.hpp
 * @brief Ensemble distribution of optimal portfolio weights over samples.
 *
 * Asset i contributes, with mixture weight 1/N, a Gaussian of width std_i
 * centred at center_pos_i restricted to w > 0, a Gaussian centred at
 * center_neg_i restricted to w < 0, and an atom at w = 0 carrying the rest.
 * The atom is kept as an explicit mass, never smeared into a narrow peak.
 */
#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "mvreplica/replica.hpp"
#include "mvreplica/specfun.hpp"

namespace mvreplica {

struct MixtureComponent {
    double center_pos;
    double center_neg;  ///< +inf: no negative branch
    double std;
    double weight;  ///< 1/N
};

struct WeightMixture {
    double n0 = 0.0;
    std::vector<MixtureComponent> components;

    /// Probability mass of the continuous part on (lo, hi); the atom is excluded.
    double continuous_mass(double lo, double hi) const {
        if (!(hi > lo)) return 0.0;
        double m = 0.0;
        for (const auto& c : components) {
            // positive branch on (max(lo,0), hi)
            const double plo = std::max(lo, 0.0);
            if (hi > plo) m += c.weight * interval_mass(c.center_pos, c.std, plo, hi);
            // negative branch on (lo, min(hi,0))
            const double nhi = std::min(hi, 0.0);
            if (nhi > lo && std::isfinite(c.center_neg)) m += c.weight * interval_mass(c.center_neg, c.std, lo, nhi);
        }
        return m;
    }

    /// Mass of the positive and negative branches (each over its half line).
    double positive_mass() const {
        double m = 0.0;
        for (const auto& c : components) m += c.weight * specfun::Phi(c.center_pos / c.std);
        return m;
    }
    double negative_mass() const {
        double m = 0.0;
        for (const auto& c : components)
            if (std::isfinite(c.center_neg)) m += c.weight * specfun::Phi(-c.center_neg / c.std);
        return m;
    }

private:
    static double interval_mass(double mu, double sd, double lo, double hi) {
        const double zl = (lo - mu) / sd;
        const double zh = (hi - mu) / sd;
        // Difference of upper tails is more accurate above the mean.
        if (zl > 0.0) return specfun::Phi(-zl) - specfun::Phi(-zh);
        return specfun::Phi(zh) - specfun::Phi(zl);
    }
};

inline WeightMixture build_mixture(const ReplicaSolution& sol, const RegularizerParams& reg) {
    WeightMixture mix;
    const double weight = 1.0 / static_cast<double>(sol.per_asset.size());
    double n0 = 0.0;
    for (const auto& law : sol.per_asset) {
        const double neg = reg.bans_shorts() ? std::numeric_limits<double>::infinity() : law.center_neg;
        mix.components.push_back({law.center_pos, neg, law.std, weight});
        n0 += weight * law.elimination;
    }
    mix.n0 = n0;
    return mix;
}

/// Continuous part of the weight density at w (the atom at 0 is reported by mix.n0).
inline double density(const WeightMixture& mix, double w) {
    double p = 0.0;
    for (const auto& c : mix.components) {
        const double center = w >= 0.0 ? c.center_pos : c.center_neg;
        if (!std::isfinite(center)) continue;
        p += c.weight * specfun::normal_pdf((w - center) / c.std) / c.std;
    }
    return p;
}

/// Probability that asset i's estimated weight is exactly zero.
inline double elimination_probability(const ReplicaSolution& sol, std::size_t asset_index) {
    if (asset_index >= sol.per_asset.size()) throw std::out_of_range("asset index out of range");
    return sol.per_asset[asset_index].elimination;
}

/**
 * I.i.d. draws from the mixture. An asset is picked uniformly, then
 * w = center_pos + std z if that is positive, center_neg + std z if that is
 * negative, and 0 otherwise. This is the exact law of the thresholded
 * Gaussian, so the atom frequency converges to n0.
 */
template <class URBG>
std::vector<double> sample_weights(const WeightMixture& mix, std::size_t count, URBG& rng) {
    if (count == 0) throw std::invalid_argument("sample count must be >= 1");
    std::vector<double> out;
    out.reserve(count);
    if (mix.components.empty()) {
        out.assign(count, 0.0);
        return out;
    }
    std::uniform_int_distribution<std::size_t> pick(0, mix.components.size() - 1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t k = 0; k < count; ++k) {
        const auto& c = mix.components[pick(rng)];
        const double z = c.std * gauss(rng);
        const double pos = c.center_pos + z;
        const double neg = c.center_neg + z;
        if (pos > 0.0) out.push_back(pos);
        else if (neg < 0.0) out.push_back(neg);
        else out.push_back(0.0);
    }
    return out;
}

}  // namespace mvreplica
