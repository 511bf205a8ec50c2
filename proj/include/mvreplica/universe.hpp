#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace mvreplica {

/**
 * True per-asset standard deviations of independent, zero-mean returns.
 *
 * Normalization used throughout the library:
 *  - portfolio weights sum to N (the number of assets), so each weight is O(1);
 *  - a single return x_it has variance sigma_i^2 / N;
 *  - r = N / T where T is the sample length.
 *
 * With this convention the in-sample variance w'Cw of the estimated portfolio
 * equals r * lambda, and f = lambda / 2 is the free energy per asset.
 */
class AssetUniverse {
public:
    explicit AssetUniverse(std::vector<double> sigmas) : sigmas_(std::move(sigmas)) {
        if (sigmas_.empty()) throw std::invalid_argument("asset universe must contain at least one asset");
        for (double s : sigmas_) {
            if (!(s > 0.0) || !std::isfinite(s))
                throw std::invalid_argument("asset standard deviations must be positive and finite");
        }
        double inv = 0.0;
        double inv2 = 0.0;
        for (double s : sigmas_) {
            inv += 1.0 / s;
            inv2 += 1.0 / (s * s);
        }
        c1_ = inv / static_cast<double>(sigmas_.size());
        c2_ = inv2 / static_cast<double>(sigmas_.size());
    }

    /// N identical assets with standard deviation `sigma`.
    static AssetUniverse uniform(std::size_t n, double sigma = 1.0) {
        return AssetUniverse(std::vector<double>(n, sigma));
    }

    std::size_t size() const noexcept { return sigmas_.size(); }
    double sigma(std::size_t i) const { return sigmas_.at(i); }
    std::span<const double> sigmas() const noexcept { return sigmas_; }

    /// (1/N) sum 1/sigma_i
    double c1() const noexcept { return c1_; }
    /// (1/N) sum 1/sigma_i^2
    double c2() const noexcept { return c2_; }

    /// Copy with every sigma multiplied by `s`.
    AssetUniverse scaled(double s) const {
        std::vector<double> out(sigmas_);
        for (double& v : out) v *= s;
        return AssetUniverse(std::move(out));
    }

private:
    std::vector<double> sigmas_;
    double c1_ = 0.0;
    double c2_ = 0.0;
};

/// Asymmetric l1 penalty: eta1 on positive weights, eta2 on negative weights.
/// eta2 = +infinity is the no-short ban.
struct RegularizerParams {
    double eta1 = 0.0;
    double eta2 = 0.0;

    static RegularizerParams none() { return {0.0, 0.0}; }
    static RegularizerParams no_short() { return {0.0, std::numeric_limits<double>::infinity()}; }

    bool bans_shorts() const noexcept { return std::isinf(eta2) && eta2 > 0; }
    bool is_unconstrained() const noexcept { return eta1 == 0.0 && eta2 == 0.0; }
    bool is_pure_no_short() const noexcept { return eta1 == 0.0 && bans_shorts(); }

    void validate() const {
        if (!(eta1 >= 0.0) || !std::isfinite(eta1)) throw std::invalid_argument("eta1 must be finite and >= 0");
        if (!(eta2 >= 0.0)) throw std::invalid_argument("eta2 must be >= 0 or infinite");
    }
};

/// Complete-information optimum: weights proportional to 1/sigma_i^2, summing to N.
struct TrueOptimum {
    std::vector<double> weights;
    double risk;  ///< sum_i sigma_i^2 w_i^2 = N / c2
};

inline TrueOptimum true_optimum(const AssetUniverse& u) {
    const double n = static_cast<double>(u.size());
    TrueOptimum out;
    out.weights.reserve(u.size());
    for (double s : u.sigmas()) out.weights.push_back(1.0 / (s * s * u.c2()));
    out.risk = n / u.c2();
    return out;
}

}  // namespace mvreplica
