#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ets/errors.hpp"

namespace ets {

struct FirmParams {
    double mu = 0.0;     // emission trend, t/yr
    double sigma = 0.0;  // emission volatility, t/yr^(1/2)
    double k = 0.0;      // loading on the common shock
    double h = 0.0;      // linear marginal abatement cost, EUR/t
    double eta = 0.0;    // abatement flexibility, t^2/(EUR yr)

    void validate() const {
        if (!std::isfinite(mu)) throw ConfigError("firm.mu must be finite");
        // sigma = 0 is accepted so that deterministic scenarios can be run.
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("firm.sigma must be >= 0");
        if (!(std::abs(k) <= 1.0)) throw ConfigError("firm.k must satisfy |k| <= 1");
        if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("firm.h must be > 0");
        if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("firm.eta must be > 0");
    }
};

// Market depth. The frictionless market is a separate state, not a large number.
class Depth {
public:
    static Depth frictionless() { return Depth(); }
    static Depth finite(double nu) {
        if (!(nu > 0.0) || !std::isfinite(nu)) throw ConfigError("market depth nu must be > 0 and finite, or \"inf\"");
        Depth d;
        d.nu_ = nu;
        return d;
    }

    bool is_frictionless() const { return !nu_.has_value(); }
    double value() const {
        if (!nu_) throw UnsupportedConfiguration("market depth is infinite; no finite value");
        return *nu_;
    }
    // The frictionless branch of g uses nu = 0 in its denominator.
    double in_g() const { return nu_.value_or(0.0); }

private:
    std::optional<double> nu_;
};

struct Aggregates {
    double h_bar = 0.0;
    double eta_bar = 0.0;
    double H_bar = 0.0;   // mean of eta_i h_i
    double mu_bar = 0.0;
    double sigma_sq = 0.0;  // variance rate of the average shock sigma_i W^i / N
    double sigma_bar_sq = 0.0;  // mean of sigma_i^2
};

inline void check_time(double t, double horizon) {
    if (!(t >= 0.0 && t <= horizon)) throw DomainError("time " + std::to_string(t) + " outside [0, T]");
}

class MarketParams {
public:
    MarketParams(std::vector<FirmParams> firms, double lambda, Depth nu, double horizon, double rho)
        : firms_(std::move(firms)), lambda_(lambda), nu_(nu), horizon_(horizon), rho_(rho) {
        if (firms_.empty()) throw ConfigError("at least one firm is required");
        for (const auto& f : firms_) f.validate();
        if (!(lambda_ > 0.0) || !std::isfinite(lambda_)) throw ConfigError("lambda must be > 0");
        if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) throw ConfigError("horizon must be > 0");
        if (!(rho_ > 0.0 && rho_ < 1.0)) throw ConfigError("rho must lie in (0, 1)");
        compute_aggregates();
        if (!nu_.is_frictionless()) check_pi_denominator();
    }

    const std::vector<FirmParams>& firms() const { return firms_; }
    const FirmParams& firm(std::size_t i) const { return firms_.at(i); }
    std::size_t n() const { return firms_.size(); }
    double lambda() const { return lambda_; }
    const Depth& nu() const { return nu_; }
    double horizon() const { return horizon_; }
    double rho() const { return rho_; }
    const Aggregates& agg() const { return agg_; }

    double correlation(std::size_t i, std::size_t j) const { return firms_.at(i).k * firms_.at(j).k; }

    bool homogeneous_eta() const {
        for (const auto& f : firms_)
            if (f.eta != firms_.front().eta) return false;
        return true;
    }

    MarketParams with_firms(std::vector<FirmParams> firms) const {
        return MarketParams(std::move(firms), lambda_, nu_, horizon_, rho_);
    }
    MarketParams with_lambda(double lambda) const { return MarketParams(firms_, lambda, nu_, horizon_, rho_); }
    MarketParams with_depth(Depth nu) const { return MarketParams(firms_, lambda_, nu, horizon_, rho_); }

    // Sum over firms of g_k(t)/eta_k.
    double sum_g_over_eta(double t) const {
        check_time(t, horizon_);
        double s = 0.0;
        const double tau = horizon_ - t;
        for (const auto& f : firms_) s += 2.0 * lambda_ / (1.0 + 2.0 * lambda_ * (f.eta + nu_.in_g()) * tau);
        return s;
    }

    double pi_denominator(double t) const {
        if (nu_.is_frictionless()) return 1.0;
        return 1.0 - nu_.value() * (horizon_ - t) / static_cast<double>(n()) * sum_g_over_eta(t);
    }

private:
    void compute_aggregates() {
        const double n = static_cast<double>(firms_.size());
        double sk = 0.0, sk2 = 0.0, s2 = 0.0;
        for (const auto& f : firms_) {
            agg_.h_bar += f.h;
            agg_.eta_bar += f.eta;
            agg_.H_bar += f.eta * f.h;
            agg_.mu_bar += f.mu;
            sk += f.k * f.sigma;
            sk2 += f.k * f.k * f.sigma * f.sigma;
            s2 += f.sigma * f.sigma;
        }
        agg_.h_bar /= n;
        agg_.eta_bar /= n;
        agg_.H_bar /= n;
        agg_.mu_bar /= n;
        agg_.sigma_bar_sq = s2 / n;
        // sum_i sigma_i^2 + 2 sum_{i<j} k_i k_j sigma_i sigma_j, written in O(N)
        const double total = s2 + (sk * sk - sk2);
        agg_.sigma_sq = std::max(0.0, total) / (n * n);
    }

    void check_pi_denominator() const {
        constexpr int kPoints = 1000;
        for (int j = 0; j <= kPoints; ++j) {
            const double t = (j == kPoints) ? horizon_ : horizon_ * j / kPoints;
            const double d = pi_denominator(t);
            if (!(d > 0.0))
                throw SingularityError("price coefficient denominator " + std::to_string(d) + " at t=" +
                                       std::to_string(t) + " (lambda=" + std::to_string(lambda_) +
                                       ", nu=" + std::to_string(nu_.value()) + ")");
        }
    }

    std::vector<FirmParams> firms_;
    double lambda_;
    Depth nu_;
    double horizon_;
    double rho_;
    Aggregates agg_;
};

inline double g_coeff(const FirmParams& firm, const MarketParams& mkt, double t) {
    check_time(t, mkt.horizon());
    const double lam = mkt.lambda();
    return 2.0 * lam * firm.eta / (1.0 + 2.0 * lam * (firm.eta + mkt.nu().in_g()) * (mkt.horizon() - t));
}

inline double pi_coeff(const MarketParams& mkt, std::size_t i, double t) {
    const double g = g_coeff(mkt.firm(i), mkt, t);
    const double d = mkt.pi_denominator(t);
    if (!(d > 0.0)) throw SingularityError("price coefficient denominator non-positive at t=" + std::to_string(t));
    return g / mkt.firm(i).eta / d;
}

// All pi_i(t) at once, O(N).
inline void pi_all(const MarketParams& mkt, double t, std::vector<double>& out) {
    const double d = mkt.pi_denominator(t);
    if (!(d > 0.0)) throw SingularityError("price coefficient denominator non-positive at t=" + std::to_string(t));
    out.resize(mkt.n());
    for (std::size_t i = 0; i < mkt.n(); ++i) out[i] = g_coeff(mkt.firm(i), mkt, t) / mkt.firm(i).eta / d;
}

inline double f_coeff(const MarketParams& mkt, double t) {
    check_time(t, mkt.horizon());
    const double lam = mkt.lambda();
    return 2.0 * lam / (1.0 + 2.0 * lam * mkt.agg().eta_bar * (mkt.horizon() - t));
}

// Per-firm expected net allocation that meets the emission target.
inline double ell(const MarketParams& mkt) {
    const auto& a = mkt.agg();
    const double lam = mkt.lambda();
    return -(a.H_bar + (1.0 + 2.0 * lam * a.eta_bar * mkt.horizon()) * (1.0 - mkt.rho()) * a.mu_bar) /
           (2.0 * lam * a.eta_bar);
}

inline double msr_z(double delta, double t, double horizon) {
    if (!(delta > 0.0)) throw DomainError("delta must be > 0");
    check_time(t, horizon);
    return -std::expm1(-delta * (horizon - t)) / delta;
}

inline double msr_F_denominator(const MarketParams& mkt, double delta, double t) {
    const double tau = mkt.horizon() - t;
    return 1.0 - mkt.agg().eta_bar * f_coeff(mkt, t) * (tau - msr_z(delta, t, mkt.horizon()));
}

inline double msr_F(const MarketParams& mkt, double delta, double t) {
    const double d = msr_F_denominator(mkt, delta, t);
    if (!(d > 0.0)) throw SingularityError("reserve price denominator non-positive at t=" + std::to_string(t));
    return f_coeff(mkt, t) / d;
}

inline void check_msr_denominator(const MarketParams& mkt, double delta) {
    constexpr int kPoints = 1000;
    for (int j = 0; j <= kPoints; ++j) {
        const double t = (j == kPoints) ? mkt.horizon() : mkt.horizon() * j / kPoints;
        const double d = msr_F_denominator(mkt, delta, t);
        if (!(d > 0.0))
            throw SingularityError("reserve price denominator " + std::to_string(d) + " at t=" + std::to_string(t) +
                                   " (delta=" + std::to_string(delta) + ")");
    }
}

}  // namespace ets
