#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ets/errors.hpp"
#include "ets/params.hpp"

namespace ets {

using Matrix = std::vector<std::vector<double>>;

enum class PolicyKind { OptimalDynamic, StaticETS, PureTax, MSRLike, CustomMartingale };

inline std::string policy_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::OptimalDynamic: return "optimal_dynamic";
        case PolicyKind::StaticETS: return "static";
        case PolicyKind::PureTax: return "tax";
        case PolicyKind::MSRLike: return "msr";
        case PolicyKind::CustomMartingale: return "custom";
    }
    return "unknown";
}

inline PolicyKind parse_policy_kind(const std::string& s) {
    if (s == "optimal_dynamic" || s == "optimal") return PolicyKind::OptimalDynamic;
    if (s == "static") return PolicyKind::StaticETS;
    if (s == "tax") return PolicyKind::PureTax;
    if (s == "msr") return PolicyKind::MSRLike;
    if (s == "custom") return PolicyKind::CustomMartingale;
    throw ConfigError("unknown policy kind '" + s + "' (expected optimal_dynamic, static, tax, msr or custom)");
}

struct PolicySpec {
    PolicyKind kind = PolicyKind::OptimalDynamic;
    double delta = 0.1;        // MSR mean-reversion speed, 1/yr
    std::vector<double> m0;    // custom: initial allocation expectation per firm
    Matrix gamma;              // custom: N x (N+1) loadings on (W~0, W~1, ..., W~N)
    bool require_target = false;

    static PolicySpec of(PolicyKind k) {
        PolicySpec s;
        s.kind = k;
        return s;
    }
    static PolicySpec optimal() { return of(PolicyKind::OptimalDynamic); }
    static PolicySpec static_ets() { return of(PolicyKind::StaticETS); }
    static PolicySpec tax() { return of(PolicyKind::PureTax); }
    static PolicySpec msr(double delta) {
        auto s = of(PolicyKind::MSRLike);
        s.delta = delta;
        return s;
    }
    static PolicySpec custom(std::vector<double> m0, Matrix gamma, bool require_target = true) {
        auto s = of(PolicyKind::CustomMartingale);
        s.m0 = std::move(m0);
        s.gamma = std::move(gamma);
        s.require_target = require_target;
        return s;
    }

    std::string name() const { return policy_name(kind); }
};

inline double target_emissions(const MarketParams& mkt) {
    return mkt.rho() * mkt.horizon() * static_cast<double>(mkt.n()) * mkt.agg().mu_bar;
}

// Constant price that meets the emission target.
inline double target_price(const MarketParams& mkt) {
    const auto& a = mkt.agg();
    return (a.H_bar + (1.0 - mkt.rho()) * a.mu_bar) / a.eta_bar;
}

// Cost of a frictionless market whose price is P0 + int f dD with d<D> = s2 dt:
// (N/(4 lambda))(1 + 2 lambda eta_bar T) P0^2 + (N s2 / (2 eta_bar)) ln(1 + 2 lambda eta_bar T) - (T/2) sum eta_i h_i^2
inline double frictionless_cost(const MarketParams& mkt, double p0, double s2) {
    const double n = static_cast<double>(mkt.n());
    const double lam = mkt.lambda();
    const double T = mkt.horizon();
    const double eb = mkt.agg().eta_bar;
    double sum_eh2 = 0.0;
    for (const auto& f : mkt.firms()) sum_eh2 += f.eta * f.h * f.h;
    return n / (4.0 * lam) * (1.0 + 2.0 * lam * eb * T) * p0 * p0 + n * s2 / (2.0 * eb) * std::log1p(2.0 * lam * eb * T) -
           0.5 * T * sum_eh2;
}

struct OptimalPolicy {
    double p0 = 0.0;
    double ell = 0.0;
    std::vector<double> m0;
    Matrix gamma;
    std::vector<double> alpha;
    std::vector<double> beta;
    double cost = 0.0;
};

inline OptimalPolicy optimal_dynamic_policy(const MarketParams& mkt) {
    const std::size_t n = mkt.n();
    const double lam = mkt.lambda();
    const double T = mkt.horizon();
    OptimalPolicy out;
    out.p0 = target_price(mkt);
    out.ell = ell(mkt);
    out.m0.assign(n, out.ell);
    out.gamma.assign(n, std::vector<double>(n + 1, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& f = mkt.firm(i);
        out.gamma[i][0] = f.sigma * f.k;
        out.gamma[i][i + 1] = f.sigma * std::sqrt(1.0 - f.k * f.k);
        out.alpha.push_back(f.eta * (out.p0 - f.h));
        out.beta.push_back(-((1.0 + 2.0 * lam * f.eta * T) * out.p0 / (2.0 * lam) + out.ell - f.eta * f.h * T) / T);
    }
    out.cost = frictionless_cost(mkt, out.p0, 0.0);
    return out;
}

struct GammaCheck {
    bool ok = false;
    std::vector<double> residuals;  // column sums minus the exposures to remove
};

inline GammaCheck check_gamma_optimality(const Matrix& gamma, const std::vector<FirmParams>& firms) {
    const std::size_t n = firms.size();
    if (gamma.size() != n) throw ConfigError("gamma must have one row per firm");
    for (const auto& row : gamma)
        if (row.size() != n + 1) throw ConfigError("gamma rows must have N+1 columns");
    GammaCheck out;
    out.ok = true;
    out.residuals.resize(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        double target = 0.0;
        if (j == 0) {
            for (const auto& f : firms) target += f.sigma * f.k;
        } else {
            const auto& f = firms[j - 1];
            target = f.sigma * std::sqrt(1.0 - f.k * f.k);
        }
        double sum = 0.0, scale = std::abs(target);
        for (std::size_t i = 0; i < n; ++i) {
            sum += gamma[i][j];
            scale += std::abs(gamma[i][j]);
        }
        out.residuals[j] = sum - target;
        if (std::abs(out.residuals[j]) > 1e-12 * scale) out.ok = false;
    }
    return out;
}

inline void require_homogeneous_eta(const MarketParams& mkt, const char* what) {
    if (!mkt.homogeneous_eta())
        throw UnsupportedConfiguration(std::string(what) + " requires equal eta across firms");
}

inline double static_qv(double sigma_sq, double lambda, double eta, double T) {
    return 4.0 * lambda * lambda * sigma_sq * T / (1.0 + 2.0 * lambda * eta * T);
}

struct StaticPolicy {
    double x0_bar = 0.0;  // initial endowment per firm
    double p0 = 0.0;
    double cost = 0.0;
    double delta = 0.0;   // excess over the optimal cost
    double qv_T = 0.0;
};

inline StaticPolicy static_policy(const MarketParams& mkt) {
    require_homogeneous_eta(mkt, "static allocation");
    const auto& a = mkt.agg();
    const double lam = mkt.lambda();
    const double T = mkt.horizon();
    const double eta = a.eta_bar;
    const double n = static_cast<double>(mkt.n());
    StaticPolicy out;
    out.x0_bar = T * mkt.rho() * a.mu_bar - (a.h_bar + (1.0 - mkt.rho()) * a.mu_bar / eta) / (2.0 * lam);
    out.p0 = 2.0 * lam / (1.0 + 2.0 * lam * eta * T) * (T * eta * a.h_bar - out.x0_bar + T * a.mu_bar);
    out.delta = n * a.sigma_sq / (2.0 * eta) * std::log1p(2.0 * lam * eta * T);
    out.cost = frictionless_cost(mkt, out.p0, a.sigma_sq);
    out.qv_T = static_qv(a.sigma_sq, lam, eta, T);

    const double optimal = frictionless_cost(mkt, target_price(mkt), 0.0);
    if (std::abs(out.cost - optimal - out.delta) > 1e-12 * std::abs(out.cost))
        throw DiagnosticError("static cost identity violated");
    return out;
}

// Per-firm limit of the static excess cost for many firms with per-firm volatility sigma_bar
// and pairwise correlation rho_bar.
inline double large_n_limit_delta(double sigma_bar, double rho_bar, double eta, double lambda, double T) {
    if (!(sigma_bar >= 0.0 && eta > 0.0 && lambda > 0.0 && T > 0.0)) throw DomainError("parameters must be positive");
    return rho_bar * sigma_bar * sigma_bar / (2.0 * eta) * std::log1p(2.0 * lambda * eta * T);
}

inline double estimate_eta_from_qv(double qv, double sigma_sq, double lambda, double T) {
    const double cap = 4.0 * lambda * lambda * sigma_sq * T;
    if (!(qv > 0.0 && qv < cap))
        throw InfeasibleObservation("quadratic variation must lie in (0, 4 lambda^2 sigma^2 T) = (0, " +
                                    std::to_string(cap) + ")");
    return (cap - qv) / (2.0 * lambda * T * qv);
}

struct TaxPolicy {
    double tau = 0.0;
    std::vector<double> alpha;
    double cost = 0.0;
    double break_even_lambda = 0.0;  // tax is cheaper than the optimal policy below this lambda
};

inline TaxPolicy tax_policy(const MarketParams& mkt) {
    require_homogeneous_eta(mkt, "pure tax");
    const auto& a = mkt.agg();
    const double eta = a.eta_bar;
    const double T = mkt.horizon();
    const double n = static_cast<double>(mkt.n());
    TaxPolicy out;
    out.tau = a.h_bar + (1.0 - mkt.rho()) * a.mu_bar / eta;
    double sum_h2 = 0.0;
    for (const auto& f : mkt.firms()) {
        out.alpha.push_back(eta * (out.tau - f.h));
        sum_h2 += f.h * f.h;
    }
    out.cost = n * T * (0.5 * eta * out.tau * out.tau - eta / (2.0 * n) * sum_h2 + mkt.rho() * a.mu_bar * out.tau);
    out.break_even_lambda = out.tau / (4.0 * mkt.rho() * a.mu_bar * T);
    return out;
}

struct MsrPolicy {
    double delta = 0.0;
    double x0_bar = 0.0;  // initial endowment per firm
    double p0 = 0.0;
    double q = 0.0;       // eta h_bar - x0_bar / T
    double drift = 0.0;   // eta (P0 - h_bar) + x0_bar / T
};

inline MsrPolicy msr_policy(const MarketParams& mkt, double delta) {
    if (!(delta > 0.0)) throw ConfigError("msr delta must be > 0");
    require_homogeneous_eta(mkt, "reserve mechanism");
    for (const auto& f : mkt.firms())
        if (f.h != mkt.firm(0).h || f.sigma != mkt.firm(0).sigma)
            throw UnsupportedConfiguration("reserve mechanism requires identical firms (sigma, eta, h)");
    check_msr_denominator(mkt, delta);
    const auto& a = mkt.agg();
    const double T = mkt.horizon();
    const double eta = a.eta_bar;
    MsrPolicy out;
    out.delta = delta;
    const double p_target = target_price(mkt);
    const double tail = T + std::expm1(-delta * T) / delta;  // T - z(0)
    out.x0_bar = delta * T / (-std::expm1(-delta * T)) * (ell(mkt) + tail * eta * (p_target - a.h_bar));
    out.q = eta * a.h_bar - out.x0_bar / T;
    out.p0 = msr_F(mkt, delta, 0.0) * msr_z(delta, 0.0, T) * out.q;
    out.drift = eta * (out.p0 - a.h_bar) + out.x0_bar / T;
    return out;
}

// Expected gap between the target ramp (T-t) x0/T and the average bank.
inline double msr_mean_gap(const MsrPolicy& p, double t) {
    return -p.drift * (-std::expm1(-p.delta * t)) / p.delta;
}

// Price loading of the reserve mechanism: dP = F(t) (1 - delta z(t)) dW_bar.
inline double msr_price_loading(const MarketParams& mkt, double delta, double t) {
    return msr_F(mkt, delta, t) * std::exp(-delta * (mkt.horizon() - t));
}

}  // namespace ets
