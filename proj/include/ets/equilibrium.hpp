#pragma once

#include <cmath>
#include <vector>

#include "ets/errors.hpp"
#include "ets/firm.hpp"
#include "ets/params.hpp"
#include "ets/stochastic.hpp"

namespace ets {

struct EquilibriumPath {
    std::vector<double> price;
    std::vector<FirmControls> firms;
    std::vector<AllocationView> allocations;
    std::vector<double> emissions;  // cumulative total realised emissions E_k

    std::vector<double> total_bank() const {
        std::vector<double> out(price.size(), 0.0);
        for (const auto& f : firms)
            for (std::size_t k = 0; k < out.size(); ++k) out[k] += f.bank[k];
        return out;
    }
};

enum class PriceStepping {
    LeftPoint,        // Euler: dP_k = -f(t_k) dZ_k
    VarianceMatched,  // loading sqrt(f(t_k) f(t_{k+1})) reproduces the exact step variance
};

struct FrictionlessOptions {
    PriceStepping stepping = PriceStepping::LeftPoint;
    BetaSelection beta = BetaSelection::HindsightConstant;
};

namespace detail {

inline void check_allocations(const MarketParams& mkt, const TimeGrid& grid,
                              const std::vector<AllocationView>& allocations, const NoisePaths& noise) {
    if (allocations.size() != mkt.n()) throw ConfigError("one allocation per firm is required");
    if (noise.n_firms() != mkt.n()) throw ConfigError("noise was generated for a different number of firms");
    if (noise.grid().steps() != grid.steps()) throw ConfigError("noise was generated on a different grid");
    for (const auto& a : allocations) a.validate(grid);
}

}  // namespace detail

inline std::vector<double> total_emissions(const MarketParams& mkt, const TimeGrid& grid,
                                           const std::vector<FirmControls>& firms, const NoisePaths& noise) {
    std::vector<double> e(grid.knots(), 0.0);
    const double dt = grid.dt();
    for (std::size_t i = 0; i < mkt.n(); ++i) {
        const auto& fp = mkt.firm(i);
        const auto dw = noise.firm(i);
        double abated = 0.0, w = 0.0;
        for (std::size_t k = 0; k < grid.knots(); ++k) {
            e[k] += fp.mu * grid.time(k) - abated + fp.sigma * w;
            if (k < grid.steps()) {
                abated += firms[i].alpha[k] * dt;
                w += dw[k];
            }
        }
    }
    return e;
}

// Largest |sum_i beta_i| relative to nu (N|P| + sum_i |h_i + alpha_i/eta_i|) over the knots.
inline double clearing_residual(const MarketParams& mkt, const EquilibriumPath& path) {
    const double nu = mkt.nu().value();
    double worst = 0.0;
    for (std::size_t k = 0; k < path.price.size(); ++k) {
        double sum = 0.0, scale = static_cast<double>(mkt.n()) * std::abs(path.price[k]);
        for (std::size_t i = 0; i < mkt.n(); ++i) {
            sum += path.firms[i].beta[k];
            scale += std::abs(mkt.firm(i).h + path.firms[i].alpha[k] / mkt.firm(i).eta);
        }
        scale *= nu;
        if (scale > 0.0) worst = std::max(worst, std::abs(sum) / scale);
        else worst = std::max(worst, std::abs(sum));
    }
    return worst;
}

inline constexpr double kClearingTolerance = 1e-9;

// Equilibrium with finite depth. Price, efforts and trades are stepped with coefficients
// frozen at t_k, which keeps clearing exact at every knot.
inline EquilibriumPath equilibrium_frictions(const MarketParams& mkt, const TimeGrid& grid,
                                             const std::vector<AllocationView>& allocations,
                                             const NoisePaths& noise) {
    if (mkt.nu().is_frictionless()) throw UnsupportedConfiguration("equilibrium_frictions needs a finite nu");
    detail::check_allocations(mkt, grid, allocations, noise);
    const std::size_t n = mkt.n();
    const std::size_t knots = grid.knots();
    const double nu = mkt.nu().value();
    const double lam = mkt.lambda();
    const double T = grid.horizon();
    const double inv_n = 1.0 / static_cast<double>(n);

    EquilibriumPath out;
    out.allocations = allocations;
    out.price.resize(knots);
    std::vector<double> pi;
    pi_all(mkt, 0.0, pi);
    double p0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& f = mkt.firm(i);
        p0 += pi[i] * (f.eta * f.h * T - allocations[i].m[0]);
    }
    out.price[0] = p0 * inv_n;

    // dZ_i = dM_i - sigma_i dW_i
    auto dz = [&](std::size_t i, std::size_t k) {
        return (allocations[i].m[k + 1] - allocations[i].m[k]) - mkt.firm(i).sigma * noise.firm(i)[k];
    };
    for (std::size_t k = 0; k + 1 < knots; ++k) {
        pi_all(mkt, grid.time(k), pi);
        double dp = 0.0;
        for (std::size_t i = 0; i < n; ++i) dp -= pi[i] * dz(i, k);
        out.price[k + 1] = out.price[k] + dp * inv_n;
    }

    out.firms.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& f = mkt.firm(i);
        auto& c = out.firms[i];
        c.alpha.resize(knots);
        c.beta.resize(knots);
        c.alpha[0] = -g_coeff(f, mkt, 0.0) * (f.h / (2.0 * lam) + allocations[i].m[0] + nu * T * (f.h - out.price[0]));
        for (std::size_t k = 0; k + 1 < knots; ++k) {
            const double dp = out.price[k + 1] - out.price[k];
            c.alpha[k + 1] = c.alpha[k] - g_coeff(f, mkt, grid.time(k)) * (dz(i, k) - nu * grid.remaining(k) * dp);
        }
        for (std::size_t k = 0; k < knots; ++k) c.beta[k] = nu * (f.h + c.alpha[k] / f.eta - out.price[k]);
        c.bank = detail::integrate_bank(allocations[i], c.alpha, c.beta, f.sigma, noise.firm(i), grid.dt());
    }
    out.emissions = total_emissions(mkt, grid, out.firms, noise);

    const double residual = clearing_residual(mkt, out);
    if (!(residual <= kClearingTolerance))
        throw DiagnosticError("market clearing violated: relative residual " + std::to_string(residual));
    return out;
}

// Price implied by the current banks and expected residual allocations under frictions:
// P = (1/N) sum_i pi_i (eta_i h_i (T-t) - X_i - R_i).
inline std::vector<double> price_feedback_frictions(const MarketParams& mkt, const TimeGrid& grid,
                                                    const EquilibriumPath& path) {
    std::vector<double> out(grid.knots());
    std::vector<double> pi;
    for (std::size_t k = 0; k < grid.knots(); ++k) {
        pi_all(mkt, grid.time(k), pi);
        double acc = 0.0;
        for (std::size_t i = 0; i < mkt.n(); ++i) {
            const auto& f = mkt.firm(i);
            acc += pi[i] * (f.eta * f.h * grid.remaining(k) - path.firms[i].bank[k] - path.allocations[i].r(k));
        }
        out[k] = acc / static_cast<double>(mkt.n());
    }
    return out;
}

// Frictionless price path driven by the average allocation martingale and average shock.
inline std::vector<double> frictionless_price(const MarketParams& mkt, const TimeGrid& grid,
                                              const std::vector<AllocationView>& allocations, const NoisePaths& noise,
                                              PriceStepping stepping) {
    const std::size_t n = mkt.n();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double T = grid.horizon();
    std::vector<double> p(grid.knots());
    double m0 = 0.0;
    for (const auto& a : allocations) m0 += a.m[0];
    p[0] = f_coeff(mkt, 0.0) * (T * mkt.agg().H_bar - m0 * inv_n);
    double f_here = f_coeff(mkt, 0.0);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        const double f_next = f_coeff(mkt, grid.time(k + 1));
        const double loading = stepping == PriceStepping::LeftPoint ? f_here : std::sqrt(f_here * f_next);
        double dz = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            dz += (allocations[i].m[k + 1] - allocations[i].m[k]) - mkt.firm(i).sigma * noise.firm(i)[k];
        p[k + 1] = p[k] - loading * dz * inv_n;
        f_here = f_next;
    }
    return p;
}

// Builds the firm responses, banks and emissions around a given martingale price.
inline EquilibriumPath assemble_frictionless(const MarketParams& mkt, const TimeGrid& grid,
                                             std::vector<double> price,
                                             const std::vector<AllocationView>& allocations,
                                             const NoisePaths& noise, BetaSelection beta) {
    EquilibriumPath out;
    out.allocations = allocations;
    const PricePath pp = PricePath::of_martingale(std::move(price));
    out.firms.reserve(mkt.n());
    for (std::size_t i = 0; i < mkt.n(); ++i)
        out.firms.push_back(best_response_frictionless(mkt.firm(i), mkt, grid, pp, allocations[i], noise.firm(i), beta));
    out.price = pp.values;
    out.emissions = total_emissions(mkt, grid, out.firms, noise);
    return out;
}

inline EquilibriumPath equilibrium_frictionless(const MarketParams& mkt, const TimeGrid& grid,
                                                const std::vector<AllocationView>& allocations,
                                                const NoisePaths& noise, FrictionlessOptions options = {}) {
    detail::check_allocations(mkt, grid, allocations, noise);
    auto price = frictionless_price(mkt, grid, allocations, noise, options.stepping);
    return assemble_frictionless(mkt, grid, std::move(price), allocations, noise, options.beta);
}

// Closed-loop price f(t) ((T-t) H_bar - X_bar - R_bar) from the simulated state.
inline std::vector<double> price_closed_loop_frictionless(const MarketParams& mkt, const TimeGrid& grid,
                                                          const EquilibriumPath& path) {
    const double inv_n = 1.0 / static_cast<double>(mkt.n());
    std::vector<double> out(grid.knots());
    for (std::size_t k = 0; k < grid.knots(); ++k) {
        double xr = 0.0;
        for (std::size_t i = 0; i < mkt.n(); ++i) xr += path.firms[i].bank[k] + path.allocations[i].r(k);
        out[k] = f_coeff(mkt, grid.time(k)) * (grid.remaining(k) * mkt.agg().H_bar - xr * inv_n);
    }
    return out;
}

}  // namespace ets
