#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ets/errors.hpp"
#include "ets/params.hpp"
#include "ets/stochastic.hpp"

namespace ets {

// Net allocation of one firm on the grid: realised cumulative A_k and its conditional
// expectation M_k = E_k[A_T]. A_0 is the initial allocation, so X_0 = A_0.
struct AllocationView {
    std::vector<double> m;
    std::vector<double> a;

    // Allocation paid out as it becomes known: A = M.
    static AllocationView tracking(std::vector<double> m) {
        AllocationView v;
        v.a = m;
        v.m = std::move(m);
        return v;
    }
    static AllocationView constant(double value, std::size_t knots) {
        return tracking(std::vector<double>(knots, value));
    }

    double r(std::size_t k) const { return m[k] - a[k]; }

    void validate(const TimeGrid& grid) const {
        if (m.size() != grid.knots() || a.size() != grid.knots())
            throw ConfigError("allocation path length does not match the grid");
        const double scale = std::max({1.0, std::abs(m.back()), std::abs(a.back())});
        if (std::abs(m.back() - a.back()) > 1e-9 * scale)
            throw ConfigError("allocation residual R_T = M_T - A_T must vanish");
    }
};

// Price path on the grid. For a price that is not a martingale the caller supplies
// Pi_k = E_k[sum_j P_j dt], the conditional expectation of its left-point integral.
struct PricePath {
    std::vector<double> values;
    bool martingale = false;
    std::vector<double> conditional_integral;

    static PricePath of_martingale(std::vector<double> p) {
        PricePath out;
        out.values = std::move(p);
        out.martingale = true;
        return out;
    }
    static PricePath with_conditional_integral(std::vector<double> p, std::vector<double> pi) {
        PricePath out;
        out.values = std::move(p);
        out.conditional_integral = std::move(pi);
        return out;
    }

    bool has_conditional_structure() const { return martingale || !conditional_integral.empty(); }
};

struct FirmControls {
    std::vector<double> alpha;  // abatement rate at knots, used on [t_k, t_{k+1})
    std::vector<double> beta;   // trade rate at knots
    std::vector<double> bank;   // X_k
    std::vector<double> trade_martingale;  // frictionless model only
    double terminal_trade = 0.0;           // lump trade booked at T (adapted selection only)
};

enum class BetaSelection { HindsightConstant, Adapted };

struct CostBreakdown {
    double abatement = 0.0;
    double trading = 0.0;
    double penalty = 0.0;
    double total() const { return abatement + trading + penalty; }
};

namespace detail {

inline void check_lengths(const TimeGrid& grid, const PricePath& price, const AllocationView& alloc,
                          std::span<const double> dw) {
    if (price.values.size() != grid.knots()) throw ConfigError("price path length does not match the grid");
    if (!price.conditional_integral.empty() && price.conditional_integral.size() != grid.knots())
        throw ConfigError("conditional integral length does not match the grid");
    if (dw.size() != grid.steps()) throw ConfigError("noise length does not match the grid");
    alloc.validate(grid);
}

// E_k[ sum_{j>=k} P_j dt ]
inline double expected_remaining_integral(const PricePath& price, const TimeGrid& grid, std::size_t k,
                                          double past_integral) {
    if (price.martingale) return grid.remaining(k) * price.values[k];
    return price.conditional_integral[k] - past_integral;
}

inline std::vector<double> integrate_bank(const AllocationView& alloc, const std::vector<double>& alpha,
                                          const std::vector<double>& beta, double sigma,
                                          std::span<const double> dw, double dt, double terminal_trade = 0.0) {
    std::vector<double> x(alloc.a.size());
    x[0] = alloc.a[0];
    for (std::size_t k = 0; k + 1 < x.size(); ++k)
        x[k + 1] = x[k] + (alloc.a[k + 1] - alloc.a[k]) + (alpha[k] + beta[k]) * dt - sigma * dw[k];
    x.back() += terminal_trade;
    return x;
}

}  // namespace detail

// Best response with finite market depth, by left-point stepping of
// d alpha = -g (dM - sigma dW - nu dPi), beta = nu (h + alpha/eta - P).
inline FirmControls best_response_frictions(const FirmParams& firm, const MarketParams& mkt, const TimeGrid& grid,
                                            const PricePath& price, const AllocationView& alloc,
                                            std::span<const double> dw) {
    if (mkt.nu().is_frictionless()) throw UnsupportedConfiguration("best_response_frictions needs a finite nu");
    if (!price.has_conditional_structure())
        throw UnsupportedInput("price is neither a martingale nor supplied with its conditional integral");
    detail::check_lengths(grid, price, alloc, dw);

    const double nu = mkt.nu().value();
    const double lam = mkt.lambda();
    const double T = grid.horizon();
    const std::size_t n = grid.knots();
    const auto& p = price.values;

    auto pi_at = [&](std::size_t k) {
        return price.martingale ? 0.0 : price.conditional_integral[k];
    };

    FirmControls c;
    c.alpha.resize(n);
    c.beta.resize(n);
    const double pi0 = price.martingale ? T * p[0] : pi_at(0);
    c.alpha[0] = -g_coeff(firm, mkt, 0.0) * (firm.h / (2.0 * lam) + alloc.m[0] + nu * (firm.h * T - pi0));
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double dpi = price.martingale ? grid.remaining(k) * (p[k + 1] - p[k]) : pi_at(k + 1) - pi_at(k);
        const double dz = (alloc.m[k + 1] - alloc.m[k]) - firm.sigma * dw[k] - nu * dpi;
        c.alpha[k + 1] = c.alpha[k] - g_coeff(firm, mkt, grid.time(k)) * dz;
    }
    for (std::size_t k = 0; k < n; ++k) c.beta[k] = nu * (firm.h + c.alpha[k] / firm.eta - p[k]);
    c.bank = detail::integrate_bank(alloc, c.alpha, c.beta, firm.sigma, dw, grid.dt());
    return c;
}

// Same best response in feedback form: alpha_k is fixed by the current state
// (allocation expectation, realised trades and shocks, expected remaining price integral).
inline FirmControls best_response_frictions_feedback(const FirmParams& firm, const MarketParams& mkt,
                                                     const TimeGrid& grid, const PricePath& price,
                                                     const AllocationView& alloc, std::span<const double> dw) {
    if (mkt.nu().is_frictionless()) throw UnsupportedConfiguration("feedback best response needs a finite nu");
    if (!price.has_conditional_structure())
        throw UnsupportedInput("price is neither a martingale nor supplied with its conditional integral");
    detail::check_lengths(grid, price, alloc, dw);

    const double nu = mkt.nu().value();
    const double lam = mkt.lambda();
    const double dt = grid.dt();
    const std::size_t n = grid.knots();
    const auto& p = price.values;

    FirmControls c;
    c.alpha.resize(n);
    c.beta.resize(n);
    double traded = 0.0;     // sum_{j<k} (alpha_j + beta_j) dt
    double past_price = 0.0; // sum_{j<k} P_j dt
    double w = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double future = detail::expected_remaining_integral(price, grid, k, past_price);
        const double state = firm.h / (2.0 * lam) + alloc.m[k] + traded - firm.sigma * w +
                             nu * (firm.h * grid.remaining(k) - future);
        c.alpha[k] = -g_coeff(firm, mkt, grid.time(k)) * state;
        c.beta[k] = nu * (firm.h + c.alpha[k] / firm.eta - p[k]);
        if (k + 1 < n) {
            traded += (c.alpha[k] + c.beta[k]) * dt;
            past_price += p[k] * dt;
            w += dw[k];
        }
    }
    c.bank = detail::integrate_bank(alloc, c.alpha, c.beta, firm.sigma, dw, dt);
    return c;
}

struct FocResiduals {
    std::vector<double> abatement;  // h + alpha/eta + 2 lambda E_k[X_T]
    std::vector<double> trading;    // P + beta/nu + 2 lambda E_k[X_T]
    double max_abs() const {
        double m = 0.0;
        for (double v : abatement) m = std::max(m, std::abs(v));
        for (double v : trading) m = std::max(m, std::abs(v));
        return m;
    }
};

// First-order conditions of a frictional response whose alpha is a discrete martingale.
// E_k[X_T] follows from the affine structure: future alpha has conditional mean alpha_k.
inline FocResiduals foc_residuals_frictions(const FirmParams& firm, const MarketParams& mkt, const TimeGrid& grid,
                                            const PricePath& price, const AllocationView& alloc,
                                            std::span<const double> dw, const FirmControls& c) {
    if (!price.has_conditional_structure())
        throw UnsupportedInput("price is neither a martingale nor supplied with its conditional integral");
    detail::check_lengths(grid, price, alloc, dw);
    const double nu = mkt.nu().value();
    const double lam = mkt.lambda();
    const double dt = grid.dt();
    const std::size_t n = grid.knots();

    FocResiduals r;
    r.abatement.resize(n);
    r.trading.resize(n);
    double traded = 0.0, past_price = 0.0, w = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double future = detail::expected_remaining_integral(price, grid, k, past_price);
        const double a = c.alpha[k];
        const double expected_bank = alloc.m[k] + traded - firm.sigma * w +
                                     grid.remaining(k) * (a + nu * (firm.h + a / firm.eta)) - nu * future;
        r.abatement[k] = firm.h + a / firm.eta + 2.0 * lam * expected_bank;
        r.trading[k] = price.values[k] + c.beta[k] / nu + 2.0 * lam * expected_bank;
        if (k + 1 < n) {
            traded += (c.alpha[k] + c.beta[k]) * dt;
            past_price += price.values[k] * dt;
            w += dw[k];
        }
    }
    return r;
}

// Frictionless best response: alpha = eta (P - h) and the total-trade martingale B with
// B_T = sum beta dt. The recursion weights dP by (T - t_{k+1}), which makes the terminal
// condition P_T + 2 lambda X_T = 0 hold exactly on the grid.
inline FirmControls best_response_frictionless(const FirmParams& firm, const MarketParams& mkt, const TimeGrid& grid,
                                               const PricePath& price, const AllocationView& alloc,
                                               std::span<const double> dw,
                                               BetaSelection selection = BetaSelection::HindsightConstant) {
    if (!price.martingale)
        throw NonMartingalePrice("frictionless best response exists only for a martingale price");
    detail::check_lengths(grid, price, alloc, dw);

    const double lam = mkt.lambda();
    const double T = grid.horizon();
    const double dt = grid.dt();
    const std::size_t n = grid.knots();
    const auto& p = price.values;

    FirmControls c;
    c.alpha.resize(n);
    c.beta.assign(n, 0.0);
    c.trade_martingale.resize(n);
    for (std::size_t k = 0; k < n; ++k) c.alpha[k] = firm.eta * (p[k] - firm.h);

    auto& b = c.trade_martingale;
    b[0] = -(p[0] * (1.0 + 2.0 * lam * firm.eta * T) / (2.0 * lam) + alloc.m[0] - firm.eta * firm.h * T);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double weight = 1.0 / (2.0 * lam) + firm.eta * grid.remaining(k + 1);
        b[k + 1] = b[k] - weight * (p[k + 1] - p[k]) - (alloc.m[k + 1] - alloc.m[k]) + firm.sigma * dw[k];
    }

    if (selection == BetaSelection::HindsightConstant) {
        const double rate = b.back() / T;
        std::fill(c.beta.begin(), c.beta.end(), rate);
    } else {
        // Each increment of B is traded evenly over the time left after it is revealed;
        // the increment revealed at T is booked as a lump trade.
        double rate = b[0] / T;
        for (std::size_t k = 0; k < n; ++k) {
            c.beta[k] = rate;
            if (k + 1 < n) {
                const double left = grid.remaining(k + 1);
                const double db = b[k + 1] - b[k];
                if (left > 0.0) rate += db / left;
                else c.terminal_trade = db;
            }
        }
    }
    c.bank = detail::integrate_bank(alloc, c.alpha, c.beta, firm.sigma, dw, dt, c.terminal_trade);
    return c;
}

// P_k + 2 lambda E_k[X_T] for a frictionless response (hindsight or adapted selection).
inline std::vector<double> foc_residuals_frictionless(const FirmParams& firm, const MarketParams& mkt,
                                                      const TimeGrid& grid, const PricePath& price,
                                                      const AllocationView& alloc, std::span<const double> dw,
                                                      const FirmControls& c) {
    detail::check_lengths(grid, price, alloc, dw);
    const double lam = mkt.lambda();
    const double dt = grid.dt();
    std::vector<double> r(grid.knots());
    double abated = 0.0, w = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
        const double expected_bank = alloc.m[k] + abated + grid.remaining(k) * firm.eta * (price.values[k] - firm.h) +
                                     c.trade_martingale[k] - firm.sigma * w;
        r[k] = price.values[k] + 2.0 * lam * expected_bank;
        if (k + 1 < r.size()) {
            abated += c.alpha[k] * dt;
            w += dw[k];
        }
    }
    return r;
}

inline double abatement_cost(const FirmParams& firm, double alpha) {
    return firm.h * alpha + alpha * alpha / (2.0 * firm.eta);
}

// Pathwise cost: left-point quadrature of c(alpha) + P beta (+ beta^2 / (2 nu)) plus lambda X_T^2.
inline CostBreakdown cost_functional(const FirmParams& firm, const MarketParams& mkt, const TimeGrid& grid,
                                     const FirmControls& c, std::span<const double> price) {
    if (c.alpha.size() != grid.knots() || c.beta.size() != grid.knots() || c.bank.size() != grid.knots() ||
        price.size() != grid.knots())
        throw ConfigError("control or price path length does not match the grid");
    const bool frictionless = mkt.nu().is_frictionless();
    const double inv_2nu = frictionless ? 0.0 : 1.0 / (2.0 * mkt.nu().value());
    const double dt = grid.dt();
    CostBreakdown out;
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        out.abatement += abatement_cost(firm, c.alpha[k]) * dt;
        out.trading += (price[k] * c.beta[k] + c.beta[k] * c.beta[k] * inv_2nu) * dt;
    }
    out.trading += price.back() * c.terminal_trade;
    out.penalty = mkt.lambda() * c.bank.back() * c.bank.back();
    return out;
}

}  // namespace ets
