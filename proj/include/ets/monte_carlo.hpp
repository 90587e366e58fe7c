#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ets/equilibrium.hpp"
#include "ets/errors.hpp"
#include "ets/firm.hpp"
#include "ets/parallel.hpp"
#include "ets/policies.hpp"
#include "ets/quadrature.hpp"
#include "ets/stochastic.hpp"

namespace ets {

enum class MsrScheme {
    ExactLaw,      // Gaussian price with variance-matched steps; bank gap read off the price
    CoupledEuler,  // left-point Euler on the coupled (bank gap, price) system
};

struct SimulationOptions {
    PriceStepping stepping = PriceStepping::VarianceMatched;
    BetaSelection beta = BetaSelection::HindsightConstant;
    MsrScheme msr = MsrScheme::ExactLaw;
};

struct PolicyPath {
    std::vector<double> price;
    std::vector<double> total_bank;
    std::vector<double> total_emissions;
    std::vector<double> avg_abatement;
    std::vector<double> gross_allocation_change;  // sum_i (A~_i(t) - A~_i(0)), A~ = A + mu t
    CostBreakdown cost;
    double tax = 0.0;
    double qv = 0.0;  // realised quadratic variation of the price

    double social_cost() const { return cost.total() + tax; }
    double terminal_emissions() const { return total_emissions.back(); }
};

// Simulates one policy on a fixed grid. Construction precomputes everything that does not
// depend on the noise, so run() can be called for many paths.
class PolicySimulator {
public:
    PolicySimulator(const MarketParams& mkt, PolicySpec spec, const TimeGrid& grid, SimulationOptions opts = {})
        : mkt_(mkt), spec_(std::move(spec)), grid_(grid), opts_(opts) {
        if (std::abs(grid.horizon() - mkt.horizon()) > 1e-12 * mkt.horizon())
            throw ConfigError("grid horizon differs from the market horizon");
        const bool frictionless = mkt.nu().is_frictionless();
        switch (spec_.kind) {
            case PolicyKind::OptimalDynamic: {
                const auto opt = optimal_dynamic_policy(mkt);
                m0_ = opt.m0;
                gamma_ = opt.gamma;
                driver_var_ = 0.0;
                if (frictionless) closed_form_ = opt.cost;
                break;
            }
            case PolicyKind::StaticETS: {
                const auto st = static_policy(mkt);
                static_ = st;
                driver_var_ = mkt.agg().sigma_sq;
                if (frictionless) closed_form_ = st.cost;
                break;
            }
            case PolicyKind::CustomMartingale: {
                check_gamma_shape();
                m0_ = spec_.m0;
                gamma_ = spec_.gamma;
                if (spec_.require_target) {
                    double s = 0.0;
                    for (double v : m0_) s += v;
                    const double want = static_cast<double>(mkt.n()) * ell(mkt);
                    if (std::abs(s - want) > 1e-9 * std::abs(want))
                        throw ConfigError("custom allocation misses the emission target: sum of M0 must equal N * ell");
                }
                driver_var_ = custom_driver_variance();
                double m0_bar = 0.0;
                for (double v : m0_) m0_bar += v;
                m0_bar /= static_cast<double>(mkt.n());
                const double p0 = f_coeff(mkt, 0.0) * (mkt.horizon() * mkt.agg().H_bar - m0_bar);
                if (frictionless) closed_form_ = frictionless_cost(mkt, p0, driver_var_);
                break;
            }
            case PolicyKind::PureTax: {
                tax_ = tax_policy(mkt);
                closed_form_ = tax_->cost;
                break;
            }
            case PolicyKind::MSRLike: {
                if (!frictionless) throw UnsupportedConfiguration("reserve mechanism is defined for the frictionless market");
                msr_ = msr_policy(mkt, spec_.delta);
                driver_var_ = mkt.agg().sigma_sq;
                const double delta = spec_.delta;
                if (opts_.msr == MsrScheme::ExactLaw) {
                    schedule_ = VolatilitySchedule::build(grid, [&](double t) { return msr_price_loading(mkt_, delta, t); });
                    loading_at_knot_.resize(grid.knots());
                    for (std::size_t k = 0; k < grid.knots(); ++k)
                        loading_at_knot_[k] = msr_price_loading(mkt, delta, grid.time(k));
                }
                break;
            }
        }
        if (spec_.kind == PolicyKind::StaticETS || spec_.kind == PolicyKind::CustomMartingale) {
            if (frictionless && opts_.stepping == PriceStepping::VarianceMatched && driver_var_ > 0.0)
                schedule_ = VolatilitySchedule::build(grid, [&](double t) { return f_coeff(mkt_, t); });
        }
    }

    const PolicySpec& spec() const { return spec_; }
    const TimeGrid& grid() const { return grid_; }
    std::optional<double> closed_form_cost() const { return closed_form_; }

    double initial_price() const {
        switch (spec_.kind) {
            case PolicyKind::PureTax: return tax_->tau;
            case PolicyKind::MSRLike: return msr_->p0;
            case PolicyKind::StaticETS: return static_->p0;
            default: {
                double m0_bar = 0.0;
                for (double v : m0_) m0_bar += v;
                m0_bar /= static_cast<double>(mkt_.n());
                return f_coeff(mkt_, 0.0) * (mkt_.horizon() * mkt_.agg().H_bar - m0_bar);
            }
        }
    }

    PolicyPath run(const NoisePaths& noise) const {
        if (noise.n_firms() != mkt_.n() || noise.grid().steps() != grid_.steps())
            throw ConfigError("noise does not match the market and grid");
        switch (spec_.kind) {
            case PolicyKind::PureTax: return run_tax(noise);
            case PolicyKind::MSRLike: return run_msr(noise);
            default: return run_allocation(noise);
        }
    }

    // Equilibrium of an allocation policy (not available for tax).
    EquilibriumPath equilibrium(const NoisePaths& noise) const {
        if (spec_.kind == PolicyKind::PureTax) throw UnsupportedConfiguration("a pure tax has no allowance market");
        if (spec_.kind == PolicyKind::MSRLike) return msr_equilibrium(noise);
        const auto allocations = allocation_views(noise);
        if (!mkt_.nu().is_frictionless()) return equilibrium_frictions(mkt_, grid_, allocations, noise);
        return equilibrium_frictionless(mkt_, grid_, allocations, noise, {opts_.stepping, opts_.beta});
    }

private:
    void check_gamma_shape() const {
        const std::size_t n = mkt_.n();
        if (spec_.m0.size() != n) throw ConfigError("custom policy needs one m0 per firm");
        if (spec_.gamma.size() != n) throw ConfigError("custom gamma needs one row per firm");
        for (const auto& row : spec_.gamma)
            if (row.size() != n + 1) throw ConfigError("custom gamma rows need N+1 entries");
    }

    // Variance rate of the average driver M_bar - W_bar under constant loadings.
    double custom_driver_variance() const {
        const std::size_t n = mkt_.n();
        double total = 0.0;
        for (std::size_t j = 0; j <= n; ++j) {
            double c = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                c += gamma_[i][j];
                const auto& f = mkt_.firm(i);
                if (j == 0) c -= f.sigma * f.k;
                else if (j == i + 1) c -= f.sigma * std::sqrt(1.0 - f.k * f.k);
            }
            c /= static_cast<double>(n);
            total += c * c;
        }
        return total;
    }

    std::vector<AllocationView> allocation_views(const NoisePaths& noise) const {
        const std::size_t n = mkt_.n();
        const std::size_t knots = grid_.knots();
        std::vector<AllocationView> out;
        out.reserve(n);
        if (spec_.kind == PolicyKind::StaticETS) {
            for (std::size_t i = 0; i < n; ++i) {
                AllocationView v;
                const double mu = mkt_.firm(i).mu;
                v.m.assign(knots, static_->x0_bar - mu * grid_.horizon());
                v.a.resize(knots);
                for (std::size_t k = 0; k < knots; ++k) v.a[k] = static_->x0_bar - mu * grid_.time(k);
                out.push_back(std::move(v));
            }
            return out;
        }
        // martingale allocations M_i = m0_i + sum_j gamma_ij W~_j, paid as they become known
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> m(knots);
            m[0] = m0_[i];
            for (std::size_t k = 0; k < grid_.steps(); ++k) {
                double d = 0.0;
                for (std::size_t j = 0; j <= n; ++j)
                    if (gamma_[i][j] != 0.0) d += gamma_[i][j] * noise.base(j)[k];
                m[k + 1] = m[k] + d;
            }
            out.push_back(AllocationView::tracking(std::move(m)));
        }
        return out;
    }

    double subgrid_correction() const {
        if (!schedule_ || driver_var_ == 0.0) return 0.0;
        double eta_sum = 0.0;
        for (const auto& f : mkt_.firms()) eta_sum += f.eta;
        return 0.5 * eta_sum * driver_var_ * schedule_->total_subgrid();
    }

    PolicyPath summarize(const EquilibriumPath& eq) const {
        const std::size_t knots = grid_.knots();
        const double inv_n = 1.0 / static_cast<double>(mkt_.n());
        PolicyPath out;
        out.price = eq.price;
        out.total_bank = eq.total_bank();
        out.total_emissions = eq.emissions;
        out.avg_abatement.assign(knots, 0.0);
        out.gross_allocation_change.assign(knots, 0.0);
        for (std::size_t i = 0; i < mkt_.n(); ++i) {
            const auto& a = eq.allocations[i].a;
            for (std::size_t k = 0; k < knots; ++k) {
                out.avg_abatement[k] += eq.firms[i].alpha[k] * inv_n;
                out.gross_allocation_change[k] += a[k] - a[0] + mkt_.firm(i).mu * grid_.time(k);
            }
            const auto c = cost_functional(mkt_.firm(i), mkt_, grid_, eq.firms[i], eq.price);
            out.cost.abatement += c.abatement;
            out.cost.trading += c.trading;
            out.cost.penalty += c.penalty;
        }
        out.qv = realized_qv(eq.price).back();
        return out;
    }

    PolicyPath run_allocation(const NoisePaths& noise) const {
        auto path = summarize(equilibrium(noise));
        if (mkt_.nu().is_frictionless() && opts_.stepping == PriceStepping::VarianceMatched)
            path.cost.abatement += subgrid_correction();
        return path;
    }

    // Average shock increments W_bar = (1/N) sum_i sigma_i W_i.
    std::vector<double> average_shock(const NoisePaths& noise) const {
        std::vector<double> out(grid_.steps(), 0.0);
        const double inv_n = 1.0 / static_cast<double>(mkt_.n());
        for (std::size_t i = 0; i < mkt_.n(); ++i) {
            const auto dw = noise.firm(i);
            const double s = mkt_.firm(i).sigma * inv_n;
            for (std::size_t k = 0; k < out.size(); ++k) out[k] += s * dw[k];
        }
        return out;
    }

    EquilibriumPath msr_equilibrium(const NoisePaths& noise) const {
        const auto& p = *msr_;
        const std::size_t knots = grid_.knots();
        const double T = grid_.horizon();
        const double dt = grid_.dt();
        const double delta = p.delta;
        const double eta = mkt_.agg().eta_bar;
        const auto dwbar = average_shock(noise);

        std::vector<double> price(knots), gap(knots);  // gap = ramp - X_bar
        if (opts_.msr == MsrScheme::ExactLaw) {
            double u = 0.0;  // martingale part of the price
            for (std::size_t k = 0; k < knots; ++k) {
                price[k] = p.p0 + u;
                gap[k] = msr_mean_gap(p, grid_.time(k)) + u / loading_at_knot_[k];
                if (k < grid_.steps()) u += schedule_->loading[k] * dwbar[k];
            }
        } else {
            double y = 0.0;
            for (std::size_t k = 0; k < knots; ++k) {
                const double t = grid_.time(k);
                const double z = msr_z(delta, t, T);
                price[k] = msr_F(mkt_, delta, t) * ((1.0 - delta * z) * y + z * p.q);
                gap[k] = y;
                if (k < grid_.steps())
                    y += (-p.x0_bar / T - eta * (price[k] - mkt_.agg().h_bar) - delta * y) * dt + dwbar[k];
            }
        }

        // identical allocation for every firm: A = x0 + int a dt, M = A + R
        AllocationView view;
        view.a.resize(knots);
        view.m.resize(knots);
        double a_cum = p.x0_bar;
        const bool exact = opts_.msr == MsrScheme::ExactLaw;
        for (std::size_t k = 0; k < knots; ++k) {
            const double t = grid_.time(k);
            const double z = msr_z(delta, t, T);
            const double rate = delta * gap[k];
            const double tail = grid_.remaining(k) - z;
            view.a[k] = a_cum;
            view.m[k] = a_cum + z * rate + p.q * tail - eta * tail * price[k];
            if (k < grid_.steps()) {
                if (exact) {
                    // mean part of the credit integrated exactly, fluctuation at the left point
                    const double t1 = grid_.time(k + 1);
                    const double mean_rate = delta * msr_mean_gap(p, t);
                    const double mean_step = -p.drift * (dt - (std::exp(-delta * t) - std::exp(-delta * t1)) / delta);
                    a_cum += mean_step + (rate - mean_rate) * dt;
                } else {
                    a_cum += rate * dt;
                }
            }
        }
        view.m.back() = view.a.back();
        std::vector<AllocationView> allocations(mkt_.n(), view);
        return assemble_frictionless(mkt_, grid_, std::move(price), allocations, noise, opts_.beta);
    }

    PolicyPath run_msr(const NoisePaths& noise) const {
        auto path = summarize(msr_equilibrium(noise));
        if (opts_.msr == MsrScheme::ExactLaw) path.cost.abatement += subgrid_correction();
        return path;
    }

    PolicyPath run_tax(const NoisePaths& noise) const {
        const auto& tx = *tax_;
        const std::size_t knots = grid_.knots();
        const double inv_n = 1.0 / static_cast<double>(mkt_.n());
        PolicyPath out;
        out.price.assign(knots, tx.tau);
        out.total_bank.assign(knots, 0.0);
        out.total_emissions.assign(knots, 0.0);
        out.avg_abatement.assign(knots, 0.0);
        out.gross_allocation_change.assign(knots, 0.0);
        for (std::size_t i = 0; i < mkt_.n(); ++i) {
            const auto& f = mkt_.firm(i);
            const double a = tx.alpha[i];
            const auto dw = noise.firm(i);
            double w = 0.0;
            for (std::size_t k = 0; k < knots; ++k) {
                const double t = grid_.time(k);
                out.total_emissions[k] += (f.mu - a) * t + f.sigma * w;
                out.avg_abatement[k] += a * inv_n;
                if (k < grid_.steps()) w += dw[k];
            }
            out.cost.abatement += abatement_cost(f, a) * grid_.horizon();
        }
        out.tax = tx.tau * out.total_emissions.back();
        return out;
    }

    MarketParams mkt_;
    PolicySpec spec_;
    TimeGrid grid_;
    SimulationOptions opts_;
    std::optional<double> closed_form_;
    std::vector<double> m0_;
    Matrix gamma_;
    double driver_var_ = 0.0;
    std::optional<StaticPolicy> static_;
    std::optional<TaxPolicy> tax_;
    std::optional<MsrPolicy> msr_;
    std::optional<VolatilitySchedule> schedule_;
    std::vector<double> loading_at_knot_;
};

struct CostReport {
    PolicyKind kind = PolicyKind::OptimalDynamic;
    std::optional<double> closed_form;
    double mc_estimate = 0.0;
    double mc_stderr = 0.0;
    std::size_t n_paths = 0;
    double abatement = 0.0;
    double trading = 0.0;
    double penalty = 0.0;
    double tax = 0.0;
    double expected_total_emissions = 0.0;
    double emissions_stderr = 0.0;
    double price_qv = 0.0;
    double price_qv_stderr = 0.0;
    bool consistent = true;  // MC within 4 combined standard errors of the closed form

    std::string name() const { return policy_name(kind); }
};

struct PairDelta {
    PolicyKind first;
    PolicyKind second;
    std::optional<double> closed_form;  // first minus second
    double mc_estimate = 0.0;
    double mc_stderr = 0.0;             // of the paired difference
};

struct Comparison {
    std::vector<CostReport> reports;
    std::vector<PairDelta> deltas;
};

// Standard error used when comparing MC with a closed form: the MC spread, floored at
// 1e-9 of the closed form so that zero-variance estimators are compared at rounding level.
inline double combined_stderr(double mc_stderr, double reference) {
    const double floor = 1e-9 * std::abs(reference);
    return std::sqrt(mc_stderr * mc_stderr + floor * floor);
}

struct CompareOptions {
    SimulationOptions simulation;
    unsigned threads = default_threads();
    bool enforce = true;  // throw DiagnosticError when a consistency check fails
};

// Runs every policy on the same noise paths and reports costs and paired differences.
inline Comparison compare_policies(const MarketParams& mkt, const std::vector<PolicySpec>& policies,
                                   const PathEnsemble& ensemble, const TimeGrid& grid, CompareOptions options = {}) {
    std::vector<PolicySimulator> sims;
    sims.reserve(policies.size());
    for (const auto& p : policies) sims.emplace_back(mkt, p, grid, options.simulation);
    const std::size_t np = sims.size();

    std::vector<Moments> cost(np), ab(np), tr(np), pen(np), tax(np), em(np), qv(np);
    std::vector<Moments> diff(np * np);
    for_each_path_ordered(
        ensemble.n_paths(), options.threads,
        [&](std::size_t p) {
            const auto noise = ensemble.path(p, grid, mkt.firms());
            std::vector<double> out;
            out.reserve(np * 7);
            for (const auto& s : sims) {
                const auto r = s.run(noise);
                out.insert(out.end(), {r.social_cost(), r.cost.abatement, r.cost.trading, r.cost.penalty, r.tax,
                                       r.terminal_emissions(), r.qv});
            }
            return out;
        },
        [&](std::size_t, std::vector<double>&& v) {
            for (std::size_t a = 0; a < np; ++a) {
                const double* r = v.data() + 7 * a;
                cost[a].add(r[0]);
                ab[a].add(r[1]);
                tr[a].add(r[2]);
                pen[a].add(r[3]);
                tax[a].add(r[4]);
                em[a].add(r[5]);
                qv[a].add(r[6]);
                for (std::size_t b = 0; b < np; ++b)
                    if (a != b) diff[a * np + b].add(r[0] - v[7 * b]);
            }
        });

    Comparison out;
    for (std::size_t a = 0; a < np; ++a) {
        CostReport r;
        r.kind = policies[a].kind;
        r.closed_form = sims[a].closed_form_cost();
        r.mc_estimate = cost[a].mean();
        r.mc_stderr = cost[a].stderr_of_mean();
        r.n_paths = ensemble.n_paths();
        r.abatement = ab[a].mean();
        r.trading = tr[a].mean();
        r.penalty = pen[a].mean();
        r.tax = tax[a].mean();
        r.expected_total_emissions = em[a].mean();
        r.emissions_stderr = em[a].stderr_of_mean();
        r.price_qv = qv[a].mean();
        r.price_qv_stderr = qv[a].stderr_of_mean();
        // a single path has no standard error to compare against
        if (r.closed_form && r.n_paths >= 2)
            r.consistent = std::abs(r.mc_estimate - *r.closed_form) <= 4.0 * combined_stderr(r.mc_stderr, *r.closed_form);
        out.reports.push_back(r);
    }
    for (std::size_t a = 0; a < np; ++a)
        for (std::size_t b = a + 1; b < np; ++b) {
            PairDelta d;
            d.first = policies[a].kind;
            d.second = policies[b].kind;
            const auto& ra = out.reports[a];
            const auto& rb = out.reports[b];
            if (ra.closed_form && rb.closed_form) d.closed_form = *ra.closed_form - *rb.closed_form;
            d.mc_estimate = diff[a * np + b].mean();
            d.mc_stderr = diff[a * np + b].stderr_of_mean();
            out.deltas.push_back(d);
        }

    if (options.enforce) {
        for (const auto& r : out.reports)
            if (!r.consistent)
                throw DiagnosticError("Monte Carlo cost of " + r.name() + " inconsistent with its closed form");
        const CostReport* opt = nullptr;
        const CostReport* st = nullptr;
        for (const auto& r : out.reports) {
            if (r.kind == PolicyKind::OptimalDynamic) opt = &r;
            if (r.kind == PolicyKind::StaticETS) st = &r;
        }
        if (opt && st && opt->closed_form && st->closed_form) {
            const double delta = static_policy(mkt).delta;
            if (std::abs(*st->closed_form - *opt->closed_form - delta) > 1e-12 * std::abs(*st->closed_form))
                throw DiagnosticError("static minus optimal cost differs from the static excess");
        }
    }
    return out;
}

}  // namespace ets
