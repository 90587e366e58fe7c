#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ets/stochastic.hpp"

namespace ets {

inline double integrate(const std::function<double(double)>& fn, double a, double b) {
    if (b <= a) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(fn, a, b, 10, 1e-12);
}

// Step data for a Gaussian martingale dP = phi(t) dD with deterministic phi and a driver D
// of constant variance rate: per-step variance-matched loadings and the within-step variance
// that left-point sums of P^2 miss.
struct VolatilitySchedule {
    std::vector<double> loading;   // sqrt( int_{t_k}^{t_{k+1}} phi^2 / dt )
    std::vector<double> cumulative; // V(t_k) = int_0^{t_k} phi^2
    std::vector<double> subgrid;   // int_{t_k}^{t_{k+1}} (V(s) - V(t_k)) ds

    static VolatilitySchedule build(const TimeGrid& grid, const std::function<double(double)>& phi) {
        VolatilitySchedule s;
        const std::size_t m = grid.steps();
        s.loading.resize(m);
        s.subgrid.resize(m);
        s.cumulative.assign(m + 1, 0.0);
        auto phi2 = [&](double t) {
            const double v = phi(t);
            return v * v;
        };
        for (std::size_t k = 0; k < m; ++k) {
            const double a = grid.time(k), b = grid.time(k + 1);
            const double var = integrate(phi2, a, b);
            s.loading[k] = std::sqrt(var / (b - a));
            s.cumulative[k + 1] = s.cumulative[k] + var;
            s.subgrid[k] = integrate([&](double r) { return phi2(r) * (b - r); }, a, b);
        }
        return s;
    }

    double total_subgrid() const {
        double acc = 0.0;
        for (double v : subgrid) acc += v;
        return acc;
    }
};

}  // namespace ets
