#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "ets/errors.hpp"
#include "ets/params.hpp"

namespace ets {

class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
        if (!(horizon > 0.0)) throw ConfigError("grid horizon must be > 0");
        if (steps == 0) throw ConfigError("grid needs at least one step");
    }

    double horizon() const { return horizon_; }
    std::size_t steps() const { return steps_; }
    std::size_t knots() const { return steps_ + 1; }
    double dt() const { return horizon_ / static_cast<double>(steps_); }
    double time(std::size_t k) const {
        if (k >= steps_) return k == steps_ ? horizon_ : throw DomainError("knot index past the grid");
        return static_cast<double>(k) * horizon_ / static_cast<double>(steps_);
    }
    double remaining(std::size_t k) const { return horizon_ - time(k); }

private:
    double horizon_;
    std::size_t steps_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Seed of stream `index` under `parent`; a pure function, so streams can be built in any order.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
    return splitmix64(splitmix64(parent) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

// Increments of the N+1 independent Brownian motions and the N correlated firm shocks,
// stored stream-major: stream j occupies [j*M, (j+1)*M).
class NoisePaths {
public:
    NoisePaths(std::uint64_t seed, const TimeGrid& grid, const std::vector<FirmParams>& firms)
        : seed_(seed), grid_(grid), n_firms_(firms.size()) {
        const std::size_t m = grid.steps();
        base_.resize((n_firms_ + 1) * m);
        const double sd = std::sqrt(grid.dt());
        for (std::size_t j = 0; j <= n_firms_; ++j) {
            std::mt19937_64 engine(derive_seed(seed, j));
            boost::random::normal_distribution<double> normal(0.0, sd);
            double* out = base_.data() + j * m;
            for (std::size_t k = 0; k < m; ++k) out[k] = normal(engine);
        }
        firm_.resize(n_firms_ * m);
        const double* common = base_.data();
        for (std::size_t i = 0; i < n_firms_; ++i) {
            const double k = firms[i].k;
            const double* own = base_.data() + (i + 1) * m;
            double* out = firm_.data() + i * m;
            if (k == 0.0) {
                std::copy(own, own + m, out);
            } else if (k == 1.0 || k == -1.0) {
                for (std::size_t s = 0; s < m; ++s) out[s] = k * common[s];
            } else {
                const double idio = std::sqrt(1.0 - k * k);
                for (std::size_t s = 0; s < m; ++s) out[s] = idio * own[s] + k * common[s];
            }
        }
    }

    std::uint64_t seed() const { return seed_; }
    const TimeGrid& grid() const { return grid_; }
    std::size_t n_firms() const { return n_firms_; }

    // j = 0 is the common shock, j = i+1 the idiosyncratic shock of firm i.
    std::span<const double> base(std::size_t j) const {
        return {base_.data() + j * grid_.steps(), grid_.steps()};
    }
    std::span<const double> firm(std::size_t i) const {
        return {firm_.data() + i * grid_.steps(), grid_.steps()};
    }

private:
    std::uint64_t seed_;
    TimeGrid grid_;
    std::size_t n_firms_;
    std::vector<double> base_;
    std::vector<double> firm_;
};

inline NoisePaths generate_noise(std::uint64_t seed, const TimeGrid& grid, const std::vector<FirmParams>& firms) {
    return NoisePaths(seed, grid, firms);
}

class PathEnsemble {
public:
    PathEnsemble(std::uint64_t root_seed, std::size_t n_paths) : root_(root_seed), n_paths_(n_paths) {
        if (n_paths == 0) throw ConfigError("ensemble needs at least one path");
    }
    std::uint64_t root_seed() const { return root_; }
    std::size_t n_paths() const { return n_paths_; }
    std::uint64_t path_seed(std::size_t p) const { return derive_seed(root_, p); }
    NoisePaths path(std::size_t p, const TimeGrid& grid, const std::vector<FirmParams>& firms) const {
        return NoisePaths(path_seed(p), grid, firms);
    }

private:
    std::uint64_t root_;
    std::size_t n_paths_;
};

// Knot values X_0 = 0, X_k = sum of the first k increments.
inline std::vector<double> cumulate(std::span<const double> increments) {
    std::vector<double> out(increments.size() + 1, 0.0);
    for (std::size_t k = 0; k < increments.size(); ++k) out[k + 1] = out[k] + increments[k];
    return out;
}

// M_k = sum_{j<k} alpha_j dt + (T - t_k) alpha_k
inline std::vector<double> closing_martingale(std::span<const double> alpha, const TimeGrid& grid) {
    if (alpha.size() != grid.knots()) throw ConfigError("path length does not match the grid");
    std::vector<double> out(alpha.size());
    double integral = 0.0;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
        out[k] = integral + grid.remaining(k) * alpha[k];
        if (k + 1 < alpha.size()) integral += alpha[k] * grid.dt();
    }
    return out;
}

inline std::vector<double> realized_qv(std::span<const double> path) {
    std::vector<double> out(path.size(), 0.0);
    for (std::size_t k = 1; k < path.size(); ++k) {
        const double d = path[k] - path[k - 1];
        out[k] = out[k - 1] + d * d;
    }
    return out;
}

// Welford accumulator. Fed in a fixed order, so results do not depend on scheduling.
class Moments {
public:
    void add(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double stderr_of_mean() const { return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

struct DriftReport {
    std::vector<double> z;
    std::vector<bool> degenerate;

    double max_abs_z() const {
        double m = 0.0;
        for (double v : z) m = std::max(m, std::abs(v));
        return m;
    }
    bool any_degenerate() const {
        for (bool d : degenerate)
            if (d) return true;
        return false;
    }
};

// Per-knot z-score of mean(X_t - X_0). Paths must be added in a fixed order.
class DriftAccumulator {
public:
    explicit DriftAccumulator(std::size_t knots) : moments_(knots) {}

    void add(std::span<const double> path) {
        if (path.size() != moments_.size()) throw ConfigError("path length does not match the accumulator");
        for (std::size_t k = 0; k < path.size(); ++k) moments_[k].add(path[k] - path[0]);
    }

    std::size_t paths() const { return moments_.empty() ? 0 : moments_[0].count(); }

    DriftReport report() const {
        if (paths() < 2) throw ConfigError("drift statistic needs at least two paths");
        DriftReport r;
        r.z.resize(moments_.size());
        r.degenerate.resize(moments_.size());
        for (std::size_t k = 0; k < moments_.size(); ++k) {
            const double se = moments_[k].stderr_of_mean();
            const double m = moments_[k].mean();
            if (se > 0.0) {
                r.z[k] = m / se;
            } else {
                // zero spread: no drift is z = 0, a deterministic drift is infinitely significant
                r.degenerate[k] = true;
                r.z[k] = (m == 0.0) ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), m);
            }
        }
        return r;
    }

private:
    std::vector<Moments> moments_;
};

inline DriftReport martingale_drift_stat(const std::vector<std::vector<double>>& paths) {
    if (paths.size() < 2) throw ConfigError("drift statistic needs at least two paths");
    DriftAccumulator acc(paths.front().size());
    for (const auto& p : paths) acc.add(p);
    return acc.report();
}

}  // namespace ets
