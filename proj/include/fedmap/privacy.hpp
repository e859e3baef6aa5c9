#pragma once

// Noise allocation for uploaded map gradients. Besides the uniform baseline,
// variances can follow a clipped plane over the grid: var_m =
// max(0, r * dot(u, c_m) + b - g_m^2), with the offset b solved by bisection
// so the total variance meets the budget mu * sum(g^2). The plane is tuned by
// coordinate ascent on J = P - rho * V, where P is the centroid-limit
// localization error of a squared-weight attack and V the expected spatial
// variance of the perturbed energy field.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedmap/core.hpp"
#include "fedmap/geometry.hpp"
#include "fedmap/rng.hpp"

namespace fedmap {

struct NoiseAllocation {
    std::vector<double> variances;
};

struct PlaneParams {
    Vec2 direction{1.0, 0.0};  // unit vector
    double slope = 0.0;        // nonnegative
    double offset = 0.0;
};

struct AllocatorConfig {
    double rho = 1.0;
    double r_max = 0.0;   // 0 picks 10x the dynamic range of normalized g^2
    double step_r = 0.0;  // 0 picks 0.1 * r_max
    double step_u = 0.05;
    double eps = 1e-4;
    double tau_r = 1e-4;
    double tau_u = 1e-4;
    int max_inner = 100;
    int max_outer = 100;

    void validate() const {
        if (rho < 0.0 || r_max < 0.0 || step_r < 0.0 || !(step_u > 0.0) || !(eps > 0.0) ||
            !(tau_r > 0.0) || !(tau_u > 0.0) || max_inner < 1 || max_outer < 1)
            throw std::invalid_argument("invalid allocator config");
    }
};

struct AllocationResult {
    NoiseAllocation sigma;
    PlaneParams plane;
    std::vector<double> objective_trace;  // nondecreasing, in normalized units
    bool uniform_fallback = false;
};

inline std::vector<Vec2> make_centers(const GridSpec& grid) {
    std::vector<Vec2> centers(grid.cell_count());
    for (int m = 0; m < grid.cell_count(); ++m) centers[m] = grid.cell_center(m);
    return centers;
}

inline double energy(std::span<const double> g) {
    double e = 0.0;
    for (double v : g) e += v * v;
    return e;
}

inline NoiseAllocation uniform_allocation(std::span<const double> g_clipped, double mu) {
    if (mu < 0.0) throw std::invalid_argument("mu must be nonnegative");
    if (g_clipped.empty()) throw std::invalid_argument("empty gradient");
    const double var = mu * energy(g_clipped) / static_cast<double>(g_clipped.size());
    return {std::vector<double>(g_clipped.size(), var)};
}

namespace detail {

inline void check_plane(const PlaneParams& plane) {
    if (plane.slope < 0.0) throw std::invalid_argument("plane slope must be nonnegative");
    if (std::abs(norm(plane.direction) - 1.0) > 1e-6)
        throw std::invalid_argument("plane direction must be a unit vector");
}

inline std::vector<double> plane_variances(std::span<const double> g2,
                                           std::span<const Vec2> centers, Vec2 u, double r,
                                           double b) {
    std::vector<double> var(g2.size());
    for (std::size_t m = 0; m < g2.size(); ++m)
        var[m] = std::max(0.0, r * dot(u, centers[m]) + b - g2[m]);
    return var;
}

// Root of sum_m max(0, b - d_m) = budget in b, where d_m = g2_m - r * s_m.
// The function is continuous, piecewise linear and nondecreasing; bisection
// returns the under-budget endpoint so the budget is never exceeded.
inline double solve_offset_impl(std::span<const double> g2, std::span<const double> proj,
                                double r, double budget) {
    const std::size_t m_count = g2.size();
    std::vector<double> d(m_count);
    for (std::size_t m = 0; m < m_count; ++m) d[m] = g2[m] - r * proj[m];
    std::sort(d.begin(), d.end());
    if (budget == 0.0) return d.front();

    std::vector<double> prefix(m_count + 1, 0.0);
    for (std::size_t m = 0; m < m_count; ++m) prefix[m + 1] = prefix[m] + d[m];
    const auto excess = [&](double b) {
        const auto k = static_cast<std::size_t>(
            std::lower_bound(d.begin(), d.end(), b) - d.begin());
        return static_cast<double>(k) * b - prefix[k] - budget;
    };

    double lo = d.front() - budget;
    double hi = d.back() + budget;
    for (int it = 0; it < 200 && -excess(lo) > 1e-9 * budget; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (excess(mid) <= 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return lo;
}

inline Vec2 weighted_centroid_delta(std::span<const double> weights,
                                    std::span<const Vec2> centers, Vec2 anchor) {
    double wx = 0.0, wy = 0.0, wsum = 0.0;
    for (std::size_t m = 0; m < weights.size(); ++m) {
        wx += weights[m] * centers[m].x;
        wy += weights[m] * centers[m].y;
        wsum += weights[m];
    }
    if (wsum == 0.0) return {0.0, 0.0};
    return {wx / wsum - anchor.x, wy / wsum - anchor.y};
}

inline double localization_error_impl(std::span<const double> g2, std::span<const double> var,
                                      std::span<const Vec2> centers, Vec2 user, double mu) {
    double e = 0.0;
    for (double v : g2) e += v;
    if (e == 0.0) throw std::invalid_argument("all-zero gradient: localization limit undefined");
    const Vec2 dg = weighted_centroid_delta(g2, centers, user);
    const Vec2 dn = weighted_centroid_delta(var, centers, user);  // zero when var sums to zero
    const Vec2 num = dg + mu * dn;
    const double denom = 1.0 + mu;
    return norm_sq(num) / (denom * denom);
}

inline double spatial_variance_impl(std::span<const double> g2, std::span<const double> var) {
    const auto m_count = static_cast<double>(g2.size());
    double mean_noise_var = 0.0;
    double mean_level = 0.0, mean_level_sq = 0.0;
    for (std::size_t m = 0; m < g2.size(); ++m) {
        mean_noise_var += 4.0 * g2[m] * var[m] + 2.0 * var[m] * var[m];
        const double level = g2[m] + var[m];
        mean_level += level;
        mean_level_sq += level * level;
    }
    mean_noise_var /= m_count;
    mean_level /= m_count;
    mean_level_sq /= m_count;
    return (1.0 - 1.0 / m_count) * mean_noise_var + (mean_level_sq - mean_level * mean_level);
}

}  // namespace detail

inline NoiseAllocation plane_allocation(std::span<const double> g_clipped, const GridSpec& grid,
                                        const PlaneParams& plane) {
    detail::check_plane(plane);
    if (g_clipped.size() != static_cast<std::size_t>(grid.cell_count()))
        throw std::invalid_argument("gradient size does not match grid");
    std::vector<double> g2(g_clipped.size());
    for (std::size_t m = 0; m < g2.size(); ++m) g2[m] = g_clipped[m] * g_clipped[m];
    const auto centers = make_centers(grid);
    return {detail::plane_variances(g2, centers, plane.direction, plane.slope, plane.offset)};
}

inline double solve_offset(std::span<const double> g_clipped, const GridSpec& grid, Vec2 u,
                           double r, double mu) {
    if (mu < 0.0) throw std::invalid_argument("mu must be nonnegative");
    if (r < 0.0) throw std::invalid_argument("plane slope must be nonnegative");
    if (g_clipped.size() != static_cast<std::size_t>(grid.cell_count()))
        throw std::invalid_argument("gradient size does not match grid");
    const double e = energy(g_clipped);
    if (e == 0.0 && mu > 0.0)
        throw std::invalid_argument("all-zero gradient: relative budget undefined");
    std::vector<double> g2(g_clipped.size()), proj(g_clipped.size());
    for (std::size_t m = 0; m < g2.size(); ++m) {
        g2[m] = g_clipped[m] * g_clipped[m];
        proj[m] = dot(u, grid.cell_center(static_cast<int>(m)));
    }
    return detail::solve_offset_impl(g2, proj, r, mu * e);
}

// Centroid-shift limit of the squared-weight localization attack, for a given
// noise allocation.
inline double localization_error_P(std::span<const double> g_clipped,
                                   const NoiseAllocation& sigma, const GridSpec& grid, Vec2 user,
                                   double mu) {
    if (g_clipped.size() != static_cast<std::size_t>(grid.cell_count()) ||
        sigma.variances.size() != g_clipped.size())
        throw std::invalid_argument("size mismatch");
    if (mu < 0.0) throw std::invalid_argument("mu must be nonnegative");
    std::vector<double> g2(g_clipped.size());
    for (std::size_t m = 0; m < g2.size(); ++m) g2[m] = g_clipped[m] * g_clipped[m];
    const auto centers = make_centers(grid);
    return detail::localization_error_impl(g2, sigma.variances, centers, user, mu);
}

// Expected sample variance over cells of (g_m + n_m)^2 with independent
// n_m ~ N(0, var_m), in closed form.
inline double spatial_variance_V(std::span<const double> g_clipped,
                                 const NoiseAllocation& sigma) {
    if (g_clipped.size() < 2) throw std::invalid_argument("need at least two cells");
    if (sigma.variances.size() != g_clipped.size())
        throw std::invalid_argument("size mismatch");
    std::vector<double> g2(g_clipped.size());
    for (std::size_t m = 0; m < g2.size(); ++m) g2[m] = g_clipped[m] * g_clipped[m];
    return detail::spatial_variance_impl(g2, sigma.variances);
}

inline double objective_J(std::span<const double> g_clipped, const GridSpec& grid, Vec2 user,
                          double mu, double rho, const PlaneParams& plane) {
    const NoiseAllocation sigma = plane_allocation(g_clipped, grid, plane);
    return localization_error_P(g_clipped, sigma, grid, user, mu) -
           rho * spatial_variance_V(g_clipped, sigma);
}

inline std::vector<double> sample_noise(const NoiseAllocation& sigma, Rng& rng) {
    std::vector<double> noise(sigma.variances.size());
    for (std::size_t m = 0; m < noise.size(); ++m) {
        if (sigma.variances[m] < 0.0) throw std::invalid_argument("negative variance");
        noise[m] = std::sqrt(sigma.variances[m]) * rng.gaussian();
    }
    return noise;
}

// Plane tuner: ascent over the slope (inner loop) and the direction (outer
// loop) with central-difference gradients and backtracking step halving, so
// the objective trace never decreases. Operates in normalized units
// (coordinates mapped to the unit square, g^2 to unit sum) and maps the tuned
// plane back to input units.
inline AllocationResult optimize_allocation(std::span<const double> g_clipped,
                                            const GridSpec& grid, Vec2 user, double mu,
                                            const AllocatorConfig& cfg) {
    cfg.validate();
    if (mu < 0.0) throw std::invalid_argument("mu must be nonnegative");
    if (g_clipped.size() != static_cast<std::size_t>(grid.cell_count()))
        throw std::invalid_argument("gradient size does not match grid");
    const std::size_t m_count = g_clipped.size();

    AllocationResult res;
    res.sigma.variances.assign(m_count, 0.0);

    const double e = energy(g_clipped);
    if (e == 0.0) {
        res.uniform_fallback = true;
        return res;
    }

    // Normalized frame: centers to [0, 1]^2, energies to unit sum.
    const double sx = 1.0 / grid.width(), sy = 1.0 / grid.height();
    std::vector<double> g2n(m_count);
    std::vector<Vec2> cn(m_count);
    for (std::size_t m = 0; m < m_count; ++m) {
        const double g = g_clipped[m];
        g2n[m] = g * g / e;
        const Vec2 c = grid.cell_center(static_cast<int>(m));
        cn[m] = {(c.x - grid.origin.x) * sx, (c.y - grid.origin.y) * sy};
    }
    const Vec2 pu{(user.x - grid.origin.x) * sx, (user.y - grid.origin.y) * sy};

    std::vector<double> proj(m_count), var(m_count);
    const auto eval_j = [&](Vec2 u, double r) {
        for (std::size_t m = 0; m < m_count; ++m) proj[m] = dot(u, cn[m]);
        const double b = detail::solve_offset_impl(g2n, proj, r, mu);
        for (std::size_t m = 0; m < m_count; ++m)
            var[m] = std::max(0.0, r * proj[m] + b - g2n[m]);
        return detail::localization_error_impl(g2n, var, cn, pu, mu) -
               cfg.rho * detail::spatial_variance_impl(g2n, var);
    };

    const auto finish = [&](Vec2 u, double r) {
        for (std::size_t m = 0; m < m_count; ++m) proj[m] = dot(u, cn[m]);
        const double b = detail::solve_offset_impl(g2n, proj, r, mu);
        for (std::size_t m = 0; m < m_count; ++m)
            res.sigma.variances[m] = e * std::max(0.0, r * proj[m] + b - g2n[m]);
        const Vec2 a{e * r * u.x * sx, e * r * u.y * sy};
        const double slope = norm(a);
        res.plane.slope = slope;
        res.plane.direction = slope > 0.0 ? Vec2{a.x / slope, a.y / slope} : Vec2{1.0, 0.0};
        res.plane.offset = e * b - (a.x * grid.origin.x + a.y * grid.origin.y);
    };

    const Vec2 dg = detail::weighted_centroid_delta(g2n, cn, pu);
    const double dg_norm = norm(dg);
    if (mu == 0.0 || dg_norm < 1e-12) {
        if (dg_norm < 1e-12 && mu > 0.0) {
            res.sigma = uniform_allocation(g_clipped, mu);
            res.uniform_fallback = true;
            std::vector<double> uvar(m_count, mu / static_cast<double>(m_count));
            res.objective_trace.push_back(
                detail::localization_error_impl(g2n, uvar, cn, pu, mu) -
                cfg.rho * detail::spatial_variance_impl(g2n, uvar));
            return res;
        }
        Vec2 u = dg_norm > 0.0 ? Vec2{dg.x / dg_norm, dg.y / dg_norm} : Vec2{1.0, 0.0};
        res.objective_trace.push_back(eval_j(u, 0.0));
        finish(u, 0.0);
        return res;
    }

    const auto [g2_min, g2_max] = std::minmax_element(g2n.begin(), g2n.end());
    double r_max = cfg.r_max;
    if (r_max == 0.0) {
        const double span = *g2_max - *g2_min;
        r_max = 10.0 * (span > 0.0 ? span : *g2_max);
    }
    const double step_r0 = cfg.step_r > 0.0 ? cfg.step_r : 0.1 * r_max;

    Vec2 u{dg.x / dg_norm, dg.y / dg_norm};
    double r = r_max;
    double j_cur = eval_j(u, r);
    res.objective_trace.push_back(j_cur);

    const auto try_step = [&](auto candidate_of, double step0) {
        double step = step0;
        for (int halvings = 0; halvings < 24; ++halvings) {
            auto [ok, u_cand, r_cand] = candidate_of(step);
            if (ok) {
                const double j_cand = eval_j(u_cand, r_cand);
                if (j_cand >= j_cur) {
                    u = u_cand;
                    r = r_cand;
                    j_cur = j_cand;
                    res.objective_trace.push_back(j_cur);
                    return true;
                }
            }
            step *= 0.5;
        }
        return false;
    };

    for (int outer = 0; outer < cfg.max_outer; ++outer) {
        const double j_outer_start = j_cur;
        for (int inner = 0; inner < cfg.max_inner; ++inner) {
            const double r_hi = std::min(r + cfg.eps, r_max);
            const double r_lo = std::max(r - cfg.eps, 0.0);
            if (r_hi == r_lo) break;
            const double dj = (eval_j(u, r_hi) - eval_j(u, r_lo)) / (r_hi - r_lo);
            if (std::abs(dj) <= cfg.tau_r) break;
            const double j_before = j_cur;
            const bool moved = try_step(
                [&](double step) {
                    const double cand = std::clamp(r + step * dj, 0.0, r_max);
                    return std::tuple{cand != r, u, cand};
                },
                step_r0);
            if (!moved || j_cur - j_before <= 1e-13 * (1.0 + std::abs(j_cur))) break;
        }
        const double jx = (eval_j({u.x + cfg.eps, u.y}, r) - eval_j({u.x - cfg.eps, u.y}, r)) /
                          (2.0 * cfg.eps);
        const double jy = (eval_j({u.x, u.y + cfg.eps}, r) - eval_j({u.x, u.y - cfg.eps}, r)) /
                          (2.0 * cfg.eps);
        if (std::hypot(jx, jy) <= cfg.tau_u) break;
        const bool moved = try_step(
            [&](double step) {
                const Vec2 raw{u.x + step * jx, u.y + step * jy};
                const double n = norm(raw);
                return std::tuple{n > 0.0, n > 0.0 ? Vec2{raw.x / n, raw.y / n} : u, r};
            },
            cfg.step_u);
        if (!moved || j_cur - j_outer_start <= 1e-12 * (1.0 + std::abs(j_cur))) break;
    }

    finish(u, r);
    return res;
}

}  // namespace fedmap
