#pragma once

// Numeric checks of the two analytic claims the defense relies on: gradient
// energy attenuates with distance from the measuring user, and the squared
// weight attack's error approaches a closed-form centroid limit with a
// matching expected spatial variance.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fedmap/experiments/scenario.hpp"
#include "fedmap/privacy.hpp"
#include "fedmap/radio_model.hpp"
#include "fedmap/rng.hpp"

namespace fedmap {

struct AttenuationReport {
    long pairs = 0;
    long ordered = 0;

    double fraction() const { return pairs > 0 ? static_cast<double>(ordered) / pairs : 0.0; }
    bool vacuous() const { return pairs == 0; }
};

// Estimates per-cell E[G_m^2] for every user by redrawing measurement noise
// with the map held at the flat initialization height, then walks rays from
// the user's cell along 8 directions and counts adjacent nonzero pairs where
// the closer cell dominates the farther one.
inline AttenuationReport verify_gradient_attenuation(const Scenario& s, int n_mc,
                                                     std::uint64_t seed) {
    if (n_mc < 1) throw std::invalid_argument("n_mc must be positive");
    const ObstacleMap h0{std::vector<double>(s.grid.cell_count(), s.h_max)};
    const PropagationParams theta = s.truth_theta;
    static constexpr int kDirs[8][2] = {{1, 0},  {-1, 0}, {0, 1},  {0, -1},
                                        {1, 1},  {1, -1}, {-1, 1}, {-1, -1}};

    AttenuationReport report;
    std::vector<double> grad(s.grid.cell_count());
    std::vector<double> energy(s.grid.cell_count());
    for (const auto& user : s.users) {
        const auto geos = precompute_geometry(user.samples, s.grid);
        std::vector<double> clean(user.samples.size());
        for (std::size_t j = 0; j < user.samples.size(); ++j)
            clean[j] = label_gain(s, user.samples[j].link);

        std::fill(energy.begin(), energy.end(), 0.0);
        std::vector<Measurement> redrawn = user.samples;
        for (int trial = 0; trial < n_mc; ++trial) {
            Rng rng = derive_rng(seed, static_cast<std::uint64_t>(user.user_id),
                                 static_cast<std::uint64_t>(trial));
            for (std::size_t j = 0; j < redrawn.size(); ++j)
                redrawn[j].rss = clean[j] + s.noise_std * rng.gaussian();
            grad_h(redrawn, geos, theta, h0.heights, s.sharpness, grad);
            for (std::size_t m = 0; m < grad.size(); ++m) energy[m] += grad[m] * grad[m];
        }

        const int cell = s.grid.cell_at(horizontal(user.location));
        if (cell < 0) continue;
        const int row0 = s.grid.cell_row(cell), col0 = s.grid.cell_col(cell);
        for (const auto& dir : kDirs) {
            double prev = -1.0;
            for (int k = 0;; ++k) {
                const int col = col0 + k * dir[0], row = row0 + k * dir[1];
                if (col < 0 || col >= s.grid.nx || row < 0 || row >= s.grid.ny) break;
                const double cur = energy[s.grid.cell_index(row, col)];
                if (prev > 0.0 && cur > 0.0) {
                    ++report.pairs;
                    if (prev >= cur) ++report.ordered;
                }
                prev = cur;
            }
        }
    }
    return report;
}

struct LimitRow {
    int m = 0;
    double closed = 0.0;
    double mc = 0.0;
    double rel_err = 0.0;
};

// Closed-form centroid limit against Monte Carlo, for one fixed pair of
// continuous gradient-energy and noise-variance profiles rasterized at
// several grid resolutions.
inline std::vector<LimitRow> check_localization_limit(std::span<const int> m_values, int n_seeds,
                                                      int n_draws, double mu,
                                                      std::uint64_t seed) {
    const Vec2 pu{0.42, 0.47};
    const auto g2_density = [](double x, double y) {
        const double dx = x - 0.47, dy = y - 0.52;
        return std::exp(-(dx * dx + dy * dy) / (2.0 * 0.12 * 0.12)) + 0.02;
    };
    const auto var_density = [](double x, double y) {
        return std::max(0.0, 1.3 * (0.5 * (x + y)) - 0.25) + 0.01;
    };

    std::vector<LimitRow> rows;
    for (const int m : m_values) {
        const int n = static_cast<int>(std::round(std::sqrt(static_cast<double>(m))));
        if (n * n != m) throw std::invalid_argument("cell count must be a perfect square");
        std::vector<Vec2> centers(m);
        std::vector<double> g2(m), var(m), amp(m);
        double g2_sum = 0.0, var_sum = 0.0;
        for (int i = 0; i < m; ++i) {
            const Vec2 c{(i % n + 0.5) / n, (i / n + 0.5) / n};
            centers[i] = c;
            g2[i] = g2_density(c.x, c.y);
            var[i] = var_density(c.x, c.y);
            g2_sum += g2[i];
            var_sum += var[i];
        }
        for (int i = 0; i < m; ++i) {
            g2[i] /= g2_sum;
            var[i] *= mu / var_sum;  // realized budget matches mu exactly
            amp[i] = std::sqrt(g2[i]);
        }

        const double closed = detail::localization_error_impl(g2, var, centers, pu, mu);
        double mc = 0.0;
        for (int sd = 0; sd < n_seeds; ++sd) {
            Rng rng = derive_rng(seed, static_cast<std::uint64_t>(sd),
                                 static_cast<std::uint64_t>(m));
            double acc = 0.0;
            for (int draw = 0; draw < n_draws; ++draw) {
                double wx = 0.0, wy = 0.0, wsum = 0.0;
                for (int i = 0; i < m; ++i) {
                    const double g = amp[i] + std::sqrt(var[i]) * rng.gaussian();
                    const double w = g * g;
                    wx += w * centers[i].x;
                    wy += w * centers[i].y;
                    wsum += w;
                }
                const double ex = wx / wsum - pu.x, ey = wy / wsum - pu.y;
                acc += ex * ex + ey * ey;
            }
            mc += acc / n_draws;
        }
        mc /= n_seeds;
        rows.push_back({m, closed, mc, std::abs(mc - closed) / closed});
    }
    return rows;
}

struct VarianceRow {
    double closed = 0.0;
    double mc = 0.0;
    double se = 0.0;
    double sigmas_off = 0.0;
};

// Closed-form expected spatial variance against Monte Carlo on random
// gradient/allocation instances.
inline std::vector<VarianceRow> check_spatial_variance(int n_instances, int m, long n_draws,
                                                       std::uint64_t seed) {
    std::vector<VarianceRow> rows;
    for (int inst = 0; inst < n_instances; ++inst) {
        Rng rng = derive_rng(seed, static_cast<std::uint64_t>(inst));
        std::vector<double> g(m), g2(m), var(m);
        for (int i = 0; i < m; ++i) {
            g[i] = rng.uniform(-1.0, 1.0);
            g2[i] = g[i] * g[i];
            var[i] = rng.uniform(0.0, 0.5);
        }
        const double closed = detail::spatial_variance_impl(g2, var);

        double mean = 0.0, m2 = 0.0;
        std::vector<double> field(m);
        for (long draw = 0; draw < n_draws; ++draw) {
            double fsum = 0.0, fsq = 0.0;
            for (int i = 0; i < m; ++i) {
                const double v = g[i] + std::sqrt(var[i]) * rng.gaussian();
                field[i] = v * v;
                fsum += field[i];
            }
            const double fmean = fsum / m;
            for (int i = 0; i < m; ++i) {
                const double d = field[i] - fmean;
                fsq += d * d;
            }
            const double sample_var = fsq / m;
            const double delta = sample_var - mean;
            mean += delta / static_cast<double>(draw + 1);
            m2 += delta * (sample_var - mean);
        }
        const double se = std::sqrt(m2 / (static_cast<double>(n_draws - 1))) /
                          std::sqrt(static_cast<double>(n_draws));
        rows.push_back({closed, mean, se, se > 0.0 ? std::abs(closed - mean) / se : 0.0});
    }
    return rows;
}

}  // namespace fedmap
