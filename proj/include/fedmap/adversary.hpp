#pragma once

// Location inference against uploaded map gradients: a weighted centroid over
// cell centers with weights |g_m|^nu. nu = infinity degenerates to the center
// of the strongest cell (lowest index on ties). An all-zero upload carries no
// location information and is rejected.

#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedmap/core.hpp"
#include "fedmap/geometry.hpp"
#include "fedmap/io/csv.hpp"

namespace fedmap {

inline Vec2 wcl_estimate(std::span<const double> g, const GridSpec& grid, double nu) {
    if (g.size() != static_cast<std::size_t>(grid.cell_count()))
        throw std::invalid_argument("gradient size does not match grid");
    if (std::isnan(nu) || !(nu > 0.0)) throw std::invalid_argument("nu must be positive");

    double max_abs = 0.0;
    std::size_t argmax = 0;
    for (std::size_t m = 0; m < g.size(); ++m) {
        const double a = std::abs(g[m]);
        if (a > max_abs) {
            max_abs = a;
            argmax = m;
        }
    }
    if (max_abs == 0.0)
        throw std::invalid_argument("all-zero gradient carries no location information");

    if (std::isinf(nu)) return grid.cell_center(static_cast<int>(argmax));

    // Weights are scaled by the peak magnitude so arbitrary gradient scaling
    // cancels exactly.
    double wx = 0.0, wy = 0.0, wsum = 0.0;
    for (std::size_t m = 0; m < g.size(); ++m) {
        const double w = std::pow(std::abs(g[m]) / max_abs, nu);
        if (w == 0.0) continue;
        const Vec2 c = grid.cell_center(static_cast<int>(m));
        wx += w * c.x;
        wy += w * c.y;
        wsum += w;
    }
    return {wx / wsum, wy / wsum};
}

struct UserGradient {
    int user_id = 0;
    std::vector<double> grad;
};

struct AttackTarget {
    int user_id = 0;
    Vec2 location;
};

struct AttackOutcome {
    int user_id = 0;
    Vec2 estimate;
    double error = 0.0;
    bool excluded = false;  // all-zero upload
};

struct AttackReport {
    int round = 0;
    double nu = 2.0;
    std::vector<AttackOutcome> users;
    int n_included = 0;
    double rmse = std::numeric_limits<double>::quiet_NaN();
};

inline AttackReport attack_round(std::span<const UserGradient> uploads,
                                 std::span<const AttackTarget> truths, const GridSpec& grid,
                                 double nu, int round = 0) {
    AttackReport report;
    report.round = round;
    report.nu = nu;
    double sum_sq = 0.0;
    for (const auto& upload : uploads) {
        const AttackTarget* truth = nullptr;
        for (const auto& t : truths)
            if (t.user_id == upload.user_id) truth = &t;
        if (truth == nullptr) throw std::invalid_argument("upload without matching ground truth");

        AttackOutcome out;
        out.user_id = upload.user_id;
        bool all_zero = true;
        for (double v : upload.grad)
            if (v != 0.0) {
                all_zero = false;
                break;
            }
        if (all_zero) {
            out.excluded = true;
        } else {
            out.estimate = wcl_estimate(upload.grad, grid, nu);
            out.error = norm(out.estimate - truth->location);
            sum_sq += out.error * out.error;
            ++report.n_included;
        }
        report.users.push_back(out);
    }
    if (report.n_included > 0)
        report.rmse = std::sqrt(sum_sq / static_cast<double>(report.n_included));
    return report;
}

inline void write_attack_csv(std::ostream& os, std::span<const AttackReport> reports) {
    csv::write_row(os, {"round", "user_id", "err_m", "rmse_m", "nu"});
    for (const auto& rep : reports)
        for (const auto& user : rep.users)
            csv::write_row(os, {csv::fmt(rep.round), csv::fmt(user.user_id),
                                user.excluded ? "" : csv::fmt(user.error),
                                csv::fmt(rep.rmse), csv::fmt(rep.nu)});
}

}  // namespace fedmap
