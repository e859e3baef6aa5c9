#pragma once

// Map quality metric and the result table shared by experiments: mean
// absolute gain error over a fixed lattice of evaluation positions against
// the scenario's ground-truth labeler.

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "fedmap/experiments/scenario.hpp"
#include "fedmap/io/csv.hpp"

namespace fedmap {

struct EvalPoint {
    SampleGeometry geo;
    double truth_gain = 0.0;
};

struct EvalSet {
    std::vector<EvalPoint> points;
};

// Evaluation links: an n x n position lattice at user height, paired with the
// first bs_count base stations.
inline EvalSet make_eval_set(const Scenario& s, int grid_n = 11, int bs_count = 10) {
    if (grid_n < 1 || bs_count < 1) throw std::invalid_argument("invalid evaluation set size");
    const auto n_bs = std::min<std::size_t>(bs_count, s.bs_positions.size());
    EvalSet eval;
    eval.points.reserve(static_cast<std::size_t>(grid_n) * grid_n * n_bs);
    const double w = s.grid.width(), h = s.grid.height();
    for (int iy = 0; iy < grid_n; ++iy) {
        for (int ix = 0; ix < grid_n; ++ix) {
            const Vec3 pos{s.grid.origin.x + (ix + 0.5) * w / grid_n,
                           s.grid.origin.y + (iy + 0.5) * h / grid_n, s.user_height};
            for (std::size_t b = 0; b < n_bs; ++b) {
                const Link link{pos, s.bs_positions[b]};
                EvalPoint p;
                p.geo = make_sample_geometry(s.grid, link);
                p.truth_gain = label_gain(s, link);
                eval.points.push_back(std::move(p));
            }
        }
    }
    return eval;
}

inline double map_mae(const EvalSet& eval, const ObstacleMap& h, const PropagationParams& theta,
                      double sharpness) {
    if (eval.points.empty()) throw std::invalid_argument("empty evaluation set");
    double acc = 0.0;
    for (const auto& p : eval.points)
        acc += std::abs(p.truth_gain - gain(p.geo, theta, h.heights, sharpness));
    return acc / static_cast<double>(eval.points.size());
}

struct MetricsRow {
    std::string experiment;
    std::string mechanism;
    double mu = 0.0;
    double rho = 0.0;
    double nu = 2.0;
    int round = 0;
    double map_mae = std::numeric_limits<double>::quiet_NaN();
    double adversary_rmse = std::numeric_limits<double>::quiet_NaN();
    double global_loss = std::numeric_limits<double>::quiet_NaN();
};

using MetricsTable = std::vector<MetricsRow>;

inline void write_metrics_csv(std::ostream& os, const MetricsTable& rows) {
    csv::write_row(os, {"experiment", "mechanism", "mu", "rho", "nu", "round", "map_mae_db",
                        "adversary_rmse_m", "global_loss_db2"});
    for (const auto& r : rows)
        csv::write_row(os, {r.experiment, r.mechanism, csv::fmt(r.mu), csv::fmt(r.rho),
                            csv::fmt(r.nu), csv::fmt(r.round), csv::fmt(r.map_mae),
                            csv::fmt(r.adversary_rmse), csv::fmt(r.global_loss)});
}

}  // namespace fedmap
