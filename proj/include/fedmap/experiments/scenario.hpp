#pragma once

// Synthetic urban scenario generation: an obstacle height map rasterized from
// randomly placed buildings, ground users, elevated base stations, and noisy
// gain measurements labeled by either the smoothed or the hard-threshold
// model. Everything is drawn from one seeded stream in a fixed order, so a
// config and seed pin the scenario exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedmap/adversary.hpp"
#include "fedmap/core.hpp"
#include "fedmap/fed_engine.hpp"
#include "fedmap/geometry.hpp"
#include "fedmap/radio_model.hpp"
#include "fedmap/rng.hpp"

namespace fedmap {

enum class Labeler { smoothed, segmented };

enum class BuildingKind { circular, cubic, irregular };

struct ScenarioConfig {
    double width = 100.0;
    double height = 100.0;
    double cell_size = 5.0;

    int n_buildings = 12;
    std::vector<BuildingKind> shapes = {BuildingKind::circular, BuildingKind::cubic,
                                        BuildingKind::irregular};
    double building_min_height = 10.0;
    double building_max_height = 45.0;
    double footprint_min_frac = 0.05;  // of the shorter area side
    double footprint_max_frac = 0.15;

    int n_users = 20;
    double user_margin = 30.0;
    double user_height = 1.5;
    int n_bs = 50;
    double bs_altitude = 50.0;
    int samples_per_user = 50;

    PropagationParams theta_true{{-22.0, -28.0}, {-36.0, -22.0}};
    double noise_std = 1.0;
    Labeler labeler = Labeler::smoothed;
    double sharpness = 0.08;
    double h_max = 60.0;  // training initialization height, above every roof
    std::uint64_t seed = 1;

    void validate() const {
        if (!(width > 0.0) || !(height > 0.0) || !(cell_size > 0.0))
            throw std::invalid_argument("invalid area");
        if (n_buildings < 0) throw std::invalid_argument("negative building count");
        if (shapes.empty()) throw std::invalid_argument("empty building shape mix");
        if (building_min_height < 0.0 || building_max_height < building_min_height)
            throw std::invalid_argument("invalid building height range");
        if (building_max_height > h_max)
            throw std::invalid_argument("buildings would top the initialization height");
        if (!(footprint_min_frac > 0.0) || footprint_max_frac < footprint_min_frac ||
            footprint_max_frac >= 0.5)
            throw std::invalid_argument("invalid footprint range");
        if (n_users < 1 || n_bs < 1 || samples_per_user < 1)
            throw std::invalid_argument("need users, base stations, and samples");
        if (user_margin < 0.0 || 2.0 * user_margin >= std::min(width, height))
            throw std::invalid_argument("user margin leaves no placement area");
        if (user_height < 0.0 || bs_altitude <= user_height)
            throw std::invalid_argument("base stations must sit above users");
        if (noise_std < 0.0) throw std::invalid_argument("negative noise level");
        if (!(sharpness > 0.0)) throw std::invalid_argument("sharpness must be positive");
    }
};

struct Scenario {
    GridSpec grid;
    ObstacleMap truth_h;
    PropagationParams truth_theta;
    double sharpness = 1.0;
    double noise_std = 0.0;
    double h_max = 0.0;
    double user_height = 0.0;
    Labeler labeler = Labeler::smoothed;
    std::vector<UserDataset> users;
    std::vector<Vec3> bs_positions;
};

inline double label_gain(const Scenario& s, const Link& link) {
    return s.labeler == Labeler::segmented
               ? segmented_gain(link, s.truth_theta, s.truth_h, s.grid)
               : gain(link, s.truth_theta, s.truth_h, s.grid, s.sharpness);
}

namespace detail {

struct Rect {
    double x0, y0, x1, y1;
};

inline bool rect_covers_cell(const Rect& r, double cx0, double cy0, double cs) {
    return r.x0 < cx0 + cs && r.x1 > cx0 && r.y0 < cy0 + cs && r.y1 > cy0;
}

inline bool circle_covers_cell(Vec2 center, double radius, double cx0, double cy0, double cs) {
    const double px = std::clamp(center.x, cx0, cx0 + cs);
    const double py = std::clamp(center.y, cy0, cy0 + cs);
    return std::hypot(px - center.x, py - center.y) < radius;
}

inline void paint_rect(const GridSpec& grid, const Rect& r, double h,
                       std::vector<double>& heights) {
    for (int m = 0; m < grid.cell_count(); ++m) {
        const double cx0 = grid.origin.x + grid.cell_col(m) * grid.cell_size;
        const double cy0 = grid.origin.y + grid.cell_row(m) * grid.cell_size;
        if (rect_covers_cell(r, cx0, cy0, grid.cell_size)) heights[m] = std::max(heights[m], h);
    }
}

}  // namespace detail

inline Scenario generate_scenario(const ScenarioConfig& cfg) {
    cfg.validate();

    Scenario s;
    s.grid.origin = {0.0, 0.0};
    s.grid.cell_size = cfg.cell_size;
    s.grid.nx = static_cast<int>(std::round(cfg.width / cfg.cell_size));
    s.grid.ny = static_cast<int>(std::round(cfg.height / cfg.cell_size));
    s.grid.validate();
    if (cfg.n_buildings > s.grid.cell_count())
        throw std::invalid_argument("more buildings than the area admits");

    s.truth_theta = cfg.theta_true;
    s.sharpness = cfg.sharpness;
    s.noise_std = cfg.noise_std;
    s.h_max = cfg.h_max;
    s.user_height = cfg.user_height;
    s.labeler = cfg.labeler;
    s.truth_h.heights.assign(s.grid.cell_count(), 0.0);

    Rng rng(cfg.seed);
    const double side = std::min(cfg.width, cfg.height);

    for (int b = 0; b < cfg.n_buildings; ++b) {
        const BuildingKind kind = cfg.shapes[b % cfg.shapes.size()];
        const double h = rng.uniform(cfg.building_min_height, cfg.building_max_height);
        if (kind == BuildingKind::circular) {
            const double radius =
                0.5 * side * rng.uniform(cfg.footprint_min_frac, cfg.footprint_max_frac);
            const Vec2 c{rng.uniform(radius, cfg.width - radius),
                         rng.uniform(radius, cfg.height - radius)};
            for (int m = 0; m < s.grid.cell_count(); ++m) {
                const double cx0 = s.grid.origin.x + s.grid.cell_col(m) * cfg.cell_size;
                const double cy0 = s.grid.origin.y + s.grid.cell_row(m) * cfg.cell_size;
                if (detail::circle_covers_cell(c, radius, cx0, cy0, cfg.cell_size))
                    s.truth_h.heights[m] = std::max(s.truth_h.heights[m], h);
            }
        } else if (kind == BuildingKind::cubic) {
            const double w = side * rng.uniform(cfg.footprint_min_frac, cfg.footprint_max_frac);
            const double d = side * rng.uniform(cfg.footprint_min_frac, cfg.footprint_max_frac);
            const double x0 = rng.uniform(0.0, cfg.width - w);
            const double y0 = rng.uniform(0.0, cfg.height - d);
            detail::paint_rect(s.grid, {x0, y0, x0 + w, y0 + d}, h, s.truth_h.heights);
        } else {
            // Irregular footprint: a union of 2 to 4 overlapping rectangles
            // around a common anchor.
            const int parts = 2 + static_cast<int>(rng.uniform_int(3));
            const Vec2 anchor{rng.uniform(0.15 * cfg.width, 0.85 * cfg.width),
                              rng.uniform(0.15 * cfg.height, 0.85 * cfg.height)};
            for (int p = 0; p < parts; ++p) {
                const double w =
                    side * rng.uniform(0.6 * cfg.footprint_min_frac, cfg.footprint_max_frac);
                const double d =
                    side * rng.uniform(0.6 * cfg.footprint_min_frac, cfg.footprint_max_frac);
                const double jx = 0.4 * w * (2.0 * rng.uniform() - 1.0);
                const double jy = 0.4 * d * (2.0 * rng.uniform() - 1.0);
                double x0 = std::clamp(anchor.x + jx - 0.5 * w, 0.0, cfg.width - w);
                double y0 = std::clamp(anchor.y + jy - 0.5 * d, 0.0, cfg.height - d);
                detail::paint_rect(s.grid, {x0, y0, x0 + w, y0 + d}, h, s.truth_h.heights);
            }
        }
    }

    std::vector<Vec3> user_pos(cfg.n_users);
    for (auto& p : user_pos)
        p = {rng.uniform(cfg.user_margin, cfg.width - cfg.user_margin),
             rng.uniform(cfg.user_margin, cfg.height - cfg.user_margin), cfg.user_height};
    s.bs_positions.resize(cfg.n_bs);
    for (auto& p : s.bs_positions)
        p = {rng.uniform(0.0, cfg.width), rng.uniform(0.0, cfg.height), cfg.bs_altitude};

    double d_min = std::numeric_limits<double>::infinity();
    double d_max = 0.0;
    s.users.reserve(cfg.n_users);
    for (int i = 0; i < cfg.n_users; ++i) {
        UserDataset u;
        u.user_id = i;
        u.location = user_pos[i];
        u.samples.reserve(cfg.samples_per_user);
        for (int k = 0; k < cfg.samples_per_user; ++k) {
            const auto bs = s.bs_positions[rng.uniform_int(cfg.n_bs)];
            const Link link{u.location, bs};
            const double d = link_distance(link);
            d_min = std::min(d_min, d);
            d_max = std::max(d_max, d);
            u.samples.push_back({link, label_gain(s, link) + cfg.noise_std * rng.gaussian()});
        }
        s.users.push_back(std::move(u));
    }

    // The LOS line must dominate the NLOS line over the distances actually
    // measured; both are linear in log d, so the endpoints suffice.
    if (s.truth_theta.los.at(d_min) < s.truth_theta.nlos.at(d_min) ||
        s.truth_theta.los.at(d_max) < s.truth_theta.nlos.at(d_max))
        throw std::invalid_argument("LOS line below NLOS line at measured distances");

    return s;
}

inline std::vector<AttackTarget> attack_targets(const Scenario& s) {
    std::vector<AttackTarget> t;
    t.reserve(s.users.size());
    for (const auto& u : s.users) t.push_back({u.user_id, horizontal(u.location)});
    return t;
}

struct ObstacleMapInit {
    ObstacleMap h;
    PropagationParams theta;
};

// Training start state: flat height map at the scenario ceiling, true lines.
inline ObstacleMapInit training_init(const Scenario& s) {
    return {{std::vector<double>(s.grid.cell_count(), s.h_max)}, s.truth_theta};
}

}  // namespace fedmap
