#pragma once

// Obstacle-aware path loss model. Channel gain blends a LOS and an NLOS
// log-distance line through a soft blockage indicator: per traversed cell the
// link height is compared against the cell's obstacle height through a
// logistic, and the per-cell factors multiply into S in [0, 1]. Gradients of
// the local mean squared error with respect to obstacle heights and line
// parameters are analytic.

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedmap/core.hpp"
#include "fedmap/geometry.hpp"
#include "fedmap/rng.hpp"

namespace fedmap {

struct PathLossLine {
    double slope = 0.0;      // dB per decade of distance
    double intercept = 0.0;  // dB at 1 m

    double at(double distance) const { return intercept + slope * std::log10(distance); }
};

struct PropagationParams {
    PathLossLine los;
    PathLossLine nlos;
};

// Gradient order: los.slope, los.intercept, nlos.slope, nlos.intercept.
using ThetaGrad = std::array<double, 4>;

struct ObstacleMap {
    std::vector<double> heights;
};

struct Measurement {
    Link link;
    double rss = 0.0;  // dB
};

// Numerically stable logistic and its log.
inline double psi(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double log_psi(double x) {
    // -softplus(-x)
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

// Precomputed per-link quantities reused across rounds.
struct SampleGeometry {
    double distance = 0.0;
    double log_d = 0.0;
    std::vector<CellHit> hits;
};

inline SampleGeometry make_sample_geometry(const GridSpec& grid, const Link& link) {
    SampleGeometry g;
    g.distance = link_distance(link);
    g.log_d = std::log10(g.distance);
    g.hits = traverse(grid, link);
    return g;
}

inline std::vector<SampleGeometry> precompute_geometry(std::span<const Measurement> samples,
                                                       const GridSpec& grid) {
    std::vector<SampleGeometry> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(make_sample_geometry(grid, s.link));
    return out;
}

inline void check_heights(const ObstacleMap& h, const GridSpec& grid) {
    if (h.heights.size() != static_cast<std::size_t>(grid.cell_count()))
        throw std::invalid_argument("obstacle map size does not match grid");
}

// Soft LOS indicator S. Accumulated in the log domain; an empty traversal
// yields exactly 1.
inline double los_indicator(std::span<const CellHit> hits, const std::vector<double>& heights,
                            double sharpness) {
    double log_s = 0.0;
    for (const auto& hit : hits)
        log_s += log_psi(sharpness * (hit.altitude - heights[hit.cell]));
    return std::exp(log_s);
}

inline double los_indicator(const Link& link, const ObstacleMap& h, const GridSpec& grid,
                            double sharpness = 1.0) {
    check_heights(h, grid);
    if (!(sharpness > 0.0)) throw std::invalid_argument("sharpness must be positive");
    return los_indicator(traverse(grid, link), h.heights, sharpness);
}

inline double gain(const SampleGeometry& geo, const PropagationParams& theta,
                   const std::vector<double>& heights, double sharpness) {
    const double s = los_indicator(geo.hits, heights, sharpness);
    const double l0 = theta.los.intercept + theta.los.slope * geo.log_d;
    const double l1 = theta.nlos.intercept + theta.nlos.slope * geo.log_d;
    return l0 * s + l1 * (1.0 - s);
}

inline double gain(const Link& link, const PropagationParams& theta, const ObstacleMap& h,
                   const GridSpec& grid, double sharpness = 1.0) {
    check_heights(h, grid);
    return gain(make_sample_geometry(grid, link), theta, h.heights, sharpness);
}

// Hard-threshold variant used as a ground-truth labeler: the link is NLOS as
// soon as one traversed cell's obstacle reaches the link height.
inline double segmented_gain(const Link& link, const PropagationParams& theta,
                             const ObstacleMap& h, const GridSpec& grid) {
    check_heights(h, grid);
    const double d = link_distance(link);
    bool blocked = false;
    for (const auto& hit : traverse(grid, link)) {
        if (h.heights[hit.cell] >= hit.altitude) {
            blocked = true;
            break;
        }
    }
    return blocked ? theta.nlos.at(d) : theta.los.at(d);
}

inline Measurement synthesize_measurement(const Link& link, const PropagationParams& theta,
                                          const ObstacleMap& h, const GridSpec& grid,
                                          double noise_std, Rng& rng, double sharpness = 1.0) {
    if (noise_std < 0.0) throw std::invalid_argument("noise_std must be nonnegative");
    return {link, gain(link, theta, h, grid, sharpness) + noise_std * rng.gaussian()};
}

inline double local_loss(std::span<const Measurement> samples,
                         std::span<const SampleGeometry> geos, const PropagationParams& theta,
                         const std::vector<double>& heights, double sharpness) {
    if (samples.empty()) throw std::invalid_argument("empty dataset");
    double acc = 0.0;
    for (std::size_t j = 0; j < samples.size(); ++j) {
        const double r = samples[j].rss - gain(geos[j], theta, heights, sharpness);
        acc += r * r;
    }
    return acc / static_cast<double>(samples.size());
}

inline double local_loss(std::span<const Measurement> samples, const PropagationParams& theta,
                         const ObstacleMap& h, const GridSpec& grid, double sharpness = 1.0) {
    check_heights(h, grid);
    return local_loss(samples, precompute_geometry(samples, grid), theta, h.heights, sharpness);
}

// Gradient of the local loss with respect to every cell height. Per sample,
// dS/dh_m = -k * (1 - psi_m) * S, so only traversed cells receive mass.
inline void grad_h(std::span<const Measurement> samples, std::span<const SampleGeometry> geos,
                   const PropagationParams& theta, const std::vector<double>& heights,
                   double sharpness, std::vector<double>& out) {
    if (samples.empty()) throw std::invalid_argument("empty dataset");
    std::fill(out.begin(), out.end(), 0.0);
    const double inv_j = 1.0 / static_cast<double>(samples.size());
    std::vector<double> psi_neg;
    for (std::size_t j = 0; j < samples.size(); ++j) {
        const auto& geo = geos[j];
        psi_neg.clear();
        double log_s = 0.0;
        for (const auto& hit : geo.hits) {
            const double x = sharpness * (hit.altitude - heights[hit.cell]);
            psi_neg.push_back(psi(-x));
            log_s += log_psi(x);
        }
        const double s = std::exp(log_s);
        const double l0 = theta.los.intercept + theta.los.slope * geo.log_d;
        const double l1 = theta.nlos.intercept + theta.nlos.slope * geo.log_d;
        const double resid = samples[j].rss - (l0 * s + l1 * (1.0 - s));
        const double weight = resid * (l1 - l0);
        for (std::size_t k = 0; k < geo.hits.size(); ++k) {
            const double ds_dh = -sharpness * psi_neg[k] * s;
            out[geo.hits[k].cell] += 2.0 * inv_j * weight * ds_dh;
        }
    }
}

inline std::vector<double> grad_h(std::span<const Measurement> samples,
                                  std::span<const SampleGeometry> geos,
                                  const PropagationParams& theta,
                                  const std::vector<double>& heights, double sharpness) {
    std::vector<double> out(heights.size());
    grad_h(samples, geos, theta, heights, sharpness, out);
    return out;
}

inline std::vector<double> grad_h(std::span<const Measurement> samples,
                                  const PropagationParams& theta, const ObstacleMap& h,
                                  const GridSpec& grid, double sharpness = 1.0) {
    check_heights(h, grid);
    std::vector<double> out(grid.cell_count());
    grad_h(samples, precompute_geometry(samples, grid), theta, h.heights, sharpness, out);
    return out;
}

// Gradient of the local loss with respect to the four line parameters.
inline ThetaGrad grad_theta(std::span<const Measurement> samples,
                            std::span<const SampleGeometry> geos, const PropagationParams& theta,
                            const std::vector<double>& heights, double sharpness) {
    if (samples.empty()) throw std::invalid_argument("empty dataset");
    ThetaGrad out = {0.0, 0.0, 0.0, 0.0};
    const double scale = 2.0 / static_cast<double>(samples.size());
    for (std::size_t j = 0; j < samples.size(); ++j) {
        const auto& geo = geos[j];
        const double s = los_indicator(geo.hits, heights, sharpness);
        const double l0 = theta.los.intercept + theta.los.slope * geo.log_d;
        const double l1 = theta.nlos.intercept + theta.nlos.slope * geo.log_d;
        const double resid = samples[j].rss - (l0 * s + l1 * (1.0 - s));
        out[0] += -scale * resid * geo.log_d * s;
        out[1] += -scale * resid * s;
        out[2] += -scale * resid * geo.log_d * (1.0 - s);
        out[3] += -scale * resid * (1.0 - s);
    }
    return out;
}

inline ThetaGrad grad_theta(std::span<const Measurement> samples, const PropagationParams& theta,
                            const ObstacleMap& h, const GridSpec& grid, double sharpness = 1.0) {
    check_heights(h, grid);
    return grad_theta(samples, precompute_geometry(samples, grid), theta, h.heights, sharpness);
}

}  // namespace fedmap
