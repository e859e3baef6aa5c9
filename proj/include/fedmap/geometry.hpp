#pragma once

// Planar cell grid and the traversal of a 3D link's horizontal projection
// across it (Amanatides-Woo style DDA with Liang-Barsky clipping).

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fedmap/core.hpp"

namespace fedmap {

struct GridSpec {
    Vec2 origin;
    double cell_size = 1.0;
    int nx = 0;  // columns (x axis)
    int ny = 0;  // rows (y axis)

    int cell_count() const { return nx * ny; }

    void validate() const {
        if (nx < 1 || ny < 1) throw std::invalid_argument("grid dimensions must be positive");
        if (!(cell_size > 0.0)) throw std::invalid_argument("cell size must be positive");
    }

    // Row-major: m = row * nx + col.
    int cell_index(int row, int col) const { return row * nx + col; }
    int cell_row(int m) const { return m / nx; }
    int cell_col(int m) const { return m % nx; }

    Vec2 cell_center(int m) const {
        if (m < 0 || m >= cell_count()) throw std::out_of_range("cell index out of range");
        return {origin.x + (cell_col(m) + 0.5) * cell_size,
                origin.y + (cell_row(m) + 0.5) * cell_size};
    }

    // Cell containing a point, or -1 when outside the grid.
    int cell_at(Vec2 p) const {
        const double rx = (p.x - origin.x) / cell_size;
        const double ry = (p.y - origin.y) / cell_size;
        if (rx < 0.0 || ry < 0.0) return -1;
        int col = static_cast<int>(rx);
        int row = static_cast<int>(ry);
        if (rx == static_cast<double>(nx)) col = nx - 1;  // closed upper edge
        if (ry == static_cast<double>(ny)) row = ny - 1;
        if (col >= nx || row >= ny) return -1;
        return cell_index(row, col);
    }

    double width() const { return nx * cell_size; }
    double height() const { return ny * cell_size; }
};

// Radio link between a ground user and an elevated base station.
struct Link {
    Vec3 user;
    Vec3 bs;
};

inline double link_distance(const Link& link) {
    const double d = norm(Vec3{link.bs.x - link.user.x, link.bs.y - link.user.y,
                               link.bs.z - link.user.z});
    if (d == 0.0) throw std::invalid_argument("degenerate link: endpoints coincide");
    return d;
}

// One grid cell crossed by the link's horizontal projection. altitude is the
// link height over the midpoint of the chord through the cell; chord is the
// horizontal chord length.
struct CellHit {
    int cell = -1;
    double altitude = 0.0;
    double chord = 0.0;
};

namespace detail {

// Start cell along one axis. rel is (coord - origin)/cell_size of the start
// point, dir the movement along the axis. A segment running exactly along a
// cell edge is assigned to the lower-index side.
inline int start_axis_cell(double rel, double dir, int n) {
    const double fl = std::floor(rel);
    int i = static_cast<int>(fl);
    if (rel == fl && dir <= 0.0 && i > 0) --i;
    return std::clamp(i, 0, n - 1);
}

}  // namespace detail

// Cells under the link's horizontal projection, clipped to the grid, in
// traversal order from the user end. Empty when the projection misses the
// grid entirely.
inline std::vector<CellHit> traverse(const GridSpec& grid, const Link& link) {
    grid.validate();
    link_distance(link);

    const double ax = link.user.x, ay = link.user.y;
    const double dx = link.bs.x - ax, dy = link.bs.y - ay;
    const double dz = link.bs.z - link.user.z;
    const double cs = grid.cell_size;
    const double xmin = grid.origin.x, xmax = grid.origin.x + grid.width();
    const double ymin = grid.origin.y, ymax = grid.origin.y + grid.height();

    // Liang-Barsky clip of t in [0, 1] against the grid rectangle.
    double t0 = 0.0, t1 = 1.0;
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {ax - xmin, xmax - ax, ay - ymin, ymax - ay};
    for (int k = 0; k < 4; ++k) {
        if (p[k] == 0.0) {
            if (q[k] < 0.0) return {};
        } else {
            const double t = q[k] / p[k];
            if (p[k] < 0.0) {
                t0 = std::max(t0, t);
            } else {
                t1 = std::min(t1, t);
            }
        }
    }
    if (t0 > t1) return {};

    std::vector<CellHit> out;
    const double hlen = std::hypot(dx, dy);

    if (hlen == 0.0) {  // vertical link: projection is a single point
        const int cell = grid.cell_at({ax, ay});
        if (cell < 0) return {};
        out.push_back({cell, link.user.z + 0.5 * dz, 0.0});
        return out;
    }

    const double sx = ax + t0 * dx, sy = ay + t0 * dy;
    int ix = detail::start_axis_cell((sx - xmin) / cs, dx, grid.nx);
    int iy = detail::start_axis_cell((sy - ymin) / cs, dy, grid.ny);
    const int stepx = (dx > 0.0) - (dx < 0.0);
    const int stepy = (dy > 0.0) - (dy < 0.0);
    constexpr double inf = std::numeric_limits<double>::infinity();
    const double tdx = stepx != 0 ? cs / std::abs(dx) : inf;
    const double tdy = stepy != 0 ? cs / std::abs(dy) : inf;
    double tmax_x = inf, tmax_y = inf;
    if (stepx != 0) tmax_x = (xmin + (ix + (stepx > 0 ? 1 : 0)) * cs - ax) / dx;
    if (stepy != 0) tmax_y = (ymin + (iy + (stepy > 0 ? 1 : 0)) * cs - ay) / dy;

    double t = t0;
    while (true) {
        const double t_exit = std::max(t, std::min({tmax_x, tmax_y, t1}));
        if (t_exit > t || t1 == t0) {
            const double tm = 0.5 * (t + t_exit);
            out.push_back({grid.cell_index(iy, ix), link.user.z + tm * dz,
                           (t_exit - t) * hlen});
        }
        if (std::min(tmax_x, tmax_y) >= t1) break;
        const bool step_x = tmax_x <= tmax_y;
        const bool step_y = tmax_y <= tmax_x;
        t = std::min(tmax_x, tmax_y);
        if (step_x) {
            ix += stepx;
            tmax_x += tdx;
            if (ix < 0 || ix >= grid.nx) break;
        }
        if (step_y) {
            iy += stepy;
            tmax_y += tdy;
            if (iy < 0 || iy >= grid.ny) break;
        }
    }
    return out;
}

}  // namespace fedmap
