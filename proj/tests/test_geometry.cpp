#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>

#include "fedmap/geometry.hpp"
#include "fedmap/rng.hpp"

using namespace fedmap;

namespace {

GridSpec square_grid(int n, double cell) { return {{0.0, 0.0}, cell, n, n}; }

double clipped_horizontal_length(const GridSpec& grid, const Link& link) {
    const Vec2 a = horizontal(link.user), b = horizontal(link.bs);
    const Vec2 d = b - a;
    double t0 = 0.0, t1 = 1.0;
    const double lo[2] = {grid.origin.x, grid.origin.y};
    const double hi[2] = {grid.origin.x + grid.width(), grid.origin.y + grid.height()};
    const double p[2] = {a.x, a.y}, q[2] = {d.x, d.y};
    for (int ax = 0; ax < 2; ++ax) {
        if (q[ax] == 0.0) {
            if (p[ax] < lo[ax] || p[ax] > hi[ax]) return 0.0;
            continue;
        }
        double ta = (lo[ax] - p[ax]) / q[ax], tb = (hi[ax] - p[ax]) / q[ax];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t1 <= t0) return 0.0;
    return (t1 - t0) * std::hypot(d.x, d.y);
}

}  // namespace

TEST_CASE("grid indexing round-trips and centers sit mid-cell") {
    const GridSpec grid = square_grid(10, 10.0);
    REQUIRE(grid.cell_count() == 100);
    CHECK(grid.cell_center(0).x == 5.0);
    CHECK(grid.cell_center(0).y == 5.0);
    CHECK(grid.cell_center(11).x == 15.0);
    CHECK(grid.cell_center(11).y == 15.0);
    CHECK(grid.cell_center(22).x == 25.0);
    CHECK(grid.cell_center(22).y == 25.0);
    for (int m = 0; m < grid.cell_count(); ++m) {
        REQUIRE(grid.cell_index(grid.cell_row(m), grid.cell_col(m)) == m);
        REQUIRE(grid.cell_at(grid.cell_center(m)) == m);
    }
    CHECK_THROWS_AS(grid.cell_center(-1), std::out_of_range);
    CHECK_THROWS_AS(grid.cell_center(100), std::out_of_range);
}

TEST_CASE("cell_at handles boundaries") {
    const GridSpec grid = square_grid(4, 5.0);
    CHECK(grid.cell_at({-0.1, 1.0}) == -1);
    CHECK(grid.cell_at({1.0, 20.1}) == -1);
    CHECK(grid.cell_at({0.0, 0.0}) == 0);
    CHECK(grid.cell_at({20.0, 20.0}) == 15);  // closed upper edge
    CHECK(grid.cell_at({5.0, 0.0}) == 1);     // interior edges belong to the upper cell
}

TEST_CASE("grid validation rejects bad shapes") {
    CHECK_THROWS_AS((GridSpec{{0, 0}, 1.0, 0, 3}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((GridSpec{{0, 0}, 0.0, 3, 3}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((GridSpec{{0, 0}, -1.0, 3, 3}.validate()), std::invalid_argument);
}

TEST_CASE("degenerate link has no distance") {
    CHECK_THROWS_AS(link_distance({{1, 2, 3}, {1, 2, 3}}), std::invalid_argument);
    CHECK(link_distance({{0, 0, 0}, {3, 4, 0}}) == Catch::Approx(5.0));
}

TEST_CASE("three-cell traversal example") {
    const GridSpec grid{{0.0, 0.0}, 10.0, 3, 1};
    const Link link{{5, 5, 10}, {25, 5, 10}};
    const auto hits = traverse(grid, link);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].cell == 0);
    CHECK(hits[1].cell == 1);
    CHECK(hits[2].cell == 2);
    CHECK(hits[0].chord == Catch::Approx(5.0));
    CHECK(hits[1].chord == Catch::Approx(10.0));
    CHECK(hits[2].chord == Catch::Approx(5.0));
    for (const auto& h : hits) CHECK(h.altitude == Catch::Approx(10.0));
}

TEST_CASE("traversal altitude interpolates along the link") {
    const GridSpec grid{{0.0, 0.0}, 10.0, 2, 1};
    const Link link{{0, 5, 0}, {20, 5, 40}};
    const auto hits = traverse(grid, link);
    REQUIRE(hits.size() == 2);
    // chord midpoints at x = 5 and 15, so altitude = 10 and 30
    CHECK(hits[0].altitude == Catch::Approx(10.0));
    CHECK(hits[1].altitude == Catch::Approx(30.0));
}

TEST_CASE("traversal is symmetric under endpoint swap") {
    const GridSpec grid = square_grid(6, 7.0);
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const Link link{{rng.uniform(-5.0, 47.0), rng.uniform(-5.0, 47.0), rng.uniform(1.0, 3.0)},
                        {rng.uniform(-5.0, 47.0), rng.uniform(-5.0, 47.0), rng.uniform(20.0, 60.0)}};
        auto fwd = traverse(grid, link);
        auto bwd = traverse(grid, {link.bs, link.user});
        REQUIRE(fwd.size() == bwd.size());
        const auto by_cell = [](const CellHit& a, const CellHit& b) { return a.cell < b.cell; };
        std::sort(fwd.begin(), fwd.end(), by_cell);
        std::sort(bwd.begin(), bwd.end(), by_cell);
        for (std::size_t i = 0; i < fwd.size(); ++i) {
            REQUIRE(fwd[i].cell == bwd[i].cell);
            REQUIRE(fwd[i].chord == Catch::Approx(bwd[i].chord).margin(1e-9));
            REQUIRE(fwd[i].altitude == Catch::Approx(bwd[i].altitude).margin(1e-9));
        }
    }
}

TEST_CASE("chord lengths sum to the clipped horizontal length") {
    const GridSpec grid = square_grid(5, 8.0);
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const Link link{{rng.uniform(-10.0, 50.0), rng.uniform(-10.0, 50.0), 1.5},
                        {rng.uniform(-10.0, 50.0), rng.uniform(-10.0, 50.0), 30.0}};
        if (norm(horizontal(link.bs) - horizontal(link.user)) < 1e-9) continue;
        const auto hits = traverse(grid, link);
        double sum = 0.0;
        for (const auto& h : hits) sum += h.chord;
        const double expect = clipped_horizontal_length(grid, link);
        REQUIRE(sum == Catch::Approx(expect).margin(1e-9 * (1.0 + expect)));
    }
}

TEST_CASE("traversal matches dense sampling") {
    const GridSpec grid = square_grid(5, 8.0);
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const Link link{{rng.uniform(1.0, 39.0), rng.uniform(1.0, 39.0), rng.uniform(1.0, 2.0)},
                        {rng.uniform(1.0, 39.0), rng.uniform(1.0, 39.0), rng.uniform(30.0, 50.0)}};
        const Vec2 a = horizontal(link.user), b = horizontal(link.bs);
        const double hlen = norm(b - a);
        if (hlen < 1.0) continue;

        constexpr int kSamples = 200000;
        std::map<int, double> mass;
        for (int i = 0; i < kSamples; ++i) {
            const double t = (i + 0.5) / kSamples;
            const int cell = grid.cell_at({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
            if (cell >= 0) mass[cell] += hlen / kSamples;
        }
        const auto hits = traverse(grid, link);
        double covered = 0.0;
        for (const auto& h : hits) {
            if (h.chord < 2.0 * hlen / kSamples) continue;  // grazing cells may be unsampled
            REQUIRE(mass.count(h.cell) == 1);
            REQUIRE(mass[h.cell] == Catch::Approx(h.chord).margin(3.0 * hlen / kSamples + 1e-9));
            covered += h.chord;
        }
        double total = 0.0;
        for (const auto& [cell, m] : mass) total += m;
        REQUIRE(covered == Catch::Approx(total).margin(20.0 * hlen / kSamples));
    }
}

TEST_CASE("vertical link hits a single cell") {
    const GridSpec grid = square_grid(4, 5.0);
    const auto hits = traverse(grid, {{12, 17, 0}, {12, 17, 50}});
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].cell == grid.cell_at({12, 17}));
    CHECK(hits[0].altitude == Catch::Approx(25.0));
    CHECK(hits[0].chord == 0.0);
}

TEST_CASE("vertical link outside the grid hits nothing") {
    const GridSpec grid = square_grid(4, 5.0);
    CHECK(traverse(grid, {{-3, 2, 0}, {-3, 2, 50}}).empty());
    CHECK(traverse(grid, {{-10, -10, 1}, {-5, -5, 40}}).empty());
}

TEST_CASE("link along an interior gridline stays in the lower row") {
    const GridSpec grid = square_grid(3, 10.0);
    const auto hits = traverse(grid, {{1, 10, 5}, {29, 10, 5}});
    REQUIRE_FALSE(hits.empty());
    for (const auto& h : hits) CHECK(grid.cell_row(h.cell) == 0);
}
