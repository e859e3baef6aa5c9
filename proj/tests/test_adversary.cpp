#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "fedmap/adversary.hpp"
#include "fedmap/fed_engine.hpp"
#include "fedmap/rng.hpp"

using namespace fedmap;

namespace {

GridSpec square_grid(int n, double cell) { return {{0.0, 0.0}, cell, n, n}; }

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST_CASE("estimate matches a hand-computed centroid") {
    const GridSpec grid{{0.0, 0.0}, 10.0, 3, 1};  // centers (5,5), (15,5), (25,5)
    const std::vector<double> g{3.0, 0.0, -1.0};
    // nu = 2: weights 9 and 1 after scaling, centroid x = (9*5 + 1*25) / 10 = 7
    const Vec2 est = wcl_estimate(g, grid, 2.0);
    CHECK(est.x == Catch::Approx(7.0));
    CHECK(est.y == Catch::Approx(5.0));

    // nu = 1: weights 3 and 1, centroid x = (3*5 + 1*25) / 4 = 10
    CHECK(wcl_estimate(g, grid, 1.0).x == Catch::Approx(10.0));
}

TEST_CASE("estimate is invariant to gradient scaling") {
    Rng rng(13);
    const GridSpec grid = square_grid(4, 5.0);
    std::vector<double> g(grid.cell_count());
    for (auto& v : g) v = rng.uniform(-1.0, 1.0);

    const Vec2 base = wcl_estimate(g, grid, 2.0);
    std::vector<double> doubled = g, scaled = g;
    for (auto& v : doubled) v *= 4.0;  // exact in binary floating point
    for (auto& v : scaled) v *= 3.7;
    const Vec2 d = wcl_estimate(doubled, grid, 2.0);
    CHECK(d.x == base.x);
    CHECK(d.y == base.y);
    const Vec2 s = wcl_estimate(scaled, grid, 2.0);
    CHECK(s.x == Catch::Approx(base.x).margin(1e-10));
    CHECK(s.y == Catch::Approx(base.y).margin(1e-10));

    // clipping rescales the whole vector, so the estimate is unchanged
    const auto clipped = clip(g, 0.25);
    const Vec2 c = wcl_estimate(clipped, grid, 2.0);
    CHECK(c.x == Catch::Approx(base.x).margin(1e-10));
    CHECK(c.y == Catch::Approx(base.y).margin(1e-10));
}

TEST_CASE("infinite exponent picks the strongest cell") {
    const GridSpec grid = square_grid(3, 10.0);
    std::vector<double> g(9, 0.0);
    g[4] = -2.0;
    g[7] = 1.5;
    const Vec2 est = wcl_estimate(g, grid, kInf);
    const Vec2 center = grid.cell_center(4);
    CHECK(est.x == center.x);
    CHECK(est.y == center.y);

    // ties resolve to the lowest cell index
    g[7] = 2.0;
    g[1] = -2.0;
    const Vec2 tie = wcl_estimate(g, grid, kInf);
    const Vec2 first = grid.cell_center(1);
    CHECK(tie.x == first.x);
    CHECK(tie.y == first.y);
}

TEST_CASE("estimate stays inside the grid bounding box") {
    Rng rng(29);
    const GridSpec grid = square_grid(5, 7.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> g(grid.cell_count());
        for (auto& v : g) v = rng.uniform(-1.0, 1.0);
        for (const double nu : {0.5, 1.0, 2.0, 4.0}) {
            const Vec2 est = wcl_estimate(g, grid, nu);
            REQUIRE(est.x >= grid.origin.x);
            REQUIRE(est.x <= grid.origin.x + grid.width());
            REQUIRE(est.y >= grid.origin.y);
            REQUIRE(est.y <= grid.origin.y + grid.height());
        }
    }
}

TEST_CASE("degenerate weights are rejected") {
    const GridSpec grid = square_grid(2, 1.0);
    const std::vector<double> zero(4, 0.0);
    CHECK_THROWS_AS(wcl_estimate(zero, grid, 2.0), std::invalid_argument);
    const std::vector<double> g{1.0, 0.0, 0.0, 0.0};
    CHECK_THROWS_AS(wcl_estimate(g, grid, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(wcl_estimate(g, grid, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(wcl_estimate(g, grid, std::numeric_limits<double>::quiet_NaN()),
                    std::invalid_argument);
}

TEST_CASE("attack round aggregates errors and excludes silent users") {
    const GridSpec grid{{0.0, 0.0}, 10.0, 3, 1};
    std::vector<UserGradient> uploads;
    uploads.push_back({1, {3.0, 0.0, -1.0}});   // estimate lands at (7, 5)
    uploads.push_back({2, {0.0, 0.0, 0.0}});    // all zero: excluded
    uploads.push_back({3, {0.0, 5.0, 0.0}});    // estimate exactly (15, 5)
    const std::vector<AttackTarget> targets{{1, {7.0, 9.0}}, {2, {1.0, 1.0}}, {3, {15.0, 5.0}}};

    const AttackReport rep = attack_round(uploads, targets, grid, 2.0, 4);
    REQUIRE(rep.users.size() == 3);
    CHECK(rep.round == 4);
    CHECK(rep.n_included == 2);
    CHECK(rep.users[0].error == Catch::Approx(4.0));
    CHECK(rep.users[1].excluded);
    CHECK(rep.users[2].error == Catch::Approx(0.0).margin(1e-12));
    CHECK(rep.rmse == Catch::Approx(std::sqrt(16.0 / 2.0)));
}

TEST_CASE("attack round requires a matching target") {
    const GridSpec grid = square_grid(2, 1.0);
    std::vector<UserGradient> uploads{{7, {1.0, 0.0, 0.0, 0.0}}};
    const std::vector<AttackTarget> targets{{8, {0.5, 0.5}}};
    CHECK_THROWS_AS(attack_round(uploads, targets, grid, 2.0, 0), std::invalid_argument);
}

TEST_CASE("attack csv has one row per user and blank errors when excluded") {
    const GridSpec grid{{0.0, 0.0}, 10.0, 3, 1};
    std::vector<UserGradient> uploads{{1, {1.0, 0.0, 0.0}}, {2, {0.0, 0.0, 0.0}}};
    const std::vector<AttackTarget> targets{{1, {5.0, 5.0}}, {2, {1.0, 1.0}}};
    const AttackReport rep = attack_round(uploads, targets, grid, 2.0, 1);

    std::ostringstream os;
    write_attack_csv(os, std::vector<AttackReport>{rep});
    CHECK(os.str() ==
          "round,user_id,err_m,rmse_m,nu\r\n"
          "1,1,0,0,2\r\n"
          "1,2,,0,2\r\n");
}
