#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedmap/experiments/scenario.hpp"
#include "fedmap/fed_engine.hpp"

using namespace fedmap;

namespace {

ScenarioConfig tiny_config() {
    ScenarioConfig cfg;
    cfg.width = 50.0;
    cfg.height = 50.0;
    cfg.cell_size = 10.0;
    cfg.n_buildings = 3;
    cfg.building_min_height = 10.0;
    cfg.building_max_height = 30.0;
    cfg.n_users = 4;
    cfg.user_margin = 10.0;
    cfg.n_bs = 8;
    cfg.bs_altitude = 40.0;
    cfg.samples_per_user = 12;
    cfg.noise_std = 0.5;
    cfg.sharpness = 0.1;
    cfg.h_max = 40.0;
    cfg.seed = 5;
    return cfg;
}

TrainConfig tiny_train() {
    TrainConfig tc;
    tc.rounds = 5;
    tc.eta_h = 0.5;
    tc.eta_theta = 0.0;
    tc.clip_threshold = 1.0;
    tc.sharpness = 0.1;
    tc.seed = 9;
    return tc;
}

}  // namespace

TEST_CASE("clipping caps the norm and leaves short vectors alone") {
    const std::vector<double> g{3.0, 4.0};  // norm 5
    const auto capped = clip(g, 1.0);
    CHECK(capped[0] == Catch::Approx(0.6));
    CHECK(capped[1] == Catch::Approx(0.8));

    const std::vector<double> small{0.3, 0.4};
    const auto same = clip(small, 1.0);
    CHECK(same[0] == 0.3);
    CHECK(same[1] == 0.4);

    const std::vector<double> zero{0.0, 0.0};
    const auto z = clip(zero, 1.0);
    CHECK(z[0] == 0.0);
    CHECK(z[1] == 0.0);

    CHECK_THROWS_AS(clip(g, 0.0), std::invalid_argument);
}

TEST_CASE("aggregation applies dataset-weighted averaging") {
    std::vector<double> h{10.0};
    std::vector<UserUpload> uploads(2);
    uploads[0].user_id = 0;
    uploads[0].weight = 0.25;
    uploads[0].grad_h = {1.0};
    uploads[1].user_id = 1;
    uploads[1].weight = 0.75;
    uploads[1].grad_h = {2.0};
    aggregate_h(h, uploads, 2.0);
    CHECK(h[0] == Catch::Approx(10.0 - 2.0 * (0.25 * 1.0 + 0.75 * 2.0)));

    PropagationParams theta{{-20.0, -30.0}, {-35.0, -25.0}};
    uploads[0].grad_theta = {1.0, 0.0, 0.0, 0.0};
    uploads[1].grad_theta = {1.0, 0.0, 0.0, -2.0};
    aggregate_theta(theta, uploads, 0.5);
    CHECK(theta.los.slope == Catch::Approx(-20.0 - 0.5 * 1.0));
    CHECK(theta.los.intercept == Catch::Approx(-30.0));
    CHECK(theta.nlos.intercept == Catch::Approx(-25.0 - 0.5 * (0.75 * -2.0)));
}

TEST_CASE("heterogeneity index spans its analytic bounds") {
    std::vector<UserDataset> users(4);
    for (int i = 0; i < 4; ++i) {
        users[i].user_id = i;
        users[i].samples.resize(10);
    }
    CHECK(dataset_heterogeneity(users) == Catch::Approx(0.25));  // equal sizes: 1/n

    users[0].samples.resize(1000);
    const double jt = dataset_heterogeneity(users);
    CHECK(jt > 0.25);
    CHECK(jt <= 1.0);
}

TEST_CASE("step size and budget bounds match hand computations") {
    CHECK(max_learning_rate(2.0, 1.0, 10.0, 0.1) == Catch::Approx(0.25));
    // inverting the step bound at its own output recovers the budget
    const double eta = max_learning_rate(2.0, 1.0, 10.0, 0.1);
    CHECK(max_noise_budget(2.0, 1.0, eta, 0.1) == Catch::Approx(10.0));
}

TEST_CASE("training is deterministic and order-independent") {
    const Scenario s = generate_scenario(tiny_config());
    TrainConfig tc = tiny_train();
    tc.mechanism = Mechanism::uniform;
    tc.mu = 1.0;

    const auto [h0, theta0] = training_init(s);
    const TrainHistory a = run_training(s.users, s.grid, h0, theta0, tc);
    const TrainHistory b = run_training(s.users, s.grid, h0, theta0, tc);
    REQUIRE(a.h.heights == b.h.heights);
    REQUIRE(a.rounds.size() == b.rounds.size());
    for (std::size_t i = 0; i < a.rounds.size(); ++i)
        REQUIRE(a.rounds[i].loss == b.rounds[i].loss);

    std::vector<UserDataset> shuffled(s.users.rbegin(), s.users.rend());
    const TrainHistory c = run_training(shuffled, s.grid, h0, theta0, tc);
    REQUIRE(a.h.heights == c.h.heights);
}

TEST_CASE("seeds steer the injected noise") {
    const Scenario s = generate_scenario(tiny_config());
    TrainConfig tc = tiny_train();
    tc.mechanism = Mechanism::uniform;
    tc.mu = 2.0;
    const auto [h0, theta0] = training_init(s);
    const TrainHistory a = run_training(s.users, s.grid, h0, theta0, tc);
    tc.seed += 1;
    const TrainHistory b = run_training(s.users, s.grid, h0, theta0, tc);
    CHECK(a.h.heights != b.h.heights);
}

TEST_CASE("duplicate user ids are rejected") {
    const Scenario s = generate_scenario(tiny_config());
    std::vector<UserDataset> users = s.users;
    users[1].user_id = users[0].user_id;
    const auto [h0, theta0] = training_init(s);
    CHECK_THROWS_AS(run_training(users, s.grid, h0, theta0, tiny_train()),
                    std::invalid_argument);
}

TEST_CASE("noiseless training reduces the global loss") {
    const Scenario s = generate_scenario(tiny_config());
    TrainConfig tc = tiny_train();
    tc.rounds = 30;
    tc.eta_h = 2.0;
    tc.clip_threshold = 5.0;
    const auto [h0, theta0] = training_init(s);
    const TrainHistory hist = run_training(s.users, s.grid, h0, theta0, tc);
    REQUIRE(hist.rounds.size() == 30);
    CHECK(hist.rounds.back().loss < hist.initial_loss);
}

TEST_CASE("divergent steps trip the guard") {
    const Scenario s = generate_scenario(tiny_config());
    TrainConfig tc = tiny_train();
    tc.rounds = 200;
    tc.eta_h = 1e9;
    tc.eta_theta = 1e9;
    tc.clip_threshold = 1e6;
    tc.divergence_factor = 10.0;
    const auto [h0, theta0] = training_init(s);
    CHECK_THROWS_AS(run_training(s.users, s.grid, h0, theta0, tc), std::runtime_error);
}

TEST_CASE("geometry-aligned runs keep a nonnegative allocator trace margin") {
    const Scenario s = generate_scenario(tiny_config());
    TrainConfig tc = tiny_train();
    tc.mechanism = Mechanism::geometry_aligned;
    tc.mu = 5.0;
    tc.allocator.rho = 1.0;
    const auto [h0, theta0] = training_init(s);
    const TrainHistory hist = run_training(s.users, s.grid, h0, theta0, tc);
    CHECK(hist.trace_margin_min >= -1e-9);
    CHECK(hist.rounds.size() == 5);
}

TEST_CASE("upload recording and snapshots land on the requested rounds") {
    const Scenario s = generate_scenario(tiny_config());
    TrainConfig tc = tiny_train();
    tc.record_upload_rounds = {2, 5};
    tc.checkpoint_rounds = {3};
    const auto [h0, theta0] = training_init(s);
    const TrainHistory hist = run_training(s.users, s.grid, h0, theta0, tc);
    CHECK(hist.rounds[0].uploads.empty());
    CHECK(hist.rounds[1].uploads.size() == s.users.size());
    CHECK(hist.rounds[4].uploads.size() == s.users.size());
    CHECK_FALSE(hist.rounds[1].has_snapshot);
    CHECK(hist.rounds[2].has_snapshot);

    // recorded uploads are the clipped (and here noiseless) gradients
    for (const auto& up : hist.rounds[1].uploads) {
        double norm_sq = 0.0;
        for (const double v : up.grad_h) norm_sq += v * v;
        REQUIRE(std::sqrt(norm_sq) <= tc.clip_threshold + 1e-9);
    }
}
