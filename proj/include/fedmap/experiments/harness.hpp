#pragma once

// Glue that runs one federated training against one scenario, attacks the
// recorded uploads at the evaluation rounds, and flattens the outcome into
// metrics rows; plus a sweep driver over mechanism / budget / weight / seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedmap/adversary.hpp"
#include "fedmap/experiments/metrics.hpp"
#include "fedmap/experiments/scenario.hpp"
#include "fedmap/fed_engine.hpp"

namespace fedmap {

struct ExperimentConfig {
    TrainConfig train;
    double nu = 2.0;
    std::vector<int> eval_rounds;  // empty: {1, rounds/2, rounds}
    int eval_grid_n = 11;
    int eval_bs_count = 10;
    std::string experiment_id = "exp";
};

struct ExperimentResult {
    MetricsTable metrics;
    std::vector<AttackReport> attacks;
    TrainHistory history;
    double rmse_mean = std::numeric_limits<double>::quiet_NaN();
    double final_mae = std::numeric_limits<double>::quiet_NaN();
    double final_loss = std::numeric_limits<double>::quiet_NaN();
};

inline std::vector<int> normalize_eval_rounds(std::vector<int> rounds, int total) {
    if (rounds.empty()) rounds = {1, total / 2, total};
    for (int& r : rounds) r = std::clamp(r, 1, total);
    std::sort(rounds.begin(), rounds.end());
    rounds.erase(std::unique(rounds.begin(), rounds.end()), rounds.end());
    return rounds;
}

inline ExperimentResult run_experiment(const Scenario& s, const ExperimentConfig& cfg) {
    ExperimentResult result;
    const EvalSet eval = make_eval_set(s, cfg.eval_grid_n, cfg.eval_bs_count);
    const auto eval_rounds = normalize_eval_rounds(cfg.eval_rounds, cfg.train.rounds);

    TrainConfig tc = cfg.train;
    tc.sharpness = s.sharpness;
    tc.record_upload_rounds = eval_rounds;
    const double sharpness = s.sharpness;
    const auto mae_eval = [&eval, sharpness](const ObstacleMap& h, const PropagationParams& th) {
        return map_mae(eval, h, th, sharpness);
    };

    const auto [h0, theta0] = training_init(s);
    result.history = run_training(s.users, s.grid, h0, theta0, tc, mae_eval);

    const auto targets = attack_targets(s);
    const double rho = cfg.train.allocator.rho;
    double rmse_acc = 0.0;
    int rmse_count = 0;
    for (const int round : eval_rounds) {
        const RoundRecord& rec = result.history.rounds.at(static_cast<std::size_t>(round - 1));
        std::vector<UserGradient> uploads;
        uploads.reserve(rec.uploads.size());
        for (const auto& up : rec.uploads) uploads.push_back({up.user_id, up.grad_h});
        AttackReport report = attack_round(uploads, targets, s.grid, cfg.nu, round);
        if (std::isfinite(report.rmse)) {
            rmse_acc += report.rmse;
            ++rmse_count;
        }
        MetricsRow row;
        row.experiment = cfg.experiment_id;
        row.mechanism = mechanism_name(cfg.train.mechanism);
        row.mu = cfg.train.mu;
        row.rho = rho;
        row.nu = cfg.nu;
        row.round = round;
        row.map_mae = rec.map_mae;
        row.adversary_rmse = report.rmse;
        row.global_loss = rec.loss;
        result.metrics.push_back(row);
        result.attacks.push_back(std::move(report));
    }
    if (rmse_count > 0) result.rmse_mean = rmse_acc / rmse_count;
    if (!result.history.rounds.empty()) {
        const RoundRecord& last =
            result.history.rounds.at(static_cast<std::size_t>(eval_rounds.back() - 1));
        result.final_mae = last.map_mae;
        result.final_loss = last.loss;
    }
    return result;
}

struct SweepSpec {
    std::vector<Mechanism> mechanisms{Mechanism::uniform, Mechanism::geometry_aligned};
    std::vector<double> mu_values{1.0};
    std::vector<double> rho_values{1.0};  // geometry-aligned only; others run once
    std::vector<std::uint64_t> seeds{1};
};

struct RunSummary {
    std::string experiment;
    Mechanism mechanism = Mechanism::none;
    double mu = 0.0;
    double rho = 0.0;
    std::uint64_t seed = 0;
    double rmse_mean = std::numeric_limits<double>::quiet_NaN();
    double final_mae = std::numeric_limits<double>::quiet_NaN();
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    double trace_margin_min = std::numeric_limits<double>::infinity();
};

struct SweepResult {
    MetricsTable metrics;
    std::vector<RunSummary> runs;
};

inline std::string format_tag(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

inline SweepResult run_sweep(const ScenarioConfig& scenario_cfg, const ExperimentConfig& base,
                             const SweepSpec& spec) {
    if (spec.mechanisms.empty() || spec.mu_values.empty() || spec.seeds.empty())
        throw std::invalid_argument("sweep axes must be non-empty");
    if (spec.rho_values.empty()) throw std::invalid_argument("sweep axes must be non-empty");

    SweepResult out;
    for (const std::uint64_t seed : spec.seeds) {
        ScenarioConfig sc = scenario_cfg;
        sc.seed = seed;
        const Scenario s = generate_scenario(sc);
        for (const Mechanism mech : spec.mechanisms) {
            for (const double mu : spec.mu_values) {
                const bool uses_rho = mech == Mechanism::geometry_aligned;
                const std::vector<double> rhos =
                    uses_rho ? spec.rho_values : std::vector<double>{base.train.allocator.rho};
                for (const double rho : rhos) {
                    ExperimentConfig ec = base;
                    ec.train.mechanism = mech;
                    ec.train.mu = mu;
                    ec.train.allocator.rho = rho;
                    ec.train.seed = seed;
                    ec.experiment_id = std::string(mechanism_name(mech)) + "_mu" +
                                       format_tag(mu) + "_rho" + format_tag(rho) + "_s" +
                                       std::to_string(seed);
                    ExperimentResult res = run_experiment(s, ec);
                    out.metrics.insert(out.metrics.end(), res.metrics.begin(),
                                       res.metrics.end());
                    RunSummary sum;
                    sum.experiment = ec.experiment_id;
                    sum.mechanism = mech;
                    sum.mu = mu;
                    sum.rho = rho;
                    sum.seed = seed;
                    sum.rmse_mean = res.rmse_mean;
                    sum.final_mae = res.final_mae;
                    sum.final_loss = res.final_loss;
                    sum.trace_margin_min = res.history.trace_margin_min;
                    out.runs.push_back(std::move(sum));
                }
            }
        }
    }
    return out;
}

}  // namespace fedmap
