// Command-line front end: scenario generation, federated training with the
// localization attack evaluated at the recorded rounds, offline attacks on
// dumped gradients, parameter sweeps, and the two analytic verifiers.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedmap/adversary.hpp"
#include "fedmap/experiments/harness.hpp"
#include "fedmap/experiments/verify.hpp"
#include "fedmap/io/config.hpp"
#include "fedmap/io/csv.hpp"

namespace fs = std::filesystem;
using namespace fedmap;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mechanism;
    std::optional<double> mu;
    std::optional<double> rho;
    std::optional<std::string> nu;
};

io::AppConfig load_with_overrides(const CommonOpts& opts) {
    io::AppConfig cfg;
    if (!opts.config_path.empty()) cfg = io::load_config(opts.config_path);
    if (opts.seed) {
        cfg.scenario.seed = *opts.seed;
        cfg.experiment.train.seed = *opts.seed;
    }
    if (opts.mechanism) cfg.experiment.train.mechanism = io::parse_mechanism(*opts.mechanism);
    if (opts.mu) cfg.experiment.train.mu = *opts.mu;
    if (opts.rho) cfg.experiment.train.allocator.rho = *opts.rho;
    if (opts.nu) {
        if (*opts.nu == "inf")
            cfg.experiment.nu = std::numeric_limits<double>::infinity();
        else
            cfg.experiment.nu = std::stod(*opts.nu);
    }
    return cfg;
}

fs::path prepare_out(const std::string& out_dir) {
    fs::path p(out_dir);
    fs::create_directories(p);
    return p;
}

void write_history_csv(std::ostream& os, const TrainHistory& hist) {
    csv::write_row(os, {"round", "loss_db2", "map_mae_db"});
    for (const auto& rec : hist.rounds)
        csv::write_row(os, {csv::fmt(rec.round), csv::fmt(rec.loss),
                            std::isnan(rec.map_mae) ? std::string() : csv::fmt(rec.map_mae)});
}

void write_runs_csv(std::ostream& os, const std::vector<RunSummary>& runs) {
    csv::write_row(os, {"experiment", "mechanism", "mu", "rho", "seed", "adversary_rmse_m",
                        "final_mae_db", "final_loss_db2", "trace_margin_min"});
    for (const auto& r : runs)
        csv::write_row(os, {r.experiment, mechanism_name(r.mechanism), csv::fmt(r.mu),
                            csv::fmt(r.rho), csv::fmt(static_cast<long long>(r.seed)),
                            csv::fmt(r.rmse_mean), csv::fmt(r.final_mae),
                            csv::fmt(r.final_loss),
                            std::isfinite(r.trace_margin_min) ? csv::fmt(r.trace_margin_min)
                                                              : std::string()});
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

int cmd_generate(const CommonOpts& opts) {
    const io::AppConfig cfg = load_with_overrides(opts);
    const Scenario s = generate_scenario(cfg.scenario);
    const fs::path out = prepare_out(opts.out_dir);
    io::save_scenario(s, (out / "scenario.json").string());
    std::cout << "wrote " << (out / "scenario.json").string() << " (" << s.grid.cell_count()
              << " cells, " << s.users.size() << " users, " << s.bs_positions.size()
              << " base stations)\n";
    return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& scenario_path, bool dump_gradients) {
    io::AppConfig cfg = load_with_overrides(opts);
    const fs::path out = prepare_out(opts.out_dir);

    Scenario s;
    if (!scenario_path.empty()) {
        s = io::load_scenario(scenario_path);
    } else {
        s = generate_scenario(cfg.scenario);
        io::save_scenario(s, (out / "scenario.json").string());
    }

    ExperimentConfig ec = cfg.experiment;
    if (dump_gradients) ec.train.gradient_dump_dir = (out / "grads").string();
    const ExperimentResult res = run_experiment(s, ec);

    {
        auto os = open_out(out / "history.csv");
        write_history_csv(os, res.history);
    }
    {
        auto os = open_out(out / "metrics.csv");
        write_metrics_csv(os, res.metrics);
    }
    {
        auto os = open_out(out / "attack.csv");
        write_attack_csv(os, res.attacks);
    }
    std::cout << "mechanism " << mechanism_name(ec.train.mechanism) << " mu " << ec.train.mu
              << " rho " << ec.train.allocator.rho << "\n"
              << "final loss " << res.final_loss << " dB^2, map MAE " << res.final_mae
              << " dB, attack RMSE " << res.rmse_mean << " m\n";
    return 0;
}

std::vector<double> read_gradient_csv(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty gradient file " + p.string());
    std::vector<double> out;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        out.push_back(std::stod(line));
    }
    return out;
}

int cmd_attack(const CommonOpts& opts, const std::string& scenario_path,
               const std::string& grads_dir) {
    const io::AppConfig cfg = load_with_overrides(opts);
    const Scenario s = io::load_scenario(scenario_path);
    const auto targets = attack_targets(s);

    std::map<int, std::vector<UserGradient>> by_round;
    for (const auto& entry : fs::directory_iterator(grads_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        int round = 0, user = 0;
        if (std::sscanf(name.c_str(), "grad_r%d_u%d.csv", &round, &user) != 2) continue;
        auto grad = read_gradient_csv(entry.path());
        if (grad.size() != static_cast<std::size_t>(s.grid.cell_count()))
            throw std::runtime_error(name + ": gradient length does not match grid");
        by_round[round].push_back({user, std::move(grad)});
    }
    if (by_round.empty()) throw std::runtime_error("no gradient files found in " + grads_dir);

    std::vector<AttackReport> reports;
    for (auto& [round, uploads] : by_round) {
        std::sort(uploads.begin(), uploads.end(),
                  [](const UserGradient& a, const UserGradient& b) {
                      return a.user_id < b.user_id;
                  });
        reports.push_back(attack_round(uploads, targets, s.grid, cfg.experiment.nu, round));
    }

    const fs::path out = prepare_out(opts.out_dir);
    auto os = open_out(out / "attack.csv");
    write_attack_csv(os, reports);
    std::cout << "attacked " << reports.size() << " rounds, nu " << cfg.experiment.nu
              << ", last-round RMSE " << reports.back().rmse << " m\n";
    return 0;
}

int cmd_sweep(const CommonOpts& opts) {
    const io::AppConfig cfg = load_with_overrides(opts);
    const fs::path out = prepare_out(opts.out_dir);
    const SweepResult res = run_sweep(cfg.scenario, cfg.experiment, cfg.sweep);
    {
        auto os = open_out(out / "sweep_metrics.csv");
        write_metrics_csv(os, res.metrics);
    }
    {
        auto os = open_out(out / "runs.csv");
        write_runs_csv(os, res.runs);
    }
    std::cout << "swept " << res.runs.size() << " runs\n";
    return 0;
}

int cmd_verify_thm1(const CommonOpts& opts) {
    const io::AppConfig cfg = load_with_overrides(opts);
    const Scenario s = generate_scenario(cfg.scenario);
    const AttenuationReport rep =
        verify_gradient_attenuation(s, cfg.verify.thm1_trials, cfg.scenario.seed);
    const fs::path out = prepare_out(opts.out_dir);
    auto os = open_out(out / "thm1.csv");
    csv::write_row(os, {"pairs", "ordered", "fraction"});
    csv::write_row(os, {csv::fmt(static_cast<long long>(rep.pairs)),
                        csv::fmt(static_cast<long long>(rep.ordered)), csv::fmt(rep.fraction())});
    std::cout << "gradient attenuation: " << rep.ordered << "/" << rep.pairs
              << " ordered pairs (fraction " << rep.fraction() << ")\n";
    return rep.vacuous() ? 1 : 0;
}

int cmd_verify_thm2(const CommonOpts& opts) {
    const io::AppConfig cfg = load_with_overrides(opts);
    const io::VerifyConfig& vc = cfg.verify;
    const double mu = opts.mu ? *opts.mu : vc.thm2_mu;
    const auto rows = check_localization_limit(vc.thm2_cells, vc.thm2_seeds, vc.thm2_draws, mu,
                                               cfg.scenario.seed);
    const auto vrows =
        check_spatial_variance(vc.var_instances, vc.var_cells, vc.var_draws, cfg.scenario.seed);

    const fs::path out = prepare_out(opts.out_dir);
    {
        auto os = open_out(out / "thm2_limit.csv");
        csv::write_row(os, {"cells", "closed_form", "monte_carlo", "rel_err"});
        for (const auto& r : rows)
            csv::write_row(os, {csv::fmt(r.m), csv::fmt(r.closed), csv::fmt(r.mc),
                                csv::fmt(r.rel_err)});
    }
    {
        auto os = open_out(out / "thm2_variance.csv");
        csv::write_row(os, {"instance", "closed_form", "monte_carlo", "std_err", "sigmas_off"});
        for (std::size_t i = 0; i < vrows.size(); ++i)
            csv::write_row(os, {csv::fmt(static_cast<int>(i)), csv::fmt(vrows[i].closed),
                                csv::fmt(vrows[i].mc), csv::fmt(vrows[i].se),
                                csv::fmt(vrows[i].sigmas_off)});
    }
    for (const auto& r : rows)
        std::cout << "M " << r.m << ": closed " << r.closed << " mc " << r.mc << " rel_err "
                  << r.rel_err << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated virtual-obstacle radio map simulator"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string scenario_path;
    std::string grads_dir;
    bool dump_gradients = false;

    const auto add_common = [&](CLI::App* sub, bool with_train_flags) {
        sub->add_option("--config", opts.config_path, "JSON configuration file");
        sub->add_option("--out", opts.out_dir, "output directory")->required();
        sub->add_option("--seed", [&opts](const CLI::results_t& r) {
            opts.seed = std::stoull(r[0]);
            return true;
        }, "override scenario and training seed");
        if (with_train_flags) {
            sub->add_option("--mechanism", [&opts](const CLI::results_t& r) {
                opts.mechanism = r[0];
                return true;
            }, "noise mechanism: none, uniform, geo");
            sub->add_option("--mu", [&opts](const CLI::results_t& r) {
                opts.mu = std::stod(r[0]);
                return true;
            }, "noise budget relative to gradient energy");
            sub->add_option("--rho", [&opts](const CLI::results_t& r) {
                opts.rho = std::stod(r[0]);
                return true;
            }, "spatial variance weight in the allocator objective");
        }
        sub->add_option("--nu", [&opts](const CLI::results_t& r) {
            opts.nu = r[0];
            return true;
        }, "attack weight exponent (number or inf)");
    };

    CLI::App* generate = app.add_subcommand("generate", "generate a scenario snapshot");
    add_common(generate, false);

    CLI::App* train = app.add_subcommand("train", "run federated training and attack it");
    add_common(train, true);
    train->add_option("--scenario", scenario_path, "reuse a scenario snapshot");
    train->add_flag("--dump-gradients", dump_gradients, "write per-round clipped noisy uploads");

    CLI::App* attack = app.add_subcommand("attack", "attack dumped gradient uploads");
    add_common(attack, false);
    attack->add_option("--scenario", scenario_path, "scenario snapshot")->required();
    attack->add_option("--grads", grads_dir, "directory of gradient dumps")->required();

    CLI::App* sweep = app.add_subcommand("sweep", "sweep mechanisms, budgets, and seeds");
    add_common(sweep, true);

    CLI::App* thm1 = app.add_subcommand("verify-thm1", "check gradient energy attenuation");
    add_common(thm1, false);

    CLI::App* thm2 = app.add_subcommand("verify-thm2", "check the localization error limit");
    add_common(thm2, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(generate)) return cmd_generate(opts);
        if (app.got_subcommand(train)) return cmd_train(opts, scenario_path, dump_gradients);
        if (app.got_subcommand(attack)) return cmd_attack(opts, scenario_path, grads_dir);
        if (app.got_subcommand(sweep)) return cmd_sweep(opts);
        if (app.got_subcommand(thm1)) return cmd_verify_thm1(opts);
        if (app.got_subcommand(thm2)) return cmd_verify_thm2(opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
