#pragma once

// JSON configuration and scenario snapshots. Parsing is strict: the top level
// and every section reject keys they do not define, so typos fail loudly
// instead of silently running defaults.

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedmap/experiments/harness.hpp"
#include "fedmap/experiments/scenario.hpp"
#include "fedmap/fed_engine.hpp"

namespace fedmap::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct VerifyConfig {
    int thm1_trials = 200;
    std::vector<int> thm2_cells{25, 100, 400, 1600};
    int thm2_seeds = 20;
    int thm2_draws = 20000;
    double thm2_mu = 4.0;
    int var_instances = 10;
    int var_cells = 64;
    long var_draws = 1000000;
};

struct AppConfig {
    ScenarioConfig scenario;
    ExperimentConfig experiment;
    SweepSpec sweep;
    VerifyConfig verify;
};

namespace detail {

[[noreturn]] inline void fail(const std::string& where, const std::string& what) {
    throw std::runtime_error("config: " + where + ": " + what);
}

inline void check_keys(const json& j, const std::string& where,
                       const std::set<std::string>& allowed) {
    if (!j.is_object()) fail(where, "expected an object");
    for (const auto& item : j.items())
        if (!allowed.count(item.key())) fail(where, "unknown key \"" + item.key() + "\"");
}

inline double get_number(const json& j, const std::string& where) {
    if (!j.is_number()) fail(where, "expected a number");
    return j.get<double>();
}

inline int get_int(const json& j, const std::string& where) {
    if (!j.is_number_integer()) fail(where, "expected an integer");
    return j.get<int>();
}

inline std::uint64_t get_seed(const json& j, const std::string& where) {
    if (!j.is_number_unsigned() && !j.is_number_integer()) fail(where, "expected an integer");
    const auto v = j.get<std::int64_t>();
    if (v < 0) fail(where, "seed must be non-negative");
    return static_cast<std::uint64_t>(v);
}

inline std::string get_string(const json& j, const std::string& where) {
    if (!j.is_string()) fail(where, "expected a string");
    return j.get<std::string>();
}

template <typename T, typename F>
std::vector<T> get_array(const json& j, const std::string& where, F&& elem) {
    if (!j.is_array()) fail(where, "expected an array");
    std::vector<T> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(elem(j[i], where + "[" + std::to_string(i) + "]"));
    return out;
}

}  // namespace detail

inline Mechanism parse_mechanism(const std::string& name) {
    if (name == "none") return Mechanism::none;
    if (name == "uniform") return Mechanism::uniform;
    if (name == "geo") return Mechanism::geometry_aligned;
    throw std::runtime_error("config: unknown mechanism \"" + name +
                             "\" (expected none, uniform, or geo)");
}

inline Labeler parse_labeler(const std::string& name) {
    if (name == "smoothed") return Labeler::smoothed;
    if (name == "segmented") return Labeler::segmented;
    throw std::runtime_error("config: unknown labeler \"" + name +
                             "\" (expected smoothed or segmented)");
}

inline double parse_nu(const json& j, const std::string& where) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
        detail::fail(where, "expected a positive number or \"inf\"");
    }
    return detail::get_number(j, where);
}

inline void parse_theta(const json& j, const std::string& where, PropagationParams& theta) {
    detail::check_keys(j, where,
                       {"los_slope", "los_intercept", "nlos_slope", "nlos_intercept"});
    if (j.contains("los_slope")) theta.los.slope = detail::get_number(j["los_slope"], where);
    if (j.contains("los_intercept"))
        theta.los.intercept = detail::get_number(j["los_intercept"], where);
    if (j.contains("nlos_slope")) theta.nlos.slope = detail::get_number(j["nlos_slope"], where);
    if (j.contains("nlos_intercept"))
        theta.nlos.intercept = detail::get_number(j["nlos_intercept"], where);
}

inline void parse_scenario_section(const json& j, ScenarioConfig& sc) {
    const std::string where = "scenario";
    detail::check_keys(
        j, where,
        {"width_m", "height_m", "cell_size_m", "n_buildings", "building_min_height_m",
         "building_max_height_m", "footprint_min_frac", "footprint_max_frac", "n_users",
         "user_margin_m", "user_height_m", "n_bs", "bs_altitude_m", "samples_per_user",
         "noise_std_db", "labeler", "sharpness", "h_max_m", "seed", "theta"});
    if (j.contains("width_m")) sc.width = detail::get_number(j["width_m"], where);
    if (j.contains("height_m")) sc.height = detail::get_number(j["height_m"], where);
    if (j.contains("cell_size_m")) sc.cell_size = detail::get_number(j["cell_size_m"], where);
    if (j.contains("n_buildings")) sc.n_buildings = detail::get_int(j["n_buildings"], where);
    if (j.contains("building_min_height_m"))
        sc.building_min_height = detail::get_number(j["building_min_height_m"], where);
    if (j.contains("building_max_height_m"))
        sc.building_max_height = detail::get_number(j["building_max_height_m"], where);
    if (j.contains("footprint_min_frac"))
        sc.footprint_min_frac = detail::get_number(j["footprint_min_frac"], where);
    if (j.contains("footprint_max_frac"))
        sc.footprint_max_frac = detail::get_number(j["footprint_max_frac"], where);
    if (j.contains("n_users")) sc.n_users = detail::get_int(j["n_users"], where);
    if (j.contains("user_margin_m")) sc.user_margin = detail::get_number(j["user_margin_m"], where);
    if (j.contains("user_height_m")) sc.user_height = detail::get_number(j["user_height_m"], where);
    if (j.contains("n_bs")) sc.n_bs = detail::get_int(j["n_bs"], where);
    if (j.contains("bs_altitude_m")) sc.bs_altitude = detail::get_number(j["bs_altitude_m"], where);
    if (j.contains("samples_per_user"))
        sc.samples_per_user = detail::get_int(j["samples_per_user"], where);
    if (j.contains("noise_std_db")) sc.noise_std = detail::get_number(j["noise_std_db"], where);
    if (j.contains("labeler")) sc.labeler = parse_labeler(detail::get_string(j["labeler"], where));
    if (j.contains("sharpness")) sc.sharpness = detail::get_number(j["sharpness"], where);
    if (j.contains("h_max_m")) sc.h_max = detail::get_number(j["h_max_m"], where);
    if (j.contains("seed")) sc.seed = detail::get_seed(j["seed"], where);
    if (j.contains("theta")) parse_theta(j["theta"], where + ".theta", sc.theta_true);
}

inline void parse_train_section(const json& j, ExperimentConfig& ec) {
    const std::string where = "train";
    detail::check_keys(j, where,
                       {"rounds", "eta_h", "eta_theta", "clip", "mechanism", "mu", "seed",
                        "eval_rounds", "eval_grid_n", "eval_bs_count", "divergence_factor"});
    TrainConfig& tc = ec.train;
    if (j.contains("rounds")) tc.rounds = detail::get_int(j["rounds"], where);
    if (j.contains("eta_h")) tc.eta_h = detail::get_number(j["eta_h"], where);
    if (j.contains("eta_theta")) tc.eta_theta = detail::get_number(j["eta_theta"], where);
    if (j.contains("clip")) tc.clip_threshold = detail::get_number(j["clip"], where);
    if (j.contains("mechanism"))
        tc.mechanism = parse_mechanism(detail::get_string(j["mechanism"], where));
    if (j.contains("mu")) tc.mu = detail::get_number(j["mu"], where);
    if (j.contains("seed")) tc.seed = detail::get_seed(j["seed"], where);
    if (j.contains("eval_rounds"))
        ec.eval_rounds = detail::get_array<int>(j["eval_rounds"], where + ".eval_rounds",
                                                [](const json& e, const std::string& w) {
                                                    return detail::get_int(e, w);
                                                });
    if (j.contains("eval_grid_n")) ec.eval_grid_n = detail::get_int(j["eval_grid_n"], where);
    if (j.contains("eval_bs_count")) ec.eval_bs_count = detail::get_int(j["eval_bs_count"], where);
    if (j.contains("divergence_factor"))
        tc.divergence_factor = detail::get_number(j["divergence_factor"], where);
}

inline void parse_allocator_section(const json& j, AllocatorConfig& ac) {
    const std::string where = "allocator";
    detail::check_keys(j, where,
                       {"rho", "r_max", "step_r", "step_u", "eps", "tau_r", "tau_u", "max_inner",
                        "max_outer"});
    if (j.contains("rho")) ac.rho = detail::get_number(j["rho"], where);
    if (j.contains("r_max")) ac.r_max = detail::get_number(j["r_max"], where);
    if (j.contains("step_r")) ac.step_r = detail::get_number(j["step_r"], where);
    if (j.contains("step_u")) ac.step_u = detail::get_number(j["step_u"], where);
    if (j.contains("eps")) ac.eps = detail::get_number(j["eps"], where);
    if (j.contains("tau_r")) ac.tau_r = detail::get_number(j["tau_r"], where);
    if (j.contains("tau_u")) ac.tau_u = detail::get_number(j["tau_u"], where);
    if (j.contains("max_inner")) ac.max_inner = detail::get_int(j["max_inner"], where);
    if (j.contains("max_outer")) ac.max_outer = detail::get_int(j["max_outer"], where);
}

inline void parse_attack_section(const json& j, ExperimentConfig& ec) {
    detail::check_keys(j, "attack", {"nu"});
    if (j.contains("nu")) ec.nu = parse_nu(j["nu"], "attack.nu");
}

inline void parse_sweep_section(const json& j, SweepSpec& sw) {
    const std::string where = "sweep";
    detail::check_keys(j, where, {"mechanisms", "mu_values", "rho_values", "seeds"});
    if (j.contains("mechanisms"))
        sw.mechanisms = detail::get_array<Mechanism>(
            j["mechanisms"], where + ".mechanisms", [](const json& e, const std::string& w) {
                return parse_mechanism(detail::get_string(e, w));
            });
    if (j.contains("mu_values"))
        sw.mu_values = detail::get_array<double>(j["mu_values"], where + ".mu_values",
                                                 [](const json& e, const std::string& w) {
                                                     return detail::get_number(e, w);
                                                 });
    if (j.contains("rho_values"))
        sw.rho_values = detail::get_array<double>(j["rho_values"], where + ".rho_values",
                                                  [](const json& e, const std::string& w) {
                                                      return detail::get_number(e, w);
                                                  });
    if (j.contains("seeds"))
        sw.seeds = detail::get_array<std::uint64_t>(j["seeds"], where + ".seeds",
                                                    [](const json& e, const std::string& w) {
                                                        return detail::get_seed(e, w);
                                                    });
}

inline void parse_verify_section(const json& j, VerifyConfig& vc) {
    const std::string where = "verify";
    detail::check_keys(j, where,
                       {"thm1_trials", "thm2_cells", "thm2_seeds", "thm2_draws", "thm2_mu",
                        "var_instances", "var_cells", "var_draws"});
    if (j.contains("thm1_trials")) vc.thm1_trials = detail::get_int(j["thm1_trials"], where);
    if (j.contains("thm2_cells"))
        vc.thm2_cells = detail::get_array<int>(j["thm2_cells"], where + ".thm2_cells",
                                               [](const json& e, const std::string& w) {
                                                   return detail::get_int(e, w);
                                               });
    if (j.contains("thm2_seeds")) vc.thm2_seeds = detail::get_int(j["thm2_seeds"], where);
    if (j.contains("thm2_draws")) vc.thm2_draws = detail::get_int(j["thm2_draws"], where);
    if (j.contains("thm2_mu")) vc.thm2_mu = detail::get_number(j["thm2_mu"], where);
    if (j.contains("var_instances")) vc.var_instances = detail::get_int(j["var_instances"], where);
    if (j.contains("var_cells")) vc.var_cells = detail::get_int(j["var_cells"], where);
    if (j.contains("var_draws"))
        vc.var_draws = static_cast<long>(detail::get_int(j["var_draws"], where));
}

inline AppConfig parse_config(const json& j) {
    detail::check_keys(j, "top level",
                       {"schema_version", "scenario", "train", "allocator", "attack", "sweep",
                        "verify"});
    if (!j.contains("schema_version")) detail::fail("top level", "missing schema_version");
    if (detail::get_int(j["schema_version"], "schema_version") != kSchemaVersion)
        detail::fail("schema_version", "unsupported version");
    AppConfig cfg;
    if (j.contains("scenario")) parse_scenario_section(j["scenario"], cfg.scenario);
    if (j.contains("train")) parse_train_section(j["train"], cfg.experiment);
    if (j.contains("allocator")) parse_allocator_section(j["allocator"], cfg.experiment.train.allocator);
    if (j.contains("attack")) parse_attack_section(j["attack"], cfg.experiment);
    if (j.contains("sweep")) parse_sweep_section(j["sweep"], cfg.sweep);
    if (j.contains("verify")) parse_verify_section(j["verify"], cfg.verify);
    return cfg;
}

inline AppConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config: " + path + ": " + e.what());
    }
    return parse_config(j);
}

// Scenario snapshots: everything needed to re-run training and attacks
// without re-deriving anything from the generator.

inline json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline Vec3 vec3_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) detail::fail(where, "expected [x, y, z]");
    return {detail::get_number(j[0], where), detail::get_number(j[1], where),
            detail::get_number(j[2], where)};
}

inline json scenario_to_json(const Scenario& s) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["grid"] = {{"origin", json::array({s.grid.origin.x, s.grid.origin.y})},
                 {"cell_size", s.grid.cell_size},
                 {"nx", s.grid.nx},
                 {"ny", s.grid.ny}};
    j["heights"] = s.truth_h.heights;
    j["theta"] = {{"los_slope", s.truth_theta.los.slope},
                  {"los_intercept", s.truth_theta.los.intercept},
                  {"nlos_slope", s.truth_theta.nlos.slope},
                  {"nlos_intercept", s.truth_theta.nlos.intercept}};
    j["sharpness"] = s.sharpness;
    j["noise_std"] = s.noise_std;
    j["h_max"] = s.h_max;
    j["user_height"] = s.user_height;
    j["labeler"] = s.labeler == Labeler::smoothed ? "smoothed" : "segmented";
    json bs = json::array();
    for (const auto& b : s.bs_positions) bs.push_back(vec3_to_json(b));
    j["bs"] = bs;
    json users = json::array();
    for (const auto& u : s.users) {
        json samples = json::array();
        for (const auto& m : u.samples)
            samples.push_back({{"user", vec3_to_json(m.link.user)},
                               {"bs", vec3_to_json(m.link.bs)},
                               {"rss", m.rss}});
        users.push_back(
            {{"id", u.user_id}, {"location", vec3_to_json(u.location)}, {"samples", samples}});
    }
    j["users"] = users;
    return j;
}

inline Scenario scenario_from_json(const json& j) {
    detail::check_keys(j, "scenario file",
                       {"schema_version", "grid", "heights", "theta", "sharpness", "noise_std",
                        "h_max", "user_height", "labeler", "bs", "users"});
    for (const char* key : {"schema_version", "grid", "heights", "theta", "sharpness",
                            "noise_std", "h_max", "user_height", "labeler", "bs", "users"})
        if (!j.contains(key))
            detail::fail("scenario file", std::string("missing key \"") + key + "\"");
    if (detail::get_int(j["schema_version"], "scenario file") != kSchemaVersion)
        detail::fail("scenario file", "unsupported schema_version");

    Scenario s;
    const json& g = j["grid"];
    detail::check_keys(g, "grid", {"origin", "cell_size", "nx", "ny"});
    if (!g.contains("origin") || !g["origin"].is_array() || g["origin"].size() != 2)
        detail::fail("grid.origin", "expected [x, y]");
    s.grid.origin = {detail::get_number(g["origin"][0], "grid.origin"),
                     detail::get_number(g["origin"][1], "grid.origin")};
    s.grid.cell_size = detail::get_number(g.at("cell_size"), "grid.cell_size");
    s.grid.nx = detail::get_int(g.at("nx"), "grid.nx");
    s.grid.ny = detail::get_int(g.at("ny"), "grid.ny");
    s.grid.validate();

    s.truth_h.heights = detail::get_array<double>(j["heights"], "heights",
                                                  [](const json& e, const std::string& w) {
                                                      return detail::get_number(e, w);
                                                  });
    if (s.truth_h.heights.size() != static_cast<std::size_t>(s.grid.cell_count()))
        detail::fail("heights", "length does not match grid");
    parse_theta(j["theta"], "theta", s.truth_theta);
    s.sharpness = detail::get_number(j["sharpness"], "sharpness");
    s.noise_std = detail::get_number(j["noise_std"], "noise_std");
    s.h_max = detail::get_number(j["h_max"], "h_max");
    s.user_height = detail::get_number(j["user_height"], "user_height");
    s.labeler = parse_labeler(detail::get_string(j["labeler"], "labeler"));
    s.bs_positions = detail::get_array<Vec3>(j["bs"], "bs",
                                             [](const json& e, const std::string& w) {
                                                 return vec3_from_json(e, w);
                                             });
    const json& users = j["users"];
    if (!users.is_array()) detail::fail("users", "expected an array");
    for (std::size_t i = 0; i < users.size(); ++i) {
        const std::string where = "users[" + std::to_string(i) + "]";
        const json& u = users[i];
        detail::check_keys(u, where, {"id", "location", "samples"});
        UserDataset ds;
        ds.user_id = detail::get_int(u.at("id"), where + ".id");
        ds.location = vec3_from_json(u.at("location"), where + ".location");
        const json& samples = u.at("samples");
        if (!samples.is_array()) detail::fail(where + ".samples", "expected an array");
        for (std::size_t k = 0; k < samples.size(); ++k) {
            const std::string sw = where + ".samples[" + std::to_string(k) + "]";
            const json& m = samples[k];
            detail::check_keys(m, sw, {"user", "bs", "rss"});
            Measurement meas;
            meas.link.user = vec3_from_json(m.at("user"), sw + ".user");
            meas.link.bs = vec3_from_json(m.at("bs"), sw + ".bs");
            meas.rss = detail::get_number(m.at("rss"), sw + ".rss");
            ds.samples.push_back(meas);
        }
        s.users.push_back(std::move(ds));
    }
    return s;
}

inline void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << scenario_to_json(s).dump(1) << "\n";
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + std::string(": ") + e.what());
    }
    return scenario_from_json(j);
}

}  // namespace fedmap::io
