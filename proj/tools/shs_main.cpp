// Command-line front end: simulate / map / check / verify / report.
//
// Exit codes: 0 success, 1 model or parse error, 2 a check or verification
// ran and rejected, 3 runtime error. Diagnostics go to stderr, data to files
// or stdout.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "shs/equivalence.hpp"
#include "shs/gshs.hpp"
#include "shs/hsde.hpp"
#include "shs/model_io.hpp"
#include "shs/sdcpn_exec.hpp"

namespace {

std::map<std::string, std::string> parse_param_overrides(const std::vector<std::string>& kvs) {
    std::map<std::string, std::string> out;
    for (const std::string& kv : kvs) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw shs::ConfigError("--param expects name=value, got '" + kv + "'");
        out[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return out;
}

shs::SdcpnModel load_model(const std::string& spec, const std::map<std::string, std::string>& params) {
    if (spec.rfind("builtin:", 0) == 0) return shs::builtin_model(spec.substr(8), params);
    if (shs::is_builtin_model(spec)) return shs::builtin_model(spec, params);
    return shs::load_model_file(spec, params);
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("SHS_SEED")) return std::strtoull(env, nullptr, 10);
    return 20240915;
}

void parse_grid_spec(const std::string& spec, shs::ExecParams& params) {
    auto colon = spec.find(':');
    if (colon == std::string::npos)
        throw shs::ConfigError("--grid expects dt:horizon, got '" + spec + "'");
    params.grid_dt = std::strtod(spec.substr(0, colon).c_str(), nullptr);
    params.horizon = std::strtod(spec.substr(colon + 1).c_str(), nullptr);
}

nlohmann::json envelope(const shs::SdcpnModel& model, const shs::ExecParams& params,
                        const std::string& backend, std::uint64_t seed, int reps) {
    nlohmann::json j;
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(model.hash()));
    j["model"] = model.name;
    j["model_hash"] = buf;
    j["backend"] = backend;
    j["seed"] = seed;
    j["reps"] = reps;
    j["dt"] = params.dt;
    j["horizon"] = params.horizon;
    j["grid_dt"] = params.grid_dt;
    j["max_immediate"] = params.max_immediate;
    j["guard_tol"] = params.guard_tol;
    return j;
}

int run_simulate(const std::string& model_spec, const std::map<std::string, std::string>& params,
                 const std::string& backend, int reps, const shs::ExecParams& exec, std::uint64_t seed,
                 int threads, const std::string& out_prefix) {
    shs::SdcpnModel net = load_model(model_spec, params);

    std::ofstream csv(out_prefix + ".csv");
    if (!csv) throw shs::ConfigError("cannot write " + out_prefix + ".csv");
    nlohmann::json env = envelope(net, exec, backend, seed, reps);

    if (reps == 1) {
        shs::RandomBasis basis =
            shs::RandomBasis(seed).branch(backend == "sdcpn" ? 101 : backend == "gshs" ? 102 : 103)
                .replicate(0);
        shs::HybridPath path;
        if (backend == "sdcpn") path = shs::simulate_sdcpn(net, exec, basis);
        else if (backend == "gshs") path = shs::simulate_gshs(shs::map_sdcpn_to_gshs(net), exec, basis);
        else path = shs::simulate_hsde(shs::map_sdcpn_to_hsde(net), exec, basis);
        shs::write_path_csv(csv, path);
        nlohmann::json tags = nlohmann::json::array();
        for (const auto& t : path.catalog.tags()) tags.push_back(t);
        env["mode_markings"] = tags;
    } else {
        shs::Ensemble e;
        if (backend == "sdcpn") e = shs::run_ensemble(net, reps, exec, seed, threads);
        else if (backend == "gshs") e = shs::run_ensemble(shs::map_sdcpn_to_gshs(net), reps, exec, seed, threads);
        else e = shs::run_ensemble(shs::map_sdcpn_to_hsde(net), reps, exec, seed, threads);
        csv << "rep,t,mode";
        for (int k = 0; k < e.dim; ++k) csv << ",x_" << (k + 1);
        csv << "\n";
        char buf[32];
        for (int r = 0; r < e.reps; ++r)
            for (std::size_t g = 0; g < e.grid.size(); ++g) {
                std::snprintf(buf, sizeof buf, "%.17g", e.grid[g]);
                csv << r << "," << buf << "," << e.mode_at(r, static_cast<int>(g));
                for (int k = 0; k < e.dim; ++k) {
                    std::snprintf(buf, sizeof buf, "%.17g", e.state_at(r, static_cast<int>(g), k));
                    csv << "," << buf;
                }
                csv << "\n";
            }
        nlohmann::json tags = nlohmann::json::array();
        for (const auto& t : e.catalog.tags()) tags.push_back(t);
        env["mode_markings"] = tags;
    }
    std::ofstream envf(out_prefix + ".json");
    envf << env.dump(2) << "\n";
    std::cerr << "wrote " << out_prefix << ".csv and " << out_prefix << ".json\n";
    return 0;
}

int run_map(const std::string& formalism, const std::string& model_spec,
            const std::map<std::string, std::string>& params, const std::string& out_path) {
    shs::SdcpnModel net = load_model(model_spec, params);
    nlohmann::json j;
    if (formalism == "gshs") j = shs::gshs_to_json(shs::map_sdcpn_to_gshs(net));
    else if (formalism == "hsde") j = shs::hsde_to_json(shs::map_sdcpn_to_hsde(net));
    else throw shs::ConfigError("map expects gshs or hsde");
    if (out_path.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::ofstream out(out_path);
        out << j.dump(2) << "\n";
        std::cerr << "wrote " << out_path << "\n";
    }
    return 0;
}

int run_check(const std::string& which, const std::string& model_spec,
              const std::map<std::string, std::string>& params, int budget, int samples, double radius,
              std::uint64_t seed) {
    shs::SdcpnModel net = load_model(model_spec, params);
    if (which == "d1") {
        shs::D1Report rep = shs::check_d1(net, samples, radius, seed);
        std::cout << rep.to_string();
        return rep.all_pass() ? 0 : 2;
    }
    if (which == "g") {
        shs::CheckReport rep = shs::check_g1_g4(shs::map_sdcpn_to_gshs(net), budget, seed);
        std::cout << rep.to_string();
        return rep.all_pass() ? 0 : 2;
    }
    if (which == "h") {
        shs::CheckReport rep = shs::check_h1_h8(shs::map_sdcpn_to_hsde(net), budget, seed);
        std::cout << rep.to_string();
        return rep.all_pass() ? 0 : 2;
    }
    throw shs::ConfigError("check expects d1, g, or h");
}

int run_verify(const std::string& model_spec, const std::map<std::string, std::string>& params,
               const std::vector<std::string>& backends, int reps, double alpha,
               const shs::ExecParams& exec, std::uint64_t seed, int threads, bool with_oracle,
               const std::string& out_path) {
    shs::SdcpnModel net = load_model(model_spec, params);

    std::vector<shs::Ensemble> ensembles;
    for (const std::string& b : backends) {
        std::cerr << "running " << reps << " replications on backend " << b << "...\n";
        if (b == "sdcpn") ensembles.push_back(shs::run_ensemble(net, reps, exec, seed, threads));
        else if (b == "gshs")
            ensembles.push_back(shs::run_ensemble(shs::map_sdcpn_to_gshs(net), reps, exec, seed, threads));
        else if (b == "hsde")
            ensembles.push_back(shs::run_ensemble(shs::map_sdcpn_to_hsde(net), reps, exec, seed, threads));
        else throw shs::ConfigError("unknown backend '" + b + "'");
    }

    bool all_pass = true;
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < ensembles.size(); ++i)
        for (std::size_t j = i + 1; j < ensembles.size(); ++j) {
            shs::ComparisonReport rep = shs::compare(ensembles[i], ensembles[j], alpha);
            std::cout << rep.to_table() << "\n";
            out.push_back(rep.to_json());
            all_pass = all_pass && rep.pass;
        }
    if (with_oracle) {
        auto scalar = [&net](const std::string& name) {
            auto it = net.params.find(name);
            if (it == net.params.end()) throw shs::ConfigError("model lacks rate parameter " + name);
            return it->second.scalar;
        };
        shs::CtmcOracle oracle =
            shs::ctmc_oracle(scalar("delta3"), scalar("delta4"), scalar("delta5"), scalar("delta6"),
                             ensembles.empty() ? std::vector<double>{} : ensembles.front().grid);
        for (const shs::Ensemble& e : ensembles) {
            shs::ComparisonReport rep = shs::compare_to_oracle(e, oracle, alpha);
            std::cout << rep.to_table() << "\n";
            out.push_back(rep.to_json());
            all_pass = all_pass && rep.pass;
        }
    }
    if (!out_path.empty()) {
        std::ofstream f(out_path);
        f << out.dump(2) << "\n";
        std::cerr << "wrote " << out_path << "\n";
    }
    return all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stochastic hybrid systems toolkit: SDCPN / GSHS / HSDE"};
    app.require_subcommand(1);

    std::string model_spec = "builtin:airtraffic";
    std::vector<std::string> param_kvs;
    std::string backend = "sdcpn";
    int reps = 1;
    shs::ExecParams exec;
    exec.grid_dt = 0.5;
    std::uint64_t seed = default_seed();
    int threads = 0;
    std::string out_prefix = "simulate_out";
    std::string out_path;
    double alpha = 0.01;
    int budget = 100000;
    int samples = 30000;
    double radius = 1.0;
    std::vector<std::string> backends{"sdcpn", "gshs", "hsde"};
    bool with_oracle = false;
    std::string grid_spec;
    std::string formalism;
    std::string check_kind;
    std::string report_path;

    auto add_model_opts = [&](CLI::App* cmd) {
        cmd->add_option("--model", model_spec, "builtin:<name> or model file path");
        cmd->add_option("--param", param_kvs, "parameter override name=value (repeatable)");
    };
    auto add_exec_opts = [&](CLI::App* cmd) {
        cmd->add_option("--dt", exec.dt, "Euler-Maruyama step");
        cmd->add_option("--horizon", exec.horizon, "time horizon");
        cmd->add_option("--grid-dt", exec.grid_dt, "output grid step");
        cmd->add_option("--grid", grid_spec, "output grid as dt:horizon");
        cmd->add_option("--seed", seed, "master seed (env SHS_SEED overrides the default)");
        cmd->add_option("--threads", threads, "replication threads (0 = hardware)");
        cmd->add_option("--max-immediate", exec.max_immediate, "immediate-closure round budget");
        cmd->add_option("--guard-tol", exec.guard_tol, "guard-crossing distance tolerance");
    };

    CLI::App* sim = app.add_subcommand("simulate", "simulate one backend, write CSV + JSON envelope");
    add_model_opts(sim);
    add_exec_opts(sim);
    sim->add_option("--backend", backend, "sdcpn | gshs | hsde");
    sim->add_option("--reps", reps, "replications");
    sim->add_option("--out", out_prefix, "output file prefix");

    CLI::App* map_cmd = app.add_subcommand("map", "map an SDCPN to gshs or hsde, write JSON");
    map_cmd->add_option("formalism", formalism, "gshs | hsde")->required();
    add_model_opts(map_cmd);
    map_cmd->add_option("--out", out_path, "output JSON path (stdout when omitted)");

    CLI::App* check = app.add_subcommand("check", "run condition checkers (d1, g, h)");
    check->add_option("kind", check_kind, "d1 | g | h")->required();
    add_model_opts(check);
    check->add_option("--budget", budget, "sample budget");
    check->add_option("--samples", samples, "d1 sample count");
    check->add_option("--radius", radius, "d1 base radius");
    check->add_option("--seed", seed, "checker seed");

    CLI::App* verify = app.add_subcommand("verify", "cross-backend statistical equivalence harness");
    add_model_opts(verify);
    add_exec_opts(verify);
    verify->add_option("--backends", backends, "subset of sdcpn,gshs,hsde")->delimiter(',');
    verify->add_option("--reps", reps, "replications per backend");
    verify->add_option("--alpha", alpha, "family-wise significance level");
    verify->add_flag("--oracle", with_oracle, "also test against the CTMC oracle");
    verify->add_option("--out", out_path, "report JSON path");

    CLI::App* report = app.add_subcommand("report", "render a report JSON as a table");
    report->add_option("file", report_path, "report JSON file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        std::map<std::string, std::string> params = parse_param_overrides(param_kvs);
        if (!grid_spec.empty()) parse_grid_spec(grid_spec, exec);
        exec.seed = seed;
        if (sim->parsed())
            return run_simulate(model_spec, params, backend, reps, exec, seed, threads, out_prefix);
        if (map_cmd->parsed()) return run_map(formalism, model_spec, params, out_path);
        if (check->parsed())
            return run_check(check_kind, model_spec, params, budget, samples, radius, seed);
        if (verify->parsed())
            return run_verify(model_spec, params, backends, reps, alpha, exec, seed, threads,
                              with_oracle, out_path);
        if (report->parsed()) {
            std::ifstream f(report_path);
            if (!f) throw shs::ConfigError("cannot open " + report_path);
            nlohmann::json j;
            f >> j;
            if (j.is_array())
                for (const auto& rj : j) std::cout << shs::report_from_json(rj).to_table() << "\n";
            else
                std::cout << shs::report_from_json(j).to_table() << "\n";
            return 0;
        }
    } catch (const shs::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 1;
    } catch (const shs::ModelError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return 1;
    } catch (const shs::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
