#pragma once

#include <array>
#include <functional>
#include <string>

#include "shs/gshs.hpp"
#include "shs/hsde.hpp"
#include "shs/stats.hpp"

#include "json.hpp"

namespace shs {

enum class Backend { sdcpn, gshs, hsde };
const char* backend_name(Backend b);

// Replications of one model under one backend, sampled on a common output
// grid. Paths are reduced to grid modes/states plus jump counts; a rerun with
// the same seed reproduces the ensemble bit for bit (thread count included).
struct Ensemble {
    Backend backend = Backend::sdcpn;
    std::uint64_t source_hash = 0;
    std::uint64_t seed = 0;
    int reps = 0;
    ExecParams params;
    std::vector<double> grid;
    ModeCatalog catalog;
    int dim = 0;                           // continuous components per sample
    std::vector<int> grid_modes;           // [rep * grid.size() + g]
    std::vector<double> grid_states;       // [(rep * grid.size() + g) * dim + k]
    std::vector<int> jump_counts;          // per replication
    std::vector<std::string> failures;     // "rep <i>: <error>" for replay

    int mode_at(int rep, int g) const { return grid_modes[static_cast<std::size_t>(rep) * grid.size() + static_cast<std::size_t>(g)]; }
    double state_at(int rep, int g, int k) const {
        return grid_states[(static_cast<std::size_t>(rep) * grid.size() + static_cast<std::size_t>(g)) *
                               static_cast<std::size_t>(dim) +
                           static_cast<std::size_t>(k)];
    }
};

Ensemble run_ensemble(const SdcpnModel& model, int reps, const ExecParams& params, std::uint64_t seed,
                      int threads = 0);
Ensemble run_ensemble(const GshsModel& model, int reps, const ExecParams& params, std::uint64_t seed,
                      int threads = 0);
Ensemble run_ensemble(const HsdeModel& model, int reps, const ExecParams& params, std::uint64_t seed,
                      int threads = 0);

// Transient distribution of a CTMC by uniformization, truncation error below
// tol in l1.
std::vector<double> ctmc_transient(const std::vector<std::vector<double>>& generator,
                                   const std::vector<double>& p0, double t, double tol = 1e-12);

// The engine x navigation subsystem of the air-traffic example: a 4-state
// CTMC with states (Working,Working), (Not,Working), (Not,Not), (Working,Not)
// assembled as the Kronecker sum of two 2-state chains.
struct CtmcOracle {
    std::vector<double> times;
    std::vector<std::array<double, 4>> probs;  // per time
};
CtmcOracle ctmc_oracle(double delta3, double delta4, double delta5, double delta6,
                       const std::vector<double>& t_grid, double tol = 1e-10);

// Projection of a marking count vector onto the 4 system states above.
int airtraffic_system_state(const std::vector<int>& marking);

struct TestRecord {
    double time = 0.0;
    std::string kind;       // "occupancy-chi2", "ks[x_k]", "jump-count", "oracle-chi2"
    int component = -1;
    double statistic = 0.0;
    double p_value = 1.0;
    bool skipped = false;
    bool reject = false;
    std::string note;
};

struct ComparisonReport {
    std::string label;
    double alpha = 0.0;
    int tests_performed = 0;
    double alpha_corrected = 0.0;  // Bonferroni: alpha / tests_performed
    bool pass = false;
    std::vector<TestRecord> records;
    std::vector<std::string> notes;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

// Distribution-level comparison of two ensembles: chi-square homogeneity on
// mode occupancy and two-sample KS per continuous component at every grid
// time, a Welch interval on jump counts, Bonferroni across all performed
// tests. Pass means no corrected rejection: consistent with bisimilarity at
// alpha, never "proven".
ComparisonReport compare(const Ensemble& a, const Ensemble& b, double alpha);

// Chi-square of empirical system-state occupancy against the CTMC oracle at
// every positive grid time.
ComparisonReport compare_to_oracle(
    const Ensemble& e, const CtmcOracle& oracle, double alpha,
    const std::function<int(const std::vector<int>&)>& project = airtraffic_system_state);

nlohmann::json report_to_json(const ComparisonReport& report);
ComparisonReport report_from_json(const nlohmann::json& j);

}  // namespace shs
