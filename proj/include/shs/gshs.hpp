#pragma once

#include <functional>
#include <memory>
#include <optional>

#include "shs/hybrid.hpp"
#include "shs/rational.hpp"
#include "shs/sdcpn.hpp"
#include "shs/sdcpn_exec.hpp"

#include "json.hpp"

namespace shs {

// One boundary face of a mode's domain: the signed distance of a guard over
// the sub-vector of x it watches (negative inside the domain).
struct DomainFace {
    GuardFn guard;
    std::vector<std::pair<int, int>> segments;  // (offset, dim) pieces of x forming C^T
    int source_transition = -1;

    double sd(std::span<const double> x) const;
};

struct GshsMode {
    std::vector<int> tag;   // marking count vector for net-derived modes, {i} otherwise
    int dim = 0;            // d(theta)
    bool frozen = false;    // zero drift and diffusion everywhere in the mode
    std::vector<DomainFace> faces;
    bool has_boundary() const { return !faces.empty(); }

    // Token layout for net-derived modes (coloured tokens only).
    struct Block {
        int place = -1;
        int token = 0;         // token index within the place
        int offset = 0;        // position in x
        int dim = 0;
        int wiener_offset = 0;
        int wiener_dim = 0;
    };
    std::vector<Block> blocks;
};

enum class JumpTrigger { spontaneous, boundary };

// Exact finite stochastic matrix for jump targets, valid when jump
// probabilities are x-independent and the continuous state is preserved.
struct DiscreteKernelMatrix {
    std::vector<std::vector<RateRatio>> symbolic;  // [from][to]
    std::vector<std::vector<Rational>> exact;      // empty when rate params are not exact rationals
    std::vector<std::vector<double>> value;
    bool colour_preserving = false;

    bool empty() const { return symbolic.empty(); }
};

struct JumpKernel {
    std::function<HybridState(const HybridState& pre, JumpTrigger, RandomBasis&)> sample;
    std::optional<DiscreteKernelMatrix> spontaneous;
    std::optional<DiscreteKernelMatrix> boundary;  // rows meaningful only for boundary modes
};

struct RateField {
    std::function<double(int, std::span<const double>)> eval;
    bool all_constant = false;
    std::vector<double> mode_value;    // per-mode constant value (all_constant only)
    std::vector<LinForm> mode_symbol;  // per-mode symbolic sum (all_constant only)
};

// GSHS automaton (K, d, X, f, g, Init, lambda, Q).
struct GshsModel {
    std::vector<GshsMode> modes;
    int wiener_dim = 0;
    std::function<void(int, std::span<const double>, std::span<double>)> drift;
    std::function<void(int, std::span<const double>, std::span<double>)> diffusion;  // row-major dim x h
    std::function<HybridState(RandomBasis&)> init;
    RateField lambda;
    JumpKernel kernel;

    std::uint64_t source_hash = 0;
    std::map<std::string, double> rate_params;            // values for symbolic entries
    std::map<std::string, Rational> rate_params_exact;    // subset with exact values
    std::shared_ptr<const SdcpnModel> source;             // set for mapped models

    ModeCatalog catalog() const;
    int find_mode(const std::vector<int>& tag) const;
};

struct ReachabilityGraph {
    std::vector<std::vector<int>> nodes;  // marking count vectors
    std::vector<bool> immediate_enabling;
    struct Edge {
        int from = 0, to = 0, transition = 0, e_index = 0;
    };
    std::vector<Edge> edges;
    int initial = 0;

    int find(const std::vector<int>& counts) const;
};

// BFS over marking count vectors firing every pre-enabled transition with
// every supported e-vector. Count-level pre-enabling is colour-independent.
ReachabilityGraph reachability_graph(const SdcpnModel& model, int max_nodes = 10000);

// The mapping via the reachability graph: K = nodes not enabling immediate
// transitions, stacked per-place dynamics, lambda = sum of pre-enabled delay
// rates, Q = firing + immediate closure. Emits exact matrices when rates are
// constant and firing-measure probabilities are rational.
GshsModel map_sdcpn_to_gshs(const SdcpnModel& model, int max_nodes = 10000);

HybridPath simulate_gshs(const GshsModel& model, const ExecParams& params, RandomBasis& basis);

struct CheckItem {
    std::string name;
    bool flagged = false;
    std::string detail;
};

struct CheckReport {
    std::vector<CheckItem> items;
    bool all_pass() const;
    const CheckItem& item(const std::string& name) const;
    std::string to_string() const;
};

// Sampling falsification of the structural assumptions: G1 field regularity,
// G2 jump-rate integrability, G3 kernel validity, G4 finite jumps.
CheckReport check_g1_g4(const GshsModel& model, int budget, std::uint64_t seed = 19);

nlohmann::json gshs_to_json(const GshsModel& model);

}  // namespace shs
