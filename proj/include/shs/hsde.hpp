#pragma once

#include <functional>
#include <memory>
#include <optional>

#include "shs/gshs.hpp"

namespace shs {

// HSDE elements (M, E, f, g, mu_init, Lambda, psi, rho, mu) plus the
// realization parameters of the driving Poisson random measure. The
// continuous dimension n is fixed across modes.
struct HsdeModel {
    std::vector<GshsMode> modes;  // tags, domains, layout
    int dim = 0;                  // n
    int wiener_dim = 0;           // h
    int mark_dim = 1;             // d

    std::function<void(int, std::span<const double>, std::span<double>)> drift;
    std::function<void(int, std::span<const double>, std::span<double>)> diffusion;
    std::function<HybridState(RandomBasis&)> init;

    RateField lambda;
    double c_lambda = 0.0;  // declared bound C_Lambda >= sup Lambda
    std::optional<Rational> c_lambda_exact;
    std::string c_lambda_symbol;

    struct Psi {
        // (target, source, x, mark) -> displacement, written into out
        std::function<void(int, int, std::span<const double>, std::span<const double>, std::span<double>)>
            eval;
        bool zero = true;
        std::string text = "zero";
    } psi;

    struct Rho {
        std::function<double(int, int, std::span<const double>)> eval;  // (target, source, x)
        std::optional<DiscreteKernelMatrix> matrix;
    } rho;

    struct Mu {
        std::function<Vec(SplitStream&)> sample;
        std::string text = "uniform01";
    } mu;

    JumpKernel boundary;  // forced-jump law at the domain boundary

    std::uint64_t source_hash = 0;
    std::map<std::string, double> rate_params;
    std::map<std::string, Rational> rate_params_exact;

    ModeCatalog catalog() const;
};

// Sigma_i(theta, x) = Lambda(theta,x) * sum_{j<=i} rho(theta_j, theta, x),
// zero at i = 0; the interval partition selecting the spontaneous jump
// target. Mode enumeration follows the catalog order of M.
double sigma_partial(const HsdeModel& model, int i, int theta, std::span<const double> x);

// Thinning execution: homogeneous Poisson points at rate C_Lambda on
// z1 in (0, C_Lambda] (points above C_Lambda can never be accepted because
// Sigma_N = Lambda <= C_Lambda, so the truncation is exact); a point with
// z1 <= Lambda jumps to the target whose Sigma interval contains z1 and
// displaces x by psi; boundary hits jump through the kernel.
HybridPath simulate_hsde(const HsdeModel& model, const ExecParams& params, RandomBasis& basis);

struct KernelEstimate {
    double value = 0.0;
    double std_error = 0.0;
    bool exact = false;
};

// Monte Carlo estimate of Q({target} x A; theta, x) =
// rho(target,theta,x) * integral of 1_A(x + psi(target,theta,x,z)) d mu(z);
// exact (zero standard error) when psi is identically zero.
KernelEstimate q_from_psi_rho_mu(const HsdeModel& model, int target,
                                 const std::function<bool(std::span<const double>)>& indicator,
                                 int theta, std::span<const double> x, int budget,
                                 std::uint64_t seed = 23);

// SDCPN -> HSDE through the GSHS transition measure: valid on the psi == 0
// fragment (x-independent spontaneous kernel, colour-preserving firing,
// fixed continuous dimension). rho rows come from the exact spontaneous
// matrix; C_Lambda = max over modes of the constant rate sums; mu defaults
// to the uniform distribution on [0,1].
HsdeModel map_sdcpn_to_hsde(const SdcpnModel& model, int max_nodes = 10000);

// Sampling falsification of the pathwise-uniqueness conditions.
CheckReport check_h1_h8(const HsdeModel& model, int budget, std::uint64_t seed = 29);

nlohmann::json hsde_to_json(const HsdeModel& model);

}  // namespace shs
