#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>

#include "shs/hybrid.hpp"
#include "shs/sdcpn.hpp"

namespace shs {

struct ExecParams {
    double dt = 1e-3;          // Euler-Maruyama step
    double horizon = 10.0;
    double grid_dt = 0.0;      // output grid step; 0 means horizon only
    std::uint64_t seed = 0;    // recorded, basis passed separately
    int max_immediate = 10000;
    double guard_tol = 1e-9;   // |signed distance| at a reported crossing
    double time_tol_factor = 1e-3;  // crossing time tolerance = dt * factor
    std::uint64_t max_jumps = 1000000;  // Zeno diagnostic budget
};

struct Token {
    Vec colour;
    std::uint64_t serial = 0;
};

// Token distribution plus colours; counts()[i] is the number of tokens in
// place i under the fixed place ordering.
struct Marking {
    std::vector<std::vector<Token>> tokens;

    std::vector<int> counts() const;
    // Colours concatenated in place order then token order.
    Vec colour_vector(const SdcpnModel& model) const;
    int total_tokens() const;
    int find_slot(int place, std::uint64_t serial) const;
};

Marking initial_marking(const SdcpnModel& model, RandomBasis& basis, std::uint64_t* serial_counter);

struct TokenPick {
    int place = -1;
    int slot = -1;
    std::uint64_t serial = 0;
};

enum class EnablingKind { immediate_now, guard_hit, delay_expiry };

// One pre-enabled (transition, token selection) pair. Delay candidates carry
// their sampled clock; guard candidates track the signed distance of their
// input colour vector for crossing detection.
struct EnablingCandidate {
    int transition = -1;
    std::vector<TokenPick> picks;  // aligned with the transition's input arcs

    double threshold = std::numeric_limits<double>::infinity();  // -ln U
    double rate_integral = 0.0;
    double expiry = std::numeric_limits<double>::infinity();  // exact, constant-rate clocks
    double last_sd = std::numeric_limits<double>::quiet_NaN();

    std::vector<std::uint64_t> key(std::size_t transition_count) const;
    Vec colour_vector(const SdcpnModel& model, const Marking& marking) const;
};

// All (transition, token selection) pairs pre-enabled in the marking: one
// token per ordinary/enabling input arc, all selections enumerated, inhibitor
// places empty.
std::vector<EnablingCandidate> pre_enabled(const SdcpnModel& model, const Marking& marking);

// sigma with integral_0^sigma rate(path(s)) ds = -ln U; closed form when the
// rate is constant, rectangle-rule inversion along the colour path otherwise.
double sample_delay(const RateFn& rate, const std::function<Vec(double)>& colour_path, double dt,
                    SplitStream& uniforms);

// One Euler-Maruyama step for every coloured token.
void advance_colours(const SdcpnModel& model, Marking& marking, double dt, RandomBasis& basis);

// Crossing of the guard boundary inside [t0,t1], localized by bisection on
// the linearly interpolated colour path. Returns the crossing time.
std::optional<double> detect_guard_hit(const GuardFn& guard, const Vec& colour_before,
                                       const Vec& colour_after, double t0, double t1,
                                       double time_tol, double guard_tol);

// Maximal conflict-free subsets of candidates enabled at one instant, in
// canonical order: the equally weighted support of the R2/R4 selection.
// Assumes the R0 immediate filter has already been applied.
std::vector<std::vector<EnablingCandidate>> conflict_free_plans(
    const SdcpnModel& model, const std::vector<EnablingCandidate>& enabled);

// Candidates enabled at one instant resolved through rules R0-R4 into the set
// that fires simultaneously.
std::vector<EnablingCandidate> resolve_conflicts(const SdcpnModel& model,
                                                 const std::vector<EnablingCandidate>& enabled,
                                                 SplitStream& uniforms);

struct FireStats {
    int tokens_removed = 0;
    int tokens_added = 0;
};

// Fires every candidate of the plan: removes one token per ordinary input
// arc, samples (e, colours) from the firing measure, deposits produced
// tokens.
FireStats fire(const SdcpnModel& model, Marking& marking, const std::vector<EnablingCandidate>& plan,
               RandomBasis& basis, std::uint64_t* serial_counter);

// Fires enabled immediate transitions until none remain. Returns the number
// of closure rounds; throws NumericalError on an immediate-transition cycle.
int immediate_closure(const SdcpnModel& model, Marking& marking, RandomBasis& basis,
                      std::uint64_t* serial_counter, int max_rounds);

HybridPath simulate_sdcpn(const SdcpnModel& model, const ExecParams& params, RandomBasis& basis);

}  // namespace shs
