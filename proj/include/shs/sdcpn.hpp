#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "shs/hybrid.hpp"
#include "shs/rational.hpp"
#include "shs/rng.hpp"

namespace shs {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Scalar / vector / matrix parameter value. Scalars parsed from decimal
// literals also carry their exact rational value so mapped transition
// matrices stay exact.
struct ParamValue {
    enum class Kind { scalar, vector, matrix };
    Kind kind = Kind::scalar;
    double scalar = 0.0;
    std::optional<Rational> exact;
    Vec vec;
    std::vector<Vec> mat;
};

// Callables carry the canonical source text they were built from (empty for
// ad hoc programmatic functions, which makes the model unserializable and
// unhashable but still executable).

struct DriftFn {
    std::function<void(std::span<const double>, std::span<double>)> eval;
    bool zero = true;
    std::string text;
};

struct DiffusionFn {
    // Row-major n x h output.
    std::function<void(std::span<const double>, std::span<double>)> eval;
    bool zero = true;
    std::string text;
};

// Open guard set with signed distance: negative strictly inside the set, zero
// on the boundary. Enabling happens when the input colour vector reaches the
// boundary.
struct GuardFn {
    std::function<double(std::span<const double>)> signed_distance;
    std::string text;
};

struct RateFn {
    std::function<double(std::span<const double>)> eval;
    bool constant = false;
    double value = 0.0;            // when constant
    LinForm symbol;                // symbolic value when constant (param name or literal)
    std::optional<Rational> exact; // exact value when constant with rational params
    std::string text;
};

struct ColourSampler {
    std::function<Vec(SplitStream&)> sample;
    std::string text;
};

// Firing measure: a distribution over e-vectors (one 0/1 entry per output
// arc) together with the colours of produced tokens. The finite e-support is
// declared so the reachability graph is computable.
struct FiringMeasure {
    std::vector<std::vector<int>> support;  // candidate e-vectors
    std::vector<Rational> probs;            // colour-independent probabilities (empty if state-dependent)
    // State-dependent selection; used when probs is empty.
    std::function<int(std::span<const double>, SplitStream&)> sample_index;
    // Colour for the token produced on output arc position `arc_pos`, given
    // the consumed colour vector; null means copy the input vector verbatim.
    std::function<Vec(int arc_pos, std::span<const double>, SplitStream&)> produce_colour;
    bool colour_preserving = true;
    std::function<std::vector<double>(std::span<const double>)> discrete_probs;  // optional c -> probs
    std::string text = "dirac";

    int sample(std::span<const double> colour, SplitStream& uniforms) const;
    std::vector<double> probs_at(std::span<const double> colour) const;
};

struct Place {
    std::string id;
    int colour_dim = 0;   // 0 encodes a colourless place
    int brownian_dim = 0; // h(P)
    DriftFn drift;
    DiffusionFn diffusion;
    bool frozen() const { return drift.zero && diffusion.zero; }
};

enum class TransitionKind { guard, delay, immediate };

struct Transition {
    std::string id;
    TransitionKind kind = TransitionKind::immediate;
    std::optional<GuardFn> guard;
    std::optional<RateFn> rate;
    FiringMeasure firing;
};

enum class ArcKind { ordinary, enabling, inhibitor };

struct Arc {
    std::string id;
    ArcKind kind = ArcKind::ordinary;
    bool place_to_transition = true;
    int place = -1;
    int transition = -1;
};

struct InitialTokens {
    int place = -1;
    int count = 0;
    std::vector<ColourSampler> colours;  // size 0 (colourless), 1 (shared), or count
};

// The twelve-element net (P, T, A, N, S, C, I, V, W, G, D, F).
struct SdcpnModel {
    std::vector<Place> places;
    std::vector<Transition> transitions;
    std::vector<Arc> arcs;
    std::vector<InitialTokens> initial;
    std::map<std::string, ParamValue> params;
    std::string name;

    // Derived input/output arc lists per transition, in arc declaration order.
    struct TransitionIo {
        std::vector<int> input_arcs;      // ordinary + enabling, consumed order
        std::vector<int> inhibitor_arcs;
        std::vector<int> output_arcs;
    };
    std::vector<TransitionIo> io;

    void finalize();  // rebuild io; call after structural edits

    int place_index(const std::string& id) const;
    int transition_index(const std::string& id) const;
    const TransitionIo& transition_io(int t) const { return io.at(static_cast<std::size_t>(t)); }

    bool serializable() const;
    std::uint64_t hash() const;  // 0 when not serializable
};

struct Violation {
    std::string code;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    std::string to_string() const;
};

// Structural well-formedness per the net definition; report-carrying, never
// throws on a bad model.
ValidationReport validate(const SdcpnModel& model);

// Monte Carlo falsification of the global growth/Lipschitz condition on the
// token colour functions of each coloured place. Estimates are sampled over a
// radius sweep {r, 10r, 100r}; diverging estimates are flagged. A pass is
// evidence at the given budget, not a proof.
struct D1PlaceReport {
    std::string place;
    double k_drift = 0.0, l_drift = 0.0;      // growth / Lipschitz estimates at base radius
    double k_diffusion = 0.0, l_diffusion = 0.0;
    bool flagged = false;
    std::string detail;
};

struct D1Report {
    std::vector<D1PlaceReport> places;
    bool all_pass() const;
    std::string to_string() const;
};

D1Report check_d1(const SdcpnModel& model, int sample_count, double radius, std::uint64_t seed = 17);

}  // namespace shs
