#pragma once

#include <map>
#include <optional>
#include <string>

#include "shs/sdcpn.hpp"

namespace shs {

class ParseError : public ModelError {
public:
    ParseError(const std::string& msg, int line, int col)
        : ModelError(msg + " (line " + std::to_string(line) + ", col " + std::to_string(col) + ")"),
          line(line), col(col) {}
    int line;
    int col;
};

// Declarative model text: sections [params], [places], [transitions], [arcs],
// [initial]; function bodies referenced by builtin catalog name. Overrides
// replace scalar [params] values before resolution (decimal strings so the
// exact rational value survives).
SdcpnModel parse_model(const std::string& text,
                       const std::map<std::string, std::string>& overrides = {});
SdcpnModel load_model_file(const std::string& path,
                           const std::map<std::string, std::string>& overrides = {});
std::string serialize_model(const SdcpnModel& model);

// ---- builtin function catalog ----
DriftFn make_drift_zero(int dim);
DriftFn make_drift_const(const Vec& v, std::string text = "");
DriftFn make_drift_linear(const std::vector<Vec>& a, std::string text = "");
DriftFn make_drift_affine(const std::vector<Vec>& a, const Vec& b, std::string text = "");
DiffusionFn make_diffusion_zero(int dim, int brownian_dim);
DiffusionFn make_diffusion_const(const std::vector<Vec>& w, std::string text = "");
GuardFn make_guard_halfspace(const Vec& normal, double offset, std::string text = "");
GuardFn make_guard_box(const Vec& lo, const Vec& hi, std::string text = "");
RateFn make_rate_const(double value, const std::string& symbol = "",
                       std::optional<Rational> exact = {}, std::string text = "");
FiringMeasure make_firing_dirac(int n_outputs, std::vector<int> e = {});
FiringMeasure make_firing_choice(std::vector<std::vector<int>> support, std::vector<Rational> probs,
                                 std::string text = "");
FiringMeasure make_firing_shift(int n_outputs, const Vec& delta, std::string text = "");
ColourSampler make_colour_point(const Vec& v, std::string text = "");

// The builtin air-traffic net: places P1-P7, immediate T1a/T1b/T2, delay
// T3-T6 with rates delta3..delta6, landing guards T7/T8, colour type R^6
// carrying 3-d position and 3-d velocity, colour-preserving Dirac firing.
struct AirtrafficConfig {
    double delta3 = 2.0, delta4 = 1.0, delta5 = 1.5, delta6 = 0.5;
    std::vector<Vec> drift_a;          // shared linear part of both affine drifts
    Vec drift_b_nominal;               // affine offset, nominal evolution
    Vec drift_b_nonnominal;
    std::vector<Vec> diffusion_nominal;    // constant 6x6
    std::vector<Vec> diffusion_nonnominal;
    Vec x0;                            // initial position+velocity, x0[2] > 0, x0[5] > 0
    bool landing_guards = true;

    static AirtrafficConfig defaults();
};
SdcpnModel airtraffic_example(const AirtrafficConfig& config = AirtrafficConfig::defaults());

// "airtraffic" and "airtraffic-noguard"; overrides apply to delta3..delta6.
bool is_builtin_model(const std::string& name);
SdcpnModel builtin_model(const std::string& name,
                         const std::map<std::string, std::string>& overrides = {});

}  // namespace shs
