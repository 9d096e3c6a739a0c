#include "shs/sdcpn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace shs {

int FiringMeasure::sample(std::span<const double> colour, SplitStream& uniforms) const {
    if (support.empty()) throw ModelError("firing measure with empty support");
    if (support.size() == 1) return 0;
    if (sample_index) {
        int i = sample_index(colour, uniforms);
        if (i < 0 || i >= static_cast<int>(support.size()))
            throw ModelError("firing measure sampler returned index outside declared support");
        return i;
    }
    std::vector<double> p = probs_at(colour);
    double u = uniforms.next_unit();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
}

std::vector<double> FiringMeasure::probs_at(std::span<const double> colour) const {
    if (discrete_probs) return discrete_probs(colour);
    std::vector<double> p;
    p.reserve(probs.size());
    for (const Rational& r : probs) p.push_back(r.value());
    if (p.empty() && support.size() == 1) p.push_back(1.0);
    return p;
}

void SdcpnModel::finalize() {
    io.assign(transitions.size(), {});
    for (std::size_t a = 0; a < arcs.size(); ++a) {
        const Arc& arc = arcs[a];
        if (arc.transition < 0 || arc.transition >= static_cast<int>(transitions.size())) continue;
        TransitionIo& t = io[static_cast<std::size_t>(arc.transition)];
        if (arc.place_to_transition) {
            if (arc.kind == ArcKind::inhibitor) t.inhibitor_arcs.push_back(static_cast<int>(a));
            else t.input_arcs.push_back(static_cast<int>(a));
        } else {
            t.output_arcs.push_back(static_cast<int>(a));
        }
    }
}

int SdcpnModel::place_index(const std::string& id) const {
    for (std::size_t i = 0; i < places.size(); ++i)
        if (places[i].id == id) return static_cast<int>(i);
    return -1;
}

int SdcpnModel::transition_index(const std::string& id) const {
    for (std::size_t i = 0; i < transitions.size(); ++i)
        if (transitions[i].id == id) return static_cast<int>(i);
    return -1;
}

bool SdcpnModel::serializable() const {
    for (const Place& p : places)
        if (p.colour_dim > 0 && (p.drift.text.empty() || p.diffusion.text.empty())) return false;
    for (const Transition& t : transitions) {
        if (t.guard && t.guard->text.empty()) return false;
        if (t.rate && t.rate->text.empty()) return false;
        if (t.firing.text.empty()) return false;
    }
    for (const InitialTokens& i : initial)
        for (const ColourSampler& c : i.colours)
            if (c.text.empty()) return false;
    return true;
}

std::string ValidationReport::to_string() const {
    std::ostringstream out;
    for (const Violation& v : violations) out << v.code << ": " << v.message << "\n";
    return out.str();
}

ValidationReport validate(const SdcpnModel& model) {
    ValidationReport report;
    auto bad = [&report](const std::string& code, const std::string& msg) {
        report.violations.push_back({code, msg});
    };

    for (std::size_t i = 0; i < model.places.size(); ++i) {
        const Place& p = model.places[i];
        if (p.colour_dim < 0) bad("place-dim", p.id + ": negative colour dimension");
        if (p.colour_dim == 0 && !(p.drift.zero && p.diffusion.zero))
            bad("colourless-dynamics", p.id + ": colourless place must not declare drift/diffusion");
        if (p.colour_dim > 0 && (!p.drift.eval || !p.diffusion.eval))
            bad("missing-dynamics", p.id + ": coloured place needs drift and diffusion");
        if (p.colour_dim > 0 && p.brownian_dim < 1)
            bad("brownian-dim", p.id + ": coloured place needs Brownian dimension >= 1");
    }

    for (std::size_t a = 0; a < model.arcs.size(); ++a) {
        const Arc& arc = model.arcs[a];
        if (arc.place < 0 || arc.place >= static_cast<int>(model.places.size()) ||
            arc.transition < 0 || arc.transition >= static_cast<int>(model.transitions.size())) {
            bad("dangling-arc", arc.id + ": endpoint does not name a declared place/transition");
            continue;
        }
        if (!arc.place_to_transition && arc.kind != ArcKind::ordinary)
            bad("arc-direction", arc.id + ": " +
                (arc.kind == ArcKind::inhibitor ? std::string("inhibitor") : std::string("enabling")) +
                " arc must run place to transition");
    }

    if (model.io.size() != model.transitions.size()) {
        bad("not-finalized", "model.finalize() has not been run");
        return report;
    }

    for (std::size_t t = 0; t < model.transitions.size(); ++t) {
        const Transition& tr = model.transitions[t];
        const auto& io = model.io[t];
        bool has_guard = tr.guard.has_value();
        bool has_rate = tr.rate.has_value();
        if (tr.kind == TransitionKind::guard && (!has_guard || has_rate))
            bad("kind-fields", tr.id + ": guard transition must carry a guard and no delay rate");
        if (tr.kind == TransitionKind::delay && (has_guard || !has_rate))
            bad("kind-fields", tr.id + ": delay transition must carry a delay rate and no guard");
        if (tr.kind == TransitionKind::immediate && (has_guard || has_rate))
            bad("kind-fields", tr.id + ": immediate transition must carry neither guard nor rate");
        if (tr.kind != TransitionKind::immediate && io.input_arcs.empty())
            bad("pre-enabling-impossible",
                tr.id + ": guard/delay transition has no ordinary or enabling input arc");
        for (const std::vector<int>& e : tr.firing.support) {
            if (e.size() != io.output_arcs.size())
                bad("e-support-shape", tr.id + ": e-vector length differs from output arc count");
            for (int v : e)
                if (v != 0 && v != 1) bad("e-support-binary", tr.id + ": e-vector entries must be 0 or 1");
        }
        if (tr.firing.support.empty()) bad("e-support-empty", tr.id + ": firing measure declares no e-support");
        if (!tr.firing.produce_colour) {
            int in_dim = 0;
            for (int a : io.input_arcs)
                in_dim += model.places[static_cast<std::size_t>(model.arcs[static_cast<std::size_t>(a)].place)]
                              .colour_dim;
            for (int a : io.output_arcs) {
                const Place& p = model.places[static_cast<std::size_t>(model.arcs[static_cast<std::size_t>(a)].place)];
                if (p.colour_dim > 0 && p.colour_dim != in_dim)
                    bad("firing-colour-dim", tr.id + ": copied colour dimension " + std::to_string(in_dim) +
                                                 " does not match place " + p.id);
            }
        }
        if (!tr.firing.probs.empty()) {
            if (tr.firing.probs.size() != tr.firing.support.size())
                bad("firing-probs-shape", tr.id + ": probability per support element required");
            Rational sum(0);
            for (const Rational& r : tr.firing.probs) sum += r;
            if (!tr.firing.probs.empty() && !(sum == Rational(1)))
                bad("firing-probs-sum", tr.id + ": firing probabilities must sum to 1, got " + sum.to_string());
        }
    }

    for (const InitialTokens& init : model.initial) {
        if (init.place < 0 || init.place >= static_cast<int>(model.places.size())) {
            bad("initial-place", "initial marking names an undeclared place");
            continue;
        }
        const Place& p = model.places[static_cast<std::size_t>(init.place)];
        if (init.count < 0) bad("initial-count", p.id + ": negative token count");
        if (p.colour_dim > 0 && init.count > 0 && init.colours.empty())
            bad("initial-colour", p.id + ": coloured place needs an initial colour sampler");
        if (!init.colours.empty() && init.colours.size() != 1 &&
            static_cast<int>(init.colours.size()) != init.count)
            bad("initial-colour", p.id + ": colour sampler count must be 1 or match the token count");
        if (p.colour_dim == 0 && !init.colours.empty())
            bad("initial-colour", p.id + ": colourless place must not declare colours");
    }

    return report;
}

std::uint64_t SdcpnModel::hash() const {
    if (!serializable()) return 0;
    // FNV-1a over a canonical rendering assembled here to avoid a dependency
    // cycle with the parser; model_io serialization feeds through the same
    // canonical function texts.
    std::ostringstream out;
    for (const auto& [k, v] : params) {
        out << k << "=";
        if (v.kind == ParamValue::Kind::scalar) out << v.scalar;
        else if (v.kind == ParamValue::Kind::vector)
            for (double d : v.vec) out << d << ",";
        else
            for (const Vec& row : v.mat) {
                for (double d : row) out << d << ",";
                out << ";";
            }
        out << "\n";
    }
    for (const Place& p : places)
        out << p.id << ":" << p.colour_dim << ":" << p.brownian_dim << ":" << p.drift.text << ":"
            << p.diffusion.text << "\n";
    for (const Transition& t : transitions) {
        out << t.id << ":" << static_cast<int>(t.kind) << ":" << (t.guard ? t.guard->text : "")
            << ":" << (t.rate ? t.rate->text : "") << ":" << t.firing.text << "\n";
    }
    for (const Arc& a : arcs)
        out << a.id << ":" << static_cast<int>(a.kind) << ":" << a.place_to_transition << ":"
            << a.place << ":" << a.transition << "\n";
    for (const InitialTokens& i : initial) {
        out << i.place << ":" << i.count << ":";
        for (const ColourSampler& c : i.colours) out << c.text << ";";
        out << "\n";
    }
    std::string s = out.str();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h == 0 ? 1 : h;
}

namespace {

double sq_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

// Max over sampled points/pairs in the ball of the growth ratio
// |F(c)|^2/(1+|c|^2) and the Lipschitz ratio |F(c)-F(a)|^2/|c-a|^2.
struct RatioEstimates {
    double growth = 0.0;
    double lipschitz = 0.0;
    bool finite = true;
};

RatioEstimates estimate_ratios(const std::function<void(std::span<const double>, std::span<double>)>& f,
                               int in_dim, int out_dim, double radius, int samples, SplitStream& rng) {
    RatioEstimates est;
    Vec c(static_cast<std::size_t>(in_dim)), a(static_cast<std::size_t>(in_dim));
    Vec fc(static_cast<std::size_t>(out_dim)), fa(static_cast<std::size_t>(out_dim));
    auto sample_ball = [&rng, radius, in_dim](Vec& x) {
        for (int i = 0; i < in_dim; ++i) x[static_cast<std::size_t>(i)] = radius * (2.0 * rng.next_unit() - 1.0);
    };
    for (int s = 0; s < samples; ++s) {
        sample_ball(c);
        // Alternate far pairs with near pairs so both global spread and local
        // slope are probed.
        if (s % 2 == 0) {
            sample_ball(a);
        } else {
            double eps = radius * std::pow(10.0, -1.0 - 3.0 * rng.next_unit());
            for (int i = 0; i < in_dim; ++i)
                a[static_cast<std::size_t>(i)] = c[static_cast<std::size_t>(i)] + eps * (2.0 * rng.next_unit() - 1.0);
        }
        std::fill(fc.begin(), fc.end(), 0.0);
        std::fill(fa.begin(), fa.end(), 0.0);
        f(c, fc);
        f(a, fa);
        for (double v : fc)
            if (!std::isfinite(v)) est.finite = false;
        if (!est.finite) return est;
        est.growth = std::max(est.growth, sq_norm(fc) / (1.0 + sq_norm(c)));
        double dist2 = 0.0, diff2 = 0.0;
        for (int i = 0; i < in_dim; ++i) {
            double d = c[static_cast<std::size_t>(i)] - a[static_cast<std::size_t>(i)];
            dist2 += d * d;
        }
        for (int i = 0; i < out_dim; ++i) {
            double d = fc[static_cast<std::size_t>(i)] - fa[static_cast<std::size_t>(i)];
            diff2 += d * d;
        }
        if (dist2 > 0.0) est.lipschitz = std::max(est.lipschitz, diff2 / dist2);
    }
    return est;
}

}  // namespace

bool D1Report::all_pass() const {
    return std::all_of(places.begin(), places.end(), [](const D1PlaceReport& r) { return !r.flagged; });
}

std::string D1Report::to_string() const {
    std::ostringstream out;
    for (const D1PlaceReport& r : places) {
        out << r.place << ": K_v=" << r.k_drift << " L_v=" << r.l_drift << " K_w=" << r.k_diffusion
            << " L_w=" << r.l_diffusion << (r.flagged ? " FLAGGED " + r.detail : " ok") << "\n";
    }
    return out.str();
}

D1Report check_d1(const SdcpnModel& model, int sample_count, double radius, std::uint64_t seed) {
    if (sample_count < 10) throw ConfigError("check_d1 needs a sample budget of at least 10");
    if (!(radius > 0.0)) throw ConfigError("check_d1 needs a positive radius");
    D1Report report;
    SplitStream rng = SplitStream(seed).child(71);
    // Divergence across a two-decade radius sweep marks a non-global constant.
    const double sweep[3] = {radius, 10.0 * radius, 100.0 * radius};
    const double growth_factor = 8.0;
    for (std::size_t pi = 0; pi < model.places.size(); ++pi) {
        const Place& p = model.places[pi];
        if (p.colour_dim == 0) continue;
        D1PlaceReport r;
        r.place = p.id;
        double kv[3], lv[3], kw[3], lw[3];
        bool finite = true;
        for (int s = 0; s < 3; ++s) {
            auto dr = estimate_ratios(p.drift.eval, p.colour_dim, p.colour_dim, sweep[s], sample_count / 3, rng);
            auto df = estimate_ratios(p.diffusion.eval, p.colour_dim, p.colour_dim * p.brownian_dim,
                                      sweep[s], sample_count / 3, rng);
            kv[s] = dr.growth; lv[s] = dr.lipschitz;
            kw[s] = df.growth; lw[s] = df.lipschitz;
            finite = finite && dr.finite && df.finite;
        }
        r.k_drift = kv[0]; r.l_drift = lv[0];
        r.k_diffusion = kw[0]; r.l_diffusion = lw[0];
        if (!finite) {
            r.flagged = true;
            r.detail = "non-finite drift/diffusion output";
        } else {
            auto diverges = [growth_factor](const double v[3]) {
                return v[0] > 0.0 ? v[2] > growth_factor * v[0] : v[2] > 1e-9;
            };
            if (diverges(kv) || diverges(lv)) { r.flagged = true; r.detail = "drift growth/Lipschitz estimate diverges with radius"; }
            if (diverges(kw) || diverges(lw)) { r.flagged = true; r.detail += std::string(r.detail.empty() ? "" : "; ") + "diffusion estimate diverges with radius"; }
        }
        report.places.push_back(std::move(r));
    }
    return report;
}

}  // namespace shs
