#include "shs/gshs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>

namespace shs {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double DomainFace::sd(std::span<const double> x) const {
    // guard.signed_distance takes the mode's full continuous state; mapped
    // faces bake the segment gather into the wrapper.
    return guard.signed_distance(x);
}

ModeCatalog GshsModel::catalog() const {
    ModeCatalog cat;
    for (const GshsMode& m : modes) cat.intern(m.tag);
    return cat;
}

int GshsModel::find_mode(const std::vector<int>& tag) const {
    for (std::size_t i = 0; i < modes.size(); ++i)
        if (modes[i].tag == tag) return static_cast<int>(i);
    return -1;
}

int ReachabilityGraph::find(const std::vector<int>& counts) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i] == counts) return static_cast<int>(i);
    return -1;
}

bool CheckReport::all_pass() const {
    return std::all_of(items.begin(), items.end(), [](const CheckItem& i) { return !i.flagged; });
}

const CheckItem& CheckReport::item(const std::string& name) const {
    for (const CheckItem& i : items)
        if (i.name == name) return i;
    throw ConfigError("no check item named " + name);
}

std::string CheckReport::to_string() const {
    std::ostringstream out;
    for (const CheckItem& i : items)
        out << i.name << ": " << (i.flagged ? "FLAGGED " + i.detail : "pass " + i.detail) << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// reachability
// ---------------------------------------------------------------------------

namespace {

// Count-level pre-enabling: enough tokens for one distinct token per input
// arc, inhibitor places empty.
bool count_pre_enabled(const SdcpnModel& model, int transition, const std::vector<int>& counts) {
    const auto& io = model.io[static_cast<std::size_t>(transition)];
    if (io.input_arcs.empty()) return false;
    for (int a : io.inhibitor_arcs)
        if (counts[static_cast<std::size_t>(model.arcs[static_cast<std::size_t>(a)].place)] > 0) return false;
    std::map<int, int> needed;
    for (int a : io.input_arcs) ++needed[model.arcs[static_cast<std::size_t>(a)].place];
    for (const auto& [place, need] : needed)
        if (counts[static_cast<std::size_t>(place)] < need) return false;
    return true;
}

bool enables_immediate(const SdcpnModel& model, const std::vector<int>& counts) {
    for (std::size_t t = 0; t < model.transitions.size(); ++t)
        if (model.transitions[t].kind == TransitionKind::immediate &&
            count_pre_enabled(model, static_cast<int>(t), counts))
            return true;
    return false;
}

std::vector<int> initial_counts(const SdcpnModel& model) {
    std::vector<int> counts(model.places.size(), 0);
    for (const InitialTokens& init : model.initial)
        counts[static_cast<std::size_t>(init.place)] += init.count;
    return counts;
}

}  // namespace

ReachabilityGraph reachability_graph(const SdcpnModel& model, int max_nodes) {
    ReachabilityGraph g;
    std::map<std::vector<int>, int> index;
    std::deque<int> queue;
    auto intern = [&](const std::vector<int>& counts) {
        auto it = index.find(counts);
        if (it != index.end()) return it->second;
        if (static_cast<int>(g.nodes.size()) >= max_nodes)
            throw ModelError("reachability graph not finite within budget of " +
                             std::to_string(max_nodes) + " nodes");
        int id = static_cast<int>(g.nodes.size());
        index[counts] = id;
        g.nodes.push_back(counts);
        g.immediate_enabling.push_back(enables_immediate(model, counts));
        queue.push_back(id);
        return id;
    };

    g.initial = intern(initial_counts(model));
    while (!queue.empty()) {
        int node = queue.front();
        queue.pop_front();
        std::vector<int> counts = g.nodes[static_cast<std::size_t>(node)];
        for (std::size_t t = 0; t < model.transitions.size(); ++t) {
            if (!count_pre_enabled(model, static_cast<int>(t), counts)) continue;
            const auto& io = model.io[t];
            const FiringMeasure& fm = model.transitions[t].firing;
            for (std::size_t e = 0; e < fm.support.size(); ++e) {
                std::vector<int> next = counts;
                for (int a : io.input_arcs) {
                    const Arc& arc = model.arcs[static_cast<std::size_t>(a)];
                    if (arc.kind == ArcKind::ordinary) --next[static_cast<std::size_t>(arc.place)];
                }
                for (std::size_t j = 0; j < io.output_arcs.size(); ++j)
                    if (fm.support[e][j] == 1)
                        ++next[static_cast<std::size_t>(
                            model.arcs[static_cast<std::size_t>(io.output_arcs[j])].place)];
                int to = intern(next);
                g.edges.push_back({node, to, static_cast<int>(t), static_cast<int>(e)});
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// mapping
// ---------------------------------------------------------------------------

namespace {

// Synthetic colourless marking for count-level candidate enumeration.
Marking counts_marking(std::size_t places, const std::vector<int>& counts) {
    Marking m;
    m.tokens.resize(places);
    std::uint64_t serial = 0;
    for (std::size_t p = 0; p < places; ++p)
        for (int k = 0; k < counts[p]; ++k) m.tokens[p].push_back({{}, serial++});
    return m;
}

struct MappedCandidate {
    int transition = -1;
    std::vector<std::pair<int, int>> segments;  // (offset, dim) pieces of x forming C^T
};

struct MappingData {
    std::shared_ptr<const SdcpnModel> net;
    std::vector<GshsMode> modes;
    std::map<std::vector<int>, int> mode_index;
    std::vector<std::vector<MappedCandidate>> delay_cands;  // per mode
    int max_immediate = 10000;

    Vec ct(const MappedCandidate& c, std::span<const double> x) const {
        Vec out;
        for (const auto& [offset, dim] : c.segments)
            for (int i = 0; i < dim; ++i) out.push_back(x[static_cast<std::size_t>(offset + i)]);
        return out;
    }

    Marking reconstruct(int mode, std::span<const double> x) const {
        const GshsMode& m = modes[static_cast<std::size_t>(mode)];
        Marking marking;
        marking.tokens.resize(net->places.size());
        std::uint64_t serial = 0;
        for (std::size_t p = 0; p < net->places.size(); ++p)
            for (int k = 0; k < m.tag[p]; ++k) marking.tokens[p].push_back({{}, serial++});
        for (const GshsMode::Block& b : m.blocks) {
            Vec colour(x.begin() + b.offset, x.begin() + b.offset + b.dim);
            marking.tokens[static_cast<std::size_t>(b.place)][static_cast<std::size_t>(b.token)].colour =
                std::move(colour);
        }
        return marking;
    }
};

// Candidate segments: the pieces of the mode's continuous state feeding
// C_t^T, in place order then token order.
std::vector<std::pair<int, int>> candidate_segments(const GshsMode& mode,
                                                    const EnablingCandidate& cand) {
    std::vector<const TokenPick*> picks;
    for (const TokenPick& p : cand.picks) picks.push_back(&p);
    std::sort(picks.begin(), picks.end(), [](const TokenPick* a, const TokenPick* b) {
        return a->place != b->place ? a->place < b->place : a->slot < b->slot;
    });
    std::vector<std::pair<int, int>> segments;
    for (const TokenPick* p : picks) {
        for (const GshsMode::Block& b : mode.blocks)
            if (b.place == p->place && b.token == p->slot) {
                segments.emplace_back(b.offset, b.dim);
                break;
            }
    }
    return segments;
}

// Exact closure distribution over count vectors, or nullopt when the closure
// involves state-dependent firing measures.
std::optional<std::map<std::vector<int>, Rational>> closure_distribution(const SdcpnModel& model,
                                                                         const Marking& marking,
                                                                         int depth) {
    if (depth > 200) throw ModelError("immediate closure enumeration did not terminate");
    std::vector<EnablingCandidate> immediates;
    for (EnablingCandidate& c : pre_enabled(model, marking))
        if (model.transitions[static_cast<std::size_t>(c.transition)].kind == TransitionKind::immediate)
            immediates.push_back(std::move(c));
    std::map<std::vector<int>, Rational> out;
    if (immediates.empty()) {
        out[marking.counts()] = Rational(1);
        return out;
    }
    std::vector<std::vector<EnablingCandidate>> plans = conflict_free_plans(model, immediates);
    Rational plan_w(1, static_cast<std::int64_t>(plans.size()));
    for (const auto& plan : plans) {
        // Joint e-vector choices across the plan.
        struct Choice {
            Marking marking;
            Rational prob;
        };
        std::vector<Choice> partial{{marking, plan_w}};
        std::uint64_t serial = 1000000;
        for (const EnablingCandidate& cand : plan) {
            const Transition& tr = model.transitions[static_cast<std::size_t>(cand.transition)];
            if (tr.firing.probs.empty()) return std::nullopt;  // state-dependent choice
            const auto& io = model.io[static_cast<std::size_t>(cand.transition)];
            std::vector<Choice> next;
            for (const Choice& ch : partial) {
                for (std::size_t e = 0; e < tr.firing.support.size(); ++e) {
                    if (tr.firing.probs[e].is_zero()) continue;
                    Choice c2{ch.marking, ch.prob * tr.firing.probs[e]};
                    for (std::size_t i = 0; i < io.input_arcs.size(); ++i) {
                        const Arc& arc = model.arcs[static_cast<std::size_t>(io.input_arcs[i])];
                        if (arc.kind != ArcKind::ordinary) continue;
                        int slot = c2.marking.find_slot(cand.picks[i].place, cand.picks[i].serial);
                        auto& toks = c2.marking.tokens[static_cast<std::size_t>(cand.picks[i].place)];
                        toks.erase(toks.begin() + slot);
                    }
                    for (std::size_t j = 0; j < io.output_arcs.size(); ++j)
                        if (tr.firing.support[e][j] == 1)
                            c2.marking
                                .tokens[static_cast<std::size_t>(
                                    model.arcs[static_cast<std::size_t>(io.output_arcs[j])].place)]
                                .push_back({{}, serial++});
                    next.push_back(std::move(c2));
                }
            }
            partial = std::move(next);
        }
        for (const Choice& ch : partial) {
            auto sub = closure_distribution(model, ch.marking, depth + 1);
            if (!sub) return std::nullopt;
            for (const auto& [counts, p] : *sub) {
                Rational cur = out.count(counts) ? out[counts] : Rational(0);
                out[counts] = cur + ch.prob * p;
            }
        }
    }
    return out;
}

}  // namespace

GshsModel map_sdcpn_to_gshs(const SdcpnModel& model, int max_nodes) {
    ValidationReport vr = validate(model);
    if (!vr.ok()) throw ModelError("mapping rejected invalid model:\n" + vr.to_string());

    ReachabilityGraph rg = reachability_graph(model, max_nodes);

    auto data = std::make_shared<MappingData>();
    data->net = std::make_shared<SdcpnModel>(model);

    // K = reachability nodes excluding those enabling immediate transitions,
    // in BFS discovery order (the initial node, when non-immediate, first).
    std::vector<int> k_nodes;
    for (std::size_t i = 0; i < rg.nodes.size(); ++i)
        if (!rg.immediate_enabling[i]) k_nodes.push_back(static_cast<int>(i));
    if (k_nodes.empty()) throw ModelError("mapping produced an empty discrete state space");

    bool constant_dim = true;
    int common_dim = -1;
    int max_coloured_tokens_anywhere = 0;
    for (const auto& counts : rg.nodes) {
        int dim = 0, coloured = 0;
        for (std::size_t p = 0; p < counts.size(); ++p)
            if (model.places[p].colour_dim > 0) {
                dim += counts[p] * model.places[p].colour_dim;
                coloured += counts[p];
            }
        max_coloured_tokens_anywhere = std::max(max_coloured_tokens_anywhere, coloured);
        (void)dim;
    }

    int wiener_dim = 0;
    for (int node : k_nodes) {
        const std::vector<int>& counts = rg.nodes[static_cast<std::size_t>(node)];
        GshsMode mode;
        mode.tag = counts;
        int offset = 0, woffset = 0;
        bool frozen = true;
        for (std::size_t p = 0; p < counts.size(); ++p) {
            const Place& place = model.places[p];
            if (place.colour_dim == 0) continue;
            for (int k = 0; k < counts[p]; ++k) {
                GshsMode::Block b;
                b.place = static_cast<int>(p);
                b.token = k;
                b.offset = offset;
                b.dim = place.colour_dim;
                b.wiener_offset = woffset;
                b.wiener_dim = place.brownian_dim;
                offset += b.dim;
                woffset += b.wiener_dim;
                mode.blocks.push_back(b);
                if (!place.frozen()) frozen = false;
            }
        }
        mode.dim = offset;
        mode.frozen = frozen;
        wiener_dim = std::max(wiener_dim, woffset);
        if (common_dim < 0) common_dim = mode.dim;
        else if (common_dim != mode.dim) constant_dim = false;

        // Per-mode pre-enabled candidates over a synthetic marking.
        Marking synthetic = counts_marking(model.places.size(), counts);
        std::vector<MappedCandidate> delays;
        for (const EnablingCandidate& cand : pre_enabled(model, synthetic)) {
            const Transition& tr = model.transitions[static_cast<std::size_t>(cand.transition)];
            if (tr.kind == TransitionKind::delay) {
                delays.push_back({cand.transition, candidate_segments(mode, cand)});
            } else if (tr.kind == TransitionKind::guard) {
                DomainFace face;
                face.segments = candidate_segments(mode, cand);
                face.source_transition = cand.transition;
                GuardFn inner = *tr.guard;
                std::vector<std::pair<int, int>> segs = face.segments;
                face.guard.text = inner.text;
                face.guard.signed_distance = [inner, segs](std::span<const double> x) {
                    Vec c;
                    for (const auto& [offset, dim] : segs)
                        for (int i = 0; i < dim; ++i) c.push_back(x[static_cast<std::size_t>(offset + i)]);
                    return inner.signed_distance(c);
                };
                mode.faces.push_back(std::move(face));
            }
        }
        data->delay_cands.push_back(std::move(delays));
        data->mode_index[mode.tag] = static_cast<int>(data->modes.size());
        data->modes.push_back(std::move(mode));
    }
    (void)constant_dim;

    GshsModel out;
    out.modes = data->modes;
    out.wiener_dim = wiener_dim;
    out.source = data->net;
    out.source_hash = model.hash();

    for (const auto& [name, p] : model.params)
        if (p.kind == ParamValue::Kind::scalar) {
            out.rate_params[name] = p.scalar;
            if (p.exact) out.rate_params_exact[name] = *p.exact;
        }

    out.drift = [data](int mode, std::span<const double> x, std::span<double> f) {
        const GshsMode& m = data->modes[static_cast<std::size_t>(mode)];
        for (double& v : f) v = 0.0;
        for (const GshsMode::Block& b : m.blocks) {
            const Place& place = data->net->places[static_cast<std::size_t>(b.place)];
            if (place.frozen()) continue;
            place.drift.eval(x.subspan(static_cast<std::size_t>(b.offset), static_cast<std::size_t>(b.dim)),
                             f.subspan(static_cast<std::size_t>(b.offset), static_cast<std::size_t>(b.dim)));
        }
    };
    int h_total = wiener_dim;
    out.diffusion = [data, h_total](int mode, std::span<const double> x, std::span<double> g) {
        const GshsMode& m = data->modes[static_cast<std::size_t>(mode)];
        for (double& v : g) v = 0.0;
        Vec block;
        for (const GshsMode::Block& b : m.blocks) {
            const Place& place = data->net->places[static_cast<std::size_t>(b.place)];
            if (place.frozen()) continue;
            block.assign(static_cast<std::size_t>(b.dim) * static_cast<std::size_t>(b.wiener_dim), 0.0);
            place.diffusion.eval(
                x.subspan(static_cast<std::size_t>(b.offset), static_cast<std::size_t>(b.dim)), block);
            for (int i = 0; i < b.dim; ++i)
                for (int j = 0; j < b.wiener_dim; ++j)
                    g[static_cast<std::size_t>((b.offset + i) * h_total + b.wiener_offset + j)] =
                        block[static_cast<std::size_t>(i * b.wiener_dim + j)];
        }
    };

    // lambda(theta, x) = sum of pre-enabled delay rates at the matching
    // colour blocks.
    out.lambda.eval = [data](int mode, std::span<const double> x) {
        double sum = 0.0;
        for (const MappedCandidate& c : data->delay_cands[static_cast<std::size_t>(mode)]) {
            const RateFn& rate = *data->net->transitions[static_cast<std::size_t>(c.transition)].rate;
            if (rate.constant) sum += rate.value;
            else sum += rate.eval(data->ct(c, x));
        }
        return sum;
    };
    out.lambda.all_constant = true;
    for (const Transition& t : model.transitions)
        if (t.kind == TransitionKind::delay && !t.rate->constant) out.lambda.all_constant = false;
    if (out.lambda.all_constant) {
        for (std::size_t m = 0; m < data->modes.size(); ++m) {
            double v = 0.0;
            LinForm sym;
            for (const MappedCandidate& c : data->delay_cands[m]) {
                const RateFn& rate = *data->net->transitions[static_cast<std::size_t>(c.transition)].rate;
                v += rate.value;
                sym += rate.symbol;
            }
            out.lambda.mode_value.push_back(v);
            out.lambda.mode_symbol.push_back(sym);
        }
    }

    int max_immediate = data->max_immediate;
    out.init = [data, max_immediate](RandomBasis& basis) {
        std::uint64_t serial = 0;
        Marking m = initial_marking(*data->net, basis, &serial);
        immediate_closure(*data->net, m, basis, &serial, max_immediate);
        auto it = data->mode_index.find(m.counts());
        if (it == data->mode_index.end())
            throw ModelError("initial closure reached a marking outside the mapped mode set");
        return HybridState{{it->second}, m.colour_vector(*data->net)};
    };

    out.kernel.sample = [data, max_immediate](const HybridState& pre, JumpTrigger trigger,
                                              RandomBasis& basis) {
        Marking marking = data->reconstruct(pre.mode.index, pre.x);
        std::vector<EnablingCandidate> cands = pre_enabled(*data->net, marking);
        std::vector<EnablingCandidate> enabled;
        if (trigger == JumpTrigger::spontaneous) {
            // Competing clocks: transition choice with probability rate/lambda.
            double total = 0.0;
            std::vector<double> weights;
            std::vector<const EnablingCandidate*> delays;
            for (const EnablingCandidate& c : cands) {
                const Transition& tr = data->net->transitions[static_cast<std::size_t>(c.transition)];
                if (tr.kind != TransitionKind::delay) continue;
                double w = tr.rate->constant ? tr.rate->value
                                             : tr.rate->eval(c.colour_vector(*data->net, marking));
                delays.push_back(&c);
                weights.push_back(w);
                total += w;
            }
            if (total <= 0.0)
                throw ModelError("spontaneous jump requested in a mode with zero jump rate");
            double u = basis.uniforms().next_unit() * total;
            double acc = 0.0;
            std::size_t chosen = weights.size() - 1;
            for (std::size_t i = 0; i < weights.size(); ++i) {
                acc += weights[i];
                if (u < acc) {
                    chosen = i;
                    break;
                }
            }
            enabled.push_back(*delays[chosen]);
        } else {
            // The hit face: guard candidates at (within tolerance of) zero
            // signed distance.
            double best = kInf;
            std::vector<std::pair<double, const EnablingCandidate*>> guards;
            for (const EnablingCandidate& c : cands) {
                const Transition& tr = data->net->transitions[static_cast<std::size_t>(c.transition)];
                if (tr.kind != TransitionKind::guard) continue;
                double sd = std::fabs(tr.guard->signed_distance(c.colour_vector(*data->net, marking)));
                guards.emplace_back(sd, &c);
                best = std::min(best, sd);
            }
            for (const auto& [sd, c] : guards)
                if (sd <= best + 1e-12) enabled.push_back(*c);
            if (enabled.empty())
                throw ModelError("boundary jump requested with no guard transition pre-enabled");
        }
        std::uint64_t serial = 1u << 20;
        std::vector<EnablingCandidate> plan = resolve_conflicts(*data->net, enabled, basis.uniforms());
        fire(*data->net, marking, plan, basis, &serial);
        immediate_closure(*data->net, marking, basis, &serial, max_immediate);
        auto it = data->mode_index.find(marking.counts());
        if (it == data->mode_index.end())
            throw ModelError("jump reached a marking outside the mapped mode set");
        return HybridState{{it->second}, marking.colour_vector(*data->net)};
    };

    // Exact matrices when rates are constant and firing measures carry
    // x-independent rational probabilities.
    bool exact_probs = true;
    bool preserving = max_coloured_tokens_anywhere <= 1;
    for (const Transition& t : model.transitions) {
        if (t.firing.probs.empty()) exact_probs = false;
        if (!t.firing.colour_preserving) preserving = false;
    }

    std::size_t K = data->modes.size();
    auto evaluate_matrix = [&](std::vector<std::vector<RateRatio>>& sym) {
        DiscreteKernelMatrix m;
        m.symbolic = sym;
        m.colour_preserving = preserving;
        bool exact_ok = true;
        for (const auto& row : sym)
            for (const RateRatio& r : row)
                for (const auto* form : {&r.num, &r.den})
                    for (const auto& [name, coeff] : form->terms())
                        if (!out.rate_params_exact.count(name)) exact_ok = false;
        m.value.assign(K, std::vector<double>(K, 0.0));
        if (exact_ok) m.exact.assign(K, std::vector<Rational>(K));
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = 0; j < K; ++j) {
                // zero numerator, or a denominator that vanishes at the given
                // rates (a mode that never jumps spontaneously): entry 0
                if (sym[i][j].num.is_zero() || sym[i][j].den.is_zero()) continue;
                if (sym[i][j].den.eval(out.rate_params) == 0.0) continue;
                m.value[i][j] = sym[i][j].eval(out.rate_params);
                if (exact_ok) m.exact[i][j] = sym[i][j].eval_exact(out.rate_params_exact);
            }
        return m;
    };

    if (exact_probs && out.lambda.all_constant) {
        try {
            std::vector<std::vector<RateRatio>> sym(K, std::vector<RateRatio>(K, RateRatio::zero()));
            for (std::size_t m = 0; m < K; ++m) {
                LinForm den = out.lambda.mode_symbol[m];
                if (den.is_zero()) continue;
                for (std::size_t j = 0; j < K; ++j) sym[m][j].den = den;
                for (const MappedCandidate& c : data->delay_cands[m]) {
                    const Transition& tr = data->net->transitions[static_cast<std::size_t>(c.transition)];
                    const auto& io = data->net->io[static_cast<std::size_t>(c.transition)];
                    // Fire this candidate for each supported e-vector, then
                    // close immediates exactly.
                    Marking base = counts_marking(model.places.size(), data->modes[m].tag);
                    std::vector<EnablingCandidate> cands = pre_enabled(*data->net, base);
                    const EnablingCandidate* match = nullptr;
                    for (const EnablingCandidate& cd : cands)
                        if (cd.transition == c.transition && match == nullptr) match = &cd;
                    // All selections of one transition are exchangeable at
                    // count level; the per-candidate rate weight already
                    // accounts for multiplicity.
                    for (std::size_t e = 0; e < tr.firing.support.size(); ++e) {
                        if (tr.firing.probs[e].is_zero()) continue;
                        Marking next = base;
                        std::uint64_t serial = 1u << 21;
                        for (std::size_t i = 0; i < io.input_arcs.size(); ++i) {
                            const Arc& arc = model.arcs[static_cast<std::size_t>(io.input_arcs[i])];
                            if (arc.kind != ArcKind::ordinary) continue;
                            int slot = next.find_slot(match->picks[i].place, match->picks[i].serial);
                            auto& toks = next.tokens[static_cast<std::size_t>(match->picks[i].place)];
                            toks.erase(toks.begin() + slot);
                        }
                        for (std::size_t oj = 0; oj < io.output_arcs.size(); ++oj)
                            if (tr.firing.support[e][oj] == 1)
                                next.tokens[static_cast<std::size_t>(
                                        model.arcs[static_cast<std::size_t>(io.output_arcs[oj])].place)]
                                    .push_back({{}, serial++});
                        auto dist = closure_distribution(*data->net, next, 0);
                        if (!dist) throw ModelError("state-dependent closure");
                        for (const auto& [counts, p] : *dist) {
                            auto it = data->mode_index.find(counts);
                            if (it == data->mode_index.end())
                                throw ModelError("closure left the mapped mode set");
                            sym[m][static_cast<std::size_t>(it->second)].num +=
                                tr.rate->symbol.scaled(tr.firing.probs[e] * p);
                        }
                    }
                }
            }
            out.kernel.spontaneous = evaluate_matrix(sym);
        } catch (const ModelError&) {
            out.kernel.spontaneous.reset();
        }
    }

    if (exact_probs) {
        try {
            std::vector<std::vector<RateRatio>> sym(K, std::vector<RateRatio>(K, RateRatio::zero()));
            bool any_boundary = false;
            for (std::size_t m = 0; m < K; ++m) {
                const GshsMode& mode = data->modes[m];
                if (mode.faces.empty()) continue;
                any_boundary = true;
                std::optional<std::map<std::vector<int>, Rational>> common;
                for (const DomainFace& face : mode.faces) {
                    const Transition& tr =
                        data->net->transitions[static_cast<std::size_t>(face.source_transition)];
                    const auto& io = data->net->io[static_cast<std::size_t>(face.source_transition)];
                    Marking base = counts_marking(model.places.size(), mode.tag);
                    std::vector<EnablingCandidate> cands = pre_enabled(*data->net, base);
                    const EnablingCandidate* match = nullptr;
                    for (const EnablingCandidate& cd : cands)
                        if (cd.transition == face.source_transition && match == nullptr) match = &cd;
                    std::map<std::vector<int>, Rational> dist_face;
                    for (std::size_t e = 0; e < tr.firing.support.size(); ++e) {
                        if (tr.firing.probs[e].is_zero()) continue;
                        Marking next = base;
                        std::uint64_t serial = 1u << 21;
                        for (std::size_t i = 0; i < io.input_arcs.size(); ++i) {
                            const Arc& arc = model.arcs[static_cast<std::size_t>(io.input_arcs[i])];
                            if (arc.kind != ArcKind::ordinary) continue;
                            int slot = next.find_slot(match->picks[i].place, match->picks[i].serial);
                            auto& toks = next.tokens[static_cast<std::size_t>(match->picks[i].place)];
                            toks.erase(toks.begin() + slot);
                        }
                        for (std::size_t oj = 0; oj < io.output_arcs.size(); ++oj)
                            if (tr.firing.support[e][oj] == 1)
                                next.tokens[static_cast<std::size_t>(
                                        model.arcs[static_cast<std::size_t>(io.output_arcs[oj])].place)]
                                    .push_back({{}, serial++});
                        auto dist = closure_distribution(*data->net, next, 0);
                        if (!dist) throw ModelError("state-dependent closure");
                        for (const auto& [counts, p] : *dist) {
                            Rational cur = dist_face.count(counts) ? dist_face[counts] : Rational(0);
                            dist_face[counts] = cur + tr.firing.probs[e] * p;
                        }
                    }
                    if (!common) common = dist_face;
                    else if (*common != dist_face)
                        throw ModelError("boundary outcome depends on the hit face");
                }
                for (const auto& [counts, p] : *common) {
                    auto it = data->mode_index.find(counts);
                    if (it == data->mode_index.end()) throw ModelError("closure left the mapped mode set");
                    sym[m][static_cast<std::size_t>(it->second)] = {LinForm(p), LinForm(Rational(1))};
                }
            }
            if (any_boundary) out.kernel.boundary = evaluate_matrix(sym);
        } catch (const ModelError&) {
            out.kernel.boundary.reset();
        }
    }

    return out;
}

// ---------------------------------------------------------------------------
// simulation (Definition-style execution: survivor function + boundary)
// ---------------------------------------------------------------------------

namespace {

std::vector<double> gshs_grid(const ExecParams& params) {
    std::vector<double> grid{0.0};
    if (params.grid_dt > 0.0) {
        for (int i = 1;; ++i) {
            double t = static_cast<double>(i) * params.grid_dt;
            if (t > params.horizon * (1.0 + 1e-12)) break;
            grid.push_back(std::min(t, params.horizon));
        }
    }
    if (grid.back() < params.horizon) grid.push_back(params.horizon);
    return grid;
}

}  // namespace

HybridPath simulate_gshs(const GshsModel& model, const ExecParams& params, RandomBasis& basis) {
    if (!(params.horizon > 0.0)) throw ConfigError("simulate_gshs needs horizon > 0");
    if (!(params.dt > 0.0)) throw ConfigError("simulate_gshs needs dt > 0");

    HybridState state = model.init(basis);
    ModeTimeline timeline;
    timeline.horizon = params.horizon;
    {
        JumpEvent ev;
        ev.time = 0.0;
        ev.kind = JumpKind::init;
        ev.mode_after = state.mode;
        ev.state_after = state.x;
        ev.state_before = state.x;
        timeline.events.push_back(std::move(ev));
    }
    std::vector<double> grid = gshs_grid(params);
    SampledContinuous sampled;
    sampled.times.push_back(0.0);
    sampled.values.push_back(state.x);
    std::size_t next_grid = 1;

    double t = 0.0;
    std::uint64_t jumps = 0;

    // Per-segment survivor state.
    double threshold = -std::log(basis.uniforms().next_open());
    double rate_integral = 0.0;

    Vec f, g, db, x_before;
    while (t < params.horizon) {
        const GshsMode& mode = model.modes[static_cast<std::size_t>(state.mode.index)];
        bool const_rate = model.lambda.all_constant;
        double lam = const_rate ? model.lambda.mode_value[static_cast<std::size_t>(state.mode.index)] : 0.0;
        double expiry = kInf;
        if (const_rate && lam > 0.0) expiry = t + (threshold - rate_integral) / lam;

        bool need_stepping = !mode.frozen || !const_rate || mode.has_boundary();
        double t_new = std::min(std::min(need_stepping ? t + params.dt : kInf, params.horizon),
                                std::min(expiry, next_grid < grid.size() ? grid[next_grid] : kInf));
        double h = t_new - t;

        double rate_now = 0.0;
        if (!const_rate) rate_now = model.lambda.eval(state.mode.index, state.x);

        x_before = state.x;
        if (!mode.frozen && h > 0.0) {
            std::size_t n = state.x.size();
            f.assign(n, 0.0);
            g.assign(n * static_cast<std::size_t>(model.wiener_dim), 0.0);
            model.drift(state.mode.index, state.x, f);
            model.diffusion(state.mode.index, state.x, g);
            db.assign(static_cast<std::size_t>(model.wiener_dim), 0.0);
            SplitStream& bm = basis.mode_brownian(state.mode.index);
            double sq = std::sqrt(h);
            for (double& v : db) v = sq * bm.next_normal();
            for (std::size_t i = 0; i < n; ++i) {
                double inc = f[i] * h;
                for (int j = 0; j < model.wiener_dim; ++j)
                    inc += g[i * static_cast<std::size_t>(model.wiener_dim) + static_cast<std::size_t>(j)] *
                           db[static_cast<std::size_t>(j)];
                state.x[i] += inc;
                if (!std::isfinite(state.x[i]))
                    throw NumericalError("non-finite continuous state in mode " +
                                         std::to_string(state.mode.index));
            }
        }

        // Earliest event in (t, t_new]: spontaneous expiry or boundary hit.
        double tau = kInf;
        JumpTrigger trigger = JumpTrigger::spontaneous;
        if (const_rate) {
            if (expiry <= t_new) {
                tau = expiry;
                trigger = JumpTrigger::spontaneous;
            }
        } else if (rate_now > 0.0 && rate_integral + rate_now * h >= threshold) {
            tau = t + (threshold - rate_integral) / rate_now;
            trigger = JumpTrigger::spontaneous;
        }
        for (const DomainFace& face : mode.faces) {
            auto hit = detect_guard_hit(face.guard, x_before, state.x, t, t_new,
                                        params.dt * params.time_tol_factor, params.guard_tol);
            // detect_guard_hit works on the full colour vector of the face.
            if (hit && *hit < tau) {
                tau = std::max(*hit, t);
                trigger = JumpTrigger::boundary;
            }
        }

        if (tau == kInf) {
            rate_integral += (const_rate ? lam : rate_now) * h;
            t = t_new;
            while (next_grid < grid.size() && grid[next_grid] <= t) {
                sampled.times.push_back(grid[next_grid]);
                sampled.values.push_back(state.x);
                ++next_grid;
            }
            continue;
        }

        double frac = h > 0.0 ? (tau - t) / h : 1.0;
        if (frac < 1.0 && !mode.frozen)
            for (std::size_t i = 0; i < state.x.size(); ++i)
                state.x[i] = x_before[i] + frac * (state.x[i] - x_before[i]);
        t = tau;

        Vec pre_state = state.x;
        ModeId pre_mode = state.mode;
        state = model.kernel.sample({pre_mode, pre_state}, trigger, basis);
        if (state.mode.index < 0 || state.mode.index >= static_cast<int>(model.modes.size()))
            throw ModelError("jump kernel returned an invalid mode index " +
                             std::to_string(state.mode.index));
        if (++jumps > params.max_jumps)
            throw NumericalError("jump budget exceeded at t=" + std::to_string(t) +
                                 " (Zeno-like behaviour)");
        threshold = -std::log(basis.uniforms().next_open());
        rate_integral = 0.0;

        JumpEvent ev;
        ev.time = t;
        ev.kind = trigger == JumpTrigger::boundary ? JumpKind::forced : JumpKind::spontaneous;
        ev.mode_after = state.mode;
        ev.state_before = pre_state;
        ev.state_after = state.x;
        timeline.events.push_back(std::move(ev));

        while (next_grid < grid.size() && grid[next_grid] <= t) {
            sampled.times.push_back(grid[next_grid]);
            sampled.values.push_back(state.x);
            ++next_grid;
        }
    }

    HybridPath path = merge_paths(timeline, sampled);
    path.catalog = model.catalog();
    return path;
}

// ---------------------------------------------------------------------------
// assumption checks
// ---------------------------------------------------------------------------

namespace {

struct FieldSweep {
    double growth_first = 0.0, growth_last = 0.0;
    double lipschitz_first = 0.0, lipschitz_last = 0.0;
    bool finite = true;
};

FieldSweep sweep_field(const std::function<void(std::span<const double>, std::span<double>)>& f,
                       int in_dim, int out_dim, double base_radius, int samples, SplitStream& rng) {
    FieldSweep sw;
    const double radii[3] = {base_radius, 10 * base_radius, 100 * base_radius};
    Vec x(static_cast<std::size_t>(in_dim)), y(static_cast<std::size_t>(in_dim));
    Vec fx(static_cast<std::size_t>(out_dim)), fy(static_cast<std::size_t>(out_dim));
    for (int s = 0; s < 3; ++s) {
        double growth = 0.0, lip = 0.0;
        for (int it = 0; it < samples; ++it) {
            for (int i = 0; i < in_dim; ++i)
                x[static_cast<std::size_t>(i)] = radii[s] * (2.0 * rng.next_unit() - 1.0);
            double eps = radii[s] * std::pow(10.0, -1.0 - 3.0 * rng.next_unit());
            for (int i = 0; i < in_dim; ++i)
                y[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] + eps * (2.0 * rng.next_unit() - 1.0);
            std::fill(fx.begin(), fx.end(), 0.0);
            std::fill(fy.begin(), fy.end(), 0.0);
            f(x, fx);
            f(y, fy);
            double nx = 0.0, n2 = 0.0, dd = 0.0, df = 0.0;
            for (double v : fx) {
                if (!std::isfinite(v)) sw.finite = false;
                nx += v * v;
            }
            if (!sw.finite) return sw;
            for (int i = 0; i < in_dim; ++i) {
                double d = x[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(i)];
                dd += d * d;
                n2 += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
            }
            for (int i = 0; i < out_dim; ++i) {
                double d = fx[static_cast<std::size_t>(i)] - fy[static_cast<std::size_t>(i)];
                df += d * d;
            }
            growth = std::max(growth, nx / (1.0 + n2));
            if (dd > 0.0) lip = std::max(lip, df / dd);
        }
        if (s == 0) {
            sw.growth_first = growth;
            sw.lipschitz_first = lip;
        }
        if (s == 2) {
            sw.growth_last = growth;
            sw.lipschitz_last = lip;
        }
    }
    return sw;
}

bool diverging(double first, double last) {
    return first > 0.0 ? last > 8.0 * first : last > 1e-9;
}

}  // namespace

CheckReport check_g1_g4(const GshsModel& model, int budget, std::uint64_t seed) {
    CheckReport report;
    SplitStream rng = SplitStream(seed).child(31);
    int per_mode = std::max(10, budget / std::max(1, static_cast<int>(model.modes.size())) / 6);

    // G1: field regularity per mode. Flagged on non-finite output or a
    // Lipschitz ratio that diverges across the radius sweep; growth estimates
    // are reported but linear growth alone is not flagged.
    {
        CheckItem item{"G1", false, ""};
        for (std::size_t m = 0; m < model.modes.size() && !item.flagged; ++m) {
            int dim = model.modes[m].dim;
            if (dim == 0) continue;
            auto drift = [&](std::span<const double> x, std::span<double> out) {
                model.drift(static_cast<int>(m), x, out);
            };
            auto diff = [&](std::span<const double> x, std::span<double> out) {
                model.diffusion(static_cast<int>(m), x, out);
            };
            FieldSweep sd = sweep_field(drift, dim, dim, 1.0, per_mode, rng);
            FieldSweep sg = sweep_field(diff, dim, dim * model.wiener_dim, 1.0, per_mode, rng);
            if (!sd.finite || !sg.finite) {
                item.flagged = true;
                item.detail = "non-finite field output in mode " + std::to_string(m);
            } else if (diverging(sd.lipschitz_first, sd.lipschitz_last) ||
                       diverging(sg.lipschitz_first, sg.lipschitz_last)) {
                item.flagged = true;
                item.detail = "Lipschitz ratio diverges with radius in mode " + std::to_string(m);
            }
        }
        report.items.push_back(std::move(item));
    }

    // G2: jump-rate integrability along short pilot paths with refining steps.
    {
        CheckItem item{"G2", false, ""};
        for (std::size_t m = 0; m < model.modes.size() && !item.flagged; ++m) {
            int dim = model.modes[m].dim;
            Vec x(static_cast<std::size_t>(dim));
            // deterministic probes toward the origin catch integrable-looking
            // rates that blow up on a thin set
            std::vector<Vec> probes;
            probes.push_back(Vec(static_cast<std::size_t>(dim), 0.0));
            for (int axis = 0; axis < dim; ++axis)
                for (int k = 1; k <= 12; ++k) {
                    Vec p(static_cast<std::size_t>(dim), 0.0);
                    p[static_cast<std::size_t>(axis)] = std::pow(10.0, -k);
                    probes.push_back(p);
                }
            for (const Vec& p : probes) {
                double lam = model.lambda.eval(static_cast<int>(m), p);
                if (!std::isfinite(lam) || lam < 0.0 || lam > 1e10) {
                    item.flagged = true;
                    item.detail = "jump rate blows up near the origin in mode " + std::to_string(m);
                    break;
                }
            }
            for (int rep = 0; rep < std::min(per_mode, 200) && !item.flagged; ++rep) {
                for (double& v : x) v = 5.0 * (2.0 * rng.next_unit() - 1.0);
                double lam = model.lambda.eval(static_cast<int>(m), x);
                if (!std::isfinite(lam) || lam < 0.0 || lam > 1e12) {
                    item.flagged = true;
                    item.detail = "jump rate not finite near sampled state in mode " + std::to_string(m);
                    break;
                }
                // rectangle sums of lambda along a frozen-drift proxy path at
                // refining steps
                double prev_sum = -1.0;
                Vec xt = x;
                for (double dt : {1e-2, 1e-3, 1e-4}) {
                    double sum = 0.0;
                    xt = x;
                    Vec f(static_cast<std::size_t>(dim));
                    for (double s = 0.0; s < 0.05; s += dt) {
                        double l = model.lambda.eval(static_cast<int>(m), xt);
                        if (!std::isfinite(l) || l > 1e14) {
                            sum = kInf;
                            break;
                        }
                        sum += l * dt;
                        std::fill(f.begin(), f.end(), 0.0);
                        model.drift(static_cast<int>(m), xt, f);
                        for (int i = 0; i < dim; ++i) xt[static_cast<std::size_t>(i)] += f[static_cast<std::size_t>(i)] * dt;
                    }
                    if (!std::isfinite(sum) || (prev_sum > 1e-12 && sum > 10.0 * prev_sum)) {
                        item.flagged = true;
                        item.detail = "rate integral diverges under step refinement in mode " + std::to_string(m);
                        break;
                    }
                    prev_sum = sum;
                }
            }
        }
        report.items.push_back(std::move(item));
    }

    // G3: kernel validity via sampler statistics.
    {
        CheckItem item{"G3", false, ""};
        RandomBasis kb(seed ^ 0x5bd1e995u);
        int tries = std::min(budget, 2000);
        int bad = 0, total = 0;
        for (int i = 0; i < tries; ++i) {
            RandomBasis rb = kb.replicate(static_cast<std::uint64_t>(i));
            int m = static_cast<int>(rng.next_unit() * static_cast<double>(model.modes.size()));
            if (m >= static_cast<int>(model.modes.size())) m = static_cast<int>(model.modes.size()) - 1;
            const GshsMode& mode = model.modes[static_cast<std::size_t>(m)];
            Vec x(static_cast<std::size_t>(mode.dim));
            for (double& v : x) v = 2.0 * rng.next_unit() - 1.0;
            bool spontaneous_ok = model.lambda.eval(m, x) > 0.0;
            if (!spontaneous_ok && !mode.has_boundary()) continue;
            JumpTrigger trig = spontaneous_ok ? JumpTrigger::spontaneous : JumpTrigger::boundary;
            ++total;
            try {
                HybridState post = model.kernel.sample({{m}, x}, trig, rb);
                bool ok = post.mode.index >= 0 && post.mode.index < static_cast<int>(model.modes.size());
                if (ok)
                    for (double v : post.x)
                        if (!std::isfinite(v)) ok = false;
                if (ok && static_cast<int>(post.x.size()) !=
                              model.modes[static_cast<std::size_t>(post.mode.index)].dim)
                    ok = false;
                if (!ok) ++bad;
            } catch (const std::exception&) {
                ++bad;
            }
        }
        if (bad > 0) {
            item.flagged = true;
            item.detail = std::to_string(bad) + "/" + std::to_string(total) + " kernel samples invalid";
        }
        report.items.push_back(std::move(item));
    }

    // G4: expected jump counts from pilot simulations, flagged when growing
    // superlinearly with the horizon (or on a Zeno abort).
    {
        CheckItem item{"G4", false, ""};
        ExecParams pilot;
        pilot.dt = 0.01;
        pilot.grid_dt = 0.0;
        pilot.max_jumps = 20000;
        RandomBasis pb(seed ^ 0x9e3779b9u);
        double n1 = 0.0, n2 = 0.0;
        int reps = 16;
        try {
            for (int i = 0; i < reps; ++i) {
                pilot.horizon = 1.0;
                RandomBasis b1 = pb.replicate(static_cast<std::uint64_t>(i));
                n1 += static_cast<double>(simulate_gshs(model, pilot, b1).jump_count());
                pilot.horizon = 2.0;
                RandomBasis b2 = pb.replicate(static_cast<std::uint64_t>(i) + 1000);
                n2 += static_cast<double>(simulate_gshs(model, pilot, b2).jump_count());
            }
            n1 /= reps;
            n2 /= reps;
            if (n2 > 2.5 * n1 + 5.0) {
                item.flagged = true;
                item.detail = "jump count grows superlinearly: E[N_1]=" + std::to_string(n1) +
                              ", E[N_2]=" + std::to_string(n2);
            } else {
                item.detail = "E[N_1]=" + std::to_string(n1) + ", E[N_2]=" + std::to_string(n2);
            }
        } catch (const std::exception& e) {
            item.flagged = true;
            item.detail = std::string("pilot aborted: ") + e.what();
        }
        report.items.push_back(std::move(item));
    }

    return report;
}

// ---------------------------------------------------------------------------
// export
// ---------------------------------------------------------------------------

namespace {

nlohmann::json matrix_to_json(const DiscreteKernelMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.symbolic.size(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < m.symbolic[i].size(); ++j) {
            if (m.symbolic[i][j].is_zero()) {
                row.push_back(nullptr);
                continue;
            }
            nlohmann::json entry;
            entry["symbolic"] = m.symbolic[i][j].to_string();
            entry["value"] = m.value[i][j];
            if (!m.exact.empty()) {
                entry["num"] = m.exact[i][j].num();
                entry["den"] = m.exact[i][j].den();
            }
            row.push_back(entry);
        }
        rows.push_back(row);
    }
    nlohmann::json out;
    out["entries"] = rows;
    out["colour_preserving"] = m.colour_preserving;
    return out;
}

}  // namespace

nlohmann::json gshs_to_json(const GshsModel& model) {
    nlohmann::json j;
    j["formalism"] = "gshs";
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(model.source_hash));
    j["source_hash"] = buf;
    j["wiener_dim"] = model.wiener_dim;
    nlohmann::json modes = nlohmann::json::array();
    for (std::size_t m = 0; m < model.modes.size(); ++m) {
        const GshsMode& mode = model.modes[m];
        nlohmann::json mj;
        mj["index"] = m;
        mj["marking"] = mode.tag;
        mj["dim"] = mode.dim;
        if (model.lambda.all_constant) {
            mj["lambda"] = model.lambda.mode_value[m];
            mj["lambda_symbolic"] = model.lambda.mode_symbol[m].to_string();
        }
        nlohmann::json faces = nlohmann::json::array();
        for (const DomainFace& f : mode.faces) faces.push_back(f.guard.text);
        mj["boundary_faces"] = faces;
        modes.push_back(mj);
    }
    j["modes"] = modes;
    if (model.kernel.spontaneous) j["spontaneous"] = matrix_to_json(*model.kernel.spontaneous);
    if (model.kernel.boundary) j["boundary"] = matrix_to_json(*model.kernel.boundary);
    return j;
}

}  // namespace shs
