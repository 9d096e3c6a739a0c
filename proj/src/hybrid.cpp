#include "shs/hybrid.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace shs {

HybridPath merge_paths(const ModeTimeline& discrete, const SampledContinuous& continuous) {
    if (discrete.events.empty()) throw AssemblyError("mode timeline has no events");
    if (discrete.events.front().time != 0.0) throw AssemblyError("mode timeline must start at t=0");
    if (continuous.times.size() != continuous.values.size())
        throw AssemblyError("sampled grid times/values misaligned");
    if (continuous.times.empty() || continuous.times.front() != 0.0)
        throw AssemblyError("sampled grid must start at t=0");
    for (std::size_t i = 1; i < continuous.times.size(); ++i)
        if (!(continuous.times[i] > continuous.times[i - 1]))
            throw AssemblyError("sampled grid times must be strictly increasing");
    if (continuous.times.back() > discrete.horizon)
        throw AssemblyError("sampled grid extends past the mode timeline horizon");

    HybridPath path;
    path.horizon = discrete.horizon;

    for (const JumpEvent& ev : discrete.events) {
        if (!path.jump_times.empty() && ev.time < path.jump_times.back())
            throw AssemblyError("mode timeline events out of order");
        if (!path.jump_times.empty() && ev.time == path.jump_times.back()) {
            // Same stopping time: keep the earliest pre-state and the final
            // post-closure state.
            path.segment_modes.back() = ev.mode_after;
            path.segment_starts.back() = ev.state_after;
            continue;
        }
        path.jump_times.push_back(ev.time);
        path.jump_kinds.push_back(ev.kind);
        path.segment_modes.push_back(ev.mode_after);
        path.segment_starts.push_back(ev.state_after);
        if (path.jump_times.size() > 1) path.left_limits.push_back(ev.state_before);
    }

    path.grid_times = continuous.times;
    path.grid_states = continuous.values;
    path.grid_modes.reserve(path.grid_times.size());
    std::size_t seg = 0;
    for (double t : path.grid_times) {
        while (seg + 1 < path.jump_times.size() && path.jump_times[seg + 1] <= t) ++seg;
        path.grid_modes.push_back(path.segment_modes[seg]);
    }
    return path;
}

std::vector<std::string> check_cadlag(const HybridPath& path) {
    std::vector<std::string> problems;
    auto complain = [&problems](const std::string& s) { problems.push_back(s); };

    if (path.jump_times.empty()) {
        complain("path has no segments");
        return problems;
    }
    if (path.jump_times.front() != 0.0) complain("tau_0 != 0");
    for (std::size_t k = 1; k < path.jump_times.size(); ++k)
        if (!(path.jump_times[k] > path.jump_times[k - 1]))
            complain("jump times not strictly increasing at index " + std::to_string(k));
    if (path.jump_kinds.size() != path.jump_times.size()) complain("jump kind per jump time missing");
    if (path.segment_modes.size() != path.jump_times.size()) complain("segment mode per jump time missing");
    if (path.segment_starts.size() != path.jump_times.size()) complain("segment start state per jump time missing");
    if (path.left_limits.size() + 1 != path.jump_times.size()) complain("left limit per jump (k>=1) missing");

    for (const Vec& v : path.segment_starts)
        for (double x : v)
            if (!std::isfinite(x)) complain("non-finite segment start state");

    // Right-continuity on the grid: a grid time falling inside segment k must
    // carry that segment's mode.
    std::size_t seg = 0;
    for (std::size_t i = 0; i < path.grid_times.size(); ++i) {
        while (seg + 1 < path.jump_times.size() && path.jump_times[seg + 1] <= path.grid_times[i]) ++seg;
        if (i < path.grid_modes.size() && !(path.grid_modes[i] == path.segment_modes[seg]))
            complain("grid mode at t=" + std::to_string(path.grid_times[i]) + " is not right-continuous");
    }
    return problems;
}

void write_path_csv(std::ostream& out, const HybridPath& path) {
    std::size_t dim = path.grid_states.empty() ? 0 : path.grid_states.front().size();
    out << "t,mode";
    for (std::size_t j = 0; j < dim; ++j) out << ",x_" << (j + 1);
    out << ",jump_flag\n";
    char buf[32];
    double prev_t = 0.0;
    for (std::size_t i = 0; i < path.grid_times.size(); ++i) {
        double t = path.grid_times[i];
        int flag = 0;
        for (std::size_t k = 1; k < path.jump_times.size(); ++k)
            if (path.jump_times[k] > prev_t && path.jump_times[k] <= t && i > 0) { flag = 1; break; }
        std::snprintf(buf, sizeof buf, "%.17g", t);
        out << buf << "," << path.grid_modes[i].index;
        const Vec& x = path.grid_states[i];
        for (std::size_t j = 0; j < dim; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", j < x.size() ? x[j] : 0.0);
            out << "," << buf;
        }
        out << "," << flag << "\n";
        prev_t = t;
    }
}

}  // namespace shs
