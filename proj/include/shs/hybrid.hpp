#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace shs {

using Vec = std::vector<double>;

class AssemblyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Index into a ModeCatalog.
struct ModeId {
    int index = -1;
    friend bool operator==(const ModeId&, const ModeId&) = default;
};

// Discrete-mode dictionary. Every mode carries a tag vector: the originating
// marking count vector for net-derived models, {i} for directly built
// automata. Tags are the cross-backend identity used by comparisons.
class ModeCatalog {
public:
    int size() const { return static_cast<int>(tags_.size()); }
    const std::vector<int>& tag(int index) const { return tags_.at(static_cast<std::size_t>(index)); }
    const std::vector<std::vector<int>>& tags() const { return tags_; }

    int find(const std::vector<int>& tag) const {
        auto it = index_.find(tag);
        return it == index_.end() ? -1 : it->second;
    }
    ModeId intern(const std::vector<int>& tag) {
        int i = find(tag);
        if (i >= 0) return {i};
        i = size();
        index_[tag] = i;
        tags_.push_back(tag);
        return {i};
    }

private:
    std::vector<std::vector<int>> tags_;
    std::map<std::vector<int>, int> index_;
};

enum class JumpKind { init, spontaneous, forced, immediate };

struct HybridState {
    ModeId mode;
    Vec x;
};

// One stopping time of an execution: the state right before it and the
// post-jump (post-immediate-closure) state that holds from `time` on.
struct JumpEvent {
    double time = 0.0;
    ModeId mode_after;
    JumpKind kind = JumpKind::init;
    Vec state_before;
    Vec state_after;
};

struct ModeTimeline {
    double horizon = 0.0;
    std::vector<JumpEvent> events;  // first event at time 0 describes initiation
};

struct SampledContinuous {
    std::vector<double> times;  // strictly increasing, starting at 0
    std::vector<Vec> values;    // state at each grid time (right-continuous)
};

// Piecewise trajectory of a stochastic hybrid process. Right-continuous with
// left limits: the value AT a jump time is the post-jump state, the stored
// left limit is the pre-jump state. Also carries samples on a fixed output
// grid for ensemble statistics.
struct HybridPath {
    double horizon = 0.0;
    ModeCatalog catalog;

    std::vector<double> jump_times;      // tau_0 = 0 first, strictly increasing
    std::vector<JumpKind> jump_kinds;    // aligned with jump_times
    std::vector<ModeId> segment_modes;   // mode on [tau_k, tau_{k+1})
    std::vector<Vec> segment_starts;     // state at tau_k (post-jump)
    std::vector<Vec> left_limits;        // left_limits[k-1] = state at tau_k-

    std::vector<double> grid_times;
    std::vector<ModeId> grid_modes;
    std::vector<Vec> grid_states;

    int jump_count() const { return static_cast<int>(jump_times.size()) - 1; }
    const Vec& value_at_jump(int k) const { return segment_starts.at(static_cast<std::size_t>(k)); }
    const Vec& left_limit_at_jump(int k) const { return left_limits.at(static_cast<std::size_t>(k) - 1); }
};

// Zips the discrete mode part with the sampled continuous part into one
// cadlag path. Events sharing one stopping time (immediate closure) collapse
// into a single recorded jump whose state is the post-closure state.
HybridPath merge_paths(const ModeTimeline& discrete, const SampledContinuous& continuous);

// Structural cadlag checks; returns human-readable problems, empty if clean.
std::vector<std::string> check_cadlag(const HybridPath& path);

// Grid rows as CSV: t, mode, x_1..x_n, jump_flag. jump_flag marks grid
// intervals (t_{i-1}, t_i] containing at least one jump.
void write_path_csv(std::ostream& out, const HybridPath& path);

}  // namespace shs
