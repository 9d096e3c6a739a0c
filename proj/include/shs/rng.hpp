#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

namespace shs {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Splittable counter-style PRNG (splitmix64 core with per-stream gamma, after
// the SplittableRandom construction). Children are derived from the parent's
// identity and a key, never from its consumption state, so the stream tree is
// reproducible no matter in which order streams are first touched.
class SplitStream {
public:
    SplitStream() : SplitStream(0x9e3779b97f4a7c15ull) {}
    explicit SplitStream(std::uint64_t key);

    SplitStream child(std::uint64_t tag, std::uint64_t a = 0, std::uint64_t b = 0) const;

    std::uint64_t next_u64();
    double next_unit();   // uniform on [0,1)
    double next_open();   // uniform on (0,1)
    double next_normal(); // standard normal, Box-Muller pair cached
    // Exponential with given rate; rate 0 yields +infinity (the survivor
    // function never triggers).
    double next_exponential(double rate);

private:
    std::uint64_t identity_;
    std::uint64_t state_;
    std::uint64_t gamma_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

// Identifies a named substream of a RandomBasis.
struct StreamId {
    enum class Kind { uniform, place_token, mode, poisson };
    Kind kind = Kind::uniform;
    int a = 0;
    int b = 0;

    static StreamId uniform() { return {Kind::uniform, 0, 0}; }
    static StreamId place_token(int place, int slot) { return {Kind::place_token, place, slot}; }
    static StreamId mode(int mode) { return {Kind::mode, mode, 0}; }
    static StreamId poisson() { return {Kind::poisson, 0, 0}; }
};

// Randomness basis for one trajectory: the uniform sequence {U_i}, one
// Brownian-increment stream per (place, token-slot) and per mode, and a
// Poisson-point stream with marks. replicate(r) derives the independent basis
// for replication r of an ensemble.
class RandomBasis {
public:
    explicit RandomBasis(std::uint64_t master_seed);

    std::uint64_t master_seed() const { return master_seed_; }
    RandomBasis replicate(std::uint64_t replication) const;
    RandomBasis branch(std::uint64_t tag) const;  // e.g. per-backend separation

    SplitStream& uniforms() { return uniforms_; }
    SplitStream& poisson() { return poisson_; }
    SplitStream& brownian(int place, int slot);
    SplitStream& mode_brownian(int mode);
    SplitStream& stream(StreamId id);

private:
    RandomBasis() = default;

    std::uint64_t master_seed_ = 0;
    SplitStream root_;
    SplitStream uniforms_;
    SplitStream poisson_;
    std::map<std::pair<int, int>, SplitStream> place_streams_;
    std::map<int, SplitStream> mode_streams_;
};

// dim independent N(0, dt) draws from the named Brownian substream.
std::vector<double> brownian_increment(RandomBasis& basis, StreamId stream, double dt, int dim);

}  // namespace shs
