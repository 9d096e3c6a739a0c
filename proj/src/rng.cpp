#include "shs/rng.hpp"

#include <bit>
#include <cmath>
#include <limits>

namespace shs {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

// Stafford "mix13" variant of the splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Odd gamma with enough bit transitions, per the SplittableRandom recipe.
std::uint64_t mix_gamma(std::uint64_t z) {
    z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdull;
    z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ull;
    z = (z ^ (z >> 33)) | 1ull;
    if (std::popcount(z ^ (z >> 1)) < 24) z ^= 0xaaaaaaaaaaaaaaaaull;
    return z;
}

}  // namespace

SplitStream::SplitStream(std::uint64_t key)
    : identity_(mix64(key + kGolden)),
      state_(mix64(identity_ + kGolden)),
      gamma_(mix_gamma(identity_ + 2 * kGolden)) {}

SplitStream SplitStream::child(std::uint64_t tag, std::uint64_t a, std::uint64_t b) const {
    std::uint64_t h = identity_;
    h = mix64(h ^ mix64(tag + kGolden));
    h = mix64(h ^ mix64(a + 0xbf58476d1ce4e5b9ull));
    h = mix64(h ^ mix64(b + 0x94d049bb133111ebull));
    SplitStream s;
    s.identity_ = h;
    s.state_ = mix64(h + kGolden);
    s.gamma_ = mix_gamma(h + 2 * kGolden);
    s.has_cached_normal_ = false;
    return s;
}

std::uint64_t SplitStream::next_u64() {
    state_ += gamma_;
    return mix64(state_);
}

double SplitStream::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SplitStream::next_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double SplitStream::next_normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = next_open();
    double u2 = next_unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    cached_normal_ = r * std::sin(a);
    has_cached_normal_ = true;
    return r * std::cos(a);
}

double SplitStream::next_exponential(double rate) {
    if (rate < 0.0) throw ConfigError("negative exponential rate");
    if (rate == 0.0) return std::numeric_limits<double>::infinity();
    return -std::log(next_open()) / rate;
}

RandomBasis::RandomBasis(std::uint64_t master_seed)
    : master_seed_(master_seed),
      root_(master_seed),
      uniforms_(root_.child(1)),
      poisson_(root_.child(2)) {}

RandomBasis RandomBasis::replicate(std::uint64_t replication) const {
    RandomBasis b;
    b.master_seed_ = master_seed_;
    b.root_ = root_.child(3, replication);
    b.uniforms_ = b.root_.child(1);
    b.poisson_ = b.root_.child(2);
    return b;
}

RandomBasis RandomBasis::branch(std::uint64_t tag) const {
    RandomBasis b;
    b.master_seed_ = master_seed_;
    b.root_ = root_.child(4, tag);
    b.uniforms_ = b.root_.child(1);
    b.poisson_ = b.root_.child(2);
    return b;
}

SplitStream& RandomBasis::brownian(int place, int slot) {
    auto key = std::make_pair(place, slot);
    auto it = place_streams_.find(key);
    if (it == place_streams_.end())
        it = place_streams_.emplace(key, root_.child(5, static_cast<std::uint64_t>(place), static_cast<std::uint64_t>(slot))).first;
    return it->second;
}

SplitStream& RandomBasis::mode_brownian(int mode) {
    auto it = mode_streams_.find(mode);
    if (it == mode_streams_.end())
        it = mode_streams_.emplace(mode, root_.child(6, static_cast<std::uint64_t>(mode))).first;
    return it->second;
}

SplitStream& RandomBasis::stream(StreamId id) {
    switch (id.kind) {
        case StreamId::Kind::uniform: return uniforms_;
        case StreamId::Kind::poisson: return poisson_;
        case StreamId::Kind::place_token: return brownian(id.a, id.b);
        case StreamId::Kind::mode: return mode_brownian(id.a);
    }
    throw ConfigError("unknown stream id");
}

std::vector<double> brownian_increment(RandomBasis& basis, StreamId stream, double dt, int dim) {
    if (stream.kind != StreamId::Kind::place_token && stream.kind != StreamId::Kind::mode)
        throw ConfigError("stream id does not name a Brownian substream");
    if (!(dt > 0.0)) throw ConfigError("brownian_increment needs dt > 0");
    if (dim < 1) throw ConfigError("brownian_increment needs dim >= 1");
    SplitStream& s = basis.stream(stream);
    double sd = std::sqrt(dt);
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (auto& v : out) v = sd * s.next_normal();
    return out;
}

}  // namespace shs
