#pragma once

#include <cstdint>
#include <random>

namespace plume {

/// splitmix64 step, used to derive well-separated seeds from (master, stream)
/// pairs. Consecutive stream ids land in unrelated regions of seed space.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x51ED270B6C2AB1E3ull));
}

/// Deterministic random substream. Every concurrent consumer (particle,
/// truth generator, resampler, Monte Carlo run) owns its own stream so
/// results are independent of scheduling and worker count: a stream's draw
/// sequence depends only on (master seed, stream id, draws so far).
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t master, std::uint64_t stream)
      : engine_(derive_seed(master, stream)), master_(master), stream_(stream) {}

  double normal(double mean, double stddev) {
    if (stddev <= 0.0) return mean;
    std::normal_distribution<double> dist(mean, stddev);
    return dist(engine_);
  }

  /// Uniform draw in [0, 1).
  double uniform01() {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    return dist(engine_);
  }

  std::uint64_t uniform_u64() { return engine_(); }

  std::uint64_t stream_id() const { return stream_; }
  std::uint64_t master_seed() const { return master_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t master_;
  std::uint64_t stream_;
};

// Reserved stream ids; ordinary particle streams count up from zero.
constexpr std::uint64_t kResampleStream = 0xFFFFFFFF00000001ull;
constexpr std::uint64_t kTruthWindStream = 0xFFFFFFFF00000002ull;
constexpr std::uint64_t kObservationNoiseStream = 0xFFFFFFFF00000003ull;

}  // namespace plume
