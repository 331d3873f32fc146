#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hifi {

// User-facing failures (bad config, unusable inputs). CLI maps these to exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};
// Scene placement could not satisfy its constraints within the retry budget.
struct GenError : std::runtime_error {
  explicit GenError(const std::string& msg) : std::runtime_error(msg) {}
};
// Internal failures (inconsistent shapes, non-finite values). CLI maps these to exit 2.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DiagnosticError : std::runtime_error {
  explicit DiagnosticError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Deterministic PRNG. All draws go through explicit transforms of the
/// mt19937_64 stream so a fixed seed gives the same sequence on every
/// platform, independent of libstdc++'s distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(uniform() * static_cast<double>(hi - lo + 1));
  }

  /// log-uniform on [lo, hi], lo > 0.
  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  /// Standard normal via Box-Muller. Caches the second value.
  double normal();

  bool coin() { return (gen_() & 1u) != 0; }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent stream seed from (base, index) with splitmix64.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Runs fn(i) for i in [0, n) across `workers` threads. fn must be safe to
/// call concurrently for distinct i. workers <= 1 runs inline.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Worker count from HIFIYOLO_WORKERS, defaulting to hardware concurrency.
int default_workers();

// --- key=value config files ---------------------------------------------

using KvMap = std::map<std::string, std::string>;

/// Parses `key=value` lines; '#' starts a comment, blank lines are skipped.
KvMap parse_kv_text(const std::string& text);
KvMap load_kv_file(const std::string& path);
std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

// --- little-endian binary IO ----------------------------------------------

void write_u32le(std::vector<std::uint8_t>& out, std::uint32_t v);
std::uint32_t read_u32le(const std::uint8_t* p);
void write_f32le(std::vector<std::uint8_t>& out, float v);
float read_f32le(const std::uint8_t* p);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::string read_file_text(const std::string& path);
void write_file_text(const std::string& path, const std::string& text);

}  // namespace hifi
