#ifndef GLDB_UTIL_HPP
#define GLDB_UTIL_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gldb {

// Error codes mirror the CLI exit-code contract: 2 usage, 3 data, 4 internal.
enum class ErrorCode : int {
  Usage = 2,
  Data = 3,
  Internal = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), code_(code), kind_(std::move(kind)) {}

  ErrorCode code() const { return code_; }
  const std::string& kind() const { return kind_; }

 private:
  ErrorCode code_;
  std::string kind_;
};

[[noreturn]] inline void throw_usage(const std::string& kind, const std::string& msg) {
  throw Error(ErrorCode::Usage, kind, msg);
}
[[noreturn]] inline void throw_data(const std::string& kind, const std::string& msg) {
  throw Error(ErrorCode::Data, kind, msg);
}
[[noreturn]] inline void throw_internal(const std::string& kind, const std::string& msg) {
  throw Error(ErrorCode::Internal, kind, msg);
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives a child seed from a master seed and a stream tag so independent
// random streams (init, negatives, injection, ...) never collide.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t s = master ^ (0x6a09e667f3bcc909ULL + stream * 0x9e3779b97f4a7c15ULL);
  splitmix64(s);
  return splitmix64(s);
}

// Deterministic RNG wrapper. All sampling goes through the explicit helpers
// below instead of std distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw_internal("RngError", "uniform_index with n=0");
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Uniform in (0, 1].
  double uniform01() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_ << ' ' << (have_spare_ ? 1 : 0) << ' ';
    os.precision(17);
    os << spare_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    int flag = 0;
    is >> engine_ >> flag >> spare_;
    if (!is) throw_data("CorruptChecksum", "bad rng state string");
    have_spare_ = flag != 0;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

std::string sha256_hex(const void* data, std::size_t len);
inline std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }
std::string sha256_file_hex(const std::string& path);

// Log level from GLDB_LOG_LEVEL in {error, warn, info, debug}; default warn.
enum class LogLevel : int { Error = 0, Warn = 1, Info = 2, Debug = 3 };
LogLevel log_level();
void log_msg(LogLevel lvl, const std::string& msg);

}  // namespace gldb

#endif  // GLDB_UTIL_HPP
