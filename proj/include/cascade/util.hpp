#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cascade {

// Integer micro-dollar amount. All cost accounting is exact in this unit.
class Money {
 public:
  constexpr Money() = default;

  static constexpr Money from_micros(std::int64_t micros) { return Money(micros); }
  // Rounds to the nearest micro-dollar.
  static Money from_dollars(double dollars);

  constexpr std::int64_t micros() const { return micros_; }
  double dollars() const { return static_cast<double>(micros_) / 1e6; }

  // "$0.040000" style, six decimals, exact.
  std::string to_string() const;

  constexpr Money& operator+=(Money o) {
    micros_ += o.micros_;
    return *this;
  }
  friend constexpr Money operator+(Money a, Money b) { return Money(a.micros_ + b.micros_); }
  friend constexpr Money operator-(Money a, Money b) { return Money(a.micros_ - b.micros_); }
  friend constexpr Money operator*(Money a, std::int64_t n) { return Money(a.micros_ * n); }
  friend constexpr auto operator<=>(Money, Money) = default;

 private:
  constexpr explicit Money(std::int64_t micros) : micros_(micros) {}
  std::int64_t micros_ = 0;
};

// SplitMix64 finalizer; used for keyed, counter-based pseudo-randomness.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) { return mix64(h ^ mix64(v)); }

std::uint64_t hash_string(std::string_view s, std::uint64_t seed = 0);

// Uniform double in [0, 1) from a 64-bit hash.
constexpr double to_unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

std::string hex64(std::uint64_t v);

// Lowercase hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view bytes);
// Throws std::invalid_argument on malformed input.
std::string base64_decode(std::string_view text);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// Shortest round-trip decimal rendering of a double.
std::string format_double(double v);
// Fixed number of decimals.
std::string format_fixed(double v, int decimals);

void log_info(std::string_view msg);
void log_warning(std::string_view msg);

}  // namespace cascade
