#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dispatch {

/// Emergency service categories. The integer codes are part of every file
/// format (facility and incident GeoJSON, CSV reports).
enum class Category : int { Healthcare = 0, FireDisaster = 1, Security = 2, Transport = 3 };

inline constexpr int kNumCategories = 4;
inline constexpr std::array<Category, kNumCategories> kAllCategories = {
    Category::Healthcare, Category::FireDisaster, Category::Security, Category::Transport};

std::string_view category_name(Category c);

/// Accepts an integer code "0".."3" or a name ("healthcare", "fire", "security", ...).
std::optional<Category> parse_category(std::string_view token);

/// Throws InputError when `code` is outside 0..3.
Category category_from_code(long long code);

inline int category_index(Category c) { return static_cast<int>(c); }

/// Malformed or inconsistent user input (files, config, flags).
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A contract violation inside the engine (e.g. a masked action was chosen).
class ContractError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Numerical failure during training or gradient evaluation.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Counter-based SplitMix64 generator. The i-th output depends only on
/// (seed, i), so streams are reproducible across platforms and standard
/// library implementations. Distributions are implemented here for the
/// same reason: std:: distributions are implementation-defined.
class Rng {
public:
  static constexpr std::string_view kName = "splitmix64-counter";

  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  /// Derive an independent stream seed from a base seed and a label.
  static std::uint64_t derive(std::uint64_t base, std::uint64_t stream);

private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates shuffle driven by Rng (std::shuffle is not portable).
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = rng.below(i);
    std::iter_swap(first + (i - 1), first + j);
  }
}

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
/// SHA-256 of a file's contents; throws InputError if unreadable.
std::string sha256_file(const std::string& path);

/// Whole-file helpers; both throw InputError naming the path.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view contents);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);
/// Whole-string finite decimal parse; nullopt on any trailing text.
std::optional<double> parse_double(std::string_view s);

}  // namespace dispatch
