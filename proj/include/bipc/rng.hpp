#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace bipc {

/// Seeded generator with portable draws. The distribution code is ours rather
/// than <random>'s so streams reproduce across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform();
  /// Standard normal (Box-Muller, one draw per call).
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

/// Child seed for a named sub-stream ("data", "init", "split", "probe", ...).
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);

inline Rng stream(std::uint64_t root, std::string_view name) { return Rng(derive_seed(root, name)); }

}  // namespace bipc
