#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "frogsim/rng.hpp"

namespace frogsim {

/// Child-count law for Galton-Watson trees. Every law puts all of its mass on
/// integers >= 2 with bounded support; construction rejects anything else.
class OffspringDistribution {
 public:
  struct Constant {
    std::uint32_t d;
  };
  /// `a` with probability 1 - q, `b` with probability q.
  struct TwoPoint {
    std::uint32_t a;
    std::uint32_t b;
    double q;
  };
  struct ExplicitPmf {
    std::vector<std::pair<std::uint32_t, double>> weights;
  };
  /// 2 + (d - 2) * Bernoulli(1 / d^5).
  struct CorollaryLaw {
    std::uint32_t d;
  };
  using Variant = std::variant<Constant, TwoPoint, ExplicitPmf, CorollaryLaw>;

  static constexpr std::uint32_t kMaxSupport = 1u << 16;

  explicit OffspringDistribution(Variant v);

  static OffspringDistribution constant(std::uint32_t d) { return OffspringDistribution(Constant{d}); }
  static OffspringDistribution two_point(std::uint32_t a, std::uint32_t b, double q) {
    return OffspringDistribution(TwoPoint{a, b, q});
  }
  static OffspringDistribution pmf(std::vector<std::pair<std::uint32_t, double>> w) {
    return OffspringDistribution(ExplicitPmf{std::move(w)});
  }
  static OffspringDistribution corollary_law(std::uint32_t d) {
    return OffspringDistribution(CorollaryLaw{d});
  }

  /// Parses "const:3", "twopoint:2,3,0.5", "pmf:2=0.9,8=0.1", "corollary:4".
  static OffspringDistribution parse(const std::string& text);
  std::string describe() const;

  const Variant& variant() const noexcept { return variant_; }
  /// Support points in increasing order with their probabilities.
  const std::vector<std::pair<std::uint32_t, double>>& support() const noexcept { return support_; }
  std::uint32_t min_value() const noexcept { return support_.front().first; }
  std::uint32_t max_value() const noexcept { return support_.back().first; }
  double mean() const noexcept;
  /// P(Z >= n).
  double tail(std::uint32_t n) const noexcept;

  /// Draws one child count from a single uniform variate of `gen`.
  template <class Gen>
  std::uint32_t sample(Gen& gen) const {
    if (support_.size() == 1) {
      (void)gen();
      return support_.front().first;
    }
    const double u = uniform01(gen);
    for (std::size_t i = 0; i + 1 < cumulative_.size(); ++i)
      if (u < cumulative_[i]) return support_[i].first;
    return support_.back().first;
  }

 private:
  Variant variant_;
  std::vector<std::pair<std::uint32_t, double>> support_;
  std::vector<double> cumulative_;
};

/// Free-function form of OffspringDistribution::sample.
template <class Gen>
std::uint32_t sample_offspring(const OffspringDistribution& dist, Gen& gen) {
  return dist.sample(gen);
}

}  // namespace frogsim
