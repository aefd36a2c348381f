#include "frogsim/offspring.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "frogsim/error.hpp"

namespace frogsim {
namespace {

std::vector<std::pair<std::uint32_t, double>> normalize_support(const OffspringDistribution::Variant& v) {
  std::map<std::uint32_t, double> mass;
  std::visit(
      [&](const auto& law) {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, OffspringDistribution::Constant>) {
          mass[law.d] = 1.0;
        } else if constexpr (std::is_same_v<T, OffspringDistribution::TwoPoint>) {
          if (!(law.q >= 0.0 && law.q <= 1.0)) throw PreconditionError("two-point law: q must lie in [0, 1]");
          mass[law.a] += 1.0 - law.q;
          mass[law.b] += law.q;
        } else if constexpr (std::is_same_v<T, OffspringDistribution::ExplicitPmf>) {
          for (const auto& [k, w] : law.weights) {
            if (!(w >= 0.0)) throw PreconditionError("explicit pmf: negative weight");
            mass[k] += w;
          }
        } else {
          if (law.d < 3) throw PreconditionError("corollary law requires d >= 3");
          const double p = 1.0 / std::pow(static_cast<double>(law.d), 5);
          mass[2] += 1.0 - p;
          mass[law.d] += p;
        }
      },
      v);

  double total = 0.0;
  for (const auto& [k, w] : mass) total += w;
  if (std::abs(total - 1.0) > 1e-12)
    throw PreconditionError("offspring pmf sums to " + std::to_string(total) + ", expected 1");

  std::vector<std::pair<std::uint32_t, double>> out;
  for (const auto& [k, w] : mass) {
    if (w == 0.0) continue;
    if (k < 2) throw PreconditionError("offspring law puts mass on " + std::to_string(k) + " < 2 children");
    if (k > OffspringDistribution::kMaxSupport)
      throw PreconditionError("offspring support exceeds " + std::to_string(OffspringDistribution::kMaxSupport));
    out.emplace_back(k, w);
  }
  if (out.empty()) throw PreconditionError("offspring law has no mass");
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  const auto last = s.find_last_not_of(" \t");
  return first == std::string::npos ? std::string{} : s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(trim(item));
  return parts;
}

}  // namespace

OffspringDistribution::OffspringDistribution(Variant v) : variant_(std::move(v)), support_(normalize_support(variant_)) {
  double acc = 0.0;
  for (const auto& [k, w] : support_) {
    acc += w;
    cumulative_.push_back(acc);
  }
}

double OffspringDistribution::mean() const noexcept {
  double m = 0.0;
  for (const auto& [k, w] : support_) m += k * w;
  return m;
}

double OffspringDistribution::tail(std::uint32_t n) const noexcept {
  double t = 0.0;
  for (const auto& [k, w] : support_)
    if (k >= n) t += w;
  return t;
}

OffspringDistribution OffspringDistribution::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw PreconditionError("offspring law '" + text + "': expected <kind>:<params>");
  const std::string kind = trim(text.substr(0, colon));
  const std::string params = text.substr(colon + 1);
  try {
    if (kind == "const" || kind == "constant") return constant(static_cast<std::uint32_t>(std::stoul(params)));
    if (kind == "corollary") return corollary_law(static_cast<std::uint32_t>(std::stoul(params)));
    if (kind == "twopoint") {
      const auto p = split(params, ',');
      if (p.size() != 3) throw PreconditionError("twopoint expects a,b,q");
      return two_point(static_cast<std::uint32_t>(std::stoul(p[0])), static_cast<std::uint32_t>(std::stoul(p[1])),
                       std::stod(p[2]));
    }
    if (kind == "pmf") {
      std::vector<std::pair<std::uint32_t, double>> w;
      for (const auto& item : split(params, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw PreconditionError("pmf entries are k=weight");
        w.emplace_back(static_cast<std::uint32_t>(std::stoul(item.substr(0, eq))), std::stod(item.substr(eq + 1)));
      }
      return pmf(std::move(w));
    }
  } catch (const std::logic_error&) {
    throw PreconditionError("offspring law '" + text + "': malformed number");
  }
  throw PreconditionError("unknown offspring law kind '" + kind + "'");
}

std::string OffspringDistribution::describe() const {
  std::ostringstream os;
  os.precision(17);
  std::visit(
      [&](const auto& law) {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, Constant>) {
          os << "const:" << law.d;
        } else if constexpr (std::is_same_v<T, TwoPoint>) {
          os << "twopoint:" << law.a << ',' << law.b << ',' << law.q;
        } else if constexpr (std::is_same_v<T, ExplicitPmf>) {
          os << "pmf:";
          for (std::size_t i = 0; i < law.weights.size(); ++i)
            os << (i ? "," : "") << law.weights[i].first << '=' << law.weights[i].second;
        } else {
          os << "corollary:" << law.d;
        }
      },
      variant_);
  return os.str();
}

}  // namespace frogsim
