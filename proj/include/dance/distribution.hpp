#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dance/complexity.hpp"
#include "dance/error.hpp"

namespace dance {

struct MaxwellFit {
  double scale_a = 0.0;
  std::size_t n_samples = 0;
  double ks_stat = 0.0;  // informational only
};

// Maxwell-Boltzmann CDF F(x; a) = erf(x / (sqrt(2) a)) - sqrt(2/pi) (x/a) exp(-x^2 / (2 a^2)).
inline double maxwell_cdf(double x, double a) {
  if (!(a > 0.0)) throw DomainError("maxwell_cdf: scale must be positive");
  if (!(x >= 0.0)) throw DomainError("maxwell_cdf: x must be non-negative");
  const double t = x / a;
  const double f = std::erf(t / std::numbers::sqrt2) -
                   std::sqrt(2.0 / std::numbers::pi) * t * std::exp(-0.5 * t * t);
  return std::clamp(f, 0.0, 1.0);
}

inline double maxwell_pdf(double x, double a) {
  if (!(a > 0.0)) throw DomainError("maxwell_pdf: scale must be positive");
  if (!(x >= 0.0)) throw DomainError("maxwell_pdf: x must be non-negative");
  return std::sqrt(2.0 / std::numbers::pi) * x * x * std::exp(-x * x / (2.0 * a * a)) / (a * a * a);
}

// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and `cdf`.
template <typename Cdf>
double ks_distance(std::vector<double> samples, Cdf&& cdf) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return std::clamp(d, 0.0, 1.0);
}

// Closed-form maximum-likelihood fit: a = sqrt(sum x^2 / (3n)).
inline MaxwellFit fit_maxwell(std::span<const double> samples) {
  if (samples.size() < 2) throw FitError("fit_maxwell: need at least 2 samples");
  double sum_sq = 0.0;
  for (double x : samples) {
    if (!(x > 0.0) || !std::isfinite(x)) throw FitError("fit_maxwell: samples must be positive and finite");
    sum_sq += x * x;
  }
  MaxwellFit fit;
  fit.n_samples = samples.size();
  fit.scale_a = std::sqrt(sum_sq / (3.0 * static_cast<double>(samples.size())));
  const double a = fit.scale_a;
  fit.ks_stat = ks_distance(std::vector<double>(samples.begin(), samples.end()),
                            [a](double x) { return maxwell_cdf(x, a); });
  return fit;
}

struct ComplexityEntry {
  std::string image_id;
  std::string split;
  double sc_mean = 0.0;
  double p = 0.0;
};

// Per-image complexity scores plus the training-split fit they were mapped through.
class ComplexityIndex {
 public:
  ComplexityIndex() = default;
  ComplexityIndex(std::vector<ComplexityEntry> entries, std::optional<MaxwellFit> fit)
      : entries_(std::move(entries)), fit_(fit) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!by_id_.emplace(entries_[i].image_id, i).second)
        throw InvalidInputError("duplicate image id in index: " + entries_[i].image_id);
    }
  }

  const std::vector<ComplexityEntry>& entries() const { return entries_; }
  bool fitted() const { return fit_.has_value(); }
  const MaxwellFit& fit() const {
    if (!fit_) throw StateError("complexity index has no fitted distribution");
    return *fit_;
  }

  const ComplexityEntry& at(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw InvalidInputError("image id not in index: " + id);
    return entries_[it->second];
  }
  bool contains(const std::string& id) const { return by_id_.count(id) != 0; }
  double p(const std::string& id) const { return at(id).p; }

 private:
  std::vector<ComplexityEntry> entries_;
  std::optional<MaxwellFit> fit_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

inline double complexity_to_p(double sc_mean, const MaxwellFit& fit) {
  return maxwell_cdf(sc_mean, fit.scale_a);
}

inline double complexity_to_p(const SpatialComplexity& sc, const ComplexityIndex& index) {
  return complexity_to_p(sc.sc_mean, index.fit());
}

struct ScoredImage {
  std::string image_id;
  std::string split;  // "train", "val" or "test"
  double sc_mean = 0.0;
};

// Fits on the training split and maps every split through that one fit.
// Spatially constant training images (sc_mean == 0) carry no scale information
// and are left out of the fit; they map to p = 0.
inline ComplexityIndex build_index(std::span<const ScoredImage> scored) {
  if (scored.empty()) throw InvalidInputError("build_index: empty corpus");
  std::vector<double> train;
  bool any_train = false;
  for (const auto& s : scored) {
    if (s.split != "train") continue;
    any_train = true;
    if (s.sc_mean > 0.0) train.push_back(s.sc_mean);
  }
  if (!any_train) throw InvalidInputError("build_index: empty training split");
  if (train.size() < 2)
    throw FitError("build_index: fewer than 2 training images with positive complexity");
  const MaxwellFit fit = fit_maxwell(train);
  std::vector<ComplexityEntry> entries;
  entries.reserve(scored.size());
  for (const auto& s : scored)
    entries.push_back({s.image_id, s.split, s.sc_mean, complexity_to_p(s.sc_mean, fit)});
  return ComplexityIndex(std::move(entries), fit);
}

}  // namespace dance
