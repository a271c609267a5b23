#pragma once

// Helpers shared by unit tests and the acceptance binary.

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <numeric>
#include <vector>

#include "swarmtrack/core.hpp"
#include "swarmtrack/encoding.hpp"
#include "swarmtrack/valuenet.hpp"

namespace swarmtrack::testing {

inline encoding::TargetFeature random_feature(SeededStream& s) {
  encoding::TargetFeature f;
  f.r = s.uniform(0.0, 30.0);
  f.theta = s.uniform(-kPi, kPi);
  f.r_dot = s.uniform(-3.0, 3.0);
  f.theta_dot = s.uniform(-1.0, 1.0);
  f.logdet_cov = s.uniform(-12.0, 12.0);
  f.observed = s.uniform() < 0.5 ? 1.0 : 0.0;
  return f;
}

inline encoding::FeatureSet random_set(SeededStream& s, int size) {
  encoding::FeatureSet fs;
  for (int i = 0; i < size; ++i) {
    fs.features.push_back(random_feature(s));
    fs.target_ids.push_back(i);
  }
  return fs;
}

inline encoding::FeatureSet permuted(const encoding::FeatureSet& fs, SeededStream& s) {
  encoding::FeatureSet out = fs;
  for (std::size_t i = out.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(s.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(out.features[i - 1], out.features[j]);
    std::swap(out.target_ids[i - 1], out.target_ids[j]);
  }
  return out;
}

// Full sort by (range, id), truncate, then restore set order.
inline encoding::FeatureSet brute_force_mask(const encoding::FeatureSet& fs, int k) {
  std::vector<std::size_t> idx(fs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (fs.features[a].r != fs.features[b].r) return fs.features[a].r < fs.features[b].r;
    return fs.target_ids[a] < fs.target_ids[b];
  });
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(k)));
  std::sort(idx.begin(), idx.end());
  encoding::FeatureSet out;
  for (auto i : idx) {
    out.features.push_back(fs.features[i]);
    out.target_ids.push_back(fs.target_ids[i]);
  }
  return out;
}

/// Smallest |pre-activation| anywhere in the dense layers; finite differences
/// across a rectifier kink are meaningless, so checks skip inputs near one.
template <typename T>
T min_abs_preactivation(const encoding::FeatureSet& fs, const valuenet::NetParams<T>& p) {
  valuenet::ForwardCache<T> cache;
  valuenet::forward_batch(p, valuenet::make_batch<T>(fs), &cache);
  return std::min(cache.enc_pre.cwiseAbs().minCoeff(), cache.dec_pre.cwiseAbs().minCoeff());
}

struct GradCheckResult {
  double max_rel_error{0.0};
  double max_abs_error{0.0};
  std::size_t checked{0};
};

/// Central differences of L = dq . Q(fs) against backward(), every parameter.
/// Relative error is |a - n| / max(|a|, |n|, floor). With `richardson` the
/// differences at step and step/2 are combined to cancel the h^2 term.
inline GradCheckResult grad_check(const encoding::FeatureSet& fs,
                                  const valuenet::NetParams<double>& params,
                                  const std::vector<double>& dq, double step, double floor,
                                  bool richardson = false) {
  const valuenet::Gradients<double> analytic = valuenet::backward<double>(fs, params, dq);
  valuenet::NetParams<double> p = params;
  auto loss = [&] {
    const auto q = valuenet::forward<double>(fs, p);
    double l = 0.0;
    for (std::size_t a = 0; a < dq.size(); ++a) l += dq[a] * q(static_cast<Eigen::Index>(a));
    return l;
  };
  GradCheckResult r;
  for (std::size_t t = 0; t < p.tensors.size(); ++t) {
    for (Eigen::Index i = 0; i < p.tensors[t].size(); ++i) {
      double& w = p.tensors[t].data()[i];
      const double saved = w;
      auto central = [&](double h) {
        w = saved + h;
        const double up = loss();
        w = saved - h;
        const double down = loss();
        w = saved;
        return (up - down) / (2.0 * h);
      };
      const double coarse = central(step);
      const double numeric = richardson ? (4.0 * central(0.5 * step) - coarse) / 3.0 : coarse;
      const double a = analytic.tensors[t].data()[i];
      const double abs_err = std::abs(a - numeric);
      r.max_abs_error = std::max(r.max_abs_error, abs_err);
      r.max_rel_error =
          std::max(r.max_rel_error, abs_err / std::max({std::abs(a), std::abs(numeric), floor}));
      ++r.checked;
    }
  }
  return r;
}

/// Upper-tail p-value of Pearson's statistic against equal expected counts.
inline double chi_squared_uniform_p(const std::vector<std::int64_t>& counts) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) stat += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace swarmtrack::testing
