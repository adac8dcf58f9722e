#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "mmvap/error.hpp"

namespace mmvap {

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  size_t n = 0;
};

/// Two-sided paired t-test on per-session metric differences.
inline TTestResult paired_t_test(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw Error(ErrorCode::ShapeMismatch, "paired samples differ in size");
  const size_t n = xs.size();
  if (n < 2) throw Error(ErrorCode::EmptySample, "need at least 2 pairs");
  std::vector<double> d(n);
  for (size_t i = 0; i < n; ++i) d[i] = xs[i] - ys[i];
  double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd < 1e-300) {
    if (std::abs(mean) < 1e-300) return {0.0, 1.0, n};
    throw Error(ErrorCode::ZeroVariance, "all differences equal and nonzero");
  }
  double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(n - 1));
  double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return {t, std::min(1.0, p), n};
}

struct MwuResult {
  double u = 0.0;   // min(U1, U2)
  double u1 = 0.0;  // U statistic of the first sample
  double p = 1.0;
  bool exact = false;
};

namespace detail {

inline double rank_sum_u1(const std::vector<double>& a, const std::vector<double>& b) {
  // Midranks over the pooled sample.
  std::vector<std::pair<double, int>> pooled;
  pooled.reserve(a.size() + b.size());
  for (double v : a) pooled.emplace_back(v, 0);
  for (double v : b) pooled.emplace_back(v, 1);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  double r1 = 0.0;
  size_t i = 0;
  while (i < pooled.size()) {
    size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (size_t k = i; k < j; ++k)
      if (pooled[k].second == 0) r1 += midrank;
    i = j;
  }
  double na = static_cast<double>(a.size());
  return r1 - na * (na + 1.0) / 2.0;
}

// Exact two-sided p over all equally likely group assignments, computed as a
// dynamic program over doubled-midrank sums (doubling makes tied midranks
// integral). dp[j][s] counts subsets of size j whose doubled ranks sum to s.
inline double mwu_exact_p(const std::vector<double>& a, const std::vector<double>& b,
                          double u1_obs) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  const size_t n = pooled.size(), na = a.size();
  std::vector<long long> rank2(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && pooled[j] == pooled[i]) ++j;
    long long doubled = static_cast<long long>(i + 1 + j);  // 2 * midrank
    for (size_t k = i; k < j; ++k) rank2[k] = doubled;
    i = j;
  }
  const size_t max_sum = static_cast<size_t>(n * (n + 1));  // sum of all doubled ranks
  std::vector<std::vector<double>> dp(na + 1, std::vector<double>(max_sum + 1, 0.0));
  dp[0][0] = 1.0;
  for (size_t item = 0; item < n; ++item) {
    const size_t r = static_cast<size_t>(rank2[item]);
    for (size_t j = std::min(na, item + 1); j >= 1; --j)
      for (size_t s = max_sum; s >= r; --s)
        if (dp[j - 1][s - r] > 0.0) dp[j][s] += dp[j - 1][s - r];
  }
  const double mu = static_cast<double>(na * b.size()) / 2.0;
  const double dev_obs = std::abs(u1_obs - mu) - 1e-9;
  double total = 0.0, extreme = 0.0;
  for (size_t s = 0; s <= max_sum; ++s) {
    if (dp[na][s] == 0.0) continue;
    total += dp[na][s];
    double u1 = 0.5 * static_cast<double>(s) - static_cast<double>(na * (na + 1)) / 2.0;
    if (std::abs(u1 - mu) >= dev_obs) extreme += dp[na][s];
  }
  return extreme / total;
}

}  // namespace detail

/// Mann-Whitney U with midranks. Exact permutation p when n_a * n_b <= 400,
/// otherwise a tie-corrected normal approximation.
inline MwuResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptySample, "both samples must be non-empty");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  MwuResult res;
  res.u1 = detail::rank_sum_u1(a, b);
  res.u = std::min(res.u1, na * nb - res.u1);
  if (a.size() * b.size() <= 400) {
    res.exact = true;
    res.p = detail::mwu_exact_p(a, b, res.u1);
    return res;
  }
  // Tie correction over the pooled sample.
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  double tie_term = 0.0;
  size_t i = 0;
  const double n = na + nb;
  while (i < pooled.size()) {
    size_t j = i;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  double var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (var <= 0.0) {
    res.p = 1.0;  // fully tied sample
    return res;
  }
  double z = (res.u1 - na * nb / 2.0) / std::sqrt(var);
  boost::math::normal norm;
  res.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(norm, std::abs(z))));
  return res;
}

}  // namespace mmvap
