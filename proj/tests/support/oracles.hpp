#pragma once

// Independent reference implementations used as test oracles. They share no
// code with the library and favour the most literal formulation over speed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

/// Normalized Shannon entropy straight from the definition, in long double.
/// Neutral judgments are spread evenly over the k labels.
inline double entropy(const std::vector<std::size_t>& counts, std::size_t neutral) {
  const std::size_t k = counts.size();
  long double total = static_cast<long double>(neutral);
  for (auto c : counts) total += static_cast<long double>(c);
  long double h = 0.0L;
  for (auto c : counts) {
    const long double p = (static_cast<long double>(c) + static_cast<long double>(neutral) / k) / total;
    if (p > 0.0L) h -= p * std::log(p);
  }
  return static_cast<double>(h / std::log(static_cast<long double>(k)));
}

/// Normalized binary entropy of (p, 1 - p) in bits.
inline double binary_entropy(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log2(p);
  if (p < 1.0) h -= (1.0 - p) * std::log2(1.0 - p);
  return h;
}

// ---------------------------------------------------------------------------
// Survey re-scorer

struct Item {
  std::string id;
  std::string axis;
  std::string target;
  bool reverse = false;
  double weight = 1.0;
};

struct Key {
  int lo = 1;
  int hi = 5;
  std::vector<Item> items;
  std::map<std::string, double> midpoints;       // explicit thresholds
  std::map<std::string, std::string> high_label;  // binary axes
};

/// axis -> label, nullopt for neutral. Binary axes compare the total with
/// the midpoint (explicit, or halfway between the smallest and largest
/// attainable totals found by trying every scale point on every item).
/// Multi-class axes take the first class in `order` with the largest total.
inline std::map<std::string, std::optional<std::string>> rescore(
    const Key& key, const std::map<std::string, int>& answers,
    const std::map<std::string, std::vector<std::string>>& axis_labels) {
  std::map<std::string, std::optional<std::string>> out;
  for (const auto& [axis, labels] : axis_labels) {
    bool used = false;
    if (labels.size() == 2) {
      double total = 0.0, lo = 0.0, hi = 0.0;
      for (const auto& it : key.items) {
        if (it.axis != axis) continue;
        used = true;
        const int a = answers.at(it.id);
        total += it.weight * (it.reverse ? (key.lo + key.hi - a) : a);
        double mn = 1e300, mx = -1e300;
        for (int x = key.lo; x <= key.hi; ++x) {
          const double s = it.weight * (it.reverse ? (key.lo + key.hi - x) : x);
          mn = std::min(mn, s);
          mx = std::max(mx, s);
        }
        lo += mn;
        hi += mx;
      }
      if (!used) continue;
      const double mid = key.midpoints.count(axis) ? key.midpoints.at(axis) : (lo + hi) / 2.0;
      const std::string high = key.high_label.count(axis) ? key.high_label.at(axis) : labels[0];
      const std::string low = high == labels[0] ? labels[1] : labels[0];
      if (total > mid + 1e-9)
        out[axis] = high;
      else if (total < mid - 1e-9)
        out[axis] = low;
      else
        out[axis] = std::nullopt;
    } else {
      std::map<std::string, double> totals;
      for (const auto& it : key.items) {
        if (it.axis != axis) continue;
        used = true;
        const int a = answers.at(it.id);
        totals[it.target] += it.weight * (it.reverse ? (key.lo + key.hi - a) : a);
      }
      if (!used) continue;
      std::string best;
      double best_v = -1e300;
      for (const auto& l : labels) {
        const double v = totals.count(l) ? totals[l] : 0.0;
        if (v > best_v + 1e-9) {
          best_v = v;
          best = l;
        }
      }
      out[axis] = best;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank by exhaustive sign enumeration

inline std::vector<double> midranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) ++less;
      if (v[j] == v[i]) ++equal;
    }
    r[i] = static_cast<double>(less) + (static_cast<double>(equal) + 1.0) / 2.0;
  }
  return r;
}

struct WilcoxonExact {
  double w_plus = 0.0;
  double p_less = 1.0;     // P(W+ <= observed)
  double p_greater = 1.0;  // P(W+ >= observed)
};

/// Pratt handling: zero differences take part in ranking, their ranks are
/// then dropped. Every sign pattern of the non-zero ranks is enumerated.
inline WilcoxonExact wilcoxon_enumerate(const std::vector<double>& a, const std::vector<double>& b,
                                        bool pratt = true) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] - b[i];
    if (x != 0.0 || pratt) d.push_back(x);
  }
  std::vector<double> mag(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) mag[i] = std::fabs(d[i]);
  const auto r = midranks(mag);
  std::vector<double> ranks;
  WilcoxonExact out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 0.0) continue;
    ranks.push_back(r[i]);
    if (d[i] > 0.0) out.w_plus += r[i];
  }
  const std::size_t m = ranks.size();
  const std::uint64_t patterns = 1ULL << m;
  std::uint64_t le = 0, ge = 0;
  for (std::uint64_t mask = 0; mask < patterns; ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      if (mask & (1ULL << i)) w += ranks[i];
    if (w <= out.w_plus + 1e-9) ++le;
    if (w >= out.w_plus - 1e-9) ++ge;
  }
  out.p_less = static_cast<double>(le) / static_cast<double>(patterns);
  out.p_greater = static_cast<double>(ge) / static_cast<double>(patterns);
  return out;
}

// ---------------------------------------------------------------------------
// Friedman by within-block permutation

inline double friedman_statistic(const std::vector<std::vector<double>>& m) {
  const double n = static_cast<double>(m.size());
  const double k = static_cast<double>(m.front().size());
  std::vector<double> sums(m.front().size(), 0.0);
  for (const auto& row : m) {
    const auto r = midranks(row);
    for (std::size_t j = 0; j < r.size(); ++j) sums[j] += r[j];
  }
  double ss = 0.0;
  for (double s : sums) ss += s * s;
  return 12.0 / (n * k * (k + 1.0)) * ss - 3.0 * n * (k + 1.0);
}

/// Monte Carlo p-value: rows are shuffled independently under the null.
inline double friedman_permutation_p(const std::vector<std::vector<double>>& m, std::size_t draws,
                                     std::uint32_t seed) {
  const double observed = friedman_statistic(m);
  std::mt19937 rng(seed);
  std::size_t hits = 0;
  auto work = m;
  for (std::size_t t = 0; t < draws; ++t) {
    for (auto& row : work) std::shuffle(row.begin(), row.end(), rng);
    if (friedman_statistic(work) >= observed - 1e-9) ++hits;
  }
  return (static_cast<double>(hits) + 1.0) / (static_cast<double>(draws) + 1.0);
}

// ---------------------------------------------------------------------------
// Percentile bootstrap with its own generator

inline std::pair<double, double> bootstrap_percentile(const std::vector<double>& v, double level,
                                                      std::size_t resamples, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
  std::vector<double> means;
  means.reserve(resamples);
  for (std::size_t b = 0; b < resamples; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[pick(rng)];
    means.push_back(s / static_cast<double>(v.size()));
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - level) / 2.0;
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(resamples - 1);
    return means[static_cast<std::size_t>(std::llround(pos))];
  };
  return {at(alpha), at(1.0 - alpha)};
}

// ---------------------------------------------------------------------------
// Cohen's kappa from an explicit contingency table

inline double kappa(const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::set<std::string> cats;
  for (const auto& [a, b] : pairs) {
    cats.insert(a);
    cats.insert(b);
  }
  std::map<std::string, std::map<std::string, double>> table;
  for (const auto& [a, b] : pairs) table[a][b] += 1.0;
  const double n = static_cast<double>(pairs.size());
  double po = 0.0, pe = 0.0;
  for (const auto& c : cats) {
    po += table[c][c] / n;
    double row = 0.0, col = 0.0;
    for (const auto& d : cats) {
      row += table[c][d];
      col += table[d][c];
    }
    pe += (row / n) * (col / n);
  }
  return (po - pe) / (1.0 - pe);
}

}  // namespace oracle
