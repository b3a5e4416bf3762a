#include "pcons/stat_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "pcons/error.hpp"

namespace pcons::stats {

std::string to_string(TestStatus s) {
  switch (s) {
    case TestStatus::ok: return "ok";
    case TestStatus::degenerate: return "degenerate";
    case TestStatus::insufficient_n: return "insufficient-n";
  }
  return "unknown";
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double normal_cdf(double z) { return boost::math::cdf(boost::math::normal_distribution<>(), z); }

double chi_square_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<>(df), x));
}

WilcoxonResult wilcoxon_one_sided(const PairedSample& sample, Alternative alternative, ZeroMethod zeros) {
  WilcoxonResult res;
  res.n = sample.pairs.size();
  if (res.n < kMinPairs) {
    res.status = TestStatus::insufficient_n;
    return res;
  }
  std::vector<double> diffs;
  for (const auto& [a, b] : sample.pairs) {
    double d = a - b;
    if (zeros == ZeroMethod::wilcox && d == 0.0) continue;
    diffs.push_back(d);
  }
  std::vector<double> abs_d(diffs.size());
  std::transform(diffs.begin(), diffs.end(), abs_d.begin(), [](double d) { return std::abs(d); });
  const auto ranks = average_ranks(abs_d);

  // Ranks that participate in the statistic (zero differences drop out).
  std::vector<double> active;
  double w_plus = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    if (diffs[i] == 0.0) continue;
    active.push_back(ranks[i]);
    if (diffs[i] > 0.0) w_plus += ranks[i];
  }
  res.n_nonzero = active.size();
  res.statistic = w_plus;
  if (active.empty()) {
    res.status = TestStatus::degenerate;
    return res;
  }

  if (active.size() <= kExactWilcoxonMaxN) {
    // Mid-ranks are multiples of 1/2: count sign assignments over doubled ranks.
    std::vector<std::size_t> units;
    std::size_t max_sum = 0;
    for (double r : active) {
      units.push_back(static_cast<std::size_t>(std::llround(2.0 * r)));
      max_sum += units.back();
    }
    std::vector<double> ways(max_sum + 1, 0.0);
    ways[0] = 1.0;
    std::size_t reach = 0;
    for (auto u : units) {
      for (std::size_t s = reach + 1; s-- > 0;)
        if (ways[s] != 0.0) ways[s + u] += ways[s];
      reach += u;
    }
    const auto observed = static_cast<std::size_t>(std::llround(2.0 * w_plus));
    const double total = std::ldexp(1.0, static_cast<int>(units.size()));
    double tail = 0.0;
    if (alternative == Alternative::less) {
      for (std::size_t s = 0; s <= observed; ++s) tail += ways[s];
    } else {
      for (std::size_t s = observed; s <= max_sum; ++s) tail += ways[s];
    }
    res.p_value = std::min(1.0, tail / total);
    res.exact = true;
    return res;
  }

  double mean = 0.0, var = 0.0;
  for (double r : active) {
    mean += r / 2.0;
    var += r * r / 4.0;
  }
  res.z = (w_plus - mean) / std::sqrt(var);
  res.p_value = alternative == Alternative::less ? normal_cdf(res.z) : 1.0 - normal_cdf(res.z);
  return res;
}

void BlockedMatrix::validate() const {
  for (const auto& row : values) {
    if (row.size() != treatments.size())
      throw Error(ErrorCode::incomplete_matrix, "blocked matrix row has " + std::to_string(row.size()) +
                                                    " values for " + std::to_string(treatments.size()) + " treatments");
    for (double v : row)
      if (std::isnan(v)) throw Error(ErrorCode::incomplete_matrix, "blocked matrix has a missing cell");
  }
  if (!blocks.empty() && blocks.size() != values.size())
    throw Error(ErrorCode::incomplete_matrix, "block labels do not match row count");
}

namespace {

struct RankSums {
  std::vector<double> mean_ranks;
  double tie_term = 0.0;  // sum over blocks of sum(t^3 - t)
};

RankSums rank_blocks(const BlockedMatrix& m) {
  const auto k = m.treatment_count();
  RankSums out;
  out.mean_ranks.assign(k, 0.0);
  for (const auto& row : m.values) {
    auto r = average_ranks(row);
    for (std::size_t j = 0; j < k; ++j) out.mean_ranks[j] += r[j];
    std::vector<double> sorted(row);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      out.tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  for (auto& r : out.mean_ranks) r /= static_cast<double>(m.block_count());
  return out;
}

}  // namespace

FriedmanResult friedman(const BlockedMatrix& matrix) {
  matrix.validate();
  const auto n = matrix.block_count();
  const auto k = matrix.treatment_count();
  if (k < 2) throw Error(ErrorCode::insufficient_data, "Friedman test needs at least 2 treatments");
  if (n < 2) throw Error(ErrorCode::insufficient_data, "Friedman test needs at least 2 blocks");

  auto ranks = rank_blocks(matrix);
  const double nd = static_cast<double>(n), kd = static_cast<double>(k);
  double ss = 0.0;
  for (double r : ranks.mean_ranks) {
    const double sum = r * nd;
    ss += sum * sum;
  }
  const double q = 12.0 / (nd * kd * (kd + 1.0)) * ss - 3.0 * nd * (kd + 1.0);
  const double correction = 1.0 - ranks.tie_term / (nd * kd * (kd * kd - 1.0));

  FriedmanResult res;
  res.df = k - 1;
  res.mean_ranks = std::move(ranks.mean_ranks);
  if (correction <= 1e-12) {
    // Every block fully tied: no treatment effect is observable.
    res.statistic = 0.0;
    res.p_value = 1.0;
    return res;
  }
  res.statistic = std::max(0.0, q / correction);
  res.p_value = chi_square_sf(res.statistic, static_cast<double>(res.df));
  return res;
}

double studentized_range_cdf(double q, std::size_t k) {
  if (q <= 0.0) return 0.0;
  const double kd = static_cast<double>(k);
  auto phi_cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  auto integrand = [&](double z) {
    const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    const double span = phi_cdf(z) - phi_cdf(z - q);
    return phi * std::pow(std::max(span, 0.0), kd - 1.0);
  };
  // The normal density is below 1e-19 outside [-9, 9 + q].
  return kd * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -9.0, 9.0 + q, 15, 1e-12);
}

double studentized_range_quantile(double p, std::size_t k) {
  if (k < 2) throw Error(ErrorCode::precondition, "studentized range needs k >= 2");
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::precondition, "quantile level must lie in (0,1)");
  auto f = [&](double q) { return studentized_range_cdf(q, k) - p; };
  std::uintmax_t iters = 200;
  auto tol = boost::math::tools::eps_tolerance<double>(45);
  auto [lo, hi] = boost::math::tools::toms748_solve(f, 1e-6, 40.0, tol, iters);
  return (lo + hi) / 2.0;
}

NemenyiResult nemenyi(const BlockedMatrix& matrix, double alpha) {
  auto fr = friedman(matrix);
  const auto k = matrix.treatment_count();
  const double n = static_cast<double>(matrix.block_count());
  const double kd = static_cast<double>(k);

  NemenyiResult res;
  res.alpha = alpha;
  res.mean_ranks = fr.mean_ranks;
  res.friedman_p = fr.p_value;
  res.friedman_significant = fr.p_value < alpha;
  res.q_alpha = studentized_range_quantile(1.0 - alpha, k) / std::sqrt(2.0);
  res.critical_difference = res.q_alpha * std::sqrt(kd * (kd + 1.0) / (6.0 * n));
  res.significant.assign(k, std::vector<bool>(k, false));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      res.significant[i][j] = i != j && std::abs(res.mean_ranks[i] - res.mean_ranks[j]) > res.critical_difference;
  return res;
}

BootstrapInterval bootstrap_ci(std::span<const double> values, double level, std::size_t resamples,
                               std::uint64_t seed) {
  if (values.size() < 2) throw Error(ErrorCode::insufficient_data, "bootstrap needs at least 2 values");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::precondition, "confidence level must lie in (0,1)");
  if (resamples == 0) throw Error(ErrorCode::precondition, "bootstrap needs at least one resample");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    // Running mean keeps constant resamples exactly at the constant.
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) acc += (values[pick(rng)] - acc) / static_cast<double>(i + 1);
    m = acc;
  }
  std::sort(means.begin(), means.end());

  const double tail = (1.0 - level) / 2.0;
  const double b = static_cast<double>(resamples);
  auto lo_idx = static_cast<std::size_t>(std::floor(tail * b));
  auto hi_idx = static_cast<std::size_t>(std::ceil((1.0 - tail) * b));
  hi_idx = hi_idx == 0 ? 0 : hi_idx - 1;
  lo_idx = std::min(lo_idx, resamples - 1);
  hi_idx = std::clamp(hi_idx, lo_idx, resamples - 1);

  BootstrapInterval out;
  out.lo = means[lo_idx];
  out.hi = means[hi_idx];
  double mean = 0.0;
  std::size_t c = 0;
  for (double v : values) mean += (v - mean) / static_cast<double>(++c);
  out.mean = mean;
  out.level = level;
  out.resamples = resamples;
  return out;
}

}  // namespace pcons::stats
