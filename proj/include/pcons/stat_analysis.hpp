#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pcons::stats {

inline constexpr std::size_t kMinPairs = 5;
inline constexpr std::size_t kExactWilcoxonMaxN = 25;

enum class TestStatus { ok, degenerate, insufficient_n };
std::string to_string(TestStatus s);

/// `less`: the first condition tends to be smaller than the second
/// (e.g. intra-persona entropy below inter-persona entropy).
enum class Alternative { less, greater };

/// Handling of zero differences. Pratt ranks them with the rest and then
/// drops their ranks from the statistic; Wilcox discards them up front.
enum class ZeroMethod { pratt, wilcox };

struct PairedSample {
  std::string label_a = "a";
  std::string label_b = "b";
  std::vector<std::pair<double, double>> pairs;
  std::vector<std::string> units;  // optional, one per pair
};

struct WilcoxonResult {
  TestStatus status = TestStatus::ok;
  double statistic = 0.0;  // W+, sum of ranks of positive (a - b) differences
  double p_value = 1.0;
  std::size_t n = 0;        // pairs in the sample
  std::size_t n_nonzero = 0;
  bool exact = false;
  double z = 0.0;           // normal approximation only
};

WilcoxonResult wilcoxon_one_sided(const PairedSample& sample, Alternative alternative,
                                  ZeroMethod zeros = ZeroMethod::pratt);

/// Mid-ranks (1-based) of `values`, ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Rectangular blocks x treatments matrix.
struct BlockedMatrix {
  std::vector<std::string> treatments;
  std::vector<std::string> blocks;
  std::vector<std::vector<double>> values;  // values[block][treatment]

  std::size_t block_count() const { return values.size(); }
  std::size_t treatment_count() const { return treatments.size(); }
  /// Throws incomplete_matrix if any row is short or holds a NaN.
  void validate() const;
};

struct FriedmanResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t df = 0;
  std::vector<double> mean_ranks;
};

FriedmanResult friedman(const BlockedMatrix& matrix);

struct NemenyiResult {
  std::vector<double> mean_ranks;  // higher value -> higher rank
  double q_alpha = 0.0;            // studentized range quantile / sqrt(2)
  double critical_difference = 0.0;
  std::vector<std::vector<bool>> significant;
  double alpha = 0.05;
  bool friedman_significant = false;
  double friedman_p = 1.0;
};

NemenyiResult nemenyi(const BlockedMatrix& matrix, double alpha = 0.05);

/// CDF of the studentized range of k standard normals (infinite df).
double studentized_range_cdf(double q, std::size_t k);
/// Quantile of the studentized range (infinite df).
double studentized_range_quantile(double p, std::size_t k);

double chi_square_sf(double x, double df);
double normal_cdf(double z);

struct BootstrapInterval {
  double lo = 0.0;
  double hi = 0.0;
  double mean = 0.0;
  double level = 0.95;
  std::size_t resamples = 0;
};

/// Percentile interval of the mean; endpoints are order statistics of the
/// resampled means. Deterministic for a given seed.
BootstrapInterval bootstrap_ci(std::span<const double> values, double level = 0.95,
                               std::size_t resamples = 10000, std::uint64_t seed = 0);

}  // namespace pcons::stats
