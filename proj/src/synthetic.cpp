#include "patternkit/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "patternkit/mechanisms.hpp"
#include "patternkit/rng.hpp"

namespace patternkit {

namespace {

// Missable columns: pafi(0), wblc(2), alb(3), bili(7), crea(8).
// 23 patterns: complete, 5 singles, 10 pairs, 6 triples, 1 quadruple.
struct PatternWeight {
  std::uint64_t bits;
  double weight;
};

constexpr std::uint64_t bit(int j) { return 1ULL << j; }

const std::array<PatternWeight, 23> kPatterns = {{
    {0, 0.400},
    {bit(0), 0.100},
    {bit(2), 0.030},
    {bit(3), 0.120},
    {bit(7), 0.080},
    {bit(8), 0.020},
    {bit(0) | bit(3), 0.016},
    {bit(0) | bit(7), 0.016},
    {bit(3) | bit(7), 0.016},
    {bit(0) | bit(2), 0.016},
    {bit(2) | bit(3), 0.016},
    {bit(2) | bit(7), 0.016},
    {bit(0) | bit(8), 0.016},
    {bit(3) | bit(8), 0.016},
    {bit(7) | bit(8), 0.016},
    {bit(2) | bit(8), 0.016},
    {bit(0) | bit(3) | bit(7), 0.012},
    {bit(0) | bit(2) | bit(3), 0.012},
    {bit(0) | bit(2) | bit(7), 0.012},
    {bit(2) | bit(3) | bit(7), 0.012},
    {bit(0) | bit(3) | bit(8), 0.012},
    {bit(3) | bit(7) | bit(8), 0.012},
    {bit(0) | bit(2) | bit(3) | bit(7), 0.018},
}};

std::vector<int> allocate_counts(int n) {
  // largest-remainder apportionment so counts are exact and deterministic
  std::vector<int> counts(kPatterns.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t k = 0; k < kPatterns.size(); ++k) {
    const double exact = kPatterns[k].weight * n;
    counts[k] = static_cast<int>(std::floor(exact));
    assigned += counts[k];
    remainders.emplace_back(-(exact - counts[k]), k);
  }
  std::sort(remainders.begin(), remainders.end());
  for (int extra = 0; extra < n - assigned; ++extra)
    counts[remainders[static_cast<std::size_t>(extra) % remainders.size()]
               .second]++;
  return counts;
}

}  // namespace

Dataset make_support_synth(const SupportSynthOptions& options) {
  const int p = 10;
  const std::vector<std::string> names = {"pafi", "meanbp", "wblc", "alb",
                                          "resp", "temp",   "hrt",  "bili",
                                          "crea", "sod"};
  GenConfig gen;
  gen.n = options.n;
  gen.mu = Eigen::VectorXd::Zero(p);
  gen.sigma = Eigen::MatrixXd::Constant(p, p, 0.3);
  gen.sigma.diagonal().setOnes();
  gen.beta = Eigen::VectorXd(p + 1);
  gen.beta << 20.0, 5.0, 4.0, 3.0, 3.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0;
  gen.noise_sd = 8.0;

  Rng rng(options.seed);
  const Eigen::MatrixXd x = gen_predictors(gen, rng);
  Eigen::VectorXd y = gen_outcome_selection(x, gen, rng);

  // deterministic pattern assignment, then a seeded row shuffle
  const std::vector<int> counts = allocate_counts(options.n);
  std::vector<std::uint64_t> row_bits;
  row_bits.reserve(static_cast<std::size_t>(options.n));
  for (std::size_t k = 0; k < kPatterns.size(); ++k)
    for (int c = 0; c < counts[k]; ++c) row_bits.push_back(kPatterns[k].bits);
  for (std::size_t i = row_bits.size(); i > 1; --i)
    std::swap(row_bits[i - 1], row_bits[rng.uniform_int(i)]);

  MaskMatrix mask = MaskMatrix::Zero(options.n, p);
  for (int i = 0; i < options.n; ++i)
    for (int j = 0; j < p; ++j)
      if ((row_bits[static_cast<std::size_t>(i)] >> j) & 1u) mask(i, j) = 1;

  if (options.mnary_shift) {
    for (int i = 0; i < options.n; ++i)
      if (mask(i, 0)) y(i) += 25.0;
  }
  return Dataset(x, mask, y, names);
}

}  // namespace patternkit
