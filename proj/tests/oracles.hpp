// Independent reference implementations used only by tests. These stay
// deliberately naive (direct exp sums, sequential sampling, finite
// differences) so they cannot share a bug with the library code paths they
// check.
#ifndef VOTKIT_TESTS_ORACLES_HPP
#define VOTKIT_TESTS_ORACLES_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace oracles {

// P(order) for given per-alternative utilities, by the plain product of
// softmax stages. Valid for small n and mild utilities only.
inline double ranking_probability_direct(const Eigen::VectorXd& utilities,
                                         const std::vector<int>& order) {
  const int n = static_cast<int>(utilities.size());
  std::vector<int> remaining(order.begin(), order.end());
  double prob = 1.0;
  for (int h = 0; h < n - 1; ++h) {
    double denom = 0.0;
    for (int k = h; k < n; ++k) denom += std::exp(utilities[remaining[k] - 1]);
    prob *= std::exp(utilities[remaining[h] - 1]) / denom;
  }
  return prob;
}

// Draw a ranking by explicit sequential softmax selection (inverse-CDF per
// stage), the distributional twin of Gumbel-perturbed sorting.
inline std::vector<int> sample_sequential_softmax(
    const Eigen::VectorXd& utilities, std::mt19937_64& rng) {
  const int n = static_cast<int>(utilities.size());
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 1);
  std::vector<int> order;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (pool.size() > 1) {
    double denom = 0.0;
    for (int id : pool) denom += std::exp(utilities[id - 1]);
    double u = unif(rng) * denom;
    size_t pick = pool.size() - 1;
    for (size_t k = 0; k < pool.size(); ++k) {
      u -= std::exp(utilities[pool[k] - 1]);
      if (u <= 0.0) {
        pick = k;
        break;
      }
    }
    order.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  order.push_back(pool[0]);
  return order;
}

// All permutations of {1..n}.
inline std::vector<std::vector<int>> all_permutations(int n) {
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 1);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(ids);
  } while (std::next_permutation(ids.begin(), ids.end()));
  return out;
}

}  // namespace oracles

#endif  // VOTKIT_TESTS_ORACLES_HPP
