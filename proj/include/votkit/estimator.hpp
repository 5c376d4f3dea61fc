#ifndef VOTKIT_ESTIMATOR_HPP
#define VOTKIT_ESTIMATOR_HPP

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace votkit {

// Utility weights on [cost USD, time minutes, truck 0/1].
struct Coefficients {
  double cost = 0.0;
  double time = 0.0;
  double truck = 0.0;

  Eigen::Vector3d vec() const { return {cost, time, truck}; }
  static Coefficients from_vec(const Eigen::Vector3d& v) {
    return {v[0], v[1], v[2]};
  }
  bool finite() const {
    return std::isfinite(cost) && std::isfinite(time) && std::isfinite(truck);
  }
  bool operator==(const Coefficients&) const = default;
};

// One ranked choice task: attribute rows indexed by alternative id (row
// id-1), and the observed order of ids from most to least preferred.
// Production data always has 13 rows; reduced instances are allowed so the
// exhaustive small-n oracles can run against the same code path.
struct RankingObservation {
  Eigen::Matrix<double, Eigen::Dynamic, 3> attributes;
  std::vector<int> order;  // permutation of 1..n, rank position -> id

  int n_alternatives() const { return static_cast<int>(attributes.rows()); }
};

struct FitOptions {
  double tolerance = 1e-8;  // on the gradient max-norm
  int max_iterations = 200;
  Coefficients start{};
};

struct FitResult {
  Coefficients beta_hat;
  std::optional<Eigen::Vector3d> std_errors;  // unset if information singular
  double log_likelihood = 0.0;
  bool converged = false;
  int iterations = 0;
  int n_observations = 0;
  std::optional<double> vot;  // USD/hour; unset when |beta_cost| degenerate
};

nlohmann::json fit_result_to_json(const FitResult& fit);
FitResult fit_result_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Exploded-logit kernel. The probability of a full ranking factors into a
// sequence of softmax choices among the not-yet-ranked alternatives; every
// stage is evaluated in log space with max-subtraction.
// ---------------------------------------------------------------------------

// Log-probability of one observed ranking. `stages` limits how many choice
// stages count (n-1 = the full ranking; 1 = first choice only).
template <typename Derived>
double ranking_log_probability(const Eigen::MatrixBase<Derived>& beta,
                               const RankingObservation& obs,
                               int stages = -1) {
  const int n = obs.n_alternatives();
  Eigen::VectorXd v(n);  // utilities in ranked order
  for (int h = 0; h < n; ++h) {
    v[h] = obs.attributes.row(obs.order[h] - 1).dot(beta.transpose());
  }
  const int last = stages < 0 ? n - 1 : std::min(stages, n - 1);
  double logp = 0.0;
  for (int h = 0; h < last; ++h) {
    const auto tail = v.tail(n - h);
    const double m = tail.maxCoeff();
    logp += v[h] - m - std::log((tail.array() - m).exp().sum());
  }
  return logp;
}

double ranking_probability(const Coefficients& beta,
                           const RankingObservation& obs);

double log_likelihood(const Coefficients& beta,
                      const std::vector<RankingObservation>& data,
                      int stages = -1);

Eigen::Vector3d gradient(const Coefficients& beta,
                         const std::vector<RankingObservation>& data);

// Log-likelihood, score and observed Hessian in one pass.
struct LikelihoodDerivatives {
  double value = 0.0;
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();
  Eigen::Matrix3d hessian = Eigen::Matrix3d::Zero();
};

LikelihoodDerivatives log_likelihood_derivatives(
    const Coefficients& beta, const std::vector<RankingObservation>& data);

// Maximum-likelihood fit: Newton ascent with backtracking line search,
// falling back to a gradient step whenever the Hessian solve is unusable.
// Standard errors come from the observed information at the optimum; a
// singular information matrix leaves them unset.
FitResult fit(const std::vector<RankingObservation>& data,
              const FitOptions& options = {});

// 60 * beta_time / beta_cost in USD/hour (time in minutes, cost in USD);
// unset when |beta_cost| < 1e-9.
std::optional<double> vot_from(const Coefficients& beta);

}  // namespace votkit

#endif  // VOTKIT_ESTIMATOR_HPP
