#include "votkit/estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>

#include <nlohmann/json.hpp>

#include "votkit/errors.hpp"

namespace votkit {

namespace {

void check_inputs(const Coefficients& beta,
                  const std::vector<RankingObservation>& data) {
  if (!beta.finite()) {
    throw std::invalid_argument("non-finite coefficient vector");
  }
  if (data.empty()) {
    throw std::invalid_argument("empty observation list");
  }
}

void check_observation(const RankingObservation& obs) {
  const int n = obs.n_alternatives();
  if (n < 2 || static_cast<int>(obs.order.size()) != n) {
    throw std::invalid_argument(
        "observation order length must match the attribute rows (n >= 2)");
  }
  std::vector<bool> seen(n + 1, false);
  for (int id : obs.order) {
    if (id < 1 || id > n || seen[id]) {
      throw std::invalid_argument("observation order is not a permutation");
    }
    seen[id] = true;
  }
}

const char* kColumnNames[3] = {"cost", "time", "truck"};

// A column with no variation inside any single ranking is differenced out
// of every softmax stage and cannot be identified.
void check_identification(const std::vector<RankingObservation>& data) {
  for (int j = 0; j < 3; ++j) {
    bool varies = false;
    for (const auto& obs : data) {
      const auto col = obs.attributes.col(j);
      if ((col.array() != col[0]).any()) {
        varies = true;
        break;
      }
    }
    if (!varies) {
      throw IdentificationError(
          std::string("attribute column '") + kColumnNames[j] +
          "' is constant within every ranking; coefficient unidentified");
    }
  }
}

}  // namespace

double ranking_probability(const Coefficients& beta,
                           const RankingObservation& obs) {
  if (!beta.finite()) {
    throw std::invalid_argument("non-finite coefficient vector");
  }
  check_observation(obs);
  return std::exp(ranking_log_probability(beta.vec(), obs));
}

double log_likelihood(const Coefficients& beta,
                      const std::vector<RankingObservation>& data,
                      int stages) {
  check_inputs(beta, data);
  double total = 0.0;
  for (const auto& obs : data) {
    check_observation(obs);
    total += ranking_log_probability(beta.vec(), obs, stages);
  }
  return total;
}

Eigen::Vector3d gradient(const Coefficients& beta,
                         const std::vector<RankingObservation>& data) {
  return log_likelihood_derivatives(beta, data).grad;
}

LikelihoodDerivatives log_likelihood_derivatives(
    const Coefficients& beta, const std::vector<RankingObservation>& data) {
  check_inputs(beta, data);
  const Eigen::Vector3d b = beta.vec();

  LikelihoodDerivatives out;
  Eigen::Matrix<double, Eigen::Dynamic, 3> ranked;
  Eigen::VectorXd v, w;
  for (const auto& obs : data) {
    check_observation(obs);
    const int n = obs.n_alternatives();
    ranked.resize(n, 3);
    for (int h = 0; h < n; ++h) {
      ranked.row(h) = obs.attributes.row(obs.order[h] - 1);
    }
    v = ranked * b;
    for (int h = 0; h < n - 1; ++h) {
      const int m = n - h;  // alternatives still in the running
      const auto tail_v = v.tail(m);
      const auto tail_x = ranked.bottomRows(m);
      const double vmax = tail_v.maxCoeff();
      w = (tail_v.array() - vmax).exp();
      const double z = w.sum();
      out.value += v[h] - vmax - std::log(z);
      w /= z;  // stage softmax weights over the remaining alternatives
      const Eigen::Vector3d xbar = tail_x.transpose() * w;
      out.grad += ranked.row(h).transpose() - xbar;
      out.hessian -= tail_x.transpose() * w.asDiagonal() * tail_x -
                     xbar * xbar.transpose();
    }
  }
  return out;
}

FitResult fit(const std::vector<RankingObservation>& data,
              const FitOptions& options) {
  if (data.empty()) {
    throw std::invalid_argument("fit: empty observation list");
  }
  for (const auto& obs : data) check_observation(obs);
  check_identification(data);
  if (!options.start.finite()) {
    throw std::invalid_argument("fit: non-finite starting point");
  }

  Eigen::Vector3d b = options.start.vec();
  auto eval = [&](const Eigen::Vector3d& x) {
    return log_likelihood_derivatives(Coefficients::from_vec(x), data);
  };

  LikelihoodDerivatives cur = eval(b);
  FitResult result;
  result.n_observations = static_cast<int>(data.size());

  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (cur.grad.cwiseAbs().maxCoeff() <= options.tolerance) {
      result.converged = true;
      break;
    }

    // Newton direction on the concave objective: d = (-H)^{-1} g.
    Eigen::Vector3d dir;
    const Eigen::Matrix3d info = -cur.hessian;
    Eigen::LDLT<Eigen::Matrix3d> ldlt(info);
    bool newton_ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
    if (newton_ok) {
      dir = ldlt.solve(cur.grad);
      newton_ok = dir.allFinite() && dir.dot(cur.grad) > 0.0;
    }
    if (!newton_ok) {
      dir = cur.grad;  // plain ascent step
    }

    // Backtracking line search (Armijo, c = 1e-4).
    const double slope = dir.dot(cur.grad);
    double step = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      const Eigen::Vector3d cand = b + step * dir;
      const LikelihoodDerivatives next = eval(cand);
      if (std::isfinite(next.value) &&
          next.value >= cur.value + 1e-4 * step * slope) {
        b = cand;
        cur = next;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;  // no admissible step; gradient stalls below
  }

  result.beta_hat = Coefficients::from_vec(b);
  result.log_likelihood = cur.value;
  result.iterations = iter;
  if (!result.converged &&
      cur.grad.cwiseAbs().maxCoeff() <= options.tolerance) {
    result.converged = true;  // hit tolerance on the final iteration
  }

  // Observed information at the estimate; singular -> no standard errors.
  const Eigen::Matrix3d info = -cur.hessian;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(info);
  if (lu.isInvertible()) {
    const Eigen::Vector3d var = lu.inverse().diagonal();
    if ((var.array() > 0.0).all()) {
      result.std_errors = var.cwiseSqrt();
    }
  }

  result.vot = vot_from(result.beta_hat);
  return result;
}

std::optional<double> vot_from(const Coefficients& beta) {
  if (std::abs(beta.cost) < 1e-9) return std::nullopt;
  return 60.0 * beta.time / beta.cost;
}

nlohmann::json fit_result_to_json(const FitResult& fit) {
  nlohmann::json j{{"beta",
                    {{"cost", fit.beta_hat.cost},
                     {"time", fit.beta_hat.time},
                     {"truck", fit.beta_hat.truck}}},
                   {"ll", fit.log_likelihood},
                   {"converged", fit.converged},
                   {"iterations", fit.iterations},
                   {"n", fit.n_observations}};
  if (fit.std_errors) {
    j["se"] = {(*fit.std_errors)[0], (*fit.std_errors)[1],
               (*fit.std_errors)[2]};
  } else {
    j["se"] = nullptr;
  }
  if (fit.vot) {
    j["vot"] = *fit.vot;
  } else {
    j["vot"] = nullptr;
  }
  return j;
}

FitResult fit_result_from_json(const nlohmann::json& j) {
  FitResult f;
  f.beta_hat.cost = j.at("beta").at("cost").get<double>();
  f.beta_hat.time = j.at("beta").at("time").get<double>();
  f.beta_hat.truck = j.at("beta").at("truck").get<double>();
  f.log_likelihood = j.at("ll").get<double>();
  f.converged = j.at("converged").get<bool>();
  f.iterations = j.at("iterations").get<int>();
  f.n_observations = j.at("n").get<int>();
  if (!j.at("se").is_null()) {
    const auto se = j.at("se").get<std::vector<double>>();
    f.std_errors = Eigen::Vector3d(se.at(0), se.at(1), se.at(2));
  }
  if (!j.at("vot").is_null()) {
    f.vot = j.at("vot").get<double>();
  }
  return f;
}

}  // namespace votkit
