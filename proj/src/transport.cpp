#include "kmf/transport.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "kmf/parallel.hpp"

namespace kmf {

PointCloud PointCloud::from_state(const ParticleState& s) {
  return PointCloud{s.dim, s.n, s.x, s.v};
}

void PointCloud::check() const {
  const std::size_t len = n * static_cast<std::size_t>(dim);
  if (n < 1 || dim < 1 || x.size() != len || v.size() != len) {
    throw std::invalid_argument("PointCloud: inconsistent dimensions");
  }
  auto finite = [](double c) { return std::isfinite(c); };
  if (!std::all_of(x.begin(), x.end(), finite) || !std::all_of(v.begin(), v.end(), finite)) {
    throw std::invalid_argument("PointCloud: non-finite entry");
  }
}

GroundMetric GroundMetric::qform(const QForm& q) {
  if (!q.positive_definite()) {
    throw std::invalid_argument("qform metric needs a positive definite Q (b > 1/sqrt(beta))");
  }
  return GroundMetric(q);
}

double GroundMetric::cost(std::span<const double> px, std::span<const double> pv,
                          std::span<const double> qx, std::span<const double> qv) const {
  double s = 0.0;
  for (std::size_t k = 0; k < px.size(); ++k) {
    const double dx = px[k] - qx[k];
    const double dv = pv[k] - qv[k];
    s += q_ ? (*q_)(dx, dv) : dx * dx + dv * dv;
  }
  return s;
}

std::vector<double> cost_matrix(const PointCloud& a, const PointCloud& b,
                                const GroundMetric& metric) {
  if (a.dim != b.dim) throw std::invalid_argument("cost_matrix: clouds differ in dim");
  const auto d = static_cast<std::size_t>(a.dim);
  std::vector<double> c(a.n * b.n);
  for_each_chunk(a.n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::span<const double> px(a.x.data() + i * d, d);
      const std::span<const double> pv(a.v.data() + i * d, d);
      for (std::size_t j = 0; j < b.n; ++j) {
        c[i * b.n + j] = metric.cost(px, pv, {b.x.data() + j * d, d}, {b.v.data() + j * d, d});
      }
    }
  });
  return c;
}

std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw std::invalid_argument("solve_assignment: cost is not n x n");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based rows/columns; column 0 is the virtual source of each augmentation.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), min_slack(n + 1);
  std::vector<std::size_t> row_of(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t row = 1; row <= n; ++row) {
    row_of[0] = row;
    std::size_t col = 0;
    std::fill(min_slack.begin(), min_slack.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col] = 1;
      const std::size_t i = row_of[col];
      double delta = kInf;
      std::size_t next = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double slack = cost[(i - 1) * n + (j - 1)] - u[i] - v[j];
        if (slack < min_slack[j]) {
          min_slack[j] = slack;
          way[j] = col;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          next = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      col = next;
    } while (row_of[col] != 0);
    do {
      const std::size_t prev = way[col];
      row_of[col] = row_of[prev];
      col = prev;
    } while (col != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[row_of[j] - 1] = j - 1;
  return assignment;
}

TransportResult w2_exact(const PointCloud& a, const PointCloud& b, const GroundMetric& metric,
                         std::size_t cap) {
  a.check();
  b.check();
  if (a.n != b.n) {
    throw std::invalid_argument("w2_exact: clouds have different sizes (" + std::to_string(a.n) +
                                " vs " + std::to_string(b.n) + ")");
  }
  if (a.n > cap) {
    throw std::invalid_argument("w2_exact: n = " + std::to_string(a.n) + " exceeds the cap of " +
                                std::to_string(cap) + "; use w2_entropic");
  }
  const std::vector<double> c = cost_matrix(a, b, metric);
  TransportResult r;
  r.plan.permutation = solve_assignment(c, a.n);
  double total = 0.0;
  for (std::size_t i = 0; i < a.n; ++i) total += c[i * a.n + r.plan.permutation[i]];
  r.plan.objective = total / static_cast<double>(a.n);
  r.distance = std::sqrt(std::max(0.0, r.plan.objective));
  return r;
}

EntropicResult w2_entropic(const PointCloud& a, const PointCloud& b, const GroundMetric& metric,
                           double reg_eps, std::size_t max_iter, double tol) {
  a.check();
  b.check();
  if (!(reg_eps > 0.0)) throw std::invalid_argument("w2_entropic: reg_eps must be positive");
  if (a.n != b.n) throw std::invalid_argument("w2_entropic: clouds have different sizes");
  const std::size_t n = a.n;
  const double weight = 1.0 / static_cast<double>(n);
  const double log_weight = std::log(weight);
  const std::vector<double> c = cost_matrix(a, b, metric);
  std::vector<double> f(n, 0.0), g(n, 0.0);

  // f_i = eps * (log w - logsumexp_j((g_j - c_ij) / eps)), making every row sum exactly w.
  auto update_f = [&](double eps) {
    for (std::size_t i = 0; i < n; ++i) {
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) peak = std::max(peak, (g[j] - c[i * n + j]) / eps);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += std::exp((g[j] - c[i * n + j]) / eps - peak);
      f[i] = eps * (log_weight - peak - std::log(s));
    }
  };
  auto update_g = [&](double eps) {
    for (std::size_t j = 0; j < n; ++j) {
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, (f[i] - c[i * n + j]) / eps);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::exp((f[i] - c[i * n + j]) / eps - peak);
      g[j] = eps * (log_weight - peak - std::log(s));
    }
  };
  // With f freshly updated, rows are exact; the violation lives in the columns.
  auto column_sums = [&](std::vector<double>& col) {
    col.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) col[j] += std::exp((f[i] + g[j] - c[i * n + j]) / reg_eps);
    }
  };
  auto violation = [&](const std::vector<double>& col) {
    double err = 0.0;
    for (double s : col) err += std::abs(s - weight);
    return err;
  };

  EntropicResult r;
  std::size_t budget = max_iter;

  // Warm start by annealing the regularisation down to reg_eps.
  const double c_max = *std::max_element(c.begin(), c.end());
  std::vector<double> schedule;
  for (double e = c_max; e > reg_eps; e *= 0.5) schedule.push_back(e);
  for (double e : schedule) {
    for (int k = 0; k < 10 && budget > 1; ++k, --budget, ++r.iterations) {
      update_f(e);
      update_g(e);
    }
  }

  std::vector<double> col;
  update_f(reg_eps);
  column_sums(col);
  double err = violation(col);
  // Plain Sinkhorn until the iterate is close enough for Newton steps to take over.
  while (err > std::max(tol, 1e-3) && budget > 0) {
    update_g(reg_eps);
    update_f(reg_eps);
    column_sums(col);
    err = violation(col);
    --budget;
    ++r.iterations;
  }

  // Damped Newton on the column potentials; f follows from g.
  Eigen::MatrixXd p(n, n), m(n, n);
  Eigen::VectorXd rhs(n);
  std::vector<double> trial_g, trial_f, trial_col;
  while (err > tol && budget > 0) {
    --budget;
    ++r.iterations;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            std::exp((f[i] + g[j] - c[i * n + j]) / reg_eps);
      }
    }
    // Jacobian of the column sums is (diag(col) - P^T P / w) / eps; ones span its kernel.
    m.noalias() = -p.transpose() * p / weight;
    for (std::size_t j = 0; j < n; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      m(jj, jj) += col[j];
      rhs(jj) = reg_eps * (weight - col[j]);
    }
    m.array() += weight * weight;
    const Eigen::VectorXd step = m.ldlt().solve(rhs);
    if (!step.allFinite()) break;

    bool improved = false;
    for (double scale = 1.0; scale >= 1.0 / 1024.0; scale *= 0.5) {
      trial_g = g;
      for (std::size_t j = 0; j < n; ++j) trial_g[j] += scale * step(static_cast<Eigen::Index>(j));
      std::swap(g, trial_g);
      trial_f = f;
      update_f(reg_eps);
      column_sums(trial_col);
      const double trial_err = violation(trial_col);
      if (trial_err < err) {
        err = trial_err;
        col = trial_col;
        improved = true;
        break;
      }
      std::swap(g, trial_g);
      f = trial_f;
    }
    if (!improved) break;
  }

  r.converged = err <= tol;
  r.marginal_error = err;
  r.plan.coupling.resize(n * n);
  double cost = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double q = std::exp((f[i] + g[j] - c[i * n + j]) / reg_eps);
      r.plan.coupling[i * n + j] = q;
      cost += q * c[i * n + j];
    }
  }
  r.plan.objective = cost;
  r.distance = std::sqrt(std::max(0.0, cost));
  return r;
}

Estimate coupled_qdistance(std::span<const CoupledPair> ensemble, const QForm& qform) {
  if (ensemble.empty()) throw std::invalid_argument("coupled_qdistance: empty ensemble");
  std::vector<double> samples;
  if (ensemble.size() >= 2) {
    for (const CoupledPair& p : ensemble) samples.push_back(difference_moments(p.a, p.b, qform).q);
  } else {
    const CoupledPair& p = ensemble.front();
    if (p.a.n != p.b.n || p.a.dim != p.b.dim) {
      throw std::invalid_argument("coupled_qdistance: states differ in shape");
    }
    const auto d = static_cast<std::size_t>(p.a.dim);
    for (std::size_t i = 0; i < p.a.n; ++i) {
      double q = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        q += qform(p.a.x[i * d + k] - p.b.x[i * d + k], p.a.v[i * d + k] - p.b.v[i * d + k]);
      }
      samples.push_back(q);
    }
  }
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  Estimate e;
  e.mean = mean;
  if (samples.size() > 1) {
    var /= static_cast<double>(samples.size() - 1);
    e.std_error = std::sqrt(var / static_cast<double>(samples.size()));
  }
  return e;
}

double second_moment(const PointCloud& cloud) {
  cloud.check();
  const auto sum = chunked_sum(cloud.n, 1, [&](std::size_t i, double* acc) {
    const auto d = static_cast<std::size_t>(cloud.dim);
    for (std::size_t k = 0; k < d; ++k) {
      acc[0] += cloud.x[i * d + k] * cloud.x[i * d + k] + cloud.v[i * d + k] * cloud.v[i * d + k];
    }
  });
  return sum[0] / static_cast<double>(cloud.n);
}

}  // namespace kmf
