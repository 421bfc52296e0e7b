#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "eqfree/dataset.hpp"
#include "eqfree/dmap.hpp"
#include "eqfree/errors.hpp"
#include "eqfree/io.hpp"
#include "eqfree/model.hpp"
#include "eqfree/parallel.hpp"

extern "C" {
void openblas_set_num_threads(int);
int openblas_get_num_threads(void);
}

namespace eqfree {

/// Tolerances for the simplex optimizer behind the lifting operator.
struct LiftSettings {
  double tolerance = 1e-10;
  int max_evals = 2000;
  double warn_threshold = 1e-6;
};

/// A diffusion map together with the dataset it was built from, ready to
/// restrict and lift. rows caches data.matrix(); the factory checks the
/// fingerprint so the pair cannot silently mix a map with foreign data.
struct OperatorPair {
  DiffusionMap dmap;
  Dataset data;
  int lift_k = 0;
  LiftSettings opt_settings;
  Eigen::MatrixXd rows;
};

/// Outcome of one lift: the microstate, the convex weights over the K
/// nearest dataset rows, and the achieved objective value. degraded marks
/// lifts whose residual stayed above the warn threshold after the full
/// optimization budget.
struct LiftResult {
  HeadwayProfile microstate;
  Eigen::VectorXd coefficients;
  std::vector<int> neighbor_indices;
  double residual = 0.0;
  bool degraded = false;
};

/// Per-case restriction or lift-identity errors plus aggregates. coords
/// holds the reference embedding of each case, one row per case.
struct ValidationReport {
  Eigen::MatrixXd coords;
  Eigen::VectorXd abs_error;
  Eigen::VectorXd rel_error;
  double mean_rel_error = 0.0;
  double max_abs_error = 0.0;
};

/// Builds an operator pair, validating the map/dataset binding. lift_k of
/// zero picks the default for the embedding dimension (3 for D=1, 8 for
/// D=2, D+1 otherwise); explicit values must satisfy K >= D+1.
inline OperatorPair make_operator_pair(const DiffusionMap& map, const Dataset& data,
                                       int lift_k = 0, const LiftSettings& settings = {}) {
  if (map.dataset_fingerprint != fingerprint(data))
    throw std::invalid_argument("diffusion map was not built from this dataset (fingerprint mismatch)");
  const int d = map.dimension();
  if (d < 1) throw std::invalid_argument("diffusion map has no selected eigenvectors");
  if (map.rows() != data.rows())
    throw std::invalid_argument("diffusion map row count does not match the dataset");
  if (lift_k == 0) lift_k = d == 1 ? 3 : d == 2 ? 8 : d + 1;
  if (lift_k < d + 1)
    throw std::invalid_argument("lift_k must be at least D+1 = " + std::to_string(d + 1));
  if (lift_k > data.rows())
    throw std::invalid_argument("lift_k exceeds the number of dataset rows");
  OperatorPair ops;
  ops.dmap = map;
  ops.data = data;
  ops.lift_k = lift_k;
  ops.opt_settings = settings;
  ops.rows = data.matrix();
  return ops;
}

namespace detail {

/// Kernel-weighted extension of the eigenvectors to a new point x:
/// psi_new = (1/lambda) sum_m [D_new,m / sum_j D_new,j] psi_m.
/// Distances are evaluated exactly as in pairwise_distances, so an
/// in-sample x reproduces the Markov row bitwise.
inline Eigen::VectorXd nystrom(const Eigen::MatrixXd& rows, const Eigen::VectorXd& eigenvalues,
                               const Eigen::MatrixXd& eigenvectors, double epsilon,
                               const Eigen::VectorXd& x) {
  const int m = int(rows.rows());
  const double inv_eps2 = 1.0 / (epsilon * epsilon);
  Eigen::VectorXd w(m);
  for (int i = 0; i < m; ++i) {
    const double dist = (rows.row(i) - x.transpose()).norm();
    w(i) = std::exp(-inv_eps2 * (dist * dist));
  }
  const double total = w.sum();
  if (total < 1e-300)
    throw OutOfSupportError("profile lies outside the dataset support; every kernel weight underflows");
  const Eigen::VectorXd p = w / total;
  return (p.transpose() * eigenvectors).transpose().cwiseQuotient(eigenvalues);
}

}  // namespace detail

/// Restriction operator: embeds a microstate via the kernel-weighted
/// eigenvector extension. Exact (to floating point) on dataset rows.
inline Eigen::VectorXd restrict(const OperatorPair& ops, const HeadwayProfile& profile) {
  if (int(profile.headways.size()) != ops.data.params.n_cars)
    throw std::invalid_argument("profile length does not match the dataset");
  return detail::nystrom(ops.rows, ops.dmap.eigenvalues, ops.dmap.eigenvectors,
                         ops.dmap.epsilon, profile.headways);
}

namespace detail {

struct NmResult {
  Eigen::VectorXd point;
  double value = std::numeric_limits<double>::infinity();
};

/// Nelder-Mead direct search, deterministic, no randomness. Stops when
/// the best value reaches tol, the evaluation budget runs out, or the
/// simplex collapses.
inline NmResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& start, double tol, int max_evals) {
  const int n = int(start.size());
  if (n == 0) return NmResult{start, f(start)};
  const int vertices = n + 1;
  std::vector<Eigen::VectorXd> x(std::size_t(vertices), start);
  std::vector<double> fx(static_cast<std::size_t>(vertices));
  int evals = 0;
  for (int i = 1; i < vertices; ++i) x[std::size_t(i)](i - 1) += 0.5;
  for (int i = 0; i < vertices; ++i) {
    fx[std::size_t(i)] = f(x[std::size_t(i)]);
    ++evals;
  }
  std::vector<int> order(static_cast<std::size_t>(vertices));

  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return fx[std::size_t(a)] < fx[std::size_t(b)]; });
    const int best = order[0];
    const int worst = order[std::size_t(vertices - 1)];
    const int second_worst = order[std::size_t(vertices - 2)];
    if (fx[std::size_t(best)] <= tol || evals >= max_evals) break;

    double spread = 0.0;
    for (int i = 0; i < vertices; ++i)
      spread = std::max(spread, (x[std::size_t(i)] - x[std::size_t(best)]).cwiseAbs().maxCoeff());
    if (spread <= 1e-12 &&
        fx[std::size_t(worst)] - fx[std::size_t(best)] <= 1e-15 * (1.0 + std::abs(fx[std::size_t(best)])))
      break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < vertices; ++i)
      if (i != worst) centroid += x[std::size_t(i)];
    centroid /= double(vertices - 1);

    const Eigen::VectorXd reflected = centroid + (centroid - x[std::size_t(worst)]);
    const double fr = f(reflected);
    ++evals;
    if (fr < fx[std::size_t(best)]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - x[std::size_t(worst)]);
      const double fe = f(expanded);
      ++evals;
      if (fe < fr) {
        x[std::size_t(worst)] = expanded;
        fx[std::size_t(worst)] = fe;
      } else {
        x[std::size_t(worst)] = reflected;
        fx[std::size_t(worst)] = fr;
      }
      continue;
    }
    if (fr < fx[std::size_t(second_worst)]) {
      x[std::size_t(worst)] = reflected;
      fx[std::size_t(worst)] = fr;
      continue;
    }
    const Eigen::VectorXd contracted =
        fr < fx[std::size_t(worst)] ? centroid + 0.5 * (reflected - centroid)
                                    : centroid + 0.5 * (x[std::size_t(worst)] - centroid);
    const double fc = f(contracted);
    ++evals;
    if (fc < std::min(fr, fx[std::size_t(worst)])) {
      x[std::size_t(worst)] = contracted;
      fx[std::size_t(worst)] = fc;
      continue;
    }
    for (int i = 0; i < vertices; ++i) {
      if (i == best) continue;
      x[std::size_t(i)] = x[std::size_t(best)] + 0.5 * (x[std::size_t(i)] - x[std::size_t(best)]);
      fx[std::size_t(i)] = f(x[std::size_t(i)]);
      ++evals;
    }
  }

  NmResult out;
  int best = 0;
  for (int i = 1; i < vertices; ++i)
    if (fx[std::size_t(i)] < fx[std::size_t(best)]) best = i;
  out.point = x[std::size_t(best)];
  out.value = fx[std::size_t(best)];
  return out;
}

/// Numerically stable softmax over (u, 0); reaches simplex vertices
/// exactly once the trailing logits underflow.
inline Eigen::VectorXd simplex_from_logits(const Eigen::VectorXd& u) {
  const int k = int(u.size()) + 1;
  Eigen::VectorXd logits(k);
  logits.head(k - 1) = u;
  logits(k - 1) = 0.0;
  const Eigen::ArrayXd shifted = logits.array() - logits.maxCoeff();
  const Eigen::ArrayXd e = shifted.exp();
  return (e / e.sum()).matrix();
}

inline Eigen::VectorXd logits_from_simplex(const Eigen::VectorXd& b) {
  const int k = int(b.size());
  const double floor = 1e-12;
  Eigen::VectorXd u(k - 1);
  const double ref = std::log(std::max(b(k - 1), floor));
  for (int i = 0; i + 1 < k; ++i) u(i) = std::log(std::max(b(i), floor)) - ref;
  return u;
}

}  // namespace detail

/// Lifting operator: convex interpolation over the K dataset rows whose
/// embeddings are nearest the target (ties by smaller row index). The
/// simplex is parametrized through a softmax of K-1 logits and searched
/// by Nelder-Mead from three deterministic starts: uniform weights, the
/// vertex of the nearest neighbor, and inverse-distance weights. Each
/// start is pre-evaluated and accepted outright if it already meets the
/// tolerance; afterwards the first restart reaching tolerance wins,
/// otherwise the best value found overall.
inline LiftResult lift(const OperatorPair& ops, const Eigen::VectorXd& target) {
  const int d = ops.dmap.dimension();
  if (int(target.size()) != d)
    throw std::invalid_argument("lift target dimension does not match the embedding");
  if (!target.allFinite()) throw std::invalid_argument("lift target must be finite");

  const int m = ops.data.rows();
  const int k = ops.lift_k;
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd dist(m);
  for (int i = 0; i < m; ++i)
    dist(i) = (ops.dmap.eigenvectors.row(i).transpose() - target).norm();
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (dist(a) != dist(b)) return dist(a) < dist(b);
    return a < b;
  });
  std::vector<int> neighbors(order.begin(), order.begin() + k);

  Eigen::MatrixXd xk(k, ops.data.params.n_cars);
  for (int i = 0; i < k; ++i) xk.row(i) = ops.rows.row(neighbors[std::size_t(i)]);

  const auto objective = [&](const Eigen::VectorXd& b) -> double {
    const Eigen::VectorXd micro = xk.transpose() * b;
    try {
      return (target - detail::nystrom(ops.rows, ops.dmap.eigenvalues, ops.dmap.eigenvectors,
                                       ops.dmap.epsilon, micro))
          .norm();
    } catch (const OutOfSupportError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(Eigen::VectorXd::Constant(k, 1.0 / k));
  Eigen::VectorXd vertex = Eigen::VectorXd::Zero(k);
  vertex(0) = 1.0;
  starts.push_back(vertex);
  Eigen::VectorXd inv_dist(k);
  for (int i = 0; i < k; ++i)
    inv_dist(i) = 1.0 / (dist(neighbors[std::size_t(i)]) + 1e-12 * (1.0 + dist(order[std::size_t(m - 1)])));
  starts.push_back(inv_dist / inv_dist.sum());

  const LiftSettings& opt = ops.opt_settings;
  Eigen::VectorXd best_b = starts[0];
  double best_f = std::numeric_limits<double>::infinity();
  bool accepted = false;
  for (const Eigen::VectorXd& b : starts) {
    const double f = objective(b);
    if (f < best_f) {
      best_f = f;
      best_b = b;
    }
    if (f <= opt.tolerance) {
      accepted = true;
      break;
    }
  }
  if (!accepted && k > 1) {
    for (const Eigen::VectorXd& b : starts) {
      const detail::NmResult run =
          detail::nelder_mead([&](const Eigen::VectorXd& u) { return objective(detail::simplex_from_logits(u)); },
                              detail::logits_from_simplex(b), opt.tolerance, opt.max_evals);
      if (run.value < best_f) {
        best_f = run.value;
        best_b = detail::simplex_from_logits(run.point);
      }
      if (best_f <= opt.tolerance) break;
    }
  }

  LiftResult out;
  out.coefficients = best_b;
  out.neighbor_indices = neighbors;
  out.microstate.headways = xk.transpose() * best_b;
  out.residual = best_f;
  out.degraded = best_f > opt.warn_threshold;
  return out;
}

/// Leave-one-out accuracy of the restriction operator: for each row the
/// whole map pipeline is rebuilt without it (distances, kernel scale,
/// spectrum), the subset eigenvectors are matched and sign-aligned to the
/// full map, and the removed row is re-embedded through the kernel
/// extension. Errors compare against the full map's embedding of the row.
inline ValidationReport validate_restriction_loo(const Dataset& data,
                                                 const EmbedOptions& options = {}) {
  const int m = data.rows();
  if (m < 3) throw std::invalid_argument("leave-one-out validation needs at least three rows");
  const auto [map, report] = embed(data, options);
  const int d = map.dimension();
  const Eigen::MatrixXd distances = pairwise_distances(data);
  const int n_eigs = std::min(map.selected_indices.back() + 1, m - 2);

  ValidationReport out;
  out.coords = map.eigenvectors;
  out.abs_error.resize(m);
  out.rel_error.resize(m);

  const int blas_threads = openblas_get_num_threads();
  openblas_set_num_threads(1);
  try {
    parallel_for_blocks(std::size_t(m), [&](std::size_t begin, std::size_t end) {
      Eigen::MatrixXd sub(m - 1, m - 1);
      std::vector<double> lower;
      lower.reserve(std::size_t(m - 1) * std::size_t(m - 2) / 2);
      for (std::size_t bi = begin; bi < end; ++bi) {
        const int held = int(bi);
        for (int i = 0, si = 0; i < m; ++i) {
          if (i == held) continue;
          for (int j = 0, sj = 0; j < m; ++j) {
            if (j == held) continue;
            sub(si, sj) = distances(i, j);
            ++sj;
          }
          ++si;
        }

        lower.clear();
        for (int i = 1; i < m - 1; ++i)
          for (int j = 0; j < i; ++j) lower.push_back(sub(i, j));
        const std::size_t half = lower.size() / 2;
        std::nth_element(lower.begin(), lower.begin() + std::ptrdiff_t(half), lower.end());
        double median = lower[half];
        if (lower.size() % 2 == 0) {
          std::nth_element(lower.begin(), lower.begin() + std::ptrdiff_t(half - 1),
                           lower.begin() + std::ptrdiff_t(half));
          median = 0.5 * (median + lower[half - 1]);
        }
        if (median == 0.0)
          throw DegenerateDataError("leave-one-out subset has zero median distance");
        const double eps = 5.0 * median;

        const Spectrum spec = spectrum(markov_matrix(sub, eps), n_eigs);

        // match subset eigenvectors to the full map's selected columns by
        // correlation over the shared rows; signs follow the full map
        Eigen::VectorXd lambdas(d);
        Eigen::MatrixXd psis(m - 1, d);
        std::vector<bool> used(std::size_t(n_eigs), false);
        for (int l = 0; l < d; ++l) {
          Eigen::VectorXd full_dropped(m - 1);
          for (int i = 0, si = 0; i < m; ++i) {
            if (i == held) continue;
            full_dropped(si++) = map.eigenvectors(i, l);
          }
          int pick = -1;
          double pick_corr = 0.0;
          double pick_dot = 0.0;
          for (int c = 0; c < n_eigs; ++c) {
            if (used[std::size_t(c)]) continue;
            const double dot = spec.eigenvectors.col(c).dot(full_dropped);
            const double corr = std::abs(dot) / (spec.eigenvectors.col(c).norm() * full_dropped.norm());
            if (pick < 0 || corr > pick_corr) {
              pick = c;
              pick_corr = corr;
              pick_dot = dot;
            }
          }
          used[std::size_t(pick)] = true;
          lambdas(l) = spec.eigenvalues(pick);
          psis.col(l) = pick_dot < 0.0 ? (-spec.eigenvectors.col(pick)).eval()
                                       : spec.eigenvectors.col(pick);
        }

        // kernel extension of the subset map to the removed row
        Eigen::VectorXd w(m - 1);
        const double inv_eps2 = 1.0 / (eps * eps);
        for (int i = 0, si = 0; i < m; ++i) {
          if (i == held) continue;
          const double dist = distances(held, i);
          w(si++) = std::exp(-inv_eps2 * (dist * dist));
        }
        const double total = w.sum();
        if (total < 1e-300)
          throw OutOfSupportError("removed row lies outside the subset support");
        const Eigen::VectorXd p = w / total;
        const Eigen::VectorXd approx =
            (p.transpose() * psis).transpose().cwiseQuotient(lambdas);

        const Eigen::VectorXd reference = map.eigenvectors.row(held).transpose();
        out.abs_error(held) = (reference - approx).norm();
        out.rel_error(held) = out.abs_error(held) / reference.norm();
      }
    });
  } catch (...) {
    openblas_set_num_threads(blas_threads);
    throw;
  }
  openblas_set_num_threads(blas_threads);

  out.mean_rel_error = out.rel_error.mean();
  out.max_abs_error = out.abs_error.maxCoeff();
  return out;
}

/// Accuracy of the round trip R(L(target)) over a set of macrostates,
/// one per row of targets; defaults to the in-sample embeddings.
inline ValidationReport validate_lift_identity(const OperatorPair& ops,
                                               const Eigen::MatrixXd& targets) {
  if (int(targets.cols()) != ops.dmap.dimension())
    throw std::invalid_argument("target columns do not match the embedding dimension");
  const int n = int(targets.rows());
  ValidationReport out;
  out.coords = targets;
  out.abs_error.resize(n);
  out.rel_error.resize(n);
  parallel_for_blocks(std::size_t(n), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Eigen::VectorXd target = targets.row(int(i)).transpose();
      const LiftResult res = lift(ops, target);
      out.abs_error(int(i)) = res.residual;
      const double scale = target.norm();
      out.rel_error(int(i)) = scale > 0.0 ? res.residual / scale : res.residual;
    }
  });
  out.mean_rel_error = out.rel_error.mean();
  out.max_abs_error = out.abs_error.maxCoeff();
  return out;
}

inline ValidationReport validate_lift_identity(const OperatorPair& ops) {
  return validate_lift_identity(ops, ops.dmap.eigenvectors);
}

/// CSV dump of a validation report: case index, embedding coordinates,
/// absolute error, relative error.
inline void save(const ValidationReport& report, const std::string& path) {
  const int n = int(report.abs_error.size());
  Eigen::MatrixXd table(n, report.coords.cols() + 3);
  for (int i = 0; i < n; ++i) {
    table(i, 0) = double(i);
    table.row(i).segment(1, report.coords.cols()) = report.coords.row(i);
    table(i, report.coords.cols() + 1) = report.abs_error(i);
    table(i, report.coords.cols() + 2) = report.rel_error(i);
  }
  write_csv_matrix(path, table);
}

}  // namespace eqfree
