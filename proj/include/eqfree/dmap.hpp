#pragma once

#include <lapacke.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "eqfree/dataset.hpp"
#include "eqfree/errors.hpp"
#include "eqfree/io.hpp"
#include "eqfree/parallel.hpp"

namespace eqfree {

/// Diffusion-map embedding of one dataset. Stores only the selected
/// eigenpairs: eigenvalues descending in (0,1), one unit-norm eigenvector
/// per column, the 1-based raw indices they were picked from, and the
/// hash of the dataset the map was built on.
struct DiffusionMap {
  double epsilon = 0.0;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  std::vector<int> selected_indices;
  std::string dataset_fingerprint;

  int dimension() const { return int(eigenvectors.cols()); }
  int rows() const { return int(eigenvectors.rows()); }
};

/// Outcome of the recursive eigenvector selection. residuals[j-1] is r_j;
/// the vector can be shorter than max_candidates when the scan stopped
/// early. d counts the residuals at or above the threshold.
struct SelectionReport {
  std::vector<double> residuals;
  int d = 0;
  double threshold = 0.5;
};

struct EmbedOptions {
  int max_candidates = 20;
  double threshold = 0.5;
};

/// Euclidean distance between every pair of rows. Symmetric by
/// construction: each pair is computed once and mirrored.
inline Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& rows) {
  const int m = int(rows.rows());
  if (m < 2) throw std::invalid_argument("pairwise_distances needs at least two rows");
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m, m);
  parallel_for_blocks(std::size_t(m), [&](std::size_t begin, std::size_t end) {
    for (std::size_t bi = begin; bi < end; ++bi) {
      const int i = int(bi);
      for (int j = 0; j < i; ++j) {
        const double dist = (rows.row(i) - rows.row(j)).norm();
        d(i, j) = dist;
        d(j, i) = dist;
      }
    }
  }, 8);
  return d;
}

inline Eigen::MatrixXd pairwise_distances(const Dataset& data) {
  return pairwise_distances(data.matrix());
}

/// Kernel scale: five times the median pairwise distance, the median taken
/// over the strict lower triangle (even count: mean of the two central
/// order statistics). A zero median leaves the kernel degenerate.
inline double select_epsilon(const Eigen::MatrixXd& distances) {
  const int m = int(distances.rows());
  if (m < 2 || distances.cols() != m)
    throw std::invalid_argument("select_epsilon needs a square matrix of order >= 2");
  std::vector<double> lower;
  lower.reserve(std::size_t(m) * std::size_t(m - 1) / 2);
  for (int i = 1; i < m; ++i)
    for (int j = 0; j < i; ++j) lower.push_back(distances(i, j));
  std::sort(lower.begin(), lower.end());
  const std::size_t n = lower.size();
  const double median =
      n % 2 == 1 ? lower[n / 2] : 0.5 * (lower[n / 2 - 1] + lower[n / 2]);
  if (median == 0.0)
    throw DegenerateDataError("median pairwise distance is zero; dataset rows are degenerate");
  return 5.0 * median;
}

/// Row-normalized Gaussian kernel M_ij = exp(-d_ij^2/eps^2) / row sum.
/// The diagonal kernel entry is 1, so every row sum is at least 1.
inline Eigen::MatrixXd markov_matrix(const Eigen::MatrixXd& distances, double epsilon) {
  const int m = int(distances.rows());
  if (distances.cols() != m) throw std::invalid_argument("distance matrix must be square");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  Eigen::MatrixXd markov(m, m);
  const double inv_eps2 = 1.0 / (epsilon * epsilon);
  parallel_for_blocks(std::size_t(m), [&](std::size_t begin, std::size_t end) {
    for (std::size_t bi = begin; bi < end; ++bi) {
      const int i = int(bi);
      markov.row(i) = (-inv_eps2 * distances.row(i).cwiseAbs2()).array().exp().matrix();
      markov.row(i) /= markov.row(i).sum();
    }
  }, 8);
  return markov;
}

/// Top non-trivial eigenpairs of a kernel Markov matrix, eigenvalues
/// descending, eigenvectors unit-norm with the largest-magnitude
/// component made positive.
struct Spectrum {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
};

/// Computes the top n_eigs+1 eigenpairs of markov and drops the leading
/// trivial pair (eigenvalue 1, constant eigenvector).
///
/// The matrix is row-normalized from a symmetric kernel, so it satisfies
/// detailed balance q_i M_ij = q_j M_ji with q the kernel row sums. The
/// ratios q_j/q_1 = M_1j/M_j1 recover q up to scale, and the conjugate
/// S = Q^{1/2} M Q^{-1/2} is symmetric; solving S symmetrically keeps the
/// spectrum real and the eigenvectors orthogonal before the back-map.
inline Spectrum spectrum(const Eigen::MatrixXd& markov, int n_eigs) {
  const int m = int(markov.rows());
  if (markov.cols() != m) throw std::invalid_argument("Markov matrix must be square");
  if (n_eigs < 1) throw std::invalid_argument("n_eigs must be at least 1");
  if (n_eigs >= m) throw std::invalid_argument("n_eigs must be smaller than the matrix order");

  Eigen::VectorXd q(m);
  q(0) = 1.0;
  for (int j = 1; j < m; ++j) {
    const double forward = markov(0, j);
    const double backward = markov(j, 0);
    if (!(forward > 0.0) || !(backward > 0.0))
      throw DegenerateDataError("Markov matrix has a non-positive coupling; cannot symmetrize");
    q(j) = forward / backward;
  }
  const Eigen::VectorXd sq = q.cwiseSqrt();

  Eigen::MatrixXd s(m, m);
  for (int jj = 0; jj < m; ++jj)
    for (int i = 0; i < m; ++i) s(i, jj) = sq(i) * markov(i, jj) / sq(jj);
  const Eigen::MatrixXd sym = 0.5 * (s + s.transpose());

  const int want = n_eigs + 1;
  Eigen::MatrixXd a = sym;
  Eigen::VectorXd w(m);
  Eigen::MatrixXd z(m, want);
  std::vector<lapack_int> isuppz(2 * std::size_t(want));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dsyevr(
      LAPACK_COL_MAJOR, 'V', 'I', 'U', lapack_int(m), a.data(), lapack_int(m),
      0.0, 0.0, lapack_int(m - want + 1), lapack_int(m), 0.0, &found, w.data(),
      z.data(), lapack_int(m), isuppz.data());
  if (info != 0)
    throw std::runtime_error("symmetric eigensolver failed (dsyevr info=" + std::to_string(info) + ")");
  if (found != want)
    throw std::runtime_error("symmetric eigensolver returned " + std::to_string(found) +
                             " of " + std::to_string(want) + " requested eigenpairs");

  Spectrum out;
  out.eigenvalues.resize(n_eigs);
  out.eigenvectors.resize(m, n_eigs);
  const Eigen::VectorXd inv_sq = sq.cwiseInverse();
  for (int k = 0; k < n_eigs; ++k) {
    const int src = want - 2 - k;
    out.eigenvalues(k) = w(src);
    Eigen::VectorXd psi = z.col(src).cwiseProduct(inv_sq);
    psi /= psi.norm();
    Eigen::Index imax = 0;
    psi.cwiseAbs().maxCoeff(&imax);
    if (psi(imax) < 0.0) psi = -psi;
    out.eigenvectors.col(k) = psi;
  }
  return out;
}

namespace detail {

/// Median pairwise distance between rows of x (strict lower triangle,
/// even count: mean of the central two). Zero when all rows coincide.
inline double median_row_distance(const Eigen::MatrixXd& x) {
  const int m = int(x.rows());
  std::vector<double> lower;
  lower.reserve(std::size_t(m) * std::size_t(m - 1) / 2);
  for (int i = 1; i < m; ++i)
    for (int j = 0; j < i; ++j) lower.push_back((x.row(i) - x.row(j)).norm());
  std::sort(lower.begin(), lower.end());
  const std::size_t n = lower.size();
  if (n == 0) return 0.0;
  return n % 2 == 1 ? lower[n / 2] : 0.5 * (lower[n / 2 - 1] + lower[n / 2]);
}

/// Leave-one-out locally weighted linear fit of eigenvector j (1-based)
/// on eigenvectors 1..j-1; returns the normalized fit residual r_j.
/// Reports 0 with a warning when the weighted normal equations are
/// singular (fewer than j distinct neighbors).
inline double candidate_residual(const Eigen::MatrixXd& eigenvectors, int j,
                                 double fallback_scale) {
  const int m = int(eigenvectors.rows());
  const int p = j - 1;
  const auto x = eigenvectors.leftCols(p);
  const auto y = eigenvectors.col(j - 1);

  // The weights must be local on the scale of the predecessor embedding
  // itself, not of the original data; a third of the embedding's median
  // pairwise distance keeps each fit confined to a neighborhood.
  double scale = median_row_distance(x) / 3.0;
  if (!(scale > 0.0)) scale = fallback_scale;
  const bool degenerate_scale = !(scale > 0.0);

  Eigen::MatrixXd w2(m, m);
  if (!degenerate_scale) {
    const double inv_scale2 = 1.0 / (scale * scale);
    for (int i = 1; i < m; ++i)
      for (int k = 0; k < i; ++k) {
        const double weight = std::exp(-inv_scale2 * (x.row(i) - x.row(k)).squaredNorm());
        w2(i, k) = weight;
        w2(k, i) = weight;
      }
  }

  double num = 0.0;
  double den = 0.0;
  bool singular = degenerate_scale;
  Eigen::MatrixXd h(p + 1, p + 1);
  Eigen::VectorXd g(p + 1);
  Eigen::VectorXd b(p + 1);
  for (int held = 0; held < m && !singular; ++held) {
    h.setZero();
    g.setZero();
    for (int i = 0; i < m; ++i) {
      if (i == held) continue;
      const double weight = w2(i, held);
      if (weight == 0.0) continue;
      b(0) = 1.0;
      b.tail(p) = x.row(i).transpose();
      h.selfadjointView<Eigen::Lower>().rankUpdate(b, weight);
      g += weight * y(i) * b;
    }
    const Eigen::LDLT<Eigen::MatrixXd, Eigen::Lower> ldlt(h);
    const Eigen::VectorXd pivots = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success ||
        !(pivots.minCoeff() > pivots.maxCoeff() * 1e-13)) {
      singular = true;
      break;
    }
    const Eigen::VectorXd theta = ldlt.solve(g);
    if (!theta.allFinite()) {
      singular = true;
      break;
    }
    const double predicted = theta(0) + x.row(held).dot(theta.tail(p));
    num += (y(held) - predicted) * (y(held) - predicted);
    den += y(held) * y(held);
  }
  if (singular) {
    std::cerr << "select_eigenvectors: singular weighted fit for candidate " << j
              << "; reporting r=0\n";
    return 0.0;
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

}  // namespace detail

/// Recursive selection of the eigenvectors that open genuinely new
/// directions. r_1 := 1 by convention; each later candidate is fit on all
/// of its predecessors and scored by the leave-one-out residual, so
/// harmonics of earlier eigenvectors score near zero. The scan stops once
/// three consecutive candidates fall below the threshold. epsilon is the
/// weight scale of last resort, used only when the predecessor embedding
/// has zero median spread.
inline SelectionReport select_eigenvectors(const Eigen::MatrixXd& eigenvectors,
                                           double epsilon, int max_candidates = 20,
                                           double threshold = 0.5) {
  if (max_candidates < 1) throw std::invalid_argument("max_candidates must be at least 1");
  if (max_candidates > int(eigenvectors.cols()))
    throw std::invalid_argument("max_candidates exceeds the available eigenvectors");

  SelectionReport report;
  report.threshold = threshold;
  report.residuals.reserve(std::size_t(max_candidates));
  report.residuals.push_back(1.0);
  int below = report.residuals[0] < threshold ? 1 : 0;
  for (int j = 2; j <= max_candidates && below < 3; ++j) {
    const double r = detail::candidate_residual(eigenvectors, j, epsilon);
    report.residuals.push_back(r);
    below = r < threshold ? below + 1 : 0;
  }
  for (double r : report.residuals)
    if (r >= threshold) ++report.d;
  return report;
}

/// Full pipeline: distances, kernel scale, Markov normalization,
/// spectrum, and eigenvector selection. The returned map keeps only the
/// selected eigenpairs and is bound to the dataset by content hash.
inline std::pair<DiffusionMap, SelectionReport> embed(const Dataset& data,
                                                      const EmbedOptions& options = {}) {
  const int m = data.rows();
  if (m < 2) throw std::invalid_argument("embed needs at least two dataset rows");
  const Eigen::MatrixXd distances = pairwise_distances(data);
  const double epsilon = select_epsilon(distances);
  const Eigen::MatrixXd markov = markov_matrix(distances, epsilon);
  const int n_candidates = std::min(options.max_candidates, m - 1);
  const Spectrum spec = spectrum(markov, n_candidates);
  SelectionReport report =
      select_eigenvectors(spec.eigenvectors, epsilon, n_candidates, options.threshold);

  DiffusionMap map;
  map.epsilon = epsilon;
  map.dataset_fingerprint = fingerprint(data);
  for (int j = 1; j <= int(report.residuals.size()); ++j)
    if (report.residuals[std::size_t(j - 1)] >= options.threshold)
      map.selected_indices.push_back(j);
  const int d = int(map.selected_indices.size());
  map.eigenvalues.resize(d);
  map.eigenvectors.resize(m, d);
  for (int k = 0; k < d; ++k) {
    const int src = map.selected_indices[std::size_t(k)] - 1;
    map.eigenvalues(k) = spec.eigenvalues(src);
    map.eigenvectors.col(k) = spec.eigenvectors.col(src);
  }
  return {std::move(map), std::move(report)};
}

/// CSV matrix of eigenvectors (rows x D) plus a JSON sidecar at
/// path+".json" carrying the kernel scale, eigenvalues, selected indices,
/// and the dataset fingerprint.
inline void save(const DiffusionMap& map, const std::string& path) {
  write_csv_matrix(path, map.eigenvectors);
  nlohmann::json j;
  j["schema_version"] = 1;
  j["epsilon"] = map.epsilon;
  j["eigenvalues"] = std::vector<double>(map.eigenvalues.data(),
                                         map.eigenvalues.data() + map.eigenvalues.size());
  j["selected_indices"] = map.selected_indices;
  j["dataset_fingerprint"] = map.dataset_fingerprint;
  write_text_file(path + ".json", j.dump(2) + "\n");
}

inline DiffusionMap load_map(const std::string& path) {
  const Eigen::MatrixXd m = read_csv_matrix(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path + ".json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ".json: " + e.what());
  }

  DiffusionMap out;
  std::vector<double> eigenvalues;
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != 1)
      throw SchemaError(path + ".json: unsupported schema_version " + std::to_string(version));
    out.epsilon = j.at("epsilon").get<double>();
    eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
    out.selected_indices = j.at("selected_indices").get<std::vector<int>>();
    out.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ".json: " + e.what());
  }

  if (!(out.epsilon > 0.0))
    throw SchemaError(path + ".json: epsilon must be positive");
  if (int(eigenvalues.size()) != m.cols() || int(out.selected_indices.size()) != m.cols())
    throw SchemaError(path + ": eigenvector matrix has " + std::to_string(m.cols()) +
                      " columns but the sidecar lists " + std::to_string(eigenvalues.size()) +
                      " eigenvalues and " + std::to_string(out.selected_indices.size()) +
                      " selected indices");
  out.eigenvalues = Eigen::Map<const Eigen::VectorXd>(eigenvalues.data(),
                                                      Eigen::Index(eigenvalues.size()));
  out.eigenvectors = m;
  return out;
}

}  // namespace eqfree
