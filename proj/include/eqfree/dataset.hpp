#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "eqfree/errors.hpp"
#include "eqfree/hash.hpp"
#include "eqfree/io.hpp"
#include "eqfree/model.hpp"
#include "eqfree/parallel.hpp"
#include "eqfree/rng.hpp"

namespace eqfree {

struct SamplingConfig {
  int n_samples = 5000;
  double amplitude_min = 0.0;
  double amplitude_max = 4.5;
  double v0_min = 0.96;
  double v0_max = 1.1;
  double stop_time_mean = 700.0;
  double stop_time_shift = 200.0;
  std::uint64_t rng_seed = 0;
};

inline void validate(const SamplingConfig& c) {
  if (c.n_samples <= 0) throw ConfigError("n_samples must be positive");
  if (c.amplitude_max < c.amplitude_min) throw ConfigError("empty amplitude range");
  if (c.v0_max < c.v0_min) throw ConfigError("empty v0 range");
  if (!(c.stop_time_mean > 0)) throw ConfigError("stop_time_mean must be positive");
  if (c.stop_time_shift < 0) throw ConfigError("stop_time_shift must be nonnegative");
}

struct RowMeta {
  double amplitude = 0;
  double v0 = 0;
  double t_stop = 0;
};

/// Sampled headway profiles with their generation provenance. Velocities are
/// deliberately not stored; every consumer works on headways alone.
struct Dataset {
  std::vector<HeadwayProfile> profiles;
  std::vector<RowMeta> meta;
  bool aligned = false;
  ModelParams params;
  SamplingConfig config;

  int rows() const { return int(profiles.size()); }

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m(rows(), params.n_cars);
    for (int i = 0; i < rows(); ++i) m.row(i) = profiles[i].headways.transpose();
    return m;
  }
};

/// Content hash of the headway matrix; binds derived objects (embeddings,
/// operators) to the exact dataset they were built from.
inline std::string fingerprint(const Dataset& data) {
  return sha1_hex(csv_from_matrix(data.matrix()));
}

/// Draws per row, in substream order: amplitude, v0, stopping time. Each row
/// owns the substream (rng_seed, row), so results are independent of the
/// worker partition and bit-identical across runs.
inline Dataset generate(const ModelParams& params, const SamplingConfig& config) {
  validate(config);
  Dataset out;
  out.params = params;
  out.config = config;
  out.aligned = false;
  const std::size_t m = std::size_t(config.n_samples);
  out.profiles.resize(m);
  out.meta.resize(m);
  parallel_for_blocks(
      m,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          SplitMix64 rng = SplitMix64::substream(config.rng_seed, i);
          RowMeta meta;
          meta.amplitude = rng.uniform(config.amplitude_min, config.amplitude_max);
          meta.v0 = rng.uniform(config.v0_min, config.v0_max);
          meta.t_stop = rng.shifted_exponential(config.stop_time_mean, config.stop_time_shift);
          ModelParams p = params;
          p.v0 = meta.v0;
          try {
            const MicroState s0 = sinusoidal_perturbation_state(p, meta.amplitude);
            out.profiles[i] = headways(evolve(s0, meta.t_stop, p), p);
          } catch (const std::exception& err) {
            throw std::runtime_error("row " + std::to_string(i) + " (A=" +
                                     format_double(meta.amplitude) + ", v0=" +
                                     format_double(meta.v0) + ", t_stop=" +
                                     format_double(meta.t_stop) + "): " + err.what());
          }
          out.meta[i] = meta;
        }
      },
      4);
  return out;
}

inline Dataset align_all(const Dataset& data, int anchor_index = 10) {
  if (data.aligned) throw std::invalid_argument("dataset is already aligned");
  Dataset out = data;
  for (HeadwayProfile& prof : out.profiles) prof = align(prof, anchor_index);
  out.aligned = true;
  return out;
}

namespace detail {

// row indices sorted by embedding value, ties by original index
inline std::vector<int> embedding_order(const Eigen::VectorXd& embedding) {
  std::vector<int> idx(std::size_t(embedding.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return embedding[a] < embedding[b]; });
  return idx;
}

// rank i -> round(i (m-1) / (target-1)); collisions backfill to the nearest
// unused rank (lower side first)
inline std::vector<int> uniform_ranks(int m, int target) {
  if (target < 2) throw std::invalid_argument("downsample target must be at least 2");
  if (target > m) throw std::invalid_argument("downsample target exceeds the row count");
  std::vector<char> used(std::size_t(m), 0);
  std::vector<int> ranks;
  ranks.reserve(std::size_t(target));
  std::vector<int> pending;
  for (int i = 0; i < target; ++i) {
    const int r = int(std::lround(double(i) * double(m - 1) / double(target - 1)));
    if (!used[std::size_t(r)]) {
      used[std::size_t(r)] = 1;
      ranks.push_back(r);
    } else {
      pending.push_back(r);
    }
  }
  for (int r : pending) {
    for (int d = 1; d < m; ++d) {
      if (r - d >= 0 && !used[std::size_t(r - d)]) {
        used[std::size_t(r - d)] = 1;
        ranks.push_back(r - d);
        break;
      }
      if (r + d < m && !used[std::size_t(r + d)]) {
        used[std::size_t(r + d)] = 1;
        ranks.push_back(r + d);
        break;
      }
    }
  }
  std::sort(ranks.begin(), ranks.end());
  return ranks;
}

// kept original row indices, ordered by ascending embedding value
inline std::vector<int> downsample_indices(const Eigen::VectorXd& embedding, int target) {
  const std::vector<int> order = embedding_order(embedding);
  std::vector<int> keep;
  keep.reserve(std::size_t(target));
  for (int r : uniform_ranks(int(embedding.size()), target)) keep.push_back(order[std::size_t(r)]);
  return keep;
}

inline Dataset select_rows(const Dataset& data, const std::vector<int>& rows) {
  Dataset out;
  out.aligned = data.aligned;
  out.params = data.params;
  out.config = data.config;
  out.config.n_samples = int(rows.size());
  out.profiles.reserve(rows.size());
  out.meta.reserve(rows.size());
  for (int r : rows) {
    out.profiles.push_back(data.profiles[std::size_t(r)]);
    out.meta.push_back(data.meta[std::size_t(r)]);
  }
  return out;
}

}  // namespace detail

/// Keeps `target` rows at uniform rank spacing in ascending embedding order.
inline Dataset downsample_1d(const Dataset& data, const Eigen::VectorXd& embedding, int target) {
  if (int(embedding.size()) != data.rows())
    throw std::invalid_argument("embedding length does not match the dataset");
  return detail::select_rows(data, detail::downsample_indices(embedding, target));
}

/// Two-stage thinning of a planar embedding: uniform ranks in radius about the
/// embedding centroid, then uniform ranks in angle (in [0, 2 pi)).
inline Dataset downsample_2d(const Dataset& data, const Eigen::MatrixXd& embedding,
                             int radial_target, int final_target) {
  if (embedding.rows() != data.rows() || embedding.cols() != 2)
    throw std::invalid_argument("embedding must be rows x 2");
  if (final_target > radial_target)
    throw std::invalid_argument("final target exceeds the radial target");

  const double cx = embedding.col(0).mean();
  const double cy = embedding.col(1).mean();
  Eigen::VectorXd radius(data.rows());
  for (int i = 0; i < data.rows(); ++i)
    radius[i] = std::hypot(embedding(i, 0) - cx, embedding(i, 1) - cy);
  const std::vector<int> stage1 = detail::downsample_indices(radius, radial_target);

  Eigen::VectorXd angle(radial_target);
  for (int i = 0; i < radial_target; ++i) {
    const int r = stage1[std::size_t(i)];
    double a = std::atan2(embedding(r, 1) - cy, embedding(r, 0) - cx);
    if (a < 0) a += 2.0 * std::numbers::pi;
    angle[i] = a;
  }
  const std::vector<int> stage2 = detail::downsample_indices(angle, final_target);

  std::vector<int> rows;
  rows.reserve(std::size_t(final_target));
  for (int r : stage2) rows.push_back(stage1[std::size_t(r)]);
  return detail::select_rows(data, rows);
}

/// CSV matrix of headways (rows x n_cars) plus a JSON sidecar at path+".json"
/// carrying the model, sampling configuration, and per-row draws.
inline void save(const Dataset& data, const std::string& path) {
  Eigen::MatrixXd m(data.rows(), data.params.n_cars);
  for (int i = 0; i < data.rows(); ++i) {
    if (int(data.profiles[std::size_t(i)].headways.size()) != data.params.n_cars)
      throw std::invalid_argument("row " + std::to_string(i) + " has the wrong length");
    m.row(i) = data.profiles[std::size_t(i)].headways.transpose();
  }
  write_csv_matrix(path, m);

  nlohmann::json j;
  j["schema_version"] = 1;
  j["n_cars"] = data.params.n_cars;
  j["road_length"] = data.params.road_length;
  j["inv_tau"] = data.params.inv_tau;
  j["safety_distance"] = data.params.safety_distance;
  j["base_v0"] = data.params.v0;
  j["v0_range"] = {data.config.v0_min, data.config.v0_max};
  j["amplitude_range"] = {data.config.amplitude_min, data.config.amplitude_max};
  j["stop_time_mean"] = data.config.stop_time_mean;
  j["stop_time_shift"] = data.config.stop_time_shift;
  j["rng_seed"] = data.config.rng_seed;
  j["aligned"] = data.aligned;
  nlohmann::json rows = nlohmann::json::array();
  for (const RowMeta& meta : data.meta)
    rows.push_back({{"A", meta.amplitude}, {"v0", meta.v0}, {"t_stop", meta.t_stop}});
  j["per_row"] = std::move(rows);
  write_text_file(path + ".json", j.dump(2) + "\n");
}

inline Dataset load_dataset(const std::string& path) {
  const Eigen::MatrixXd m = read_csv_matrix(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path + ".json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ".json: " + e.what());
  }

  Dataset out;
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != 1)
      throw SchemaError(path + ".json: unsupported schema_version " + std::to_string(version));
    out.params.n_cars = j.at("n_cars").get<int>();
    out.params.road_length = j.at("road_length").get<double>();
    out.params.inv_tau = j.at("inv_tau").get<double>();
    out.params.safety_distance = j.at("safety_distance").get<double>();
    out.params.v0 = j.at("base_v0").get<double>();
    out.config.v0_min = j.at("v0_range").at(0).get<double>();
    out.config.v0_max = j.at("v0_range").at(1).get<double>();
    out.config.amplitude_min = j.at("amplitude_range").at(0).get<double>();
    out.config.amplitude_max = j.at("amplitude_range").at(1).get<double>();
    out.config.stop_time_mean = j.at("stop_time_mean").get<double>();
    out.config.stop_time_shift = j.at("stop_time_shift").get<double>();
    out.config.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    out.aligned = j.at("aligned").get<bool>();
    for (const nlohmann::json& row : j.at("per_row")) {
      RowMeta meta;
      meta.amplitude = row.at("A").get<double>();
      meta.v0 = row.at("v0").get<double>();
      meta.t_stop = row.at("t_stop").get<double>();
      out.meta.push_back(meta);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ".json: " + e.what());
  }

  if (m.cols() != out.params.n_cars)
    throw SchemaError(path + ": matrix has " + std::to_string(m.cols()) +
                      " columns but the sidecar declares n_cars=" +
                      std::to_string(out.params.n_cars));
  if (m.rows() != int(out.meta.size()))
    throw SchemaError(path + ": matrix has " + std::to_string(m.rows()) +
                      " rows but the sidecar lists " + std::to_string(out.meta.size()));
  out.config.n_samples = int(m.rows());
  out.profiles.resize(std::size_t(m.rows()));
  for (int i = 0; i < m.rows(); ++i) out.profiles[std::size_t(i)].headways = m.row(i).transpose();
  return out;
}

}  // namespace eqfree
