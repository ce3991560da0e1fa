#pragma once

// Multi-agent information fusion and bandwidth-budgeted tile selection.
//
// Frames: g_a maps agent (camera) coordinates into the global reference
// frame, so the agent camera pose is g_a^-1 * x and a global left twist xi
// acts on the agent as Ad(g_a^-1) xi.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "rcrb/error.hpp"
#include "rcrb/fisher.hpp"
#include "rcrb/renderer.hpp"
#include "rcrb/se3.hpp"

namespace rcrb {

struct AgentObservation {
  int agent_id = 0;
  FisherInfo local_info;
  Pose relative_pose;  // agent frame -> global frame
};

struct TileBlock {
  int agent_id = 0;
  int tile_id = 0;
  Matrix6d info = Matrix6d::Zero();  // global tangent frame
  std::size_t pixel_count = 0;
};

/// Agents missing from per_agent are bounded only by global_total.
struct Budget {
  std::map<int, int> per_agent;
  int global_total = 0;

  void validate() const {
    if (global_total < 0) throw InfeasibleBudget("global budget is negative");
    for (const auto& [agent, b] : per_agent) {
      if (b < 0) throw InfeasibleBudget("budget of agent " + std::to_string(agent) + " is negative");
    }
  }
};

struct SelectionObjective {
  enum class Kind { LogDet, Trace, LambdaMin };

  Kind kind = Kind::LogDet;
  double epsilon = 1e-6;
  Matrix6d prior = Matrix6d::Zero();

  static SelectionObjective log_det(double eps = 1e-6) { return {Kind::LogDet, eps, Matrix6d::Zero()}; }
  static SelectionObjective trace() { return {Kind::Trace, 0.0, Matrix6d::Zero()}; }
  /// Greedy on lambda_min is a heuristic only; the objective is not submodular.
  static SelectionObjective lambda_min(double eps = 0.0) { return {Kind::LambdaMin, eps, Matrix6d::Zero()}; }

  /// f(prior + eps I + selected).
  double operator()(const Matrix6d& selected) const {
    const Matrix6d m = symmetrized(prior + selected);
    switch (kind) {
      case Kind::Trace:
        return m.trace();
      case Kind::LogDet: {
        const Matrix6d r = m + epsilon * Matrix6d::Identity();
        Eigen::LLT<Matrix6d> llt(r);
        if (llt.info() == Eigen::Success) {
          return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        }
        Eigen::SelfAdjointEigenSolver<Matrix6d> es(r, Eigen::EigenvaluesOnly);
        return es.eigenvalues().cwiseMax(std::numeric_limits<double>::min()).array().log().sum();
      }
      case Kind::LambdaMin: {
        Eigen::SelfAdjointEigenSolver<Matrix6d> es(m + epsilon * Matrix6d::Identity(), Eigen::EigenvaluesOnly);
        return es.eigenvalues()[0];
      }
    }
    return 0.0;
  }

  void validate() const {
    if (kind == Kind::LogDet && !(epsilon > 0.0)) throw Error("log-det objective needs epsilon > 0");
    if (kind == Kind::LambdaMin && epsilon < 0.0) throw Error("lambda_min objective needs epsilon >= 0");
  }
};

struct SelectionResult {
  std::vector<std::pair<int, int>> selected;  // (agent_id, tile_id) in selection order
  double objective_value = 0.0;
  /// history[k] is the objective after k selections; history[0] is the base value.
  std::vector<double> history;
};

/// A^T I A with A = Ad(g_a^-1).
inline FisherInfo transport(const AgentObservation& obs) {
  if (obs.local_info.frame == kFrameGlobal) {
    throw FrameMismatch("agent " + std::to_string(obs.agent_id) + " information is already in the global frame");
  }
  const Matrix6d a = adjoint(inverse(obs.relative_pose));
  FisherInfo out = obs.local_info;
  out.matrix = symmetrized(a.transpose() * obs.local_info.matrix * a);
  out.frame = kFrameGlobal;
  return out;
}

/// Sum of information that already shares one frame.
inline FisherInfo fuse_infos(const std::vector<FisherInfo>& infos) {
  FisherInfo out;
  if (infos.empty()) return out;
  out.frame = infos.front().frame;
  double rate = 0.0;
  for (const auto& info : infos) {
    if (info.frame != out.frame) {
      throw FrameMismatch("cannot fuse information in frame '" + info.frame + "' with frame '" + out.frame + "'");
    }
    out.matrix += info.matrix;
    out.pixel_count += info.pixel_count;
    rate += info.subsample_rate;
  }
  out.matrix = symmetrized(out.matrix);
  out.subsample_rate = rate / static_cast<double>(infos.size());
  return out;
}

/// Joint information of conditionally independent agents in the global frame.
inline FisherInfo fuse(const std::vector<AgentObservation>& observations) {
  std::vector<FisherInfo> transported;
  transported.reserve(observations.size());
  for (const auto& obs : observations) transported.push_back(transport(obs));
  return fuse_infos(transported);
}

/// Per-tile information of one agent, transported to the global frame.
/// `pose` is the agent camera pose; feature models assign points to tiles by projection.
inline std::vector<TileBlock> tile_infos(const MeasurementModel& model, const Pose& pose, const NoiseModel& noise,
                                         const TileGrid& grid, const Pose& relative_pose, int agent_id = 0) {
  std::vector<TileBlock> out;
  const Camera& cam = std::holds_alternative<PhotometricModel>(model) ? std::get<PhotometricModel>(model).camera
                                                                       : std::get<FeatureModel>(model).camera;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(grid.tile_count()));
  if (std::holds_alternative<PhotometricModel>(model)) {
    for (int t = 0; t < grid.tile_count(); ++t) members[static_cast<std::size_t>(t)] = grid.tile_pixels(cam, t);
  } else {
    const auto uv = project_features(std::get<FeatureModel>(model).scene, cam, pose);
    for (std::size_t k = 0; k < uv.size(); ++k) {
      const int x = static_cast<int>(std::lround(uv[k].x()));
      const int y = static_cast<int>(std::lround(uv[k].y()));
      if (x < 0 || y < 0 || x >= cam.width || y >= cam.height) continue;
      const int r = std::min(grid.rows - 1, y * grid.rows / cam.height);
      const int c = std::min(grid.cols - 1, x * grid.cols / cam.width);
      members[static_cast<std::size_t>(r * grid.cols + c)].push_back(k);
    }
  }
  for (int t = 0; t < grid.tile_count(); ++t) {
    AgentObservation obs{agent_id, assemble_fim(model, pose, noise, PixelSubset::indices(members[static_cast<std::size_t>(t)])),
                         relative_pose};
    const auto global = transport(obs);
    out.push_back({agent_id, t, global.matrix, global.pixel_count});
  }
  return out;
}

/// Rank-r eigen truncation of a tile block (lossy compression of the 36-number payload).
inline TileBlock sketch(const TileBlock& block, int r) {
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(symmetrized(block.info));
  TileBlock out = block;
  out.info.setZero();
  const int keep = std::clamp(r, 0, 6);
  for (int i = 6 - keep; i < 6; ++i) {
    const double lambda = std::max(es.eigenvalues()[i], 0.0);
    out.info += lambda * es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose();
  }
  return out;
}

namespace detail {

inline int agent_cap(const Budget& budget, int agent) {
  const auto it = budget.per_agent.find(agent);
  return it == budget.per_agent.end() ? std::numeric_limits<int>::max() : it->second;
}

// Blocks in (agent_id, tile_id) order.
inline std::vector<std::size_t> lexicographic_order(const std::vector<TileBlock>& blocks) {
  std::vector<std::size_t> order(blocks.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::pair(blocks[a].agent_id, blocks[a].tile_id) < std::pair(blocks[b].agent_id, blocks[b].tile_id);
  });
  return order;
}

// Objective of a set, summing members in (agent_id, tile_id) order so equal sets give equal values.
inline double canonical_value(const std::vector<TileBlock>& blocks, std::vector<std::size_t> members,
                              const SelectionObjective& obj) {
  std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
    return std::pair(blocks[a].agent_id, blocks[a].tile_id) < std::pair(blocks[b].agent_id, blocks[b].tile_id);
  });
  Matrix6d sum = Matrix6d::Zero();
  for (auto i : members) sum += blocks[i].info;
  return obj(sum);
}

}  // namespace detail

inline SelectionResult select_greedy(const std::vector<TileBlock>& blocks, const Budget& budget,
                                     const SelectionObjective& obj) {
  budget.validate();
  obj.validate();
  const auto order = detail::lexicographic_order(blocks);
  std::vector<bool> taken(blocks.size(), false);
  std::map<int, int> used;
  std::vector<std::size_t> members;
  Matrix6d sum = Matrix6d::Zero();
  double current = obj(sum);

  SelectionResult out;
  out.history.push_back(current);
  while (static_cast<int>(members.size()) < budget.global_total) {
    double best_gain = 0.0;
    std::size_t best = blocks.size();
    double best_value = current;
    for (auto i : order) {
      if (taken[i] || used[blocks[i].agent_id] >= detail::agent_cap(budget, blocks[i].agent_id)) continue;
      const double value = obj(sum + blocks[i].info);
      const double gain = value - current;
      if (gain > best_gain) {
        best_gain = gain;
        best = i;
        best_value = value;
      }
    }
    if (best == blocks.size()) break;
    taken[best] = true;
    ++used[blocks[best].agent_id];
    members.push_back(best);
    sum += blocks[best].info;
    current = best_value;
    out.selected.emplace_back(blocks[best].agent_id, blocks[best].tile_id);
    out.history.push_back(current);
  }
  out.objective_value = detail::canonical_value(blocks, members, obj);
  return out;
}

inline constexpr std::size_t kMaxExhaustiveBlocks = 20;

/// True optimum by enumeration; selected is listed in (agent_id, tile_id) order.
inline SelectionResult select_exhaustive(const std::vector<TileBlock>& blocks, const Budget& budget,
                                         const SelectionObjective& obj) {
  budget.validate();
  obj.validate();
  if (blocks.size() > kMaxExhaustiveBlocks) {
    throw TooManyBlocks("exhaustive selection supports at most " + std::to_string(kMaxExhaustiveBlocks) + " blocks");
  }
  const auto order = detail::lexicographic_order(blocks);
  const std::uint32_t n = static_cast<std::uint32_t>(blocks.size());
  const double base = obj(Matrix6d::Zero());
  double best_value = base;
  std::uint32_t best_mask = 0;
  std::map<int, int> used;
  std::vector<std::size_t> members;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    if (std::popcount(mask) > budget.global_total) continue;
    used.clear();
    members.clear();
    bool feasible = true;
    for (std::uint32_t j = 0; j < n && feasible; ++j) {
      if ((mask >> j) & 1u) {
        const int agent = blocks[order[j]].agent_id;
        feasible = ++used[agent] <= detail::agent_cap(budget, agent);
        members.push_back(order[j]);
      }
    }
    if (!feasible) continue;
    const double value = detail::canonical_value(blocks, members, obj);
    if (value > best_value) {
      best_value = value;
      best_mask = mask;
    }
  }
  SelectionResult out;
  for (std::uint32_t j = 0; j < n; ++j) {
    if ((best_mask >> j) & 1u) out.selected.emplace_back(blocks[order[j]].agent_id, blocks[order[j]].tile_id);
  }
  out.objective_value = best_value;
  out.history = {base, best_value};
  return out;
}

/// Random feasible selection of up to `count` blocks (baseline).
inline SelectionResult select_random(const std::vector<TileBlock>& blocks, const Budget& budget,
                                     const SelectionObjective& obj, std::size_t count, std::uint64_t seed) {
  budget.validate();
  std::vector<std::size_t> order(blocks.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::map<int, int> used;
  std::vector<std::size_t> members;
  SelectionResult out;
  Matrix6d sum = Matrix6d::Zero();
  out.history.push_back(obj(sum));
  const auto limit = std::min<std::size_t>(count, static_cast<std::size_t>(budget.global_total));
  for (auto i : order) {
    if (members.size() >= limit) break;
    if (used[blocks[i].agent_id] >= detail::agent_cap(budget, blocks[i].agent_id)) continue;
    ++used[blocks[i].agent_id];
    members.push_back(i);
    sum += blocks[i].info;
    out.selected.emplace_back(blocks[i].agent_id, blocks[i].tile_id);
    out.history.push_back(obj(sum));
  }
  out.objective_value = detail::canonical_value(blocks, members, obj);
  return out;
}

/// Per-agent baseline: agents take turns sending their own best tile by
/// standalone value, without looking at what the others sent.
inline SelectionResult select_per_agent(const std::vector<TileBlock>& blocks, const Budget& budget,
                                        const SelectionObjective& obj) {
  budget.validate();
  std::map<int, std::vector<std::size_t>> ranked;
  for (auto i : detail::lexicographic_order(blocks)) ranked[blocks[i].agent_id].push_back(i);
  for (auto& [agent, list] : ranked) {
    std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
      return obj(blocks[a].info) > obj(blocks[b].info);
    });
  }
  std::map<int, std::size_t> next;
  std::vector<std::size_t> members;
  SelectionResult out;
  Matrix6d sum = Matrix6d::Zero();
  out.history.push_back(obj(sum));
  bool progress = true;
  while (progress && static_cast<int>(members.size()) < budget.global_total) {
    progress = false;
    for (auto& [agent, list] : ranked) {
      if (static_cast<int>(members.size()) >= budget.global_total) break;
      auto& k = next[agent];
      if (k >= list.size() || static_cast<int>(k) >= detail::agent_cap(budget, agent)) continue;
      const auto i = list[k++];
      members.push_back(i);
      sum += blocks[i].info;
      out.selected.emplace_back(blocks[i].agent_id, blocks[i].tile_id);
      out.history.push_back(obj(sum));
      progress = true;
    }
  }
  out.objective_value = detail::canonical_value(blocks, members, obj);
  return out;
}

}  // namespace rcrb
