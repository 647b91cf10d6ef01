// Adaptation problem definition and its JSON file format.
#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cpmp/chain.hpp"
#include "cpmp/constraints.hpp"
#include "cpmp/promp.hpp"
#include "json.hpp"

namespace cpmp {

enum class ObjectiveVariant {
  KlToSingle,
  JointKlToProduct,
  SumOfMarginalKls,
  WeightedCombination,
};

struct ObjectiveSpec {
  ObjectiveVariant variant = ObjectiveVariant::KlToSingle;
  Eigen::VectorXd combination_weights;  // normalized, WeightedCombination only
  double smoothness_kappa = 0.0;
  Eigen::VectorXd joint_weights;  // per-joint smoothness weights, empty = uniform
};

struct AdaptationProblem {
  ProMP original;            // stacked joint primitive (block-diagonal product
                             // of the arm originals for multi-arm problems)
  std::vector<int> blocks;   // coordinate counts per block, sum == original.D
  ObjectiveSpec objective;
  std::vector<KinematicChain> chains;
  std::vector<ProMP> combo_primitives;  // WeightedCombination targets
  int grid_n = 50;
  UTConfig ut;
  std::vector<Constraint> constraints;

  Eigen::VectorXd grid() const {
    return Eigen::VectorXd::LinSpaced(grid_n, 0.0, original.basis.T);
  }

  const KinematicChain* chain_ptr(int idx) const {
    if (idx < 0) return nullptr;
    if (idx >= static_cast<int>(chains.size()))
      throw std::invalid_argument("AdaptationProblem: chain index out of range");
    return &chains[idx];
  }

  int block_offset(int b) const {
    int off = 0;
    for (int i = 0; i < b; ++i) off += blocks[i];
    return off;
  }

  void validate() const {
    original.validate();
    if (grid_n < 2) throw std::invalid_argument("AdaptationProblem: grid_n must be >= 2");
    int sum = 0;
    for (int b : blocks) sum += b;
    if (!blocks.empty() && sum != original.D)
      throw std::invalid_argument("AdaptationProblem: block sizes do not sum to D");
    if (objective.variant == ObjectiveVariant::WeightedCombination) {
      if (combo_primitives.empty())
        throw std::invalid_argument("AdaptationProblem: combination objective needs primitives");
      if (objective.combination_weights.size() !=
          static_cast<Eigen::Index>(combo_primitives.size()))
        throw std::invalid_argument("AdaptationProblem: combination weights size mismatch");
      if (std::abs(objective.combination_weights.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("AdaptationProblem: combination weights must sum to 1");
    }
    if (objective.smoothness_kappa < 0.0)
      throw std::invalid_argument("AdaptationProblem: kappa must be >= 0");
    for (const auto& c : constraints) {
      if (c.support.empty())
        throw std::invalid_argument("constraint '" + c.id + "': empty temporal support");
      for (int idx : c.support)
        if (idx < 0 || idx >= grid_n)
          throw std::invalid_argument("constraint '" + c.id + "': support outside grid");
      if (!(c.alpha > 0.0 && c.alpha < 1.0))
        throw std::invalid_argument("constraint '" + c.id + "': alpha must be in (0,1)");
      if (c.kind == ConstraintKind::Waypoint || c.kind == ConstraintKind::Repeller ||
          c.kind == ConstraintKind::UnboundWaypoint) {
        if (c.radius <= 0.0)
          throw std::invalid_argument("constraint '" + c.id + "': radius must be positive");
      }
      if (c.kind == ConstraintKind::Hyperplane && c.normal.norm() == 0.0)
        throw std::invalid_argument("constraint '" + c.id + "': zero hyperplane normal");
      if (c.kind == ConstraintKind::JointLimit && (c.joint < 0 || c.joint >= original.D))
        throw std::invalid_argument("constraint '" + c.id + "': joint index out of range");
    }
  }
};

// Block-diagonal product of independently learned primitives.
inline ProMP stack_promps(const std::vector<ProMP>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack_promps: empty list");
  ProMP out = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) {
    const ProMP& q = parts[i];
    if (q.basis.M != out.basis.M || std::abs(q.basis.T - out.basis.T) > 1e-12)
      throw std::invalid_argument("stack_promps: incompatible bases");
    const int n0 = out.dim(), n1 = q.dim();
    Eigen::VectorXd mu(n0 + n1);
    mu << out.mu_w, q.mu_w;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n0 + n1, n0 + n1);
    S.topLeftCorner(n0, n0) = out.Sigma_w;
    S.bottomRightCorner(n1, n1) = q.Sigma_w;
    Eigen::MatrixXd Sy = Eigen::MatrixXd::Zero(out.D + q.D, out.D + q.D);
    Sy.topLeftCorner(out.D, out.D) = out.Sigma_y;
    Sy.bottomRightCorner(q.D, q.D) = q.Sigma_y;
    out.D += q.D;
    out.mu_w = mu;
    out.Sigma_w = S;
    out.Sigma_y = Sy;
  }
  return out;
}

// ---- JSON ------------------------------------------------------------------

namespace detail {

inline std::vector<int> parse_support(const nlohmann::json& j, double T, int grid_n,
                                      const std::string& cid) {
  std::vector<int> idx;
  const double dt = T / (grid_n - 1);
  if (j.is_array()) {
    if (j.size() != 2)
      throw std::invalid_argument("constraint '" + cid + "': support interval must be [t0,t1]");
    const double t0 = j[0].get<double>(), t1 = j[1].get<double>();
    for (int i = 0; i < grid_n; ++i) {
      const double t = i * dt;
      if (t >= t0 - 1e-12 && t <= t1 + 1e-12) idx.push_back(i);
    }
  } else if (j.is_object() && j.contains("indices")) {
    idx = j.at("indices").get<std::vector<int>>();
  } else if (j.is_number()) {
    const double t0 = j.get<double>();
    int best = 0;
    for (int i = 1; i < grid_n; ++i)
      if (std::abs(i * dt - t0) < std::abs(best * dt - t0)) best = i;
    idx.push_back(best);
  } else {
    throw std::invalid_argument("constraint '" + cid + "': bad support");
  }
  if (idx.empty())
    throw std::invalid_argument("constraint '" + cid + "': support selects no grid times");
  return idx;
}

inline Eigen::Vector2d parse_vec2(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected 2-D vector");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline std::vector<double> parse_bound(const nlohmann::json& j, double fallback) {
  if (j.is_null()) return {fallback};
  if (j.is_number()) return {j.get<double>()};
  return j.get<std::vector<double>>();
}

}  // namespace detail

inline ConstraintKind kind_from_string(const std::string& s) {
  if (s == "joint-limit") return ConstraintKind::JointLimit;
  if (s == "smoothness") return ConstraintKind::Smoothness;
  if (s == "hyperplane") return ConstraintKind::Hyperplane;
  if (s == "waypoint") return ConstraintKind::Waypoint;
  if (s == "repeller") return ConstraintKind::Repeller;
  if (s == "unbound-waypoint") return ConstraintKind::UnboundWaypoint;
  if (s == "non-convex-corner") return ConstraintKind::NonConvexCorner;
  if (s == "mutual-avoidance") return ConstraintKind::MutualAvoidance;
  throw std::invalid_argument("unknown constraint kind '" + s + "'");
}

struct ProblemDefaults {
  double alpha = 0.999;  // confidence when a constraint omits "alpha"
  double eta = 0.5;      // multiplier step size when a constraint omits "eta"
};

inline AdaptationProblem problem_from_json(const nlohmann::json& j,
                                           const std::string& base_dir = ".",
                                           const ProblemDefaults& defaults = {}) {
  namespace fs = std::filesystem;
  AdaptationProblem prob;

  std::vector<ProMP> parts;
  for (const auto& entry : j.at("promps")) {
    if (entry.is_string()) {
      fs::path p = entry.get<std::string>();
      if (p.is_relative()) p = fs::path(base_dir) / p;
      parts.push_back(load_promp(p.string()));
    } else {
      parts.push_back(promp_from_json(entry));
    }
  }
  prob.original = stack_promps(parts);
  if (j.contains("blocks")) {
    prob.blocks = j.at("blocks").get<std::vector<int>>();
  } else {
    for (const auto& p : parts) prob.blocks.push_back(p.D);
  }

  if (j.contains("chains")) {
    for (const auto& entry : j.at("chains")) {
      if (entry.is_string()) {
        fs::path p = entry.get<std::string>();
        if (p.is_relative()) p = fs::path(base_dir) / p;
        std::ifstream f(p);
        if (!f) throw std::runtime_error("problem: cannot open chain file " + p.string());
        nlohmann::json cj;
        f >> cj;
        prob.chains.push_back(chain_from_json(cj));
      } else {
        prob.chains.push_back(chain_from_json(entry));
      }
    }
  }

  if (j.contains("grid")) prob.grid_n = j.at("grid").value("n", 50);
  prob.ut.alpha_ut = j.value("alpha_ut", 1.0);
  prob.objective.smoothness_kappa = j.value("kappa", 0.0);
  if (j.contains("joint_weights")) {
    const auto w = j.at("joint_weights").get<std::vector<double>>();
    prob.objective.joint_weights = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
  }
  if (j.contains("objective")) {
    const auto& oj = j.at("objective");
    const std::string v = oj.value("variant", "kl-to-single");
    if (v == "kl-to-single") prob.objective.variant = ObjectiveVariant::KlToSingle;
    else if (v == "joint-kl-to-product") prob.objective.variant = ObjectiveVariant::JointKlToProduct;
    else if (v == "sum-of-marginal-kls") prob.objective.variant = ObjectiveVariant::SumOfMarginalKls;
    else if (v == "weighted-combination") prob.objective.variant = ObjectiveVariant::WeightedCombination;
    else throw std::invalid_argument("unknown objective variant '" + v + "'");
    if (oj.contains("weights")) {
      const auto w = oj.at("weights").get<std::vector<double>>();
      prob.objective.combination_weights = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
    }
    if (oj.contains("primitives")) {
      for (const auto& entry : oj.at("primitives")) {
        if (entry.is_string()) {
          fs::path p = entry.get<std::string>();
          if (p.is_relative()) p = fs::path(base_dir) / p;
          prob.combo_primitives.push_back(load_promp(p.string()));
        } else {
          prob.combo_primitives.push_back(promp_from_json(entry));
        }
      }
    }
  }

  const double T = prob.original.basis.T;
  int auto_id = 0;
  for (const auto& cj : j.at("constraints")) {
    Constraint c;
    c.id = cj.value("id", std::string("c") + std::to_string(auto_id));
    ++auto_id;
    c.kind = kind_from_string(cj.at("kind").get<std::string>());
    c.support = detail::parse_support(cj.at("support"), T, prob.grid_n, c.id);
    c.alpha = cj.value("alpha", defaults.alpha);
    c.eta = cj.value("eta", defaults.eta);
    c.lambda0 = cj.value("lambda0", -1.0);
    const auto& pj = cj.contains("params") ? cj.at("params") : cj;
    const double inf = std::numeric_limits<double>::infinity();
    switch (c.kind) {
      case ConstraintKind::JointLimit:
        c.joint = pj.value("joint", 0);
        c.lower = detail::parse_bound(pj.contains("lower") ? pj.at("lower") : nlohmann::json(), -inf);
        c.upper = detail::parse_bound(pj.contains("upper") ? pj.at("upper") : nlohmann::json(), inf);
        break;
      case ConstraintKind::Smoothness:
        c.bound = pj.at("bound").get<double>();
        if (pj.contains("joint_weights")) {
          const auto w = pj.at("joint_weights").get<std::vector<double>>();
          c.joint_weights = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
        }
        break;
      case ConstraintKind::Hyperplane:
        c.normal = detail::parse_vec2(pj.at("normal"));
        c.bias = detail::parse_vec2(pj.at("bias"));
        c.chain = pj.value("chain", -1);
        c.poi = pj.value("poi", "");
        c.block1 = pj.value("block", 0);
        break;
      case ConstraintKind::Waypoint:
      case ConstraintKind::Repeller:
      case ConstraintKind::UnboundWaypoint:
        c.center = detail::parse_vec2(pj.at("center"));
        c.radius = pj.at("radius").get<double>();
        c.chain = pj.value("chain", -1);
        c.poi = pj.value("poi", "");
        c.block1 = pj.value("block", 0);
        break;
      case ConstraintKind::NonConvexCorner:
        c.normal = detail::parse_vec2(pj.at("normal1"));
        c.bias = detail::parse_vec2(pj.at("bias1"));
        c.normal2 = detail::parse_vec2(pj.at("normal2"));
        c.bias2 = detail::parse_vec2(pj.at("bias2"));
        c.chain = pj.value("chain", -1);
        c.poi = pj.value("poi", "");
        c.block1 = pj.value("block", 0);
        break;
      case ConstraintKind::MutualAvoidance:
        c.radius = pj.at("distance").get<double>();
        c.chain = pj.value("chain1", -1);
        c.poi = pj.value("poi1", "");
        c.chain2 = pj.value("chain2", -1);
        c.poi2 = pj.value("poi2", "");
        c.block1 = pj.value("block1", 0);
        c.block2 = pj.value("block2", 1);
        break;
    }
    // A corner constraint may name several pois; expand into one constraint
    // per poi, each with its own multipliers.
    if (c.kind == ConstraintKind::NonConvexCorner && pj.contains("pois")) {
      for (const auto& poi : pj.at("pois").get<std::vector<std::string>>()) {
        Constraint cc = c;
        cc.poi = poi;
        cc.id = c.id + ":" + poi;
        prob.constraints.push_back(cc);
      }
    } else {
      prob.constraints.push_back(c);
    }
  }

  prob.validate();
  return prob;
}

inline AdaptationProblem load_problem(const std::string& path,
                                      const ProblemDefaults& defaults = {}) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_problem: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("load_problem: malformed JSON: ") + e.what());
  }
  return problem_from_json(j, std::filesystem::path(path).parent_path().string(), defaults);
}

}  // namespace cpmp
