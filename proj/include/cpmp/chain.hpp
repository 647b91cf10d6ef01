// Planar n-link kinematic chains with named points of interest.
#pragma once

#include <Eigen/Dense>
#include <array>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpmp/dual.hpp"
#include "json.hpp"

namespace cpmp {

struct KinematicChain {
  Eigen::VectorXd link_lengths;
  Eigen::Vector2d base = Eigen::Vector2d::Zero();
  double base_rot = 0.0;
  std::map<std::string, int> pois;  // name -> link index (1-based, end of link)

  int n_links() const { return static_cast<int>(link_lengths.size()); }

  void validate() const {
    if (link_lengths.size() == 0) throw std::invalid_argument("KinematicChain: no links");
    for (int i = 0; i < link_lengths.size(); ++i)
      if (link_lengths[i] <= 0.0)
        throw std::invalid_argument("KinematicChain: link lengths must be positive");
    for (const auto& [name, idx] : pois)
      if (idx < 1 || idx > n_links())
        throw std::invalid_argument("KinematicChain: poi '" + name + "' link index out of range");
  }

  int poi_link(const std::string& name) const {
    auto it = pois.find(name);
    if (it == pois.end())
      throw std::invalid_argument("KinematicChain: unknown poi '" + name + "'");
    return it->second;
  }
};

// Position of the end of link `upto` for joint angles q. Templated so dual
// numbers flow through sigma-point evaluations.
template <class T>
std::array<T, 2> forward_kinematics_t(const KinematicChain& chain, const T* q, int nq, int upto) {
  if (nq != chain.n_links())
    throw std::invalid_argument("forward_kinematics: joint vector size mismatch");
  using std::cos;
  using std::sin;
  T angle(chain.base_rot);
  T x(chain.base[0]);
  T y(chain.base[1]);
  for (int j = 0; j < upto; ++j) {
    angle += q[j];
    x += chain.link_lengths[j] * cos(angle);
    y += chain.link_lengths[j] * sin(angle);
  }
  return {x, y};
}

inline Eigen::Vector2d forward_kinematics(const KinematicChain& chain, const Eigen::VectorXd& q,
                                          const std::string& poi) {
  const int upto = chain.poi_link(poi);
  const auto p = forward_kinematics_t(chain, q.data(), static_cast<int>(q.size()), upto);
  return {p[0], p[1]};
}

inline nlohmann::json chain_to_json(const KinematicChain& c) {
  nlohmann::json j;
  j["links"] = std::vector<double>(c.link_lengths.data(), c.link_lengths.data() + c.n_links());
  j["base"] = {c.base[0], c.base[1], c.base_rot};
  j["pois"] = c.pois;
  return j;
}

inline KinematicChain chain_from_json(const nlohmann::json& j) {
  KinematicChain c;
  const auto links = j.at("links").get<std::vector<double>>();
  c.link_lengths = Eigen::Map<const Eigen::VectorXd>(links.data(), links.size());
  const auto base = j.at("base").get<std::vector<double>>();
  if (base.size() != 3) throw std::invalid_argument("chain_from_json: base must be [x,y,rot]");
  c.base << base[0], base[1];
  c.base_rot = base[2];
  if (j.contains("pois")) c.pois = j.at("pois").get<std::map<std::string, int>>();
  c.validate();
  return c;
}

}  // namespace cpmp
