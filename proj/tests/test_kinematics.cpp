#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cpmp/chain.hpp"

using namespace cpmp;

namespace {

KinematicChain two_link() {
  KinematicChain ch;
  ch.link_lengths = Eigen::Vector2d(1.0, 1.0);
  ch.base = Eigen::Vector2d::Zero();
  ch.base_rot = 0.0;
  ch.pois = {{"end", 2}, {"elbow", 1}};
  return ch;
}

}  // namespace

TEST_CASE("straight and bent two-link configurations") {
  const KinematicChain ch = two_link();
  Eigen::VectorXd q = Eigen::VectorXd::Zero(2);
  Eigen::Vector2d x = forward_kinematics(ch, q, "end");
  CHECK(x.x() == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(x.y() == doctest::Approx(0.0).epsilon(1e-15));

  q << M_PI / 2.0, 0.0;
  x = forward_kinematics(ch, q, "end");
  CHECK(std::abs(x.x()) < 1e-12);
  CHECK(x.y() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("matches an explicit rotation-matrix composition") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(-M_PI, M_PI);
  KinematicChain ch;
  ch.link_lengths = Eigen::Vector3d(0.7, 1.1, 0.4);
  ch.base = Eigen::Vector2d(0.3, -0.2);
  ch.base_rot = 0.5;
  ch.pois = {{"end", 3}, {"mid", 2}};

  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd q(3);
    for (int i = 0; i < 3; ++i) q[i] = uni(rng);
    // oracle: accumulate 2-D rotation matrices link by link
    Eigen::Matrix2d R;
    R << std::cos(ch.base_rot), -std::sin(ch.base_rot), std::sin(ch.base_rot),
        std::cos(ch.base_rot);
    Eigen::Vector2d x = ch.base;
    for (int i = 0; i < 3; ++i) {
      Eigen::Matrix2d Ri;
      Ri << std::cos(q[i]), -std::sin(q[i]), std::sin(q[i]), std::cos(q[i]);
      R = R * Ri;
      x += R * Eigen::Vector2d(ch.link_lengths[i], 0.0);
      if (i == 1) {
        const Eigen::Vector2d mid = forward_kinematics(ch, q, "mid");
        CHECK((mid - x).norm() < 1e-12);
      }
    }
    const Eigen::Vector2d end = forward_kinematics(ch, q, "end");
    CHECK((end - x).norm() < 1e-12);
  }
}

TEST_CASE("unknown points of interest are rejected") {
  const KinematicChain ch = two_link();
  CHECK_THROWS_AS(ch.poi_link("nope"), std::invalid_argument);
  CHECK(ch.poi_link("elbow") == 1);
}

TEST_CASE("chain JSON round trip") {
  KinematicChain ch;
  ch.link_lengths = Eigen::Vector3d(1.0, 0.5, 0.25);
  ch.base = Eigen::Vector2d(2.0, 1.0);
  ch.base_rot = -0.7;
  ch.pois = {{"end", 3}, {"wrist", 2}};
  const KinematicChain back = chain_from_json(chain_to_json(ch));
  REQUIRE(back.link_lengths.size() == 3);
  for (int i = 0; i < 3; ++i)
    CHECK(back.link_lengths[i] == doctest::Approx(ch.link_lengths[i]).epsilon(1e-15));
  CHECK((back.base - ch.base).norm() == 0.0);
  CHECK(back.base_rot == doctest::Approx(ch.base_rot).epsilon(1e-15));
  CHECK(back.poi_link("wrist") == 2);
}

TEST_CASE("templated forward kinematics agrees with the double version") {
  const KinematicChain ch = two_link();
  Eigen::VectorXd q(2);
  q << 0.3, -0.8;
  const Eigen::Vector2d a = forward_kinematics(ch, q, "end");
  const auto b = forward_kinematics_t<double>(ch, q.data(), 2, 2);
  CHECK(std::abs(a.x() - b[0]) < 1e-15);
  CHECK(std::abs(a.y() - b[1]) < 1e-15);
}
