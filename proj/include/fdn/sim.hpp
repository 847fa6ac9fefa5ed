#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace fdn::sim {

// Planar serial chain. Each link carries its mass as a point at the distal
// end; the last link can carry an extra tip mass. Joint angles are relative,
// theta = 0 hangs straight down, positive counter-clockwise.
struct ChainParams {
  int n_links = 1;
  std::vector<double> link_lengths;  // m
  std::vector<double> link_masses;   // kg, lumped at the link tip
  std::vector<int> actuated;         // joint indices receiving command torque
  double passive_stiffness = 0.0;    // N*m/rad, spring on passive joints
  double passive_damping = 0.0;      // N*m*s/rad, damper on passive joints
  double gravity = 9.81;             // m/s^2, downward in the image frame
  bool floor_enabled = false;
  double floor_friction_coulomb = 0.0;  // N*m, per-joint Coulomb torque scale
  double tau_max = 0.2;                 // N*m
  double tip_mass = 0.0;                // kg, extra point mass at last tip
  // Rotor inertia added to each joint's diagonal mass term. Keeps the mass
  // matrix invertible when the tip-lumped point masses line up (straight
  // chain) -- a real rank deficiency of the lumped model.
  double joint_armature = 0.0;          // kg*m^2

  bool is_actuated(int joint) const;
  int n_actuated() const { return static_cast<int>(actuated.size()); }
  double reach() const;  // total chain length, m

  // throws std::invalid_argument on violated invariants
  void validate() const;
};

struct ChainState {
  std::vector<double> theta;      // rad
  std::vector<double> theta_dot;  // rad/s
};

struct SimConfig {
  double control_hz = 30.0;
  int substeps = 10;
};

// Joint-space mass matrix M(theta), symmetric positive definite.
Eigen::MatrixXd mass_matrix(const ChainState& state, const ChainParams& params);

// Solves M(theta) thetadd = tau_joint - c(theta, thetad) - g(theta) for the
// accelerations. `torque` holds one command per actuated joint; passive
// joints get -k*theta - d*theta_dot, the floor variant adds smoothed Coulomb
// friction opposing theta_dot on every joint.
std::vector<double> dynamics(const ChainState& state,
                             const std::vector<double>& torque,
                             const ChainParams& params);

// Advances one control frame (1/control_hz s) with semi-implicit Euler
// substeps, torque held constant over the frame.
ChainState step(const ChainState& state, const std::vector<double>& torque,
                const ChainParams& params, const SimConfig& config);

// Kinetic + potential energy; gravity datum at the hanging rest pose, plus
// spring energy of passive joints.
double energy(const ChainState& state, const ChainParams& params);

// Presets: rigid_pendulum, flexible_chain, chain_on_floor.
std::pair<ChainParams, ChainState> scenario(std::string_view name);

// Tip positions of every link in world coordinates (x right, y up, base at
// origin), one (x, y) pair per link. Used by rendering and flow.
std::vector<std::pair<double, double>> link_tips(const ChainState& state,
                                                 const ChainParams& params);

}  // namespace fdn::sim
