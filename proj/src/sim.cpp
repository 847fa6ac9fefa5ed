#include "fdn/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fdn::sim {

namespace {

struct Kinematics {
  // absolute link angle phi_k and its rate, cumulative sums of theta
  std::vector<double> phi, phi_dot;
  // unit vectors along link k: u = (sin phi, -cos phi), w = d u / d phi
  std::vector<double> ux, uy, wx, wy;
};

Kinematics kinematics(const ChainState& state, const ChainParams& p) {
  const int n = p.n_links;
  Kinematics k;
  k.phi.resize(n);
  k.phi_dot.resize(n);
  k.ux.resize(n);
  k.uy.resize(n);
  k.wx.resize(n);
  k.wy.resize(n);
  double a = 0.0, ad = 0.0;
  for (int i = 0; i < n; ++i) {
    a += state.theta[i];
    ad += state.theta_dot[i];
    k.phi[i] = a;
    k.phi_dot[i] = ad;
    k.ux[i] = std::sin(a);
    k.uy[i] = -std::cos(a);
    k.wx[i] = std::cos(a);
    k.wy[i] = std::sin(a);
  }
  return k;
}

double point_mass(const ChainParams& p, int k) {
  return p.link_masses[k] + (k == p.n_links - 1 ? p.tip_mass : 0.0);
}

// Jacobian of point-mass k w.r.t. joint i: sum over links j in [i, k] of
// l_j * w_j. Returned as J[k][i] = (x, y), zero for i > k.
void jacobians(const Kinematics& kin, const ChainParams& p,
               std::vector<std::vector<std::pair<double, double>>>& J) {
  const int n = p.n_links;
  J.assign(n, std::vector<std::pair<double, double>>(n, {0.0, 0.0}));
  for (int k = 0; k < n; ++k) {
    double sx = 0.0, sy = 0.0;
    for (int i = k; i >= 0; --i) {
      sx += p.link_lengths[i] * kin.wx[i];
      sy += p.link_lengths[i] * kin.wy[i];
      J[k][i] = {sx, sy};
    }
  }
}

}  // namespace

bool ChainParams::is_actuated(int joint) const {
  return std::find(actuated.begin(), actuated.end(), joint) != actuated.end();
}

double ChainParams::reach() const {
  return std::accumulate(link_lengths.begin(), link_lengths.end(), 0.0);
}

void ChainParams::validate() const {
  if (n_links < 1) throw std::invalid_argument("n_links must be >= 1");
  if (static_cast<int>(link_lengths.size()) != n_links ||
      static_cast<int>(link_masses.size()) != n_links)
    throw std::invalid_argument("link_lengths/link_masses size != n_links");
  for (double l : link_lengths)
    if (!(l > 0.0)) throw std::invalid_argument("link lengths must be > 0");
  for (double m : link_masses)
    if (!(m > 0.0)) throw std::invalid_argument("link masses must be > 0");
  if (actuated.empty()) throw std::invalid_argument("no actuated joints");
  for (int a : actuated)
    if (a < 0 || a >= n_links)
      throw std::invalid_argument("actuated joint index out of range");
  if (!(tau_max > 0.0)) throw std::invalid_argument("tau_max must be > 0");
  if (tip_mass < 0.0) throw std::invalid_argument("tip_mass must be >= 0");
  if (joint_armature < 0.0)
    throw std::invalid_argument("joint_armature must be >= 0");
}

Eigen::MatrixXd mass_matrix(const ChainState& state, const ChainParams& p) {
  const int n = p.n_links;
  const Kinematics kin = kinematics(state, p);
  std::vector<std::vector<std::pair<double, double>>> J;
  jacobians(kin, p, J);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    const double m = point_mass(p, k);
    for (int i = 0; i <= k; ++i)
      for (int j = 0; j <= i; ++j)
        M(i, j) += m * (J[k][i].first * J[k][j].first +
                        J[k][i].second * J[k][j].second);
  }
  for (int i = 0; i < n; ++i) {
    M(i, i) += p.joint_armature;
    for (int j = i + 1; j < n; ++j) M(i, j) = M(j, i);
  }
  return M;
}

std::vector<double> dynamics(const ChainState& state,
                             const std::vector<double>& torque,
                             const ChainParams& p) {
  const int n = p.n_links;
  if (static_cast<int>(state.theta.size()) != n ||
      static_cast<int>(state.theta_dot.size()) != n)
    throw std::invalid_argument("state size != n_links");
  if (static_cast<int>(torque.size()) != p.n_actuated())
    throw std::invalid_argument("torque size != |actuated|");
  for (double t : torque)
    if (std::abs(t) > p.tau_max * (1.0 + 1e-9))
      throw std::invalid_argument("command torque exceeds tau_max");

  const Kinematics kin = kinematics(state, p);
  std::vector<std::vector<std::pair<double, double>>> J;
  jacobians(kin, p, J);

  // centrifugal point accelerations at thetadd = 0: a0_k = -sum l_j phid_j^2 u_j
  std::vector<double> a0x(n), a0y(n);
  {
    double sx = 0.0, sy = 0.0;
    for (int j = 0; j < n; ++j) {
      const double s = p.link_lengths[j] * kin.phi_dot[j] * kin.phi_dot[j];
      sx -= s * kin.ux[j];
      sy -= s * kin.uy[j];
      a0x[j] = sx;
      a0y[j] = sy;
    }
  }

  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) {
    double bias = 0.0;  // Coriolis/centrifugal + gravity generalized force
    for (int k = i; k < n; ++k) {
      const double m = point_mass(p, k);
      bias += m * (J[k][i].first * a0x[k] + J[k][i].second * a0y[k]);
      bias += m * p.gravity * J[k][i].second;  // d(PE)/d(theta_i)
    }
    double tau_i;
    if (p.is_actuated(i)) {
      const auto it = std::find(p.actuated.begin(), p.actuated.end(), i);
      tau_i = torque[static_cast<size_t>(it - p.actuated.begin())];
    } else {
      tau_i = -p.passive_stiffness * state.theta[i] -
              p.passive_damping * state.theta_dot[i];
    }
    if (p.floor_enabled)
      tau_i -= p.floor_friction_coulomb * std::tanh(10.0 * state.theta_dot[i]);
    rhs(i) = tau_i - bias;
  }

  const Eigen::MatrixXd M = mass_matrix(state, p);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    std::ostringstream os;
    os << "mass matrix solve failed at theta = [";
    for (int i = 0; i < n; ++i) os << (i ? ", " : "") << state.theta[i];
    os << "]";
    throw std::runtime_error(os.str());
  }
  const Eigen::VectorXd acc = ldlt.solve(rhs);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    out[i] = acc(i);
    if (!std::isfinite(out[i]))
      throw std::runtime_error("non-finite joint acceleration");
  }
  return out;
}

ChainState step(const ChainState& state, const std::vector<double>& torque,
                const ChainParams& p, const SimConfig& cfg) {
  if (!(cfg.control_hz > 0.0) || cfg.substeps < 1)
    throw std::invalid_argument("bad SimConfig");
  const double dt = 1.0 / (cfg.control_hz * cfg.substeps);
  ChainState s = state;
  for (int k = 0; k < cfg.substeps; ++k) {
    const std::vector<double> acc = dynamics(s, torque, p);
    for (int i = 0; i < p.n_links; ++i) {
      s.theta_dot[i] += acc[i] * dt;
      s.theta[i] += s.theta_dot[i] * dt;
    }
  }
  for (int i = 0; i < p.n_links; ++i)
    if (!std::isfinite(s.theta[i]) || !std::isfinite(s.theta_dot[i]))
      throw std::runtime_error(
          "integration produced non-finite state; increase substeps");
  return s;
}

double energy(const ChainState& state, const ChainParams& p) {
  const int n = p.n_links;
  const Kinematics kin = kinematics(state, p);
  double ke = 0.0, pe = 0.0;
  double px = 0.0, py = 0.0, vx = 0.0, vy = 0.0, depth = 0.0;
  for (int k = 0; k < n; ++k) {
    const double l = p.link_lengths[k];
    px += l * kin.ux[k];
    py += l * kin.uy[k];
    vx += l * kin.phi_dot[k] * kin.wx[k];
    vy += l * kin.phi_dot[k] * kin.wy[k];
    depth += l;  // y of point k in the hanging pose is -depth
    const double m = point_mass(p, k);
    ke += 0.5 * m * (vx * vx + vy * vy);
    pe += m * p.gravity * (py + depth);
  }
  for (int i = 0; i < n; ++i) {
    ke += 0.5 * p.joint_armature * state.theta_dot[i] * state.theta_dot[i];
    if (!p.is_actuated(i))
      pe += 0.5 * p.passive_stiffness * state.theta[i] * state.theta[i];
  }
  return ke + pe;
}

std::vector<std::pair<double, double>> link_tips(const ChainState& state,
                                                 const ChainParams& p) {
  const Kinematics kin = kinematics(state, p);
  std::vector<std::pair<double, double>> tips(p.n_links);
  double x = 0.0, y = 0.0;
  for (int k = 0; k < p.n_links; ++k) {
    x += p.link_lengths[k] * kin.ux[k];
    y += p.link_lengths[k] * kin.uy[k];
    tips[k] = {x, y};
  }
  return tips;
}

std::pair<ChainParams, ChainState> scenario(std::string_view name) {
  ChainParams p;
  if (name == "rigid_pendulum") {
    // one actuated rod with a tip weight heavy enough that the static
    // gravity torque at horizontal exceeds tau_max
    p.n_links = 1;
    p.link_lengths = {0.3};
    p.link_masses = {0.05};
    p.tip_mass = 0.10;
    p.actuated = {0};
    p.tau_max = 0.2;
  } else if (name == "flexible_chain" || name == "chain_on_floor") {
    // one actuated arm link driving a light string of passive segments
    p.n_links = 8;
    p.link_lengths = {0.15, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05};
    p.link_masses = {0.03, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01};
    p.actuated = {0};
    p.passive_stiffness = 0.01;
    p.passive_damping = 0.002;
    p.joint_armature = 2e-5;
    p.tau_max = 0.2;
    if (name == "chain_on_floor") {
      // string lying on a horizontal floor seen from above: no in-plane
      // gravity, Coulomb friction on every joint
      p.floor_enabled = true;
      p.floor_friction_coulomb = 0.01;
      p.gravity = 0.0;
    }
  } else {
    throw std::invalid_argument("unknown scenario: " + std::string(name));
  }
  p.validate();
  ChainState s;
  s.theta.assign(p.n_links, 0.0);
  s.theta_dot.assign(p.n_links, 0.0);
  return {p, s};
}

}  // namespace fdn::sim
