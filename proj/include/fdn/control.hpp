#pragma once

// Candidate torque-sequence generation (Random / Constant / Shift / Mixed)
// and the per-frame optimization cycle: generate, predict, refine the best
// candidate along its loss gradient, keep the refinement only if it helped.

#include <string>
#include <vector>

#include "fdn/dynnet.hpp"
#include "fdn/rng.hpp"
#include "fdn/vision.hpp"

namespace fdn::ctrl {

struct InitMethod {
  enum class Kind { Random, Constant, Shift, Mixed, None };
  Kind kind = Kind::Mixed;
  int N = 10;
  int N_constant = 3;
  double alpha = 0.25;

  // "random" | "constant" | "shift" | "mixed" | "none"
  static InitMethod parse(const std::string& name);
  std::string name() const;
  void validate() const;
};

struct ControlConfig {
  double tau_max = 0.2;
  double gamma = 0.05;  // gradient step, 0.25 * tau_max
  int opt_iters = 1;
  int T = 10;

  void validate() const;
};

struct ControlDiagnostics {
  std::vector<double> candidate_losses;  // before optimization
  int selected = -1;
  double loss_before = 0.0;
  double loss_after = 0.0;
  bool accepted = false;
  bool grad_skipped = false;  // gradient norm below 1e-12
  double wall_ms = 0.0;
};

std::vector<net::TorqueSequence> gen_random(int N, double tau_max, int M,
                                            int T, Rng& rng);
std::vector<net::TorqueSequence> gen_constant(int N, double tau_max, int M,
                                              int T);
std::vector<net::TorqueSequence> gen_shift(const net::TorqueSequence& prev_opt,
                                           int N, double alpha, double tau_max,
                                           Rng& rng);
std::vector<net::TorqueSequence> gen_mixed(const net::TorqueSequence& prev_opt,
                                           int N, int N_constant, double alpha,
                                           double tau_max, Rng& rng);

// argmin with ties resolved to the lowest index
int argmin_index(const std::vector<double>& losses);

struct ControlStepResult {
  std::vector<double> tau_now;       // per actuator, N*m
  net::TorqueSequence new_prev_opt;  // seed for the next frame's Shift/Mixed
  ControlDiagnostics diag;
};

// One 30 Hz control cycle. The conv feature is computed once from `obs`;
// all N candidates are predicted in a single batched eval forward.
ControlStepResult control_step(net::DynamicsNetF& net,
                               const net::Observation& obs,
                               const vision::Image& blurred_target,
                               const net::TorqueSequence& prev_opt,
                               const ControlConfig& cfg,
                               const InitMethod& method, Rng& rng);

// No-Optimization baseline: a random candidate's first entry, no network.
ControlStepResult baseline_step(const ControlConfig& cfg, int N, int M,
                                Rng& rng);

}  // namespace fdn::ctrl
