#pragma once

// Data collection, training-pair assembly, closed-loop experiments and the
// Rate(th_chamfer) evaluation.

#include <optional>
#include <string>
#include <vector>

#include "fdn/control.hpp"
#include "fdn/dynnet.hpp"
#include "fdn/sim.hpp"
#include "fdn/vision.hpp"

namespace fdn::harness {

struct Frame {
  std::vector<double> theta, theta_dot;  // full chain, at observation time
  std::vector<double> joint_tau;         // per actuator, torque of frame t-1
  std::vector<double> applied_tau;       // per actuator, command at frame t
  std::vector<uint8_t> image;            // binary, {0,1}
  std::vector<uint8_t> flow_codes;       // 2 planes, quantized px/frame
};

struct Episode {
  std::string scenario;
  uint64_t seed = 0;
  double tau_max = 0.2;
  double dtau_max = 0.1;
  double control_hz = 30.0;
  sim::ChainParams params;
  std::vector<Frame> frames;
};

// Random-walk torque rollout: tau_{t+1} = clip(tau_t + u), u uniform in
// [-dtau_max, dtau_max], tau_0 = 0, rendered through the vision pipeline.
Episode collect_random(const std::string& scenario_name, int n_frames,
                       double tau_max, double dtau_max, uint64_t seed,
                       const std::optional<sim::ChainParams>& override_params =
                           std::nullopt);

// Pair t in [0, len-T): observation at t, torques over [t, t+T), blurred
// target at t+T. Throws if the episode is not longer than T.
net::Dataset make_pairs(const Episode& episode, int T);
// Same, appending with the next episode id (multi-episode training).
void append_pairs(const Episode& episode, int T, net::Dataset& ds);

// Directory of PGM frames (frame_%06d_{img,flow_x,flow_y}.pgm) plus
// episode.csv and episode.meta.
void save_episode(const Episode& episode, const std::string& dir);
Episode load_episode(const std::string& dir);

struct MetricsRow {
  int frame = 0;
  double d_chamfer = 0.0;
  double loss_before = 0.0;
  double loss_after = 0.0;
  bool accepted = false;
  int candidate = -1;
  double wall_ms = 0.0;
  std::vector<double> tau;  // emitted command, per actuator
};

struct ExperimentConfig {
  std::string scenario;
  vision::Image target;  // binary target image
  int T = 10;
  ctrl::InitMethod method;
  double duration_s = 10.0;
  int repeats = 5;
  int opt_iters = 1;
  uint64_t seed = 0;
  std::string dump_dir;  // when non-empty, per-frame PGM dumps
};

// Closed loop: each repeat resets the scenario to its initial state and runs
// duration * 30 control steps. `network` may be null only for method none.
std::vector<std::vector<MetricsRow>> run_experiment(
    net::DynamicsNetF* network, const ExperimentConfig& cfg);

// Rate(th) = fraction of frames with d_chamfer < th, pooled over repeats.
std::vector<std::pair<double, double>> rate_curve(
    const std::vector<MetricsRow>& rows, const std::vector<double>& thresholds);

void save_metrics_csv(const std::vector<std::vector<MetricsRow>>& repeats,
                      const std::string& path);
std::vector<std::vector<MetricsRow>> load_metrics_csv(const std::string& path);

// 0, 100, ..., 3000 px; the default Rate-curve grid.
std::vector<double> default_thresholds();

struct SweepConfig {
  std::string scenario = "rigid_pendulum";
  std::string target_path;
  std::vector<int> T_values = {5, 10, 15};
  std::vector<std::string> methods = {"random", "constant", "shift", "mixed"};
  int repeats = 5;
  double duration_s = 10.0;
  int frames = 10800;
  double tau_max = 0.2;
  double dtau_max = 0.1;
  int epochs = 50;
  int batch = 64;
  double lr = 1e-3;
  int opt_iters = 1;
  uint64_t seed = 0;
  int jobs = 1;
  std::vector<double> thresholds = default_thresholds();

  static SweepConfig from_file(const std::string& path);
};

struct SweepRow {
  std::string scenario;
  int T;  // 0 for the baseline
  std::string method;
  double th;
  double rate;
};

// Collect once, train one net per T, run every (T, method) condition plus
// the No-Optimization baseline; condition runs may execute in parallel
// (cfg.jobs). Per-condition metrics CSVs and rates.csv land in out_dir.
std::vector<SweepRow> sweep(const SweepConfig& cfg, const std::string& out_dir);

}  // namespace fdn::harness
