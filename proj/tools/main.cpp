// fdnctl: collect motion data, train the prediction network, run closed-loop
// torque control toward a target image, sweep parameters, and evaluate
// Rate(th_chamfer) tables.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "fdn/config.hpp"
#include "fdn/control.hpp"
#include "fdn/dynnet.hpp"
#include "fdn/harness.hpp"
#include "fdn/sim.hpp"
#include "fdn/vision.hpp"

namespace fs = std::filesystem;
using namespace fdn;

namespace {

constexpr const char* kToolVersion = "1.0.0";

struct ManifestScope {
  cfg::KvWriter kv;
  std::string path;
  explicit ManifestScope(const std::string& out_dir, const std::string& cmd) {
    fs::create_directories(out_dir);
    path = out_dir + "/manifest.txt";
    kv.set("tool_version", std::string(kToolVersion));
    kv.set("subcommand", cmd);
    kv.set("started", cfg::timestamp_utc());
  }
  void finish() {
    kv.set("finished", cfg::timestamp_utc());
    kv.save(path);
  }
};

std::optional<sim::ChainParams> load_overrides(const std::string& scenario,
                                               const std::string& config_path) {
  if (config_path.empty()) return std::nullopt;
  auto [params, state] = sim::scenario(scenario);
  (void)state;
  cfg::apply_chain_overrides(params, cfg::load_kv(config_path));
  return params;
}

vision::Image load_binary_target(const std::string& path) {
  vision::Image img = vision::load_pgm(path);
  for (auto& v : img.px) v = v >= 0.5f ? 1.0f : 0.0f;
  return img;
}

int cmd_collect(const std::string& scenario, int frames, double tau_max,
                double dtau_max, uint64_t seed, const std::string& out,
                const std::string& config_path) {
  ManifestScope mf(out, "collect");
  mf.kv.set("scenario", scenario);
  mf.kv.set("frames", static_cast<long long>(frames));
  mf.kv.set("tau_max", tau_max);
  mf.kv.set("dtau_max", dtau_max);
  mf.kv.set("seed", static_cast<long long>(seed));
  mf.kv.set("out", out);
  if (!config_path.empty()) mf.kv.set("config", config_path);
  const auto overrides = load_overrides(scenario, config_path);
  const harness::Episode ep =
      harness::collect_random(scenario, frames, tau_max, dtau_max, seed, overrides);
  harness::save_episode(ep, out);
  mf.finish();
  std::cout << "collected " << ep.frames.size() << " frames -> " << out << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, int T, int epochs, double lr,
              int batch, uint64_t seed, const std::string& out) {
  if (!fs::is_directory(data_dir))
    throw std::runtime_error("data directory not found: " + data_dir);
  // one episode per directory: either episode.meta at top level or per-episode
  // subdirectories
  net::Dataset ds;
  int n_episodes = 0;
  if (fs::exists(data_dir + "/episode.meta")) {
    harness::append_pairs(harness::load_episode(data_dir), T, ds);
    ++n_episodes;
  } else {
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(data_dir))
      if (e.is_directory() && fs::exists(e.path() / "episode.meta"))
        dirs.push_back(e.path().string());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      harness::append_pairs(harness::load_episode(d), T, ds);
      ++n_episodes;
    }
  }
  if (n_episodes == 0)
    throw std::runtime_error("no episodes found under " + data_dir);

  const std::string out_dir = fs::path(out).has_parent_path()
                                  ? fs::path(out).parent_path().string()
                                  : ".";
  ManifestScope mf(out_dir, "train");
  mf.kv.set("data", data_dir);
  mf.kv.set("episodes", static_cast<long long>(n_episodes));
  mf.kv.set("pairs", static_cast<long long>(ds.n_pairs()));
  mf.kv.set("T", static_cast<long long>(T));
  mf.kv.set("epochs", static_cast<long long>(epochs));
  mf.kv.set("lr", lr);
  mf.kv.set("batch", static_cast<long long>(batch));
  mf.kv.set("seed", static_cast<long long>(seed));
  mf.kv.set("out", out);

  net::DynNetConfig nc;
  nc.T = T;
  nc.M = ds.M;
  net::DynamicsNetF model(nc, seed);
  net::TrainConfig tc;
  tc.epochs = epochs;
  tc.batch = batch;
  tc.lr = lr;
  tc.seed = seed;
  const net::TrainResult tr = net::train(model, ds, tc);
  net::save(model, out);

  const std::string hist_path = out + ".loss.csv";
  std::ofstream hist(hist_path);
  hist << "epoch,train_loss,val_loss\n";
  hist.precision(17);
  for (const auto& e : tr.history)
    hist << e.epoch << "," << e.train_loss << "," << e.val_loss << "\n";

  mf.kv.set("final_val_loss", tr.final_val_loss);
  mf.kv.set("baseline_val_loss", tr.baseline_val_loss);
  mf.finish();
  std::cout << "trained " << ds.n_pairs() << " pairs, val loss "
            << tr.final_val_loss << " (copy baseline " << tr.baseline_val_loss
            << ") -> " << out << "\n";
  return 0;
}

int cmd_control(const std::string& model_path, const std::string& scenario,
                const std::string& target_path, const std::string& method,
                double duration, int repeats, int opt_iters, uint64_t seed,
                const std::string& out, bool dump_frames) {
  net::DynamicsNetF model = net::load(model_path);
  auto [params, state] = sim::scenario(scenario);
  (void)state;
  if (model.cfg.M != params.n_actuated())
    throw std::runtime_error("model actuator count does not match scenario");

  ManifestScope mf(out, "control");
  mf.kv.set("model", model_path);
  mf.kv.set("scenario", scenario);
  mf.kv.set("target", target_path);
  mf.kv.set("method", method);
  mf.kv.set("T", static_cast<long long>(model.cfg.T));
  mf.kv.set("duration", duration);
  mf.kv.set("repeats", static_cast<long long>(repeats));
  mf.kv.set("opt_iters", static_cast<long long>(opt_iters));
  mf.kv.set("seed", static_cast<long long>(seed));
  mf.kv.set("out", out);

  harness::ExperimentConfig ec;
  ec.scenario = scenario;
  ec.target = load_binary_target(target_path);
  ec.T = model.cfg.T;
  ec.method = ctrl::InitMethod::parse(method);
  ec.duration_s = duration;
  ec.repeats = repeats;
  ec.opt_iters = opt_iters;
  ec.seed = seed;
  if (dump_frames) ec.dump_dir = out + "/frames";
  const auto rows = harness::run_experiment(
      ec.method.kind == ctrl::InitMethod::Kind::None ? nullptr : &model, ec);
  harness::save_metrics_csv(rows, out + "/metrics.csv");
  mf.finish();

  double mean_chamfer = 0.0;
  size_t n = 0;
  for (const auto& rep : rows)
    for (const auto& r : rep) {
      mean_chamfer += r.d_chamfer;
      ++n;
    }
  std::cout << "ran " << rows.size() << " repeats, mean chamfer "
            << (n ? mean_chamfer / n : 0.0) << " px -> " << out
            << "/metrics.csv\n";
  return 0;
}

int cmd_target(const std::string& scenario, const std::string& theta_csv,
               const std::string& out) {
  auto [params, state] = sim::scenario(scenario);
  const auto theta = cfg::parse_double_list(theta_csv);
  if (static_cast<int>(theta.size()) != params.n_links)
    throw std::runtime_error("expected " + std::to_string(params.n_links) +
                             " joint angles");
  state.theta = theta;
  const vision::Camera cam = vision::default_camera(params);
  const vision::Image binary =
      vision::preprocess(vision::render_chain(state, params, cam));
  vision::save_pgm(binary, out);
  std::cout << "wrote target " << out << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out, int jobs) {
  harness::SweepConfig sc = harness::SweepConfig::from_file(config_path);
  if (jobs > 0) sc.jobs = jobs;
  ManifestScope mf(out, "sweep");
  mf.kv.set("config", config_path);
  mf.kv.set("scenario", sc.scenario);
  mf.kv.set("target", sc.target_path);
  mf.kv.set("frames", static_cast<long long>(sc.frames));
  mf.kv.set("epochs", static_cast<long long>(sc.epochs));
  mf.kv.set("repeats", static_cast<long long>(sc.repeats));
  mf.kv.set("duration", sc.duration_s);
  mf.kv.set("seed", static_cast<long long>(sc.seed));
  mf.kv.set("jobs", static_cast<long long>(sc.jobs));
  mf.kv.set("out", out);
  const auto rows = harness::sweep(sc, out);
  mf.finish();
  std::cout << "sweep wrote " << rows.size() << " rate rows -> " << out
            << "/rates.csv\n";
  return 0;
}

int cmd_eval(const std::string& metrics_dir, const std::string& thresholds_csv,
             const std::string& out) {
  std::vector<double> thresholds = thresholds_csv.empty()
                                       ? harness::default_thresholds()
                                       : cfg::parse_double_list(thresholds_csv);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(metrics_dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("metrics", 0) == 0 && e.path().extension() == ".csv")
      files.push_back(e.path().string());
  }
  if (files.empty())
    throw std::runtime_error("no metrics CSVs in " + metrics_dir);
  std::sort(files.begin(), files.end());

  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write: " + out);
  f.precision(17);
  f << "source,th,rate\n";
  for (const auto& file : files) {
    const auto repeats = harness::load_metrics_csv(file);
    std::vector<harness::MetricsRow> pooled;
    for (const auto& rep : repeats)
      pooled.insert(pooled.end(), rep.begin(), rep.end());
    for (const auto& [th, rate] : harness::rate_curve(pooled, thresholds))
      f << fs::path(file).filename().string() << "," << th << "," << rate << "\n";
  }
  std::cout << "evaluated " << files.size() << " metrics files -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learned image-predictive dynamics model and torque-command "
               "optimization for under-actuated chains"};
  app.require_subcommand(1);

  // collect
  std::string scenario = "rigid_pendulum", out, config_path;
  int frames = 10800;
  double tau_max = 0.2, dtau_max = 0.1;
  uint64_t seed = 0;
  auto* collect = app.add_subcommand("collect", "record a random-torque episode");
  collect->add_option("--scenario", scenario);
  collect->add_option("--frames", frames);
  collect->add_option("--tau-max", tau_max);
  collect->add_option("--dtau-max", dtau_max);
  collect->add_option("--seed", seed);
  collect->add_option("--config", config_path)->description("sim.* overrides");
  collect->add_option("--out", out)->required();

  // train
  std::string data_dir, model_out;
  int T = 10, epochs = 50, batch = 64;
  double lr = 1e-3;
  auto* train = app.add_subcommand("train", "train the prediction network");
  train->add_option("--data", data_dir)->required();
  train->add_option("--T", T);
  train->add_option("--epochs", epochs);
  train->add_option("--lr", lr);
  train->add_option("--batch", batch);
  train->add_option("--seed", seed);
  train->add_option("--out", model_out)->required();

  // control
  std::string model_path, target_path, method = "mixed";
  double duration = 10.0;
  int repeats = 5, opt_iters = 1;
  bool dump_frames = false;
  auto* control = app.add_subcommand("control", "closed-loop target realization");
  control->add_option("--model", model_path)->required();
  control->add_option("--scenario", scenario);
  control->add_option("--target", target_path)->required();
  control->add_option("--method", method)
      ->description("random|constant|shift|mixed|none");
  control->add_option("--duration", duration);
  control->add_option("--repeats", repeats);
  control->add_option("--opt-iters", opt_iters);
  control->add_option("--seed", seed);
  control->add_flag("--dump-frames", dump_frames);
  control->add_option("--out", out)->required();

  // target
  std::string theta_csv;
  auto* target = app.add_subcommand("target", "render a posed target image");
  target->add_option("--scenario", scenario);
  target->add_option("--theta", theta_csv)->required();
  target->add_option("--out", out)->required();

  // sweep
  int jobs = 0;
  auto* sweep = app.add_subcommand("sweep", "T x Initialize-method grid");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--jobs", jobs);
  sweep->add_option("--out", out)->required();

  // eval
  std::string metrics_dir, thresholds_csv;
  auto* eval = app.add_subcommand("eval", "Rate(th_chamfer) tables");
  eval->add_option("--metrics", metrics_dir)->required();
  eval->add_option("--thresholds", thresholds_csv);
  eval->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (collect->parsed())
      return cmd_collect(scenario, frames, tau_max, dtau_max, seed, out,
                         config_path);
    if (train->parsed())
      return cmd_train(data_dir, T, epochs, lr, batch, seed, model_out);
    if (control->parsed())
      return cmd_control(model_path, scenario, target_path, method, duration,
                         repeats, opt_iters, seed, out, dump_frames);
    if (target->parsed()) return cmd_target(scenario, theta_csv, out);
    if (sweep->parsed()) return cmd_sweep(config_path, out, jobs);
    if (eval->parsed()) return cmd_eval(metrics_dir, thresholds_csv, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
