#include "fdn/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fdn/config.hpp"

namespace fdn::harness {

namespace fs = std::filesystem;

namespace {

std::string frame_name(int idx, const char* plane) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "frame_%06d_%s.pgm", idx, plane);
  return buf;
}

void write_pgm_bytes(const std::vector<uint8_t>& bytes, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << "P5\n" << vision::kImageSize << " " << vision::kImageSize << "\n255\n";
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

std::vector<uint8_t> read_pgm_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string magic;
  int w, h, maxval;
  f >> magic >> w >> h >> maxval;
  if (magic != "P5" || w != vision::kImageSize || h != vision::kImageSize ||
      maxval != 255)
    throw std::runtime_error("unexpected PGM format: " + path);
  f.get();
  std::vector<uint8_t> bytes(static_cast<size_t>(w) * h);
  f.read(reinterpret_cast<char*>(bytes.data()),
         static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("truncated PGM: " + path);
  return bytes;
}

vision::Image image_from_bits(const std::vector<uint8_t>& bits) {
  vision::Image img;
  for (size_t i = 0; i < img.size(); ++i) img.px[i] = bits[i] ? 1.0f : 0.0f;
  return img;
}

vision::FlowField flow_from_codes(const std::vector<uint8_t>& codes) {
  vision::FlowField flow;
  for (int i = 0; i < net::kImagePixels; ++i) {
    flow.x.px[i] = vision::decode_flow_px(codes[i]);
    flow.y.px[i] = vision::decode_flow_px(codes[net::kImagePixels + i]);
  }
  return flow;
}

float normalized_joint(double v, double scale) {
  return static_cast<float>(std::clamp(v / scale, -1.0, 1.0));
}

}  // namespace

Episode collect_random(const std::string& scenario_name, int n_frames,
                       double tau_max, double dtau_max, uint64_t seed,
                       const std::optional<sim::ChainParams>& override_params) {
  auto [params, state] = sim::scenario(scenario_name);
  if (override_params) params = *override_params;
  params.tau_max = tau_max;
  params.validate();
  const sim::SimConfig sim_cfg;
  const vision::Camera cam = vision::default_camera(params);
  const int M = params.n_actuated();

  Episode ep;
  ep.scenario = scenario_name;
  ep.seed = seed;
  ep.tau_max = tau_max;
  ep.dtau_max = dtau_max;
  ep.control_hz = sim_cfg.control_hz;
  ep.params = params;
  ep.frames.reserve(n_frames);

  Rng rng(seed);
  std::vector<double> tau(M, 0.0), prev_tau(M, 0.0);
  for (int t = 0; t < n_frames; ++t) {
    Frame fr;
    fr.theta = state.theta;
    fr.theta_dot = state.theta_dot;
    fr.joint_tau = prev_tau;
    fr.applied_tau = tau;

    const vision::Image gray = vision::render_chain(state, params, cam);
    const vision::Image binary = vision::preprocess(gray);
    vision::FlowField flow =
        vision::render_flow(state, params, cam, sim_cfg.control_hz);
    fr.image.resize(binary.size());
    for (size_t i = 0; i < binary.size(); ++i)
      fr.image[i] = binary.px[i] >= 0.5f ? 1 : 0;
    fr.flow_codes.resize(2 * net::kImagePixels);
    for (int i = 0; i < net::kImagePixels; ++i) {
      fr.flow_codes[i] = vision::encode_flow_px(flow.x.px[i]);
      fr.flow_codes[net::kImagePixels + i] = vision::encode_flow_px(flow.y.px[i]);
    }
    ep.frames.push_back(std::move(fr));

    state = sim::step(state, tau, params, sim_cfg);
    prev_tau = tau;
    for (int a = 0; a < M; ++a)
      tau[a] = std::clamp(tau[a] + rng.uniform(-dtau_max, dtau_max), -tau_max,
                          tau_max);
  }
  return ep;
}

void append_pairs(const Episode& ep, int T, net::Dataset& ds) {
  const int len = static_cast<int>(ep.frames.size());
  if (len <= T) throw std::invalid_argument("episode too short for horizon T");
  const int M = ep.params.n_actuated();
  if (ds.n_frames == 0) {
    ds.M = M;
    ds.T = T;
  } else if (ds.M != M || ds.T != T) {
    throw std::invalid_argument("append_pairs: mixed M/T");
  }
  int episode_id = 0;
  for (int e : ds.pair_episode) episode_id = std::max(episode_id, e + 1);

  const int base = ds.n_frames;
  ds.n_frames += len;
  ds.images.resize(static_cast<size_t>(ds.n_frames) * net::kImagePixels);
  ds.flow_codes.resize(static_cast<size_t>(ds.n_frames) * 2 * net::kImagePixels);
  ds.joints.resize(static_cast<size_t>(ds.n_frames) * 3 * M);
  ds.taus_norm.resize(static_cast<size_t>(ds.n_frames) * M);
  ds.targets.resize(static_cast<size_t>(ds.n_frames) * net::kImagePixels);

  for (int t = 0; t < len; ++t) {
    const Frame& fr = ep.frames[t];
    const int row = base + t;
    std::copy(fr.image.begin(), fr.image.end(),
              ds.images.begin() + static_cast<size_t>(row) * net::kImagePixels);
    std::copy(fr.flow_codes.begin(), fr.flow_codes.end(),
              ds.flow_codes.begin() +
                  static_cast<size_t>(row) * 2 * net::kImagePixels);
    for (int a = 0; a < M; ++a) {
      const int j = ep.params.actuated[a];
      ds.joints[static_cast<size_t>(row) * 3 * M + 3 * a + 0] =
          static_cast<float>(net::wrap_angle(fr.theta[j]) / M_PI);
      ds.joints[static_cast<size_t>(row) * 3 * M + 3 * a + 1] =
          normalized_joint(fr.theta_dot[j], 2.0 * M_PI);
      ds.joints[static_cast<size_t>(row) * 3 * M + 3 * a + 2] =
          normalized_joint(fr.joint_tau[a], ep.tau_max);
      ds.taus_norm[static_cast<size_t>(row) * M + a] =
          static_cast<float>(fr.applied_tau[a] / ep.tau_max);
    }
    const vision::Image blurred = vision::blur_target(image_from_bits(fr.image));
    std::copy(blurred.px.begin(), blurred.px.end(),
              ds.targets.begin() + static_cast<size_t>(row) * net::kImagePixels);
  }
  for (int t = 0; t + T < len; ++t) {
    ds.pair_frame.push_back(base + t);
    ds.pair_episode.push_back(episode_id);
  }
}

net::Dataset make_pairs(const Episode& episode, int T) {
  net::Dataset ds;
  append_pairs(episode, T, ds);
  return ds;
}

void save_episode(const Episode& ep, const std::string& dir) {
  fs::create_directories(dir);
  const int M = ep.params.n_actuated();
  const int n = ep.params.n_links;

  cfg::KvWriter meta;
  meta.set("scenario", ep.scenario);
  meta.set("seed", static_cast<long long>(ep.seed));
  meta.set("frames", static_cast<long long>(ep.frames.size()));
  meta.set("tau_max", ep.tau_max);
  meta.set("dtau_max", ep.dtau_max);
  meta.set("control_hz", ep.control_hz);
  meta.save(dir + "/episode.meta");

  std::ofstream csv(dir + "/episode.csv");
  if (!csv) throw std::runtime_error("cannot write episode.csv");
  csv.precision(17);
  csv << "frame";
  for (int i = 0; i < n; ++i) csv << ",theta_" << i;
  for (int i = 0; i < n; ++i) csv << ",theta_dot_" << i;
  for (int a = 0; a < M; ++a) csv << ",tau_" << a;
  csv << "\n";
  for (size_t t = 0; t < ep.frames.size(); ++t) {
    const Frame& fr = ep.frames[t];
    csv << t;
    for (int i = 0; i < n; ++i) csv << "," << fr.theta[i];
    for (int i = 0; i < n; ++i) csv << "," << fr.theta_dot[i];
    for (int a = 0; a < M; ++a) csv << "," << fr.applied_tau[a];
    csv << "\n";

    std::vector<uint8_t> img(fr.image.size());
    for (size_t i = 0; i < img.size(); ++i) img[i] = fr.image[i] ? 255 : 0;
    write_pgm_bytes(img, dir + "/" + frame_name(static_cast<int>(t), "img"));
    std::vector<uint8_t> fx(fr.flow_codes.begin(),
                            fr.flow_codes.begin() + net::kImagePixels);
    std::vector<uint8_t> fy(fr.flow_codes.begin() + net::kImagePixels,
                            fr.flow_codes.end());
    write_pgm_bytes(fx, dir + "/" + frame_name(static_cast<int>(t), "flow_x"));
    write_pgm_bytes(fy, dir + "/" + frame_name(static_cast<int>(t), "flow_y"));
  }
}

Episode load_episode(const std::string& dir) {
  const auto meta = cfg::load_kv(dir + "/episode.meta");
  Episode ep;
  ep.scenario = meta.at("scenario");
  ep.seed = std::stoull(meta.at("seed"));
  ep.tau_max = std::stod(meta.at("tau_max"));
  ep.dtau_max = std::stod(meta.at("dtau_max"));
  ep.control_hz = std::stod(meta.at("control_hz"));
  const int n_frames = std::stoi(meta.at("frames"));
  auto [params, initial] = sim::scenario(ep.scenario);
  params.tau_max = ep.tau_max;
  ep.params = params;
  (void)initial;

  std::ifstream csv(dir + "/episode.csv");
  if (!csv) throw std::runtime_error("cannot open episode.csv in " + dir);
  std::string line;
  std::getline(csv, line);  // header
  const int n = params.n_links;
  const int M = params.n_actuated();
  std::vector<double> prev_tau(M, 0.0);
  for (int t = 0; t < n_frames; ++t) {
    if (!std::getline(csv, line))
      throw std::runtime_error("episode.csv truncated");
    std::istringstream in(line);
    std::string tok;
    std::getline(in, tok, ',');  // frame index
    Frame fr;
    fr.theta.resize(n);
    fr.theta_dot.resize(n);
    fr.applied_tau.resize(M);
    for (int i = 0; i < n; ++i) {
      std::getline(in, tok, ',');
      fr.theta[i] = std::stod(tok);
    }
    for (int i = 0; i < n; ++i) {
      std::getline(in, tok, ',');
      fr.theta_dot[i] = std::stod(tok);
    }
    for (int a = 0; a < M; ++a) {
      if (!std::getline(in, tok, ','))
        throw std::runtime_error("episode.csv: short row");
      fr.applied_tau[a] = std::stod(tok);
    }
    fr.joint_tau = prev_tau;
    prev_tau = fr.applied_tau;

    const auto img = read_pgm_bytes(dir + "/" + frame_name(t, "img"));
    fr.image.resize(img.size());
    for (size_t i = 0; i < img.size(); ++i) fr.image[i] = img[i] >= 128 ? 1 : 0;
    const auto fx = read_pgm_bytes(dir + "/" + frame_name(t, "flow_x"));
    const auto fy = read_pgm_bytes(dir + "/" + frame_name(t, "flow_y"));
    fr.flow_codes.reserve(2 * net::kImagePixels);
    fr.flow_codes.insert(fr.flow_codes.end(), fx.begin(), fx.end());
    fr.flow_codes.insert(fr.flow_codes.end(), fy.begin(), fy.end());
    ep.frames.push_back(std::move(fr));
  }
  return ep;
}

std::vector<std::vector<MetricsRow>> run_experiment(
    net::DynamicsNetF* network, const ExperimentConfig& cfg) {
  if (!network && cfg.method.kind != ctrl::InitMethod::Kind::None)
    throw std::invalid_argument("run_experiment: network required");
  if (network && network->cfg.T != cfg.T)
    throw std::invalid_argument("run_experiment: model horizon != configured T");
  auto [params, initial] = sim::scenario(cfg.scenario);
  const sim::SimConfig sim_cfg;
  const vision::Camera cam = vision::default_camera(params);
  const int M = params.n_actuated();

  const vision::Image blurred = vision::blur_target(cfg.target);
  if (network) network->set_param_grad(false);

  ctrl::ControlConfig cc;
  cc.tau_max = params.tau_max;
  cc.gamma = 0.25 * params.tau_max;
  cc.opt_iters = cfg.opt_iters;
  cc.T = cfg.T;

  const int frames = static_cast<int>(std::lround(cfg.duration_s * sim_cfg.control_hz));
  std::vector<std::vector<MetricsRow>> all;
  for (int rep = 0; rep < cfg.repeats; ++rep) {
    Rng rng(cfg.seed + 1000003ULL * static_cast<uint64_t>(rep));
    sim::ChainState state = initial;
    net::TorqueSequence prev_opt(M, cfg.T);
    std::vector<double> prev_tau(M, 0.0);
    std::vector<MetricsRow> rows;
    rows.reserve(frames);
    std::string dump_dir;
    if (!cfg.dump_dir.empty()) {
      dump_dir = cfg.dump_dir + "/repeat_" + std::to_string(rep);
      fs::create_directories(dump_dir);
    }
    for (int t = 0; t < frames; ++t) {
      const vision::Image gray = vision::render_chain(state, params, cam);
      const vision::Image binary = vision::preprocess(gray);
      vision::FlowField flow =
          vision::render_flow(state, params, cam, sim_cfg.control_hz);
      vision::quantize_flow(flow);

      ctrl::ControlStepResult res;
      if (cfg.method.kind == ctrl::InitMethod::Kind::None) {
        res = ctrl::baseline_step(cc, cfg.method.N, M, rng);
      } else {
        const net::Observation obs =
            net::make_observation(binary, flow, state, prev_tau, params);
        res = ctrl::control_step(*network, obs, blurred, prev_opt, cc,
                                 cfg.method, rng);
      }

      MetricsRow row;
      row.frame = t;
      row.d_chamfer = vision::chamfer_distance(binary, cfg.target);
      row.loss_before = res.diag.loss_before;
      row.loss_after = res.diag.loss_after;
      row.accepted = res.diag.accepted;
      row.candidate = res.diag.selected;
      row.wall_ms = res.diag.wall_ms;
      row.tau = res.tau_now;
      rows.push_back(std::move(row));

      if (!dump_dir.empty())
        vision::save_pgm(binary, dump_dir + "/" + frame_name(t, "img"));

      state = sim::step(state, res.tau_now, params, sim_cfg);
      prev_tau = res.tau_now;
      prev_opt = std::move(res.new_prev_opt);
    }
    all.push_back(std::move(rows));
  }
  return all;
}

std::vector<std::pair<double, double>> rate_curve(
    const std::vector<MetricsRow>& rows, const std::vector<double>& thresholds) {
  if (rows.empty()) throw std::invalid_argument("rate_curve: no rows");
  std::vector<std::pair<double, double>> out;
  out.reserve(thresholds.size());
  for (double th : thresholds) {
    size_t hits = 0;
    for (const auto& r : rows)
      if (r.d_chamfer < th) ++hits;
    out.emplace_back(th, static_cast<double>(hits) / rows.size());
  }
  return out;
}

void save_metrics_csv(const std::vector<std::vector<MetricsRow>>& repeats,
                      const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write: " + path);
  f.precision(17);
  const int M = repeats.empty() || repeats[0].empty()
                    ? 1
                    : static_cast<int>(repeats[0][0].tau.size());
  f << "repeat,frame,d_chamfer,loss_before,loss_after,accepted,candidate,wall_ms";
  for (int a = 0; a < M; ++a) f << ",tau_" << a;
  f << "\n";
  for (size_t rep = 0; rep < repeats.size(); ++rep)
    for (const auto& r : repeats[rep]) {
      f << rep << "," << r.frame << "," << r.d_chamfer << "," << r.loss_before
        << "," << r.loss_after << "," << (r.accepted ? 1 : 0) << ","
        << r.candidate << "," << r.wall_ms;
      for (double t : r.tau) f << "," << t;
      f << "\n";
    }
}

std::vector<std::vector<MetricsRow>> load_metrics_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty metrics: " + path);
  std::vector<std::vector<MetricsRow>> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string tok;
    auto next = [&in, &tok]() {
      if (!std::getline(in, tok, ',')) throw std::runtime_error("short row");
      return tok;
    };
    const size_t rep = std::stoul(next());
    MetricsRow r;
    r.frame = std::stoi(next());
    r.d_chamfer = std::stod(next());
    r.loss_before = std::stod(next());
    r.loss_after = std::stod(next());
    r.accepted = std::stoi(next()) != 0;
    r.candidate = std::stoi(next());
    r.wall_ms = std::stod(next());
    while (std::getline(in, tok, ',')) r.tau.push_back(std::stod(tok));
    while (out.size() <= rep) out.emplace_back();
    out[rep].push_back(std::move(r));
  }
  return out;
}

std::vector<double> default_thresholds() {
  std::vector<double> th;
  for (int t = 0; t <= 3000; t += 100) th.push_back(t);
  return th;
}

SweepConfig SweepConfig::from_file(const std::string& path) {
  const auto kv = cfg::load_kv(path);
  SweepConfig sc;
  auto get = [&kv](const char* key) -> const std::string* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("scenario")) sc.scenario = *v;
  if (auto* v = get("target")) sc.target_path = *v;
  if (auto* v = get("T_values")) sc.T_values = cfg::parse_int_list(*v);
  if (auto* v = get("methods")) {
    sc.methods.clear();
    std::istringstream in(*v);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      const auto a = tok.find_first_not_of(" \t");
      if (a == std::string::npos) continue;
      const auto b = tok.find_last_not_of(" \t");
      sc.methods.push_back(tok.substr(a, b - a + 1));
    }
  }
  if (auto* v = get("repeats")) sc.repeats = std::stoi(*v);
  if (auto* v = get("duration")) sc.duration_s = std::stod(*v);
  if (auto* v = get("frames")) sc.frames = std::stoi(*v);
  if (auto* v = get("tau_max")) sc.tau_max = std::stod(*v);
  if (auto* v = get("dtau_max")) sc.dtau_max = std::stod(*v);
  if (auto* v = get("epochs")) sc.epochs = std::stoi(*v);
  if (auto* v = get("batch")) sc.batch = std::stoi(*v);
  if (auto* v = get("lr")) sc.lr = std::stod(*v);
  if (auto* v = get("opt_iters")) sc.opt_iters = std::stoi(*v);
  if (auto* v = get("seed")) sc.seed = std::stoull(*v);
  if (auto* v = get("jobs")) sc.jobs = std::stoi(*v);
  if (auto* v = get("thresholds")) sc.thresholds = cfg::parse_double_list(*v);
  return sc;
}

std::vector<SweepRow> sweep(const SweepConfig& sc, const std::string& out_dir) {
  if (sc.target_path.empty())
    throw std::invalid_argument("sweep: target image required");
  fs::create_directories(out_dir);
  vision::Image target = vision::load_pgm(sc.target_path);
  for (auto& v : target.px) v = v >= 0.5f ? 1.0f : 0.0f;

  const Episode episode = collect_random(sc.scenario, sc.frames, sc.tau_max,
                                         sc.dtau_max, sc.seed);
  const int M = episode.params.n_actuated();

  // one trained net per horizon
  std::vector<net::DynamicsNetF> nets;
  nets.reserve(sc.T_values.size());
  for (size_t i = 0; i < sc.T_values.size(); ++i) {
    const int T = sc.T_values[i];
    const net::Dataset ds = make_pairs(episode, T);
    net::DynNetConfig nc;
    nc.T = T;
    nc.M = M;
    net::DynamicsNetF model(nc, sc.seed + 17 * T);
    net::TrainConfig tc;
    tc.epochs = sc.epochs;
    tc.batch = sc.batch;
    tc.lr = sc.lr;
    tc.seed = sc.seed;
    const net::TrainResult tr = net::train(model, ds, tc);
    net::save(model, out_dir + "/model_T" + std::to_string(T) + ".fdnw");
    std::ofstream hist(out_dir + "/loss_T" + std::to_string(T) + ".csv");
    hist << "epoch,train_loss,val_loss\n";
    hist.precision(17);
    for (const auto& e : tr.history)
      hist << e.epoch << "," << e.train_loss << "," << e.val_loss << "\n";
    nets.push_back(std::move(model));
  }

  struct Condition {
    int T;                 // 0 = baseline
    std::string method;
    net::DynamicsNetF* model;
  };
  std::vector<Condition> conditions;
  for (size_t i = 0; i < sc.T_values.size(); ++i)
    for (const auto& m : sc.methods)
      conditions.push_back({sc.T_values[i], m, &nets[i]});
  conditions.push_back({0, "none", nullptr});

  std::vector<std::vector<SweepRow>> per_condition(conditions.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t c = next.fetch_add(1); c < conditions.size();
         c = next.fetch_add(1)) {
      const auto& cond = conditions[c];
      ExperimentConfig ec;
      ec.scenario = sc.scenario;
      ec.target = target;
      ec.T = cond.model ? cond.T : sc.T_values.front();
      ec.method = ctrl::InitMethod::parse(cond.method);
      ec.duration_s = sc.duration_s;
      ec.repeats = sc.repeats;
      ec.opt_iters = sc.opt_iters;
      ec.seed = sc.seed + 7919 * (c + 1);
      const auto repeats = run_experiment(cond.model, ec);
      save_metrics_csv(repeats, out_dir + "/metrics_T" + std::to_string(cond.T) +
                                    "_" + cond.method + ".csv");
      std::vector<MetricsRow> pooled;
      for (const auto& rep : repeats)
        pooled.insert(pooled.end(), rep.begin(), rep.end());
      for (const auto& [th, rate] : rate_curve(pooled, sc.thresholds))
        per_condition[c].push_back({sc.scenario, cond.T, cond.method, th, rate});
    }
  };
  const int n_threads = std::max(1, std::min<int>(sc.jobs, conditions.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<SweepRow> rows;
  for (const auto& pc : per_condition)
    rows.insert(rows.end(), pc.begin(), pc.end());
  std::ofstream f(out_dir + "/rates.csv");
  if (!f) throw std::runtime_error("cannot write rates.csv");
  f.precision(17);
  f << "scenario,T,method,th,rate\n";
  for (const auto& r : rows)
    f << r.scenario << "," << r.T << "," << r.method << "," << r.th << ","
      << r.rate << "\n";
  return rows;
}

}  // namespace fdn::harness
