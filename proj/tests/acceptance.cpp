// End-to-end acceptance suite. Each criterion prints a single PASS/FAIL
// line; the process exits nonzero when any criterion fails. Runs within a
// CI smoke budget on one core.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <vector>

#include "fdn/autodiff.hpp"
#include "fdn/control.hpp"
#include "fdn/dynnet.hpp"
#include "fdn/harness.hpp"
#include "fdn/sim.hpp"
#include "fdn/vision.hpp"

using namespace fdn;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail = "") {
  std::printf("[%s] criterion %2d: %s%s%s\n", ok ? "PASS" : "FAIL", idx,
              name.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string work_dir() {
  static std::string dir = [] {
    auto p = fs::temp_directory_path() / "fdn_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
  }();
  return dir;
}

// ---- criterion 1: gradient fidelity --------------------------------------------

using D = double;

bool fd_check(const std::vector<ad::Var<D>>& inputs,
              const std::function<ad::Var<D>()>& forward, double h = 1e-4,
              double tol = 1e-3) {
  auto loss = forward();
  for (const auto& in : inputs) in.zero_grad();
  loss.backward();
  for (const auto& in : inputs) {
    auto& val = in.val();
    const auto grad = in.grad();
    for (size_t i = 0; i < val.size(); ++i) {
      const double keep = val[i];
      val[i] = keep + h;
      const double fp = forward().val()[0];
      val[i] = keep - h;
      const double fm = forward().val()[0];
      val[i] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      const double scale = std::max({std::fabs(fd), std::fabs(grad[i]), 1e-6});
      if (std::fabs(fd - grad[i]) / scale >= tol) return false;
    }
  }
  return true;
}

std::vector<D> rvec(size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<D> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

bool criterion_gradients() {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    {  // linear
      auto x = ad::Var<D>::from({2, 5}, rvec(10, rng), true);
      auto W = ad::Var<D>::from({3, 5}, rvec(15, rng), true);
      auto b = ad::Var<D>::from({3}, rvec(3, rng), true);
      auto tg = rvec(6, rng);
      if (!fd_check({x, W, b}, [&] { return ad::mse_loss(ad::linear(x, W, b), tg); }))
        return false;
    }
    {  // conv + deconv
      auto x = ad::Var<D>::from({2, 2, 6, 6}, rvec(144, rng), true);
      auto W = ad::Var<D>::from({3, 2, 3, 3}, rvec(54, rng), true);
      auto b = ad::Var<D>::from({3}, rvec(3, rng), true);
      auto tg = rvec(2 * 3 * 9, rng);
      if (!fd_check({x, W, b}, [&] { return ad::mse_loss(ad::conv2d(x, W, b), tg); }))
        return false;
      auto dW = ad::Var<D>::from({2, 3, 3, 3}, rvec(54, rng), true);
      auto tg2 = rvec(2 * 3 * 144, rng);
      if (!fd_check({x, dW, b}, [&] { return ad::mse_loss(ad::deconv2d(x, dW, b), tg2); }))
        return false;
    }
    {  // batchnorm, train and eval
      auto x = ad::Var<D>::from({4, 3}, rvec(12, rng), true);
      auto g = ad::Var<D>::from({3}, rvec(3, rng, 0.5, 1.5), true);
      auto be = ad::Var<D>::from({3}, rvec(3, rng), true);
      auto tg = rvec(12, rng);
      std::vector<D> rm = rvec(3, rng), rv = {0.8, 1.2, 2.0};
      if (!fd_check({x, g, be}, [&] {
            auto rm2 = rm;
            auto rv2 = rv;
            return ad::mse_loss(ad::batchnorm(x, g, be, rm2, rv2, true), tg);
          }))
        return false;
      if (!fd_check({x, g, be}, [&] {
            return ad::mse_loss(ad::batchnorm(x, g, be, rm, rv, false), tg);
          }))
        return false;
    }
    {  // activations away from the relu kink
      auto xv = rvec(8, rng);
      for (auto& v : xv)
        if (std::fabs(v) < 0.05) v = 0.2;
      auto x = ad::Var<D>::from({2, 4}, xv, true);
      auto tg = rvec(8, rng);
      if (!fd_check({x}, [&] { return ad::mse_loss(ad::relu(x), tg); })) return false;
      if (!fd_check({x}, [&] { return ad::mse_loss(ad::sigmoid(x), tg); })) return false;
    }
  }
  // composed network: dLoss/d(tau sequence) through the full head
  for (uint64_t seed = 100; seed < 105; ++seed) {
    net::DynNetConfig cfg;
    cfg.T = 10;
    net::DynamicsNet<double> model(cfg, seed);
    Rng rng(seed + 1);
    std::vector<double> feature = rvec(128, rng), joints = rvec(3, rng);
    std::vector<double> target = rvec(net::kImagePixels, rng, 0.0, 1.0);
    auto tau = ad::Var<D>::from({1, 10}, rvec(10, rng), true);
    auto forward = [&] {
      return ad::mse_loss(net::predict(model, feature, joints, tau, false), target);
    };
    auto loss = forward();
    tau.zero_grad();
    loss.backward();
    const auto grad = tau.grad();
    const double h = 1e-5;
    for (int i = 0; i < 10; ++i) {
      const double keep = tau.val()[i];
      tau.val()[i] = keep + h;
      const double fp = forward().val()[0];
      tau.val()[i] = keep - h;
      const double fm = forward().val()[0];
      tau.val()[i] = keep;
      const double fd = (fp - fm) / (2 * h);
      const double scale = std::max({std::fabs(fd), std::fabs(grad[i]), 1e-9});
      if (std::fabs(fd - grad[i]) / scale >= 1e-3) return false;
    }
  }
  return true;
}

// ---- criterion 2: distance transform / chamfer oracles --------------------------

vision::Image dt_brute(const vision::Image& binary) {
  vision::Image out(binary.w, binary.h);
  for (int y = 0; y < binary.h; ++y)
    for (int x = 0; x < binary.w; ++x) {
      double best = vision::kEmptyDistance;
      for (int sy = 0; sy < binary.h; ++sy)
        for (int sx = 0; sx < binary.w; ++sx)
          if (binary.at(sx, sy) > 0.5f)
            best = std::min(best, std::hypot(x - sx, y - sy));
      out.at(x, y) = static_cast<float>(best);
    }
  return out;
}

bool criterion_vision_oracles() {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    vision::Image img(16, 16);
    const double fill = trial % 7 == 0 ? 0.0 : rng.uniform(0.02, 0.5);
    for (auto& v : img.px) v = rng.uniform() < fill ? 1.0f : 0.0f;
    const vision::Image fast = vision::distance_transform(img);
    const vision::Image slow = dt_brute(img);
    for (size_t i = 0; i < fast.px.size(); ++i)
      if (std::fabs(fast.px[i] - slow.px[i]) > 1e-4f) return false;
    vision::Image other(16, 16);
    for (auto& v : other.px) v = rng.uniform() < 0.1 ? 1.0f : 0.0f;
    double want = 0.0;
    const vision::Image di = dt_brute(img), dj = dt_brute(other);
    for (size_t i = 0; i < img.px.size(); ++i)
      want += img.px[i] * dj.px[i] + other.px[i] * di.px[i];
    if (std::fabs(vision::chamfer_distance(img, other) - want) > 1e-3) return false;
  }
  // prediction loss against a hand-computed value
  vision::Image a, b;
  a.at(0, 0) = 1.0f;
  b.at(0, 0) = 0.5f;
  b.at(1, 0) = 0.25f;
  const double want = (0.25 + 0.0625) / (64.0 * 64.0);
  return std::fabs(vision::prediction_loss(a, b) - want) < 1e-12;
}

// ---- criterion 3: simulator physics ---------------------------------------------

// compact Lagrangian finite-difference oracle (full version in test_sim)
struct Oracle {
  sim::ChainParams p;
  double lag(const std::vector<double>& q, const std::vector<double>& qd) const {
    double ke = 0.0, pe = 0.0, x = 0.0, y = 0.0, vx = 0.0, vy = 0.0, phi = 0.0,
           phid = 0.0;
    for (int i = 0; i < p.n_links; ++i) {
      phi += q[i];
      phid += qd[i];
      x += p.link_lengths[i] * std::sin(phi);
      y += -p.link_lengths[i] * std::cos(phi);
      vx += p.link_lengths[i] * std::cos(phi) * phid;
      vy += p.link_lengths[i] * std::sin(phi) * phid;
      double m = p.link_masses[i];
      if (i == p.n_links - 1) m += p.tip_mass;
      ke += 0.5 * m * (vx * vx + vy * vy);
      pe += m * p.gravity * y;
    }
    return ke - pe;
  }
  // Richardson-extrapolated accelerations: evaluating the finite-difference
  // Euler-Lagrange solve at three step sizes and combining cancels the O(h^2)
  // and O(h^4) truncation terms, leaving only the roundoff floor (~1e-6 rel).
  std::vector<double> accel(const sim::ChainState& s,
                            const std::vector<double>& tau) const {
    const auto a1 = accel_h(s, tau, 8e-3);
    const auto a2 = accel_h(s, tau, 4e-3);
    const auto a3 = accel_h(s, tau, 2e-3);
    std::vector<double> out(a1.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double r1 = (4.0 * a2[i] - a1[i]) / 3.0;
      const double r2 = (4.0 * a3[i] - a2[i]) / 3.0;
      out[i] = (16.0 * r2 - r1) / 15.0;
    }
    return out;
  }
  std::vector<double> accel_h(const sim::ChainState& s,
                              const std::vector<double>& tau, double h) const {
    const int n = p.n_links;
    Eigen::MatrixXd M(n, n);
    Eigen::VectorXd rhs(n);
    auto lag2 = [&](std::vector<double> q, std::vector<double> qd, int iq, int iqd,
                    double hq, double hqd) {
      if (iq >= 0) q[iq] += hq;
      if (iqd >= 0) qd[iqd] += hqd;
      return lag(q, qd);
    };
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double acc = lag2(s.theta, s.theta_dot, -1, i, 0, h);
        acc -= 2.0 * lag(s.theta, s.theta_dot);
        acc += lag2(s.theta, s.theta_dot, -1, i, 0, -h);
        if (i == j) {
          M(i, j) = acc / (h * h);
        } else {
          auto qd = s.theta_dot;
          qd[i] += h;
          qd[j] += h;
          double f = lag(s.theta, qd);
          qd[j] -= 2 * h;
          f -= lag(s.theta, qd);
          qd[i] -= 2 * h;
          qd[j] += 2 * h;
          f -= lag(s.theta, qd);
          qd[j] -= 2 * h;
          f += lag(s.theta, qd);
          M(i, j) = f / (4 * h * h);
        }
      }
      const double dLdq = (lag2(s.theta, s.theta_dot, i, -1, h, 0) -
                           lag2(s.theta, s.theta_dot, i, -1, -h, 0)) /
                          (2 * h);
      double conv = 0.0;
      for (int j = 0; j < n; ++j) {
        auto q = s.theta;
        auto qd = s.theta_dot;
        q[j] += h;
        qd[i] += h;
        double f = lag(q, qd);
        qd[i] -= 2 * h;
        f -= lag(q, qd);
        q[j] -= 2 * h;
        qd[i] += 2 * h;
        f -= lag(q, qd);
        qd[i] -= 2 * h;
        f += lag(q, qd);
        conv += f / (4 * h * h) * s.theta_dot[j];
      }
      rhs(i) = tau[i] - conv + dLdq;
    }
    Eigen::VectorXd qdd = M.ldlt().solve(rhs);
    return std::vector<double>(qdd.data(), qdd.data() + n);
  }
};

bool criterion_simulator() {
  // energy drift on a free double pendulum over 300 frames
  sim::ChainParams p;
  p.n_links = 2;
  p.link_lengths = {1.0, 1.0};
  p.link_masses = {1.0, 1.0};
  p.actuated = {0, 1};
  p.tau_max = 10.0;
  sim::ChainState s;
  s.theta = {0.5, 0.2};
  s.theta_dot = {0.0, 0.0};
  sim::SimConfig sc;
  const double e0 = sim::energy(s, p);
  for (int i = 0; i < 300; ++i) {
    s = sim::step(s, {0.0, 0.0}, p, sc);
    if (std::fabs(sim::energy(s, p) - e0) / std::fabs(e0) >= 0.01) return false;
  }
  // 3-link accelerations vs the Lagrangian oracle
  sim::ChainParams p3;
  p3.n_links = 3;
  p3.link_lengths = {0.30, 0.20, 0.10};
  p3.link_masses = {0.50, 0.30, 0.20};
  p3.actuated = {0, 1, 2};
  p3.tau_max = 100.0;
  Oracle oracle{p3};
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    sim::ChainState st;
    st.theta = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    st.theta_dot = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    const std::vector<double> tau = {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                                     rng.uniform(-0.1, 0.1)};
    const auto got = sim::dynamics(st, tau, p3);
    const auto want = oracle.accel(st, tau);
    for (int i = 0; i < 3; ++i) {
      const double scale = std::max(std::fabs(want[i]), 1.0);
      if (std::fabs(got[i] - want[i]) / scale > 1e-5) return false;
    }
  }
  return true;
}

// ---- criteria 4..9 share a trained model and closed-loop runs -------------------

struct Pipeline {
  harness::Episode episode;
  net::DynamicsNetF model{net::DynNetConfig{}, 0};
  double val_loss = 0.0, baseline_loss = 0.0, train_minutes = 0.0;
  bool trained = false;
};

bool criterion_training(Pipeline& pl) {
  const double t0 = now_s();
  // Several independently seeded rollouts with a whole-episode validation
  // split: a single long episode overfits its contiguous tail (val bottoms
  // out around 0.022 and climbs), while held-out episodes generalize.
  net::Dataset ds;
  for (int e = 0; e < 6; ++e) {
    harness::Episode ep = harness::collect_random("rigid_pendulum", 900, 0.2, 0.1, 1234 + e);
    if (e == 0) {
      ds = harness::make_pairs(ep, 10);
      pl.episode = std::move(ep);
    } else {
      harness::append_pairs(ep, 10, ds);
    }
  }
  net::DynNetConfig cfg;
  cfg.T = 10;
  pl.model = net::DynamicsNetF(cfg, 1234);
  net::TrainConfig tc;
  tc.epochs = 35;
  tc.batch = 64;
  tc.lr = 1e-3;
  tc.seed = 1234;
  const net::TrainResult tr = net::train(pl.model, ds, tc);
  pl.model.set_param_grad(false);
  pl.val_loss = tr.final_val_loss;
  pl.baseline_loss = tr.baseline_val_loss;
  pl.train_minutes = (now_s() - t0) / 60.0;
  pl.trained = true;
  net::save(pl.model, work_dir() + "/model.fdnw");
  return pl.val_loss < 0.5 * pl.baseline_loss && pl.train_minutes < 20.0;
}

vision::Image make_target() {
  auto [p, s] = sim::scenario("rigid_pendulum");
  s.theta[0] = 0.4;  // statically holdable inside tau_max
  return vision::preprocess(vision::render_chain(s, p, vision::default_camera(p)));
}

struct LoopResults {
  std::vector<std::string> methods;
  std::vector<std::vector<harness::MetricsRow>> pooled;  // per method
};

LoopResults run_loops(Pipeline& pl) {
  LoopResults lr;
  lr.methods = {"none", "random", "constant", "shift", "mixed"};
  harness::ExperimentConfig ec;
  ec.scenario = "rigid_pendulum";
  ec.target = make_target();
  ec.T = 10;
  ec.duration_s = 10.0;
  ec.repeats = 5;
  ec.seed = 77;
  for (const auto& m : lr.methods) {
    ec.method = ctrl::InitMethod::parse(m);
    const auto reps = harness::run_experiment(
        m == "none" ? nullptr : &pl.model, ec);
    std::vector<harness::MetricsRow> pooled;
    for (const auto& rep : reps) pooled.insert(pooled.end(), rep.begin(), rep.end());
    harness::save_metrics_csv(reps, work_dir() + "/metrics_" + m + ".csv");
    lr.pooled.push_back(std::move(pooled));
  }
  return lr;
}

bool criterion_beats_baseline(const LoopResults& lr, std::string& detail) {
  // th*: smallest threshold where the baseline first reaches rate >= 0.5
  std::vector<double> grid;
  for (double th = 10.0; th <= 60000.0; th *= 1.15) grid.push_back(th);
  const auto base = harness::rate_curve(lr.pooled[0], grid);
  double th_star = grid.back();
  double base_rate = 0.0;
  for (const auto& [th, rate] : base)
    if (rate >= 0.5) {
      th_star = th;
      base_rate = rate;
      break;
    }
  char buf[256];
  std::snprintf(buf, sizeof buf, "th*=%.0f base=%.3f", th_star, base_rate);
  detail = buf;
  for (size_t i = 1; i < lr.methods.size(); ++i) {
    const auto curve = harness::rate_curve(lr.pooled[i], {th_star});
    std::snprintf(buf, sizeof buf, " %s=%.3f", lr.methods[i].c_str(),
                  curve[0].second);
    detail += buf;
    if (curve[0].second <= base_rate) return false;
  }
  return true;
}

bool criterion_sweep(std::string& detail) {
  harness::SweepConfig sc;
  sc.scenario = "rigid_pendulum";
  sc.T_values = {5, 10, 15};
  sc.methods = {"random", "constant", "shift", "mixed"};
  sc.repeats = 2;
  sc.duration_s = 2.0;
  sc.frames = 400;
  sc.epochs = 4;
  sc.batch = 64;
  sc.seed = 5;
  const std::string dir = work_dir() + "/sweep";
  const vision::Image target = make_target();
  const std::string tpath = dir + "/target.pgm";
  fs::create_directories(dir);
  vision::save_pgm(target, tpath);
  sc.target_path = tpath;
  const auto rows = harness::sweep(sc, dir);
  if (!fs::exists(dir + "/rates.csv")) {
    detail = "rates.csv missing";
    return false;
  }
  // every condition present: 3 T x 4 methods + baseline, each |thresholds| rows
  const size_t want = (3 * 4 + 1) * sc.thresholds.size();
  if (rows.size() != want) {
    detail = "row count " + std::to_string(rows.size()) + " != " + std::to_string(want);
    return false;
  }
  // per-condition curves are monotone in th
  for (size_t i = 1; i < rows.size(); ++i)
    if (rows[i].method == rows[i - 1].method && rows[i].T == rows[i - 1].T &&
        rows[i].th > rows[i - 1].th && rows[i].rate < rows[i - 1].rate) {
      detail = "non-monotone rate curve";
      return false;
    }
  return true;
}

bool criterion_latency(Pipeline& pl, std::string& detail) {
  const vision::Image target = vision::blur_target(make_target());
  auto [p, s] = sim::scenario("rigid_pendulum");
  const vision::Camera cam = vision::default_camera(p);
  const vision::Image binary = vision::preprocess(vision::render_chain(s, p, cam));
  const vision::FlowField flow = vision::render_flow(s, p, cam, 30.0);
  const net::Observation obs = net::make_observation(binary, flow, s, {0.0}, p);
  ctrl::ControlConfig cc;
  cc.tau_max = 0.2;
  cc.gamma = 0.05;
  cc.T = 10;
  const ctrl::InitMethod method = ctrl::InitMethod::parse("mixed");
  net::TorqueSequence prev(1, 10);
  Rng rng(31);
  double total_ms = 0.0;
  const int iters = 60;
  for (int i = 0; i < iters; ++i) {
    const auto res = ctrl::control_step(pl.model, obs, target, prev, cc, method, rng);
    total_ms += res.diag.wall_ms;
    prev = res.new_prev_opt;
  }
  const double mean_ms = total_ms / iters;
  char buf[64];
  std::snprintf(buf, sizeof buf, "mean %.2f ms", mean_ms);
  detail = buf;
  return mean_ms <= 33.0;
}

bool criterion_generators() {
  Rng meta(99);
  for (int trial = 0; trial < 10000; ++trial) {
    Rng rng(trial);
    const int M = 1 + meta.index(3), T = 1 + meta.index(15), N = 1 + meta.index(12);
    const double tau_max = meta.uniform(0.05, 2.0);
    const double alpha = meta.uniform(0.0, 1.0);
    net::TorqueSequence prev(M, T);
    for (auto& v : prev.v) v = meta.uniform(-tau_max, tau_max);
    std::vector<net::TorqueSequence> cands;
    switch (trial % 4) {
      case 0: cands = ctrl::gen_random(N, tau_max, M, T, rng); break;
      case 1: cands = ctrl::gen_constant(N, tau_max, M, T); break;
      case 2: cands = ctrl::gen_shift(prev, N, alpha, tau_max, rng); break;
      default: cands = ctrl::gen_mixed(prev, N, std::min(N, 3), alpha, tau_max, rng);
    }
    if (cands.size() != static_cast<size_t>(N)) return false;
    for (const auto& c : cands) {
      if (c.M != M || c.T != T) return false;
      for (double v : c.v)
        if (std::fabs(v) > tau_max + 1e-12) return false;
    }
    if (trial % 4 == 2) {  // shift relation holds under the noise bound
      for (const auto& c : cands)
        for (int a = 0; a < M; ++a)
          for (int t = 0; t < T; ++t) {
            const double base = t + 1 < T ? prev.at(a, t + 1) : prev.at(a, T - 1);
            if (std::fabs(c.at(a, t) - base) > alpha * tau_max + 1e-12) return false;
          }
    }
  }
  return true;
}

bool criterion_metrics_invariants(const LoopResults& lr, std::string& detail) {
  size_t checked = 0;
  for (size_t i = 0; i < lr.methods.size(); ++i) {
    const auto reps =
        harness::load_metrics_csv(work_dir() + "/metrics_" + lr.methods[i] + ".csv");
    for (const auto& rep : reps)
      for (const auto& r : rep) {
        ++checked;
        if (r.accepted && !(r.loss_after < r.loss_before)) {
          detail = "accepted frame without improvement";
          return false;
        }
        for (double v : r.tau)
          if (std::fabs(v) > 0.2 + 1e-9) {
            detail = "torque outside saturation";
            return false;
          }
      }
  }
  detail = std::to_string(checked) + " frames checked";
  return checked > 0;
}

bool criterion_round_trips(Pipeline& pl) {
  // weights: save -> load -> bit-exact tensors
  const std::string mpath = work_dir() + "/rt_model.fdnw";
  net::save(pl.model, mpath);
  net::DynamicsNetF back = net::load(mpath);
  auto ta = pl.model.named_tensors();
  auto tb = back.named_tensors();
  if (ta.size() != tb.size()) return false;
  for (size_t i = 0; i < ta.size(); ++i)
    if (ta[i].name != tb[i].name || *ta[i].data != *tb[i].data) return false;
  // episode: save -> load -> save, byte-identical files
  const harness::Episode ep = harness::collect_random("flexible_chain", 15, 0.2, 0.1, 3);
  const std::string d1 = work_dir() + "/ep_a", d2 = work_dir() + "/ep_b";
  harness::save_episode(ep, d1);
  harness::save_episode(harness::load_episode(d1), d2);
  for (const auto& e : fs::directory_iterator(d1)) {
    const std::string name = e.path().filename().string();
    std::ifstream f1(d1 + "/" + name, std::ios::binary);
    std::ifstream f2(d2 + "/" + name, std::ios::binary);
    const std::string a((std::istreambuf_iterator<char>(f1)), {});
    const std::string b((std::istreambuf_iterator<char>(f2)), {});
    if (a != b) return false;
  }
  // seeded collection is reproducible
  const harness::Episode again = harness::collect_random("flexible_chain", 15, 0.2, 0.1, 3);
  if (again.frames.size() != ep.frames.size()) return false;
  for (size_t t = 0; t < ep.frames.size(); ++t)
    if (again.frames[t].theta != ep.frames[t].theta ||
        again.frames[t].image != ep.frames[t].image ||
        again.frames[t].applied_tau != ep.frames[t].applied_tau)
      return false;
  return true;
}

}  // namespace

int main() {
  const double t0 = now_s();
  report(1, "analytic gradients match finite differences", criterion_gradients());
  report(2, "distance transform and chamfer match brute force",
         criterion_vision_oracles());
  report(3, "simulator energy conservation and Lagrangian oracle",
         criterion_simulator());

  Pipeline pl;
  {
    const bool ok = criterion_training(pl);
    char buf[160];
    std::snprintf(buf, sizeof buf, "val %.5f vs copy baseline %.5f, %.1f min",
                  pl.val_loss, pl.baseline_loss, pl.train_minutes);
    report(4, "trained model beats the copy-image baseline by 2x", ok, buf);
  }

  LoopResults lr = run_loops(pl);
  {
    std::string detail;
    report(5, "every Initialize method beats the no-optimization baseline",
           criterion_beats_baseline(lr, detail), detail);
  }
  {
    std::string detail;
    report(6, "reduced-scale sweep completes with a full rate table",
           criterion_sweep(detail), detail);
  }
  {
    std::string detail;
    report(7, "control step fits the 30 Hz budget", criterion_latency(pl, detail),
           detail);
  }
  report(8, "candidate generator invariants over 10^4 cases", criterion_generators());
  {
    std::string detail;
    report(9, "metrics invariants hold on every logged frame",
           criterion_metrics_invariants(lr, detail), detail);
  }
  report(10, "weight and episode files round-trip exactly", criterion_round_trips(pl));

  std::printf("%d/10 criteria passed in %.1f min\n", 10 - g_failures,
              (now_s() - t0) / 60.0);
  return g_failures == 0 ? 0 : 1;
}
