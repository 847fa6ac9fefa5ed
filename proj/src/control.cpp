#include "fdn/control.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace fdn::ctrl {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// per-row MSE of a batched [N,1,64,64] prediction against the target
std::vector<double> row_losses(const ad::Var<float>& pred,
                               const vision::Image& target) {
  const int N = pred.shape()[0];
  const size_t P = target.size();
  std::vector<double> losses(N);
  for (int r = 0; r < N; ++r) {
    const float* row = pred.val().data() + static_cast<size_t>(r) * P;
    double acc = 0.0;
    for (size_t i = 0; i < P; ++i) {
      const double e = static_cast<double>(row[i]) - target.px[i];
      acc += e * e;
    }
    losses[r] = acc / static_cast<double>(P);
  }
  return losses;
}

std::vector<float> normalize(const net::TorqueSequence& seq, double tau_max) {
  std::vector<float> out(seq.v.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(seq.v[i] / tau_max);
  return out;
}

}  // namespace

InitMethod InitMethod::parse(const std::string& name) {
  InitMethod m;
  if (name == "random") m.kind = Kind::Random;
  else if (name == "constant") m.kind = Kind::Constant;
  else if (name == "shift") m.kind = Kind::Shift;
  else if (name == "mixed") m.kind = Kind::Mixed;
  else if (name == "none") m.kind = Kind::None;
  else throw std::invalid_argument("unknown Initialize-method: " + name);
  return m;
}

std::string InitMethod::name() const {
  switch (kind) {
    case Kind::Random: return "random";
    case Kind::Constant: return "constant";
    case Kind::Shift: return "shift";
    case Kind::Mixed: return "mixed";
    case Kind::None: return "none";
  }
  return "?";
}

void InitMethod::validate() const {
  if (N < 1) throw std::invalid_argument("InitMethod: N >= 1");
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("InitMethod: alpha in [0,1]");
  if (N_constant > N)
    throw std::invalid_argument("InitMethod: N_constant <= N");
}

void ControlConfig::validate() const {
  if (!(gamma > 0.0)) throw std::invalid_argument("ControlConfig: gamma > 0");
  if (opt_iters < 1) throw std::invalid_argument("ControlConfig: opt_iters >= 1");
  if (!(tau_max > 0.0)) throw std::invalid_argument("ControlConfig: tau_max > 0");
  if (T < 1) throw std::invalid_argument("ControlConfig: T >= 1");
}

std::vector<net::TorqueSequence> gen_random(int N, double tau_max, int M,
                                            int T, Rng& rng) {
  std::vector<net::TorqueSequence> out;
  out.reserve(N);
  for (int s = 0; s < N; ++s) {
    net::TorqueSequence seq(M, T);
    for (auto& v : seq.v) v = rng.uniform(-tau_max, tau_max);
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<net::TorqueSequence> gen_constant(int N, double tau_max, int M,
                                              int T) {
  std::vector<net::TorqueSequence> out;
  out.reserve(N);
  for (int s = 0; s < N; ++s) {
    // equal division with inclusive endpoints; N=1 degenerates to zero
    const double level =
        N > 1 ? -tau_max + 2.0 * tau_max * s / (N - 1) : 0.0;
    net::TorqueSequence seq(M, T);
    for (auto& v : seq.v) v = level;
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<net::TorqueSequence> gen_shift(const net::TorqueSequence& prev_opt,
                                           int N, double alpha, double tau_max,
                                           Rng& rng) {
  // left-shift by one frame; the vacated last slot repeats the final entry
  net::TorqueSequence shifted = prev_opt;
  for (int a = 0; a < prev_opt.M; ++a) {
    for (int t = 0; t + 1 < prev_opt.T; ++t)
      shifted.at(a, t) = prev_opt.at(a, t + 1);
    shifted.at(a, prev_opt.T - 1) = prev_opt.at(a, prev_opt.T - 1);
  }
  std::vector<net::TorqueSequence> out;
  out.reserve(N);
  for (int s = 0; s < N; ++s) {
    net::TorqueSequence seq = shifted;
    for (auto& v : seq.v) {
      v += rng.uniform(-alpha * tau_max, alpha * tau_max);
      v = std::clamp(v, -tau_max, tau_max);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<net::TorqueSequence> gen_mixed(const net::TorqueSequence& prev_opt,
                                           int N, int N_constant, double alpha,
                                           double tau_max, Rng& rng) {
  auto out = gen_constant(N_constant, tau_max, prev_opt.M, prev_opt.T);
  auto shift = gen_shift(prev_opt, N - N_constant, alpha, tau_max, rng);
  out.insert(out.end(), std::make_move_iterator(shift.begin()),
             std::make_move_iterator(shift.end()));
  return out;
}

int argmin_index(const std::vector<double>& losses) {
  if (losses.empty()) throw std::invalid_argument("argmin of empty losses");
  int best = 0;
  for (int i = 1; i < static_cast<int>(losses.size()); ++i)
    if (losses[i] < losses[best]) best = i;
  return best;
}

ControlStepResult baseline_step(const ControlConfig& cfg, int N, int M,
                                Rng& rng) {
  const auto t0 = Clock::now();
  auto candidates = gen_random(N, cfg.tau_max, M, cfg.T, rng);
  const int pick = static_cast<int>(rng.index(static_cast<uint32_t>(N)));
  ControlStepResult res;
  res.tau_now = candidates[pick].first_frame();
  res.new_prev_opt = candidates[pick];
  res.diag.selected = pick;
  res.diag.wall_ms = ms_since(t0);
  return res;
}

ControlStepResult control_step(net::DynamicsNetF& net,
                               const net::Observation& obs,
                               const vision::Image& blurred_target,
                               const net::TorqueSequence& prev_opt,
                               const ControlConfig& cfg,
                               const InitMethod& method, Rng& rng) {
  cfg.validate();
  method.validate();
  const int M = net.cfg.M, T = net.cfg.T;
  if (cfg.T != T) throw std::invalid_argument("control_step: T mismatch");
  if (method.kind == InitMethod::Kind::None)
    return baseline_step(cfg, method.N, M, rng);

  const auto t0 = Clock::now();

  // 1) candidates
  std::vector<net::TorqueSequence> candidates;
  switch (method.kind) {
    case InitMethod::Kind::Random:
      candidates = gen_random(method.N, cfg.tau_max, M, T, rng);
      break;
    case InitMethod::Kind::Constant:
      candidates = gen_constant(method.N, cfg.tau_max, M, T);
      break;
    case InitMethod::Kind::Shift:
      candidates = gen_shift(prev_opt, method.N, method.alpha, cfg.tau_max, rng);
      break;
    case InitMethod::Kind::Mixed:
      candidates = gen_mixed(prev_opt, method.N, method.N_constant,
                             method.alpha, cfg.tau_max, rng);
      break;
    case InitMethod::Kind::None:
      break;
  }
  const int N = static_cast<int>(candidates.size());

  // 2) one conv pass, one batched prediction over all candidates
  const std::vector<float> feature = net::encode(net, obs);
  const std::vector<float> joints(obs.joints.begin(), obs.joints.end());
  const int MT = M * T;
  std::vector<float> tau_batch(static_cast<size_t>(N) * MT);
  for (int s = 0; s < N; ++s) {
    const auto norm = normalize(candidates[s], cfg.tau_max);
    std::copy(norm.begin(), norm.end(),
              tau_batch.begin() + static_cast<size_t>(s) * MT);
  }
  auto tau_var = ad::Var<float>::from({N, MT}, std::move(tau_batch));
  auto pred = net::predict(net, feature, joints, tau_var);

  ControlStepResult res;
  res.diag.candidate_losses = row_losses(pred, blurred_target);

  // 3) refine the argmin candidate along its normalized loss gradient
  const int sel = argmin_index(res.diag.candidate_losses);
  res.diag.selected = sel;
  res.diag.loss_before = res.diag.candidate_losses[sel];

  std::vector<float> tau_cur = normalize(candidates[sel], cfg.tau_max);
  const double step = cfg.gamma / cfg.tau_max;  // step size in normalized units
  std::vector<float> target64(blurred_target.px.begin(), blurred_target.px.end());
  for (int it = 0; it < cfg.opt_iters; ++it) {
    auto tv = ad::Var<float>::from({1, MT}, tau_cur, /*requires_grad=*/true);
    auto p1 = net::predict(net, feature, joints, tv);
    auto loss = ad::mse_loss(p1, target64);
    loss.backward();
    double norm2 = 0.0;
    for (float g : tv.grad()) norm2 += static_cast<double>(g) * g;
    const double gnorm = std::sqrt(norm2);
    if (gnorm < 1e-12) {
      res.diag.grad_skipped = true;
      break;
    }
    for (int i = 0; i < MT; ++i)
      tau_cur[i] = static_cast<float>(std::clamp(
          tau_cur[i] - step * tv.grad()[i] / gnorm, -1.0, 1.0));
  }

  if (res.diag.grad_skipped) {
    res.diag.loss_after = res.diag.loss_before;
    res.tau_now = candidates[sel].first_frame();
    res.new_prev_opt = candidates[sel];
    res.diag.wall_ms = ms_since(t0);
    return res;
  }

  // 4) keep the refinement only if it lowered the loss
  auto tv2 = ad::Var<float>::from({1, MT}, tau_cur);
  auto p2 = net::predict(net, feature, joints, tv2);
  res.diag.loss_after = row_losses(p2, blurred_target)[0];
  if (res.diag.loss_after < res.diag.loss_before) {
    res.diag.accepted = true;
    net::TorqueSequence opt(M, T);
    for (int i = 0; i < MT; ++i)
      opt.v[i] = static_cast<double>(tau_cur[i]) * cfg.tau_max;
    res.tau_now = opt.first_frame();
    res.new_prev_opt = std::move(opt);
  } else {
    res.tau_now = candidates[sel].first_frame();
    res.new_prev_opt = candidates[sel];
  }
  res.diag.wall_ms = ms_since(t0);
  return res;
}

}  // namespace fdn::ctrl
