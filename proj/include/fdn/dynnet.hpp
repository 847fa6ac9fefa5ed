#pragma once

// The image-predictive dynamics model: a conv encoder over (binary image,
// flow x, flow y), an FC trunk merging image features with joint states and
// the T-frame torque command, and a deconv decoder emitting the predicted
// 64x64 image T frames ahead.

#include <cstdint>
#include <string>
#include <vector>

#include "fdn/autodiff.hpp"
#include "fdn/sim.hpp"
#include "fdn/vision.hpp"

namespace fdn::net {

inline constexpr int kImagePixels = vision::kImageSize * vision::kImageSize;

struct DynNetConfig {
  int T = 10;  // prediction horizon, frames
  int M = 1;   // actuators
  std::vector<int> conv_channels = {4, 8, 16, 32, 64};
  int image_feature_dim = 128;
  int in_channels = 3;

  int fc_input() const { return image_feature_dim + M * (3 + T); }
  void validate() const {
    if (T < 1 || M < 1) throw std::invalid_argument("DynNetConfig: T, M >= 1");
    if (conv_channels.size() != 5)
      throw std::invalid_argument("DynNetConfig: expects 5 conv channels");
  }
};

// M x T torque commands in N*m, actuator-major: v[a*T + t].
struct TorqueSequence {
  int M = 1, T = 10;
  std::vector<double> v;

  TorqueSequence() = default;
  TorqueSequence(int m, int t) : M(m), T(t), v(static_cast<size_t>(m) * t, 0.0) {}
  double& at(int a, int t) { return v[static_cast<size_t>(a) * T + t]; }
  double at(int a, int t) const { return v[static_cast<size_t>(a) * T + t]; }
  std::vector<double> first_frame() const {
    std::vector<double> out(M);
    for (int a = 0; a < M; ++a) out[a] = at(a, 0);
    return out;
  }
};

// One normalized network input: binary image, flow scaled to [-1,1], and
// per-actuator (position/pi wrapped, velocity/2pi, torque/tau_max), clamped.
struct Observation {
  std::vector<float> image;            // kImagePixels, values {0,1}
  std::vector<float> flow_x, flow_y;   // kImagePixels, in [-1,1]
  std::vector<float> joints;           // 3*M: pos, vel, tau per actuator
};

double wrap_angle(double a);  // into (-pi, pi]

Observation make_observation(const vision::Image& binary,
                             const vision::FlowField& flow,
                             const sim::ChainState& state,
                             const std::vector<double>& prev_tau,
                             const sim::ChainParams& params);

// ---- network -----------------------------------------------------------------

template <class T>
struct DynamicsNet {
  DynNetConfig cfg;
  std::vector<ad::Conv2d<T>> conv;
  std::vector<ad::BatchNorm<T>> conv_bn;
  ad::Linear<T> bridge;          // 64*2*2 = 256 conv features -> 128
  ad::BatchNorm<T> bridge_bn;
  std::vector<ad::Linear<T>> fc;
  std::vector<ad::BatchNorm<T>> fc_bn;
  ad::Linear<T> defc;            // 256 -> 64*2*2
  ad::BatchNorm<T> defc_bn;
  std::vector<ad::Deconv2d<T>> deconv;
  std::vector<ad::BatchNorm<T>> deconv_bn;  // all but the output layer

  DynamicsNet(const DynNetConfig& config, uint64_t seed) : cfg(config) {
    cfg.validate();
    Rng rng(seed);
    int ch = cfg.in_channels;
    for (int c : cfg.conv_channels) {
      conv.emplace_back(ch, c, rng);
      conv_bn.emplace_back(c);
      ch = c;
    }
    const int conv_flat = cfg.conv_channels.back() * 2 * 2;
    bridge = ad::Linear<T>(conv_flat, cfg.image_feature_dim, rng);
    bridge_bn = ad::BatchNorm<T>(cfg.image_feature_dim);
    const int fc_sizes[4] = {128, 128, 128, 256};
    int in = cfg.fc_input();
    for (int s : fc_sizes) {
      fc.emplace_back(in, s, rng);
      fc_bn.emplace_back(s);
      in = s;
    }
    defc = ad::Linear<T>(256, conv_flat, rng);
    defc_bn = ad::BatchNorm<T>(conv_flat);
    int dch = cfg.conv_channels.back();
    const std::vector<int> down = {32, 16, 8, 4, 1};
    for (size_t i = 0; i < down.size(); ++i) {
      deconv.emplace_back(dch, down[i], rng);
      if (i + 1 < down.size()) deconv_bn.emplace_back(down[i]);
      dch = down[i];
    }
  }

  // [N, 3, 64, 64] -> [N, image_feature_dim]
  ad::Var<T> conv_forward(const ad::Var<T>& img, bool train) {
    ad::Var<T> x = img;
    for (size_t i = 0; i < conv.size(); ++i)
      x = ad::relu(conv_bn[i](conv[i](x), train));
    x = ad::reshape(x, {x.shape()[0], cfg.conv_channels.back() * 2 * 2});
    return ad::relu(bridge_bn(bridge(x), train));
  }

  // feat [N, F], joints [N, 3M], tau [N, M*T] -> predicted image [N, 1, 64, 64]
  ad::Var<T> head_forward(const ad::Var<T>& feat, const ad::Var<T>& joints,
                          const ad::Var<T>& tau, bool train) {
    ad::Var<T> x = ad::concat_cols<T>({feat, joints, tau});
    for (size_t i = 0; i < fc.size(); ++i)
      x = ad::relu(fc_bn[i](fc[i](x), train));
    x = ad::relu(defc_bn(defc(x), train));
    x = ad::reshape(x, {x.shape()[0], cfg.conv_channels.back(), 2, 2});
    for (size_t i = 0; i < deconv.size(); ++i) {
      x = deconv[i](x);
      if (i + 1 < deconv.size())
        x = ad::relu(deconv_bn[i](x, train));
    }
    return ad::sigmoid(x);
  }

  std::vector<ad::Var<T>> parameters() {
    std::vector<ad::Var<T>> p;
    auto add = [&p](std::initializer_list<ad::Var<T>> vs) {
      for (const auto& v : vs) p.push_back(v);
    };
    for (size_t i = 0; i < conv.size(); ++i)
      add({conv[i].W, conv[i].b, conv_bn[i].gamma, conv_bn[i].beta});
    add({bridge.W, bridge.b, bridge_bn.gamma, bridge_bn.beta});
    for (size_t i = 0; i < fc.size(); ++i)
      add({fc[i].W, fc[i].b, fc_bn[i].gamma, fc_bn[i].beta});
    add({defc.W, defc.b, defc_bn.gamma, defc_bn.beta});
    for (size_t i = 0; i < deconv.size(); ++i) {
      add({deconv[i].W, deconv[i].b});
      if (i < deconv_bn.size()) add({deconv_bn[i].gamma, deconv_bn[i].beta});
    }
    return p;
  }

  void set_param_grad(bool enabled) {
    for (auto& p : parameters()) {
      p.node().requires_grad = enabled;
      p.node().needs_grad = enabled;
    }
  }

  // (name, data pointer, shape) triples covering weights and BN running
  // stats; the serialization unit.
  struct NamedTensor {
    std::string name;
    std::vector<T>* data;
    std::vector<int> shape;
  };
  std::vector<NamedTensor> named_tensors() {
    std::vector<NamedTensor> out;
    auto var = [&out](const std::string& name, const ad::Var<T>& v) {
      out.push_back({name, &v.node().val, v.shape()});
    };
    auto stats = [&out](const std::string& name, ad::BatchNorm<T>& bn) {
      const int c = static_cast<int>(bn.running_mean.size());
      out.push_back({name + ".rmean", &bn.running_mean, {c}});
      out.push_back({name + ".rvar", &bn.running_var, {c}});
    };
    auto bn_all = [&](const std::string& name, ad::BatchNorm<T>& bn) {
      var(name + ".gamma", bn.gamma);
      var(name + ".beta", bn.beta);
      stats(name, bn);
    };
    for (size_t i = 0; i < conv.size(); ++i) {
      const std::string n = "conv" + std::to_string(i);
      var(n + ".W", conv[i].W);
      var(n + ".b", conv[i].b);
      bn_all(n + ".bn", conv_bn[i]);
    }
    var("bridge.W", bridge.W);
    var("bridge.b", bridge.b);
    bn_all("bridge.bn", bridge_bn);
    for (size_t i = 0; i < fc.size(); ++i) {
      const std::string n = "fc" + std::to_string(i);
      var(n + ".W", fc[i].W);
      var(n + ".b", fc[i].b);
      bn_all(n + ".bn", fc_bn[i]);
    }
    var("defc.W", defc.W);
    var("defc.b", defc.b);
    bn_all("defc.bn", defc_bn);
    for (size_t i = 0; i < deconv.size(); ++i) {
      const std::string n = "deconv" + std::to_string(i);
      var(n + ".W", deconv[i].W);
      var(n + ".b", deconv[i].b);
      if (i < deconv_bn.size()) bn_all(n + ".bn", deconv_bn[i]);
    }
    return out;
  }
};

using DynamicsNetF = DynamicsNet<float>;

// Eval-mode image feature for the control loop; conv inputs carry no
// gradient bookkeeping.
template <class T>
std::vector<T> encode(DynamicsNet<T>& net, const Observation& obs) {
  std::vector<T> img(3 * kImagePixels);
  for (int i = 0; i < kImagePixels; ++i) {
    img[i] = static_cast<T>(obs.image[i]);
    img[kImagePixels + i] = static_cast<T>(obs.flow_x[i]);
    img[2 * kImagePixels + i] = static_cast<T>(obs.flow_y[i]);
  }
  auto x = ad::Var<T>::from({1, 3, vision::kImageSize, vision::kImageSize},
                            std::move(img));
  return net.conv_forward(x, false).val();
}

// Batched eval-mode prediction: the cached feature and joint states are
// tiled across the candidate rows of `tau_norm` ([N, M*T], normalized).
template <class T>
ad::Var<T> predict(DynamicsNet<T>& net, const std::vector<T>& feature,
                   const std::vector<T>& joints_norm, const ad::Var<T>& tau_norm,
                   bool train = false) {
  const int N = tau_norm.shape()[0];
  const int F = static_cast<int>(feature.size());
  const int J = static_cast<int>(joints_norm.size());
  std::vector<T> feat(static_cast<size_t>(N) * F), jnt(static_cast<size_t>(N) * J);
  for (int r = 0; r < N; ++r) {
    std::copy(feature.begin(), feature.end(), feat.begin() + static_cast<size_t>(r) * F);
    std::copy(joints_norm.begin(), joints_norm.end(),
              jnt.begin() + static_cast<size_t>(r) * J);
  }
  auto fv = ad::Var<T>::from({N, F}, std::move(feat));
  auto jv = ad::Var<T>::from({N, J}, std::move(jnt));
  return net.head_forward(fv, jv, tau_norm, train);
}

// ---- training dataset ----------------------------------------------------------

// Frame-compact training data: pair t maps observation frame t and applied
// torques over [t, t+T) to the blurred target at frame t+T.
struct Dataset {
  int M = 1, T = 10;
  int n_frames = 0;
  std::vector<uint8_t> images;     // n_frames * kImagePixels, {0,1}
  std::vector<uint8_t> flow_codes; // n_frames * 2 * kImagePixels
  std::vector<float> joints;       // n_frames * 3M, normalized
  std::vector<float> taus_norm;    // n_frames * M, applied torque / tau_max
  std::vector<float> targets;      // n_frames * kImagePixels, blurred
  std::vector<int> pair_frame;     // frame index t of each pair
  std::vector<int> pair_episode;   // episode id of each pair

  int n_pairs() const { return static_cast<int>(pair_frame.size()); }
};

struct TrainConfig {
  int epochs = 50;
  int batch = 64;
  double lr = 1e-3;
  double val_frac = 0.1;
  uint64_t seed = 0;
};

struct EpochStats {
  int epoch;
  double train_loss;
  double val_loss;
};

struct TrainResult {
  std::vector<EpochStats> history;
  double baseline_val_loss = 0.0;  // copy-current-image baseline
  double final_val_loss = 0.0;
};

namespace detail {

// Gathers one minibatch of pairs into network input tensors.
template <class T>
void gather_batch(const Dataset& ds, const std::vector<int>& pair_ids,
                  std::vector<T>& img, std::vector<T>& joints,
                  std::vector<T>& tau, std::vector<T>& target) {
  const int B = static_cast<int>(pair_ids.size());
  const int MT = ds.M * ds.T;
  img.assign(static_cast<size_t>(B) * 3 * kImagePixels, T(0));
  joints.assign(static_cast<size_t>(B) * 3 * ds.M, T(0));
  tau.assign(static_cast<size_t>(B) * MT, T(0));
  target.assign(static_cast<size_t>(B) * kImagePixels, T(0));
  for (int b = 0; b < B; ++b) {
    const int t = ds.pair_frame[pair_ids[b]];
    const uint8_t* im = ds.images.data() + static_cast<size_t>(t) * kImagePixels;
    const uint8_t* fl = ds.flow_codes.data() + static_cast<size_t>(t) * 2 * kImagePixels;
    T* dst = img.data() + static_cast<size_t>(b) * 3 * kImagePixels;
    for (int i = 0; i < kImagePixels; ++i) {
      dst[i] = static_cast<T>(im[i]);
      dst[kImagePixels + i] =
          static_cast<T>(vision::decode_flow_px(fl[i]) / vision::kFlowClamp);
      dst[2 * kImagePixels + i] = static_cast<T>(
          vision::decode_flow_px(fl[kImagePixels + i]) / vision::kFlowClamp);
    }
    for (int j = 0; j < 3 * ds.M; ++j)
      joints[static_cast<size_t>(b) * 3 * ds.M + j] =
          static_cast<T>(ds.joints[static_cast<size_t>(t) * 3 * ds.M + j]);
    // torque command actuator-major over [t, t+T)
    for (int a = 0; a < ds.M; ++a)
      for (int k = 0; k < ds.T; ++k)
        tau[static_cast<size_t>(b) * MT + a * ds.T + k] = static_cast<T>(
            ds.taus_norm[static_cast<size_t>(t + k) * ds.M + a]);
    const float* tg = ds.targets.data() + static_cast<size_t>(t + ds.T) * kImagePixels;
    for (int i = 0; i < kImagePixels; ++i)
      target[static_cast<size_t>(b) * kImagePixels + i] = static_cast<T>(tg[i]);
  }
}

template <class T>
double eval_loss(DynamicsNet<T>& net, const Dataset& ds,
                 const std::vector<int>& pair_ids, int batch) {
  double acc = 0.0;
  size_t count = 0;
  std::vector<T> img, joints, tau, target;
  for (size_t off = 0; off < pair_ids.size(); off += batch) {
    std::vector<int> ids(pair_ids.begin() + off,
                         pair_ids.begin() + std::min(off + batch, pair_ids.size()));
    gather_batch(ds, ids, img, joints, tau, target);
    const int B = static_cast<int>(ids.size());
    auto iv = ad::Var<T>::from({B, 3, vision::kImageSize, vision::kImageSize}, img);
    auto jv = ad::Var<T>::from({B, 3 * ds.M}, joints);
    auto tv = ad::Var<T>::from({B, ds.M * ds.T}, tau);
    auto feat = net.conv_forward(iv, false);
    auto pred = net.head_forward(feat, jv, tv, false);
    for (size_t i = 0; i < pred.size(); ++i) {
      const double e = static_cast<double>(pred.val()[i]) - target[i];
      acc += e * e;
    }
    count += pred.size();
  }
  return count ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace detail

// 90/10 train/validation split: by episode when the dataset holds more than
// one, otherwise by a contiguous time block of the single episode.
inline void split_pairs(const Dataset& ds, double val_frac,
                        std::vector<int>& train_ids, std::vector<int>& val_ids) {
  train_ids.clear();
  val_ids.clear();
  int n_episodes = 0;
  for (int e : ds.pair_episode) n_episodes = std::max(n_episodes, e + 1);
  if (n_episodes > 1) {
    const int val_from = std::max(
        1, static_cast<int>(std::lround((1.0 - val_frac) * n_episodes)));
    for (int i = 0; i < ds.n_pairs(); ++i)
      (ds.pair_episode[i] >= val_from ? val_ids : train_ids).push_back(i);
  } else {
    const int cut = std::max(
        1, static_cast<int>(std::lround((1.0 - val_frac) * ds.n_pairs())));
    for (int i = 0; i < ds.n_pairs(); ++i)
      (i >= cut ? val_ids : train_ids).push_back(i);
  }
}

template <class T>
TrainResult train(DynamicsNet<T>& net, const Dataset& ds, const TrainConfig& tc) {
  if (ds.n_pairs() == 0) throw std::invalid_argument("train: empty dataset");
  if (ds.M != net.cfg.M || ds.T != net.cfg.T)
    throw std::invalid_argument("train: dataset M/T does not match network");
  std::vector<int> train_ids, val_ids;
  split_pairs(ds, tc.val_frac, train_ids, val_ids);
  if (val_ids.empty()) val_ids.push_back(train_ids.back());

  Rng rng(tc.seed ^ 0x7261696eULL);
  auto params = net.parameters();
  net.set_param_grad(true);
  ad::Adam<T> adam(tc.lr);

  TrainResult result;
  std::vector<T> img, joints, tau, target;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    // Fisher-Yates with our deterministic rng
    for (size_t i = train_ids.size(); i > 1; --i)
      std::swap(train_ids[i - 1], train_ids[rng.index(static_cast<uint32_t>(i))]);
    double ep_loss = 0.0;
    size_t n_batches = 0;
    for (size_t off = 0; off + 2 <= train_ids.size(); off += tc.batch) {
      std::vector<int> ids(
          train_ids.begin() + off,
          train_ids.begin() + std::min(off + tc.batch, train_ids.size()));
      if (ids.size() < 2) break;  // batch stats need at least two samples
      detail::gather_batch(ds, ids, img, joints, tau, target);
      const int B = static_cast<int>(ids.size());
      auto iv = ad::Var<T>::from({B, 3, vision::kImageSize, vision::kImageSize}, img);
      auto jv = ad::Var<T>::from({B, 3 * ds.M}, joints);
      auto tv = ad::Var<T>::from({B, ds.M * ds.T}, tau);
      auto feat = net.conv_forward(iv, true);
      auto pred = net.head_forward(feat, jv, tv, true);
      auto loss = ad::mse_loss(pred, target);
      loss.backward();
      adam.step(params);
      ep_loss += static_cast<double>(loss.val()[0]);
      ++n_batches;
    }
    const double val = detail::eval_loss(net, ds, val_ids, tc.batch);
    result.history.push_back(
        {epoch, n_batches ? ep_loss / n_batches : 0.0, val});
  }
  result.final_val_loss = result.history.empty() ? 0.0 : result.history.back().val_loss;

  // copy-current-image baseline on the validation pairs
  double acc = 0.0;
  for (int id : val_ids) {
    const int t = ds.pair_frame[id];
    const uint8_t* im = ds.images.data() + static_cast<size_t>(t) * kImagePixels;
    const float* tg = ds.targets.data() + static_cast<size_t>(t + ds.T) * kImagePixels;
    for (int i = 0; i < kImagePixels; ++i) {
      const double e = static_cast<double>(im[i]) - tg[i];
      acc += e * e;
    }
  }
  result.baseline_val_loss = acc / (static_cast<double>(val_ids.size()) * kImagePixels);
  return result;
}

// ---- persistence ----------------------------------------------------------------

// FDNW weight file: magic, version, config (T, M, conv channels), then named
// float32 tensors including BatchNorm running statistics.
void save(DynamicsNet<float>& net, const std::string& path);
DynamicsNet<float> load(const std::string& path);

}  // namespace fdn::net
