#include "fdn/dynnet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace fdn::net {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'N', 'W'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw std::runtime_error("weight file truncated");
  return v;
}

}  // namespace

double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;  // lands pi on +pi, not -pi
  return a - M_PI;
}

Observation make_observation(const vision::Image& binary,
                             const vision::FlowField& flow,
                             const sim::ChainState& state,
                             const std::vector<double>& prev_tau,
                             const sim::ChainParams& params) {
  Observation obs;
  obs.image = binary.px;
  obs.flow_x.resize(kImagePixels);
  obs.flow_y.resize(kImagePixels);
  for (int i = 0; i < kImagePixels; ++i) {
    obs.flow_x[i] = flow.x.px[i] / vision::kFlowClamp;
    obs.flow_y[i] = flow.y.px[i] / vision::kFlowClamp;
  }
  const int M = params.n_actuated();
  obs.joints.resize(3 * static_cast<size_t>(M));
  for (int a = 0; a < M; ++a) {
    const int j = params.actuated[a];
    obs.joints[3 * a + 0] =
        static_cast<float>(wrap_angle(state.theta[j]) / M_PI);
    obs.joints[3 * a + 1] = static_cast<float>(
        std::clamp(state.theta_dot[j] / (2.0 * M_PI), -1.0, 1.0));
    const double tau = a < static_cast<int>(prev_tau.size()) ? prev_tau[a] : 0.0;
    obs.joints[3 * a + 2] =
        static_cast<float>(std::clamp(tau / params.tau_max, -1.0, 1.0));
  }
  return obs;
}

void save(DynamicsNet<float>& net, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write(kMagic, 4);
  write_u32(f, kVersion);
  write_u32(f, static_cast<uint32_t>(net.cfg.T));
  write_u32(f, static_cast<uint32_t>(net.cfg.M));
  write_u32(f, static_cast<uint32_t>(net.cfg.conv_channels.size()));
  for (int c : net.cfg.conv_channels) write_u32(f, static_cast<uint32_t>(c));
  auto tensors = net.named_tensors();
  write_u32(f, static_cast<uint32_t>(tensors.size()));
  for (auto& t : tensors) {
    write_u32(f, static_cast<uint32_t>(t.name.size()));
    f.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_u32(f, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(f, static_cast<uint32_t>(d));
    f.write(reinterpret_cast<const char*>(t.data->data()),
            static_cast<std::streamsize>(t.data->size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

DynamicsNet<float> load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not an FDNW weight file: " + path);
  const uint32_t version = read_u32(f);
  if (version != kVersion)
    throw std::runtime_error("unsupported FDNW version " +
                             std::to_string(version));
  DynNetConfig cfg;
  cfg.T = static_cast<int>(read_u32(f));
  cfg.M = static_cast<int>(read_u32(f));
  const uint32_t n_ch = read_u32(f);
  cfg.conv_channels.resize(n_ch);
  for (auto& c : cfg.conv_channels) c = static_cast<int>(read_u32(f));

  DynamicsNet<float> net(cfg, 0);
  auto tensors = net.named_tensors();
  const uint32_t n_tensors = read_u32(f);
  if (n_tensors != tensors.size())
    throw std::runtime_error("weight file tensor count mismatch");
  for (auto& t : tensors) {
    const uint32_t name_len = read_u32(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (!f || name != t.name)
      throw std::runtime_error("weight file tensor order mismatch at " + t.name);
    const uint32_t rank = read_u32(f);
    if (rank != t.shape.size())
      throw std::runtime_error("rank mismatch for " + t.name);
    for (int expect : t.shape) {
      const uint32_t d = read_u32(f);
      if (static_cast<int>(d) != expect)
        throw std::runtime_error("dim mismatch for " + t.name);
    }
    f.read(reinterpret_cast<char*>(t.data->data()),
           static_cast<std::streamsize>(t.data->size() * sizeof(float)));
    if (!f) throw std::runtime_error("weight file truncated in " + t.name);
  }
  return net;
}

}  // namespace fdn::net
