#include "fdn/vision.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace fdn::vision {

namespace {

constexpr float kInf = std::numeric_limits<float>::infinity();

struct Segment {
  double x0, y0, x1, y1;  // px coordinates
};

std::vector<Segment> chain_segments(const sim::ChainState& state,
                                    const sim::ChainParams& params,
                                    const Camera& cam) {
  const auto tips = sim::link_tips(state, params);
  std::vector<Segment> segs(tips.size());
  double px = cam.ox, py = cam.oy;
  for (size_t k = 0; k < tips.size(); ++k) {
    const double qx = cam.ox + cam.scale * tips[k].first;
    const double qy = cam.oy - cam.scale * tips[k].second;
    segs[k] = {px, py, qx, qy};
    px = qx;
    py = qy;
  }
  return segs;
}

// distance from point to segment, and the parameter t in [0,1] of the foot
double point_segment_dist(double x, double y, const Segment& s, double* t_out) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0)
    t = std::clamp(((x - s.x0) * dx + (y - s.y0) * dy) / len2, 0.0, 1.0);
  const double fx = s.x0 + t * dx, fy = s.y0 + t * dy;
  if (t_out) *t_out = t;
  return std::hypot(x - fx, y - fy);
}

// Felzenszwalb-Huttenlocher 1D squared distance transform. Sources at
// infinity are skipped; an all-infinite row stays infinite.
void dt1d(const float* f, int n, float* d, int* v, float* z) {
  int k = -1;  // index of the rightmost parabola in the envelope
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    float s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) /
              (2.0f * (q - v[k]));
    while (s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0f * (q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) d[q] = kInf;
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const float dq = static_cast<float>(q - v[k]);
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

Image dilate(const Image& in) {
  Image out(in.w, in.h);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      float m = 0.0f;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx >= 0 && xx < in.w && yy >= 0 && yy < in.h)
            m = std::max(m, in.at(xx, yy));
        }
      out.at(x, y) = m;
    }
  return out;
}

Image erode(const Image& in) {
  Image out(in.w, in.h);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      float m = 1.0f;  // outside the frame counts as object for erosion
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx >= 0 && xx < in.w && yy >= 0 && yy < in.h)
            m = std::min(m, in.at(xx, yy));
        }
      out.at(x, y) = m;
    }
  return out;
}


Camera default_camera(const sim::ChainParams& params) {
  Camera cam;
  cam.scale = 30.0 / params.reach();
  cam.ox = 32.0;
  cam.oy = 32.0;
  return cam;
}

Image render_chain(const sim::ChainState& state, const sim::ChainParams& params,
                   const Camera& cam, double thickness_px) {
  const auto segs = chain_segments(state, params, cam);
  Image img;
  const double r = thickness_px * 0.5;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      double d = kInf;
      for (const auto& s : segs)
        d = std::min(d, point_segment_dist(x + 0.5, y + 0.5, s, nullptr));
      img.at(x, y) = static_cast<float>(std::clamp(r + 0.5 - d, 0.0, 1.0));
    }
  return img;
}

Image preprocess(const Image& gray) {
  // 3x3 Gaussian, sigma 1
  const double k1 = std::exp(-0.5), k0 = 1.0;
  const double norm = k0 + 2.0 * k1;
  const double w[3] = {k1 / norm, k0 / norm, k1 / norm};
  Image tmp(gray.w, gray.h), blur(gray.w, gray.h);
  for (int y = 0; y < gray.h; ++y)
    for (int x = 0; x < gray.w; ++x) {
      double acc = 0.0;
      for (int dx = -1; dx <= 1; ++dx) {
        const int xx = std::clamp(x + dx, 0, gray.w - 1);
        acc += w[dx + 1] * gray.at(xx, y);
      }
      tmp.at(x, y) = static_cast<float>(acc);
    }
  for (int y = 0; y < gray.h; ++y)
    for (int x = 0; x < gray.w; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = std::clamp(y + dy, 0, gray.h - 1);
        acc += w[dy + 1] * tmp.at(x, yy);
      }
      blur.at(x, y) = static_cast<float>(acc);
    }
  Image bin(gray.w, gray.h);
  for (size_t i = 0; i < bin.size(); ++i)
    bin.px[i] = blur.px[i] >= 0.5f ? 1.0f : 0.0f;
  bin = erode(dilate(bin));  // closing
  bin = dilate(erode(bin));  // opening
  return bin;
}

FlowField render_flow(const sim::ChainState& state,
                      const sim::ChainParams& params, const Camera& cam,
                      double control_hz, double thickness_px) {
  const Image gray = render_chain(state, params, cam, thickness_px);
  const auto segs = chain_segments(state, params, cam);

  // per-segment base velocity and angular data in world coordinates
  const int n = params.n_links;
  std::vector<double> phi_dot(n), vx0(n), vy0(n), ux(n), uy(n);
  {
    double a = 0.0, ad = 0.0, vx = 0.0, vy = 0.0;
    for (int j = 0; j < n; ++j) {
      a += state.theta[j];
      ad += state.theta_dot[j];
      phi_dot[j] = ad;
      ux[j] = std::sin(a);
      uy[j] = -std::cos(a);
      vx0[j] = vx;  // velocity of the segment's proximal end
      vy0[j] = vy;
      vx += params.link_lengths[j] * ad * std::cos(a);
      vy += params.link_lengths[j] * ad * std::sin(a);
    }
  }

  FlowField flow;
  for (int y = 0; y < gray.h; ++y)
    for (int x = 0; x < gray.w; ++x) {
      if (gray.at(x, y) < 0.5f) continue;
      double best = kInf, best_t = 0.0;
      int best_j = 0;
      for (int j = 0; j < n; ++j) {
        double t;
        const double d = point_segment_dist(x + 0.5, y + 0.5, segs[j], &t);
        if (d < best) {
          best = d;
          best_t = t;
          best_j = j;
        }
      }
      // world velocity of the nearest chain point: v_base + s*phi_dot*w
      const int j = best_j;
      const double s = best_t * params.link_lengths[j];
      const double wx = -uy[j], wy = ux[j];  // d/dphi of u
      const double vx = vx0[j] + s * phi_dot[j] * wx;
      const double vy = vy0[j] + s * phi_dot[j] * wy;
      const double fx = vx * cam.scale / control_hz;
      const double fy = -vy * cam.scale / control_hz;  // image y points down
      flow.x.at(x, y) = static_cast<float>(
          std::clamp(fx, -(double)kFlowClamp, (double)kFlowClamp));
      flow.y.at(x, y) = static_cast<float>(
          std::clamp(fy, -(double)kFlowClamp, (double)kFlowClamp));
    }
  return flow;
}

DistanceMap distance_transform(const Image& binary) {
  const int w = binary.w, h = binary.h;
  DistanceMap d(w, h);
  std::vector<float> f(static_cast<size_t>(w) * h);
  for (size_t i = 0; i < f.size(); ++i)
    f[i] = binary.px[i] >= 0.5f ? 0.0f : kInf;

  const int nmax = std::max(w, h);
  std::vector<float> col(nmax), out(nmax), z(nmax + 1);
  std::vector<int> v(nmax);
  // columns
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[y] = f[static_cast<size_t>(y) * w + x];
    dt1d(col.data(), h, out.data(), v.data(), z.data());
    for (int y = 0; y < h; ++y) f[static_cast<size_t>(y) * w + x] = out[y];
  }
  // rows
  for (int y = 0; y < h; ++y) {
    dt1d(f.data() + static_cast<size_t>(y) * w, w, out.data(), v.data(),
         z.data());
    for (int x = 0; x < w; ++x) {
      const float dist =
          out[x] == kInf ? kEmptyDistance : std::sqrt(out[x]);
      d.px[static_cast<size_t>(y) * w + x] = std::min(dist, kEmptyDistance);
    }
  }
  return d;
}

Image blur_target(const Image& target, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
  const DistanceMap d = distance_transform(target);
  Image out(target.w, target.h);
  for (size_t i = 0; i < out.size(); ++i)
    out.px[i] = static_cast<float>(1.0 - std::tanh(beta * d.px[i]));
  return out;
}

double prediction_loss(const Image& predicted, const Image& blurred_target) {
  if (predicted.w != blurred_target.w || predicted.h != blurred_target.h)
    throw std::invalid_argument("prediction_loss: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const double e = static_cast<double>(predicted.px[i]) - blurred_target.px[i];
    acc += e * e;
  }
  return acc / static_cast<double>(predicted.size());
}

double chamfer_distance(const Image& s1, const Image& s2) {
  if (s1.w != s2.w || s1.h != s2.h)
    throw std::invalid_argument("chamfer_distance: shape mismatch");
  const DistanceMap d1 = distance_transform(s1);
  const DistanceMap d2 = distance_transform(s2);
  double acc = 0.0;
  for (size_t i = 0; i < s1.size(); ++i)
    acc += static_cast<double>(s1.px[i]) * d2.px[i] +
           static_cast<double>(s2.px[i]) * d1.px[i];
  return acc;
}

void save_pgm(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << "P5\n" << img.w << " " << img.h << "\n255\n";
  std::vector<uint8_t> row(img.size());
  for (size_t i = 0; i < img.size(); ++i)
    row[i] = static_cast<uint8_t>(
        std::lround(std::clamp(img.px[i], 0.0f, 1.0f) * 255.0f));
  f.write(reinterpret_cast<const char*>(row.data()),
          static_cast<std::streamsize>(row.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

Image load_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string magic;
  int w, h, maxval;
  f >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255 || w <= 0 || h <= 0)
    throw std::runtime_error("unsupported PGM: " + path);
  f.get();  // single whitespace after header
  Image img(w, h);
  std::vector<uint8_t> raw(img.size());
  f.read(reinterpret_cast<char*>(raw.data()),
         static_cast<std::streamsize>(raw.size()));
  if (!f) throw std::runtime_error("truncated PGM: " + path);
  for (size_t i = 0; i < img.size(); ++i) img.px[i] = raw[i] / 255.0f;
  return img;
}

uint8_t encode_flow_px(float v) {
  const float c = std::clamp(v, -kFlowClamp, kFlowClamp);
  return static_cast<uint8_t>(std::lround(c / kFlowClamp * 127.0f) + 128);
}

float decode_flow_px(uint8_t code) {
  return (static_cast<int>(code) - 128) / 127.0f * kFlowClamp;
}

void quantize_flow(FlowField& flow) {
  for (auto* plane : {&flow.x, &flow.y})
    for (auto& v : plane->px) v = decode_flow_px(encode_flow_px(v));
}

}  // namespace fdn::vision
