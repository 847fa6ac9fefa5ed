#pragma once

#include <string>
#include <vector>

#include "fdn/sim.hpp"

namespace fdn::vision {

inline constexpr int kImageSize = 64;
inline constexpr float kFlowClamp = 8.0f;  // px/frame
// distance-transform sentinel when the image has no object pixel
inline constexpr float kEmptyDistance = 90.50966799187809f;  // 64*sqrt(2)

// Row-major grayscale image, values in [0,1]. Width/height default to 64
// but stay explicit so oracle tests can run on small images.
struct Image {
  int w = kImageSize;
  int h = kImageSize;
  std::vector<float> px;

  Image() : px(static_cast<size_t>(kImageSize) * kImageSize, 0.0f) {}
  Image(int width, int height)
      : w(width), h(height), px(static_cast<size_t>(width) * height, 0.0f) {}

  float& at(int x, int y) { return px[static_cast<size_t>(y) * w + x]; }
  float at(int x, int y) const { return px[static_cast<size_t>(y) * w + x]; }
  size_t size() const { return px.size(); }
};

// Two displacement channels, px/frame, clamped to +-kFlowClamp.
struct FlowField {
  Image x, y;
};

using DistanceMap = Image;

// Pinhole-free orthographic camera: px = ox + scale*X, py = oy - scale*Y.
struct Camera {
  double scale = 60.0;  // px per meter
  double ox = 32.0;
  double oy = 32.0;
};

// Camera that keeps the whole chain in view with a small margin.
Camera default_camera(const sim::ChainParams& params);

// Anti-aliased polyline of the chain, configurable stroke thickness.
Image render_chain(const sim::ChainState& state, const sim::ChainParams& params,
                   const Camera& camera, double thickness_px = 3.0);

// Gaussian blur (3x3, sigma 1), threshold at 0.5, then closing and opening
// with a 3x3 square element. Output is strictly {0,1}.
Image preprocess(const Image& gray);

// 3x3 square-element morphology. Out-of-frame pixels count as background
// for dilation and as object for erosion.
Image dilate(const Image& binary);
Image erode(const Image& binary);

// Ground-truth flow: for each object pixel the projected velocity of the
// nearest chain point, zero on background, clamped to +-8 px/frame.
FlowField render_flow(const sim::ChainState& state,
                      const sim::ChainParams& params, const Camera& camera,
                      double control_hz, double thickness_px = 3.0);

// Exact Euclidean distance to the nearest object (value 1) pixel.
// An empty image maps to kEmptyDistance everywhere.
DistanceMap distance_transform(const Image& binary);

// S' = 1 - tanh(beta * DT(S)); beta must be > 0.
Image blur_target(const Image& target, double beta = 0.5);

// Mean squared error over all pixels.
double prediction_loss(const Image& predicted, const Image& blurred_target);

// sum(S1*DT(S2) + S2*DT(S1)), in px.
double chamfer_distance(const Image& s1, const Image& s2);

// 8-bit binary PGM (P5); values scaled by 255.
void save_pgm(const Image& img, const std::string& path);
Image load_pgm(const std::string& path);

// Flow plane quantization used by the episode files: 8 px/frame spans
// the byte range around 128. quantize_flow snaps a field onto that grid.
uint8_t encode_flow_px(float v);
float decode_flow_px(uint8_t code);
void quantize_flow(FlowField& flow);

}  // namespace fdn::vision
