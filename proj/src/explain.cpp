#include "jelly/explain.hpp"

#include <algorithm>
#include <cmath>

#include "jelly/errors.hpp"

namespace jelly {

template <typename T>
Image gradcam_pp_map(const T* activation, const T* gradient, int channels, int height, int width) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::vector<double> map(plane, 0.0);
  for (int k = 0; k < channels; ++k) {
    const T* a = activation + k * plane;
    const T* g = gradient + k * plane;
    double a_sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) a_sum += a[i];
    double weight = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double g1 = g[i];
      const double g2 = g1 * g1;
      const double denom = 2.0 * g2 + a_sum * g2 * g1;
      const double alpha = denom != 0.0 ? g2 / denom : 0.0;
      weight += alpha * std::max(g1, 0.0);
    }
    for (std::size_t i = 0; i < plane; ++i) map[i] += weight * a[i];
  }
  Image out(width, height);
  for (std::size_t i = 0; i < plane; ++i) out.values()[i] = static_cast<float>(std::max(map[i], 0.0));
  return out;
}

Image normalize_map(const Image& raw, int width, int height) {
  Image up = resize_bilinear(raw, width, height);
  float peak = 0.0f;
  for (float& v : up.values()) {
    v = std::max(v, 0.0f);
    peak = std::max(peak, v);
  }
  if (peak > 0.0f) {
    for (float& v : up.values()) v = std::min(v / peak, 1.0f);
  }
  return up;
}

template <typename T>
std::vector<ActivationMap> gradcam_pp_all(Classifier<T>& model, const InputTensor& input, const std::string& layer) {
  typename Classifier<T>::Capture capture{layer.empty() ? model.last_conv_layer() : layer, nullptr};
  ad::Tape<T> tape;
  const auto frames = ad::constant(model.batch_tensor({&input}));
  const auto logit = model.forward(tape, frames, 1, input.frames(), /*training=*/false, &capture);
  tape.backward(logit);

  const auto& act = capture.activation->value;
  const int steps = act.dim(0), channels = act.dim(1), h = act.dim(2), w = act.dim(3);
  const Tensor<T> grad = capture.activation->grad.empty() ? Tensor<T>(act.shape()) : capture.activation->grad;
  const std::size_t frame_size = static_cast<std::size_t>(channels) * h * w;
  std::vector<ActivationMap> maps(steps);
  for (int t = 0; t < steps; ++t) {
    const Image raw = gradcam_pp_map(act.data() + t * frame_size, grad.data() + t * frame_size, channels, h, w);
    maps[t] = {normalize_map(raw, input.width(), input.height()), capture.layer, t};
  }
  model.params().zero_grad();
  return maps;
}

template <typename T>
ActivationMap gradcam_pp(Classifier<T>& model, const InputTensor& input, int frame_index, const std::string& layer) {
  if (frame_index < 0 || frame_index >= input.frames()) {
    throw RangeError("frame " + std::to_string(frame_index) + " outside clip of " + std::to_string(input.frames()));
  }
  return gradcam_pp_all(model, input, layer)[frame_index];
}

double localization_score(const ActivationMap& map, const Mask& mask) {
  if (map.values.width() != mask.width() || map.values.height() != mask.height()) {
    throw InputError("activation map and mask differ in size");
  }
  double inside = 0.0, total = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double v = map.values.values()[i];
    total += v;
    if (mask.values()[i]) inside += v;
  }
  return total > 0.0 ? inside / total : 0.0;
}

RgbImage render_overlay(const ActivationMap& map, const Image& frame, const std::optional<Mask>& lesion_mask) {
  const int w = frame.width(), h = frame.height();
  if (map.values.width() != w || map.values.height() != h) {
    throw InputError("overlay: map is " + std::to_string(map.values.width()) + "x" +
                     std::to_string(map.values.height()) + ", frame is " + std::to_string(w) + "x" + std::to_string(h));
  }
  if (lesion_mask && (lesion_mask->width() != w || lesion_mask->height() != h)) {
    throw InputError("overlay: lesion mask size differs from frame");
  }
  RgbImage out(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double gray = std::clamp(static_cast<double>(frame.at(r, c)), 0.0, 1.0) * 255.0;
      const double a = 0.5 * std::clamp(static_cast<double>(map.values.at(r, c)), 0.0, 1.0);
      const auto base = static_cast<std::uint8_t>(std::lround((1.0 - a) * gray));
      out.at(r, c) = {static_cast<std::uint8_t>(std::lround((1.0 - a) * gray + a * 255.0)), base, base};
    }
  }
  if (lesion_mask) {
    const Mask& m = *lesion_mask;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (!m.at(r, c)) continue;
        const bool edge = (r > 0 && !m.at(r - 1, c)) || (r + 1 < h && !m.at(r + 1, c)) ||
                          (c > 0 && !m.at(r, c - 1)) || (c + 1 < w && !m.at(r, c + 1));
        if (edge) out.at(r, c) = {0, 255, 0};
      }
    }
  }
  return out;
}

template Image gradcam_pp_map<float>(const float*, const float*, int, int, int);
template Image gradcam_pp_map<double>(const double*, const double*, int, int, int);
template std::vector<ActivationMap> gradcam_pp_all<float>(Classifier<float>&, const InputTensor&, const std::string&);
template std::vector<ActivationMap> gradcam_pp_all<double>(Classifier<double>&, const InputTensor&, const std::string&);
template ActivationMap gradcam_pp<float>(Classifier<float>&, const InputTensor&, int, const std::string&);
template ActivationMap gradcam_pp<double>(Classifier<double>&, const InputTensor&, int, const std::string&);

}  // namespace jelly
