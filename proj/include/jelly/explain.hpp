#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jelly/image.hpp"
#include "jelly/model.hpp"
#include "jelly/preprocess.hpp"
#include "jelly/tensor.hpp"

namespace jelly {

struct ActivationMap {
  Image values;  // W x H, in [0,1]
  std::string source_layer;
  int frame_index = 0;  // 0-based
};

/// Grad-CAM++ map of one feature map A [K,h,w] given g = dS/dA, with the
/// score Y = exp(S). Returns the raw h x w map (relu, not normalized).
template <typename T>
Image gradcam_pp_map(const T* activation, const T* gradient, int channels, int height, int width);

/// Bilinear upsampling to width x height, then division by the maximum
/// (left all zero when the map is zero).
Image normalize_map(const Image& raw, int width, int height);

/// Maps for every frame of `input` from a single backward pass of the logit.
/// `layer` empty means the model's last residual stage.
template <typename T>
std::vector<ActivationMap> gradcam_pp_all(Classifier<T>& model, const InputTensor& input, const std::string& layer = {});

template <typename T>
ActivationMap gradcam_pp(Classifier<T>& model, const InputTensor& input, int frame_index,
                         const std::string& layer = {});

/// Fraction of activation mass inside the mask; 0 for an all-zero map.
double localization_score(const ActivationMap& map, const Mask& mask);

/// Red heat blended over the grayscale frame; mask boundary drawn in green.
RgbImage render_overlay(const ActivationMap& map, const Image& frame, const std::optional<Mask>& lesion_mask = {});

}  // namespace jelly
