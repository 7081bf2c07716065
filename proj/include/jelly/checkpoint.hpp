#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "jelly/model.hpp"

namespace jelly {

/// A model snapshot in float32: parameters plus batch-norm running statistics.
struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<Tensor<float>> tensors;
};

template <typename T>
Checkpoint snapshot(const Classifier<T>& model);

/// Copies the snapshot into an existing model built with the same config.
template <typename T>
void restore(Classifier<T>& model, const Checkpoint& checkpoint);

Classifier<float> instantiate(const Checkpoint& checkpoint);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

// File layout: one line of compact JSON (format, version, precision, model
// config, tensor names and shapes), '\n', then the tensors as little-endian
// float32 in header order.
void save_checkpoint(const std::filesystem::path& file, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace jelly
