// SPDX-License-Identifier: Apache-2.0
#include "json_config.hpp"

#include <algorithm>
#include <cstring>

#include "densesed/error.hpp"

namespace densesed {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                [&](const char* a) { return key == a; });
    if (!ok) throw ConfigError(section + ": unknown key '" + key + "'");
  }
}

namespace {

template <typename T>
void read(const Json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(section + ": bad value for '" + key + "'");
  }
}

}  // namespace

Json to_json(const CrnnConfig& c) {
  return Json{{"n_mels", c.n_mels},
              {"conv_channels", c.conv_channels},
              {"freq_pool", c.freq_pool},
              {"gru_layers", c.gru_layers},
              {"gru_units", c.gru_units},
              {"dense_units", c.dense_units},
              {"n_classes", c.n_classes},
              {"dropout", c.dropout},
              {"leaky_slope", c.leaky_slope},
              {"layer_norm_eps", c.layer_norm_eps}};
}

Json to_json(const FeatureConfig& c) {
  return Json{{"n_fft", c.stft.n_fft},     {"hop", c.stft.hop},   {"centered", c.stft.centered},
              {"sample_rate", c.sample_rate}, {"n_mels", c.n_mels}, {"f_min", c.f_min},
              {"f_max", c.f_max},           {"epsilon", c.epsilon}};
}

Json to_json(const TrainConfig& c) {
  return Json{{"learning_rate", c.learning_rate},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_epsilon", c.adam_epsilon},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"n_train_samples", c.n_train_samples},
              {"train_fraction", c.train_fraction},
              {"seed", c.seed},
              {"workers", c.workers}};
}

CrnnConfig crnn_config_from_json(const Json& j, CrnnConfig c) {
  const std::string s = "model";
  check_keys(j, {"n_mels", "conv_channels", "freq_pool", "gru_layers", "gru_units", "dense_units",
                 "n_classes", "dropout", "leaky_slope", "layer_norm_eps"}, s);
  read(j, "n_mels", c.n_mels, s);
  read(j, "conv_channels", c.conv_channels, s);
  read(j, "freq_pool", c.freq_pool, s);
  read(j, "gru_layers", c.gru_layers, s);
  read(j, "gru_units", c.gru_units, s);
  read(j, "dense_units", c.dense_units, s);
  read(j, "n_classes", c.n_classes, s);
  read(j, "dropout", c.dropout, s);
  read(j, "leaky_slope", c.leaky_slope, s);
  read(j, "layer_norm_eps", c.layer_norm_eps, s);
  return c;
}

FeatureConfig feature_config_from_json(const Json& j, FeatureConfig c) {
  const std::string s = "features";
  check_keys(j, {"n_fft", "hop", "centered", "sample_rate", "n_mels", "f_min", "f_max", "epsilon"}, s);
  read(j, "n_fft", c.stft.n_fft, s);
  read(j, "hop", c.stft.hop, s);
  read(j, "centered", c.stft.centered, s);
  read(j, "sample_rate", c.sample_rate, s);
  read(j, "n_mels", c.n_mels, s);
  read(j, "f_min", c.f_min, s);
  read(j, "f_max", c.f_max, s);
  read(j, "epsilon", c.epsilon, s);
  c.stft.validate();
  return c;
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  const std::string s = "training";
  check_keys(j, {"learning_rate", "beta1", "beta2", "adam_epsilon", "epochs", "batch_size",
                 "n_train_samples", "train_fraction", "seed", "workers"}, s);
  read(j, "learning_rate", c.learning_rate, s);
  read(j, "beta1", c.beta1, s);
  read(j, "beta2", c.beta2, s);
  read(j, "adam_epsilon", c.adam_epsilon, s);
  read(j, "epochs", c.epochs, s);
  read(j, "batch_size", c.batch_size, s);
  read(j, "n_train_samples", c.n_train_samples, s);
  read(j, "train_fraction", c.train_fraction, s);
  read(j, "seed", c.seed, s);
  read(j, "workers", c.workers, s);
  return c;
}

}  // namespace densesed
