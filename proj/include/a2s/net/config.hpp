#pragma once

#include <json.hpp>

#include "a2s/error.hpp"

namespace a2s::net {

/// Shape of the convolutional-recurrent network.
struct ModelConfig {
  int conv_filters = 16;
  int conv_kernel = 3;
  int conv_freq_stride = 2;
  int conv_layers = 2;
  int recurrent_layers = 2;
  int hidden_units = 64;
  double dropout = 0.1;
  bool frame_doubling = false;
  int vocab_size = 2;
  int input_bins = 240;

  /// Frequency bins left after the strided convolutions (same padding).
  int conv_output_bins() const {
    int bins = input_bins;
    for (int i = 0; i < conv_layers; ++i) bins = (bins + conv_freq_stride - 1) / conv_freq_stride;
    return bins;
  }

  /// Flattened feature size per frame out of the convolutional block.
  int feature_dim() const { return conv_output_bins() * conv_filters; }

  int recurrent_input_dim() const { return frame_doubling ? feature_dim() / 2 : feature_dim(); }

  /// Output frames for W input frames.
  long output_frames(long input_frames) const { return frame_doubling ? 2 * input_frames : input_frames; }

  void validate() const {
    const auto require = [](bool ok, const char* what) {
      if (!ok) throw Error(Errc::InvalidConfig, what);
    };
    require(conv_filters >= 1, "conv_filters must be >= 1");
    require(conv_kernel >= 1 && conv_kernel % 2 == 1, "conv_kernel must be odd");
    require(conv_freq_stride >= 1, "conv_freq_stride must be >= 1");
    require(conv_layers >= 1, "conv_layers must be >= 1");
    require(recurrent_layers >= 1, "recurrent_layers must be >= 1");
    require(hidden_units >= 1, "hidden_units must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
    require(vocab_size >= 2, "vocab_size must be >= 2");
    require(input_bins >= 1, "input_bins must be >= 1");
    if (frame_doubling && feature_dim() % 2 != 0) {
      throw Error(Errc::OddFeatureDim, "frame doubling needs an even feature dimension");
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"conv_filters", c.conv_filters},
                     {"conv_kernel", c.conv_kernel},
                     {"conv_freq_stride", c.conv_freq_stride},
                     {"conv_layers", c.conv_layers},
                     {"recurrent_layers", c.recurrent_layers},
                     {"hidden_units", c.hidden_units},
                     {"dropout", c.dropout},
                     {"frame_doubling", c.frame_doubling},
                     {"vocab_size", c.vocab_size},
                     {"input_bins", c.input_bins}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  const ModelConfig d;
  c.conv_filters = j.value("conv_filters", d.conv_filters);
  c.conv_kernel = j.value("conv_kernel", d.conv_kernel);
  c.conv_freq_stride = j.value("conv_freq_stride", d.conv_freq_stride);
  c.conv_layers = j.value("conv_layers", d.conv_layers);
  c.recurrent_layers = j.value("recurrent_layers", d.recurrent_layers);
  c.hidden_units = j.value("hidden_units", d.hidden_units);
  c.dropout = j.value("dropout", d.dropout);
  c.frame_doubling = j.value("frame_doubling", d.frame_doubling);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.input_bins = j.value("input_bins", d.input_bins);
}

}  // namespace a2s::net
