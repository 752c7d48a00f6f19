#pragma once

#include <algorithm>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

#include "gbm/hash.hpp"
#include "gbm/kmeans.hpp"
#include "gbm/nn.hpp"
#include "gbm/optimizer.hpp"
#include "gbm/preprocess.hpp"

namespace gbm {

struct AutoencoderSpec {
  int latent_channels = 8;
  int depth = 2;
  int input_side = 256;
  uint64_t seed = 0;

  void validate() const {
    if (latent_channels < 1) throw ConfigError("latent_channels must be >= 1");
    if (depth < 1) throw ConfigError("autoencoder depth must be >= 1");
    if (input_side < (1 << depth) || input_side % (1 << depth) != 0) {
      throw ConfigError("input_side must be a positive multiple of 2^depth");
    }
  }

  int latent_side() const { return input_side / (1 << depth); }
};

// Strided conv encoder and nearest-upsample conv decoder trained under MSE
// reconstruction; the encoder half supplies per-pixel features downstream.
template <typename S>
class ConvAutoencoder {
 public:
  explicit ConvAutoencoder(AutoencoderSpec spec) : spec_(spec) {
    spec_.validate();
    std::mt19937 rng(static_cast<uint32_t>(derive_seed(spec_.seed, "autoencoder-init", 0, 0)));
    const int L = spec_.latent_channels;
    int ic = 1;
    for (int i = 0; i < spec_.depth; ++i) {
      enc_.push_back(make_layer("enc" + std::to_string(i), L, ic, rng));
      ic = L;
    }
    for (int i = 0; i < spec_.depth - 1; ++i) {
      dec_.push_back(make_layer("dec" + std::to_string(i), L, L, rng));
    }
    out_ = make_layer("out", 1, L, rng);
  }

  const AutoencoderSpec& spec() const { return spec_; }
  const std::vector<Param<S>>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.grad().setZero();
  }

  // (N, 1, side, side) -> (N, latent_channels, side/2^depth, side/2^depth)
  NodePtr<S> encode(const NodePtr<S>& x) const {
    if (x->value.h != spec_.input_side || x->value.w != spec_.input_side || x->value.c != 1) {
      throw ValidationError("autoencoder: input must be (N, 1, input_side, input_side)");
    }
    NodePtr<S> cur = x;
    for (const auto& l : enc_) cur = relu(conv2d(cur, l.w.node, l.b.node, 2, 1));
    return cur;
  }

  NodePtr<S> decode(const NodePtr<S>& z) const {
    NodePtr<S> cur = z;
    for (const auto& l : dec_) cur = relu(conv2d(upsample_nearest2(cur), l.w.node, l.b.node, 1, 1));
    return conv2d(upsample_nearest2(cur), out_.w.node, out_.b.node, 1, 1);
  }

  NodePtr<S> forward(const NodePtr<S>& x) const { return decode(encode(x)); }

 private:
  struct Layer {
    Param<S> w, b;
  };

  Layer make_layer(const std::string& name, int oc, int ic, std::mt19937& rng) {
    Layer l;
    l.w = make_param(name + ".weight", he_normal<S>(oc, ic, 3, 3, ic * 9, rng));
    l.b = make_param(name + ".bias", Tensor<S>(oc, 1, 1, 1));
    params_.push_back(l.w);
    params_.push_back(l.b);
    return l;
  }

  AutoencoderSpec spec_;
  std::vector<Param<S>> params_;
  std::vector<Layer> enc_;
  std::vector<Layer> dec_;
  Layer out_;
};

struct AutoencoderTrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
};

// Trains on unit-interval grayscale images; returns the trained autoencoder
// (callers use encode()). epochs 0 returns initial weights.
template <typename S>
ConvAutoencoder<S> train_autoencoder(const std::vector<PlaneF>& images, AutoencoderSpec spec,
                                     const AutoencoderTrainConfig& cfg) {
  spec.validate();
  if (images.empty()) throw ConfigError("train_autoencoder: no images");
  for (const auto& im : images) {
    if (im.rows() != spec.input_side || im.cols() != spec.input_side) {
      throw ValidationError("train_autoencoder: image size does not match input_side");
    }
  }
  if (cfg.epochs < 0 || cfg.batch_size < 1) {
    throw ConfigError("train_autoencoder: bad epochs/batch_size");
  }
  ConvAutoencoder<S> ae(spec);
  Adam<S> opt(ae.params(), AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  std::mt19937 shuffle_rng(static_cast<uint32_t>(derive_seed(cfg.seed, "ae-shuffle", 0, 0)));
  std::vector<size_t> order(images.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      const int bsz = static_cast<int>(end - start);
      Tensor<S> x(bsz, 1, spec.input_side, spec.input_side);
      for (int i = 0; i < bsz; ++i) {
        x.plane(i, 0) = images[order[start + static_cast<size_t>(i)]].cast<S>();
      }
      ae.zero_grad();
      auto input = make_input(std::move(x));
      auto loss = mse_loss(ae.forward(input), input->value);
      if (!std::isfinite(loss->scalar)) {
        throw TrainingError("autoencoder training aborted: non-finite loss");
      }
      backward(loss);
      opt.step();
    }
  }
  return ae;
}

template <typename S>
double reconstruction_mse(const ConvAutoencoder<S>& ae, const std::vector<PlaneF>& images) {
  if (images.empty()) throw ConfigError("reconstruction_mse: no images");
  double total = 0.0;
  for (const auto& im : images) {
    Tensor<S> x(1, 1, static_cast<int>(im.rows()), static_cast<int>(im.cols()));
    x.plane(0, 0) = im.cast<S>();
    auto input = make_input(std::move(x));
    total += mse_loss(ae.forward(input), input->value)->scalar;
  }
  return total / static_cast<double>(images.size());
}

// Per-pixel features: (intensity, w*row/side, w*col/side) plus, when an
// encoder is supplied, its bilinearly upsampled latent channels. The
// coordinate weight keeps intensity dominant while still separating
// spatially distant structures.
SegmentationMask kmeans_segment(const PlaneF& image, const ConvAutoencoder<float>* encoder, int k,
                                uint64_t seed, double coord_weight = 0.25);

// Brightest-mean cluster becomes the tumor; 4-connected components smaller
// than min_area are dropped. Returns a 0/1 mask.
SegmentationMask extract_tumor_mask(const SegmentationMask& seg, const PlaneF& image,
                                    int min_area = 50);

}  // namespace gbm
