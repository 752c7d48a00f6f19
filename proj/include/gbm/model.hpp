#pragma once

#include <memory>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "gbm/hash.hpp"
#include "gbm/nn.hpp"

namespace gbm {

struct ModelSpec {
  std::string arch = "unet";  // "unet" | "deeplabv3"
  std::string task = "segment";  // "segment" | "classify"
  int in_channels = 1;
  int num_classes = 4;  // background, tumor, edema, healthy tissue
  int base_channels = 32;
  int depth = 4;
  std::vector<int> atrous_rates{6, 12, 18};
  int input_side = 256;
  uint64_t seed = 0;

  void validate() const {
    if (arch != "unet" && arch != "deeplabv3") {
      throw ConfigError("model arch must be 'unet' or 'deeplabv3', got '" + arch + "'");
    }
    if (task != "segment" && task != "classify") {
      throw ConfigError("model task must be 'segment' or 'classify', got '" + task + "'");
    }
    if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
    if (task == "segment" && num_classes < 2) throw ConfigError("segment needs num_classes >= 2");
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
    if (depth < 1) throw ConfigError("depth must be >= 1");
    if (input_side < 1) throw ConfigError("input_side must be >= 1");
    if (arch == "unet" && input_side % (1 << depth) != 0) {
      throw ConfigError("unet input_side " + std::to_string(input_side) +
                        " is not divisible by 2^depth = " + std::to_string(1 << depth));
    }
    if (arch == "deeplabv3") {
      if (input_side % 8 != 0) {
        throw ConfigError("deeplabv3 input_side must be divisible by 8 (output stride)");
      }
      if (atrous_rates.empty()) throw ConfigError("deeplabv3 needs at least one atrous rate");
      int prev = 0;
      for (int r : atrous_rates) {
        if (r < 1) throw ConfigError("atrous rates must be >= 1");
        if (r <= prev) throw ConfigError("atrous rates must be strictly increasing");
        prev = r;
      }
    }
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["arch"] = arch;
    j["task"] = task;
    j["in_channels"] = in_channels;
    j["num_classes"] = num_classes;
    j["base_channels"] = base_channels;
    j["depth"] = depth;
    j["atrous_rates"] = atrous_rates;
    j["input_side"] = input_side;
    j["seed"] = seed;
    return j;
  }

  static ModelSpec from_json(const nlohmann::json& j) {
    ModelSpec s;
    try {
      s.arch = j.at("arch").get<std::string>();
      s.task = j.at("task").get<std::string>();
      s.in_channels = j.at("in_channels").get<int>();
      s.num_classes = j.at("num_classes").get<int>();
      s.base_channels = j.at("base_channels").get<int>();
      s.depth = j.at("depth").get<int>();
      s.atrous_rates = j.at("atrous_rates").get<std::vector<int>>();
      s.input_side = j.at("input_side").get<int>();
      s.seed = j.at("seed").get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid model spec JSON: ") + e.what());
    }
    s.validate();
    return s;
  }
};

template <typename S>
class Model {
 public:
  explicit Model(ModelSpec spec) : spec_(std::move(spec)) { spec_.validate(); }
  virtual ~Model() = default;

  virtual NodePtr<S> forward(const NodePtr<S>& x) = 0;

  const ModelSpec& spec() const { return spec_; }
  const std::vector<Param<S>>& params() const { return params_; }

  int64_t count_parameters() const {
    int64_t total = 0;
    for (const auto& p : params_) total += p.value().size();
    return total;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad().setZero();
  }

 protected:
  struct Conv {
    Param<S> w, b;
    int stride = 1, pad = 0, dil = 1;
    NodePtr<S> operator()(const NodePtr<S>& x) const {
      return conv2d(x, w.node, b.node, stride, pad, dil);
    }
  };
  struct DoubleConv {
    Conv c1, c2;
    NodePtr<S> operator()(const NodePtr<S>& x) const { return relu(c2(relu(c1(x)))); }
  };

  Conv make_conv(const std::string& name, int oc, int ic, int k, int stride, int pad, int dil,
                 std::mt19937& rng) {
    Conv c;
    c.w = make_param(name + ".weight", he_normal<S>(oc, ic, k, k, ic * k * k, rng));
    c.b = make_param(name + ".bias", Tensor<S>(oc, 1, 1, 1));
    c.stride = stride;
    c.pad = pad;
    c.dil = dil;
    params_.push_back(c.w);
    params_.push_back(c.b);
    return c;
  }

  DoubleConv make_double_conv(const std::string& name, int ic, int oc, std::mt19937& rng) {
    DoubleConv dc;
    dc.c1 = make_conv(name + ".conv1", oc, ic, 3, 1, 1, 1, rng);
    dc.c2 = make_conv(name + ".conv2", oc, oc, 3, 1, 1, 1, rng);
    return dc;
  }

  std::pair<Param<S>, Param<S>> make_dense(const std::string& name, int out, int in,
                                           std::mt19937& rng) {
    Param<S> w = make_param(name + ".weight", he_normal<S>(out, in, 1, 1, in, rng));
    Param<S> b = make_param(name + ".bias", Tensor<S>(out, 1, 1, 1));
    params_.push_back(w);
    params_.push_back(b);
    return {w, b};
  }

  std::mt19937 init_rng() const {
    return std::mt19937(static_cast<uint32_t>(derive_seed(spec_.seed, "model-init", 0, 0)));
  }

  void check_input(const Tensor<S>& x) const {
    if (x.n < 1) throw ValidationError("forward: empty input tensor");
    if (x.c != spec_.in_channels || x.h != spec_.input_side || x.w != spec_.input_side) {
      throw ValidationError(
          "forward: expected input (N, " + std::to_string(spec_.in_channels) + ", " +
          std::to_string(spec_.input_side) + ", " + std::to_string(spec_.input_side) +
          "), got (" + std::to_string(x.n) + ", " + std::to_string(x.c) + ", " +
          std::to_string(x.h) + ", " + std::to_string(x.w) + ")");
    }
    if (!x.data.isFinite().all()) throw ValidationError("forward: input contains non-finite values");
  }

  ModelSpec spec_;
  std::vector<Param<S>> params_;
};

// Encoder-decoder with per-level double 3x3 convolutions, 2x max-pool
// downsampling, nearest-neighbor upsampling, and skip concatenation.
// Channels double per level from base_channels.
template <typename S>
class UNet : public Model<S> {
 public:
  explicit UNet(ModelSpec spec) : Model<S>(std::move(spec)) {
    const auto& sp = this->spec_;
    if (sp.arch != "unet") throw ConfigError("UNet requires arch 'unet'");
    auto rng = this->init_rng();
    int in = sp.in_channels;
    for (int i = 0; i < sp.depth; ++i) {
      const int oc = sp.base_channels << i;
      enc_.push_back(this->make_double_conv("enc" + std::to_string(i), in, oc, rng));
      in = oc;
    }
    bottleneck_ = this->make_double_conv("bottleneck", in, in * 2, rng);
    int cur = in * 2;
    up_.resize(sp.depth);
    dec_.resize(sp.depth);
    for (int i = sp.depth - 1; i >= 0; --i) {
      const std::string name = "dec" + std::to_string(i);
      up_[i] = this->make_conv(name + ".up", cur / 2, cur, 3, 1, 1, 1, rng);
      dec_[i] = this->make_double_conv(name, cur, cur / 2, rng);
      cur /= 2;
    }
    if (sp.task == "segment") {
      head_ = this->make_conv("head", sp.num_classes, sp.base_channels, 1, 1, 0, 1, rng);
    } else {
      std::tie(head_w_, head_b_) = this->make_dense("head", 1, sp.base_channels, rng);
    }
  }

  NodePtr<S> forward(const NodePtr<S>& x) override {
    const auto& sp = this->spec_;
    this->check_input(x->value);
    NodePtr<S> cur = x;
    std::vector<NodePtr<S>> skips;
    for (int i = 0; i < sp.depth; ++i) {
      cur = enc_[static_cast<size_t>(i)](cur);
      skips.push_back(cur);
      cur = maxpool(cur, 2, 2);
    }
    cur = bottleneck_(cur);
    for (int i = sp.depth - 1; i >= 0; --i) {
      cur = upsample_nearest2(cur);
      cur = relu(up_[static_cast<size_t>(i)](cur));
      cur = concat_channels<S>({cur, skips[static_cast<size_t>(i)]});
      cur = dec_[static_cast<size_t>(i)](cur);
    }
    if (sp.task == "segment") return (*head_)(cur);
    return dense(global_avg_pool(cur), head_w_.node, head_b_.node);
  }

 private:
  using typename Model<S>::Conv;
  using typename Model<S>::DoubleConv;
  std::vector<DoubleConv> enc_;
  DoubleConv bottleneck_;
  std::vector<Conv> up_;
  std::vector<DoubleConv> dec_;
  std::optional<Conv> head_;
  Param<S> head_w_, head_b_;
};

// Residual backbone with a strided stem, dilated late stages (output stride
// 8 at depth >= 2), and an atrous spatial pyramid pooling head.
template <typename S>
class DeepLabV3 : public Model<S> {
 public:
  explicit DeepLabV3(ModelSpec spec) : Model<S>(std::move(spec)) {
    const auto& sp = this->spec_;
    if (sp.arch != "deeplabv3") throw ConfigError("DeepLabV3 requires arch 'deeplabv3'");
    auto rng = this->init_rng();
    stem_ = this->make_conv("stem", sp.base_channels * 2, sp.in_channels, 7, 2, 3, 1, rng);
    int cur = sp.base_channels * 2;
    for (int i = 0; i < sp.depth; ++i) {
      const int oc = sp.base_channels * (2 << i);
      const int stride = i == 1 ? 2 : 1;
      const int dil = i >= 2 ? (1 << (i - 1)) : 1;
      const int nblocks = kBlockPlan[std::min(i, 3)];
      Stage stage;
      for (int b = 0; b < nblocks; ++b) {
        const std::string name =
            "stage" + std::to_string(i) + ".block" + std::to_string(b);
        Block blk;
        const int ic = b == 0 ? cur : oc;
        const int s = b == 0 ? stride : 1;
        blk.c1 = this->make_conv(name + ".conv1", oc, ic, 3, s, dil, dil, rng);
        blk.c2 = this->make_conv(name + ".conv2", oc, oc, 3, 1, dil, dil, rng);
        if (s != 1 || ic != oc) {
          blk.proj = this->make_conv(name + ".proj", oc, ic, 1, s, 0, 1, rng);
        }
        stage.blocks.push_back(std::move(blk));
      }
      stages_.push_back(std::move(stage));
      cur = oc;
    }
    const int aspp = sp.base_channels * 8;
    aspp_1x1_ = this->make_conv("aspp.branch1x1", aspp, cur, 1, 1, 0, 1, rng);
    for (size_t ri = 0; ri < sp.atrous_rates.size(); ++ri) {
      const int r = sp.atrous_rates[ri];
      aspp_atrous_.push_back(
          this->make_conv("aspp.rate" + std::to_string(r), aspp, cur, 3, 1, r, r, rng));
    }
    aspp_pool_ = this->make_conv("aspp.pool", aspp, cur, 1, 1, 0, 1, rng);
    const int branches = static_cast<int>(sp.atrous_rates.size()) + 2;
    aspp_fuse_ = this->make_conv("aspp.fuse", aspp, aspp * branches, 1, 1, 0, 1, rng);
    head_ = this->make_conv("head", aspp, aspp, 3, 1, 1, 1, rng);
    if (sp.task == "segment") {
      classifier_ = this->make_conv("classifier", sp.num_classes, aspp, 1, 1, 0, 1, rng);
    } else {
      std::tie(head_w_, head_b_) = this->make_dense("classifier", 1, aspp, rng);
    }
  }

  NodePtr<S> forward(const NodePtr<S>& x) override {
    const auto& sp = this->spec_;
    this->check_input(x->value);
    if (x->value.h < 8 || x->value.w < 8) {
      throw ValidationError("deeplabv3 forward: input must be at least 8x8");
    }
    const int in_h = x->value.h, in_w = x->value.w;
    NodePtr<S> cur = relu(stem_(x));
    cur = maxpool(cur, 3, 2, 1);
    for (const auto& stage : stages_) {
      for (const auto& blk : stage.blocks) {
        NodePtr<S> h = blk.c2(relu(blk.c1(cur)));
        NodePtr<S> shortcut = blk.proj ? (*blk.proj)(cur) : cur;
        cur = relu(add(h, shortcut));
      }
    }
    std::vector<NodePtr<S>> branches;
    branches.push_back(relu(aspp_1x1_(cur)));
    for (const auto& conv : aspp_atrous_) branches.push_back(relu(conv(cur)));
    NodePtr<S> pooled = relu(aspp_pool_(global_avg_pool(cur)));
    branches.push_back(resize_bilinear(pooled, cur->value.h, cur->value.w));
    cur = relu(aspp_fuse_(concat_channels<S>(branches)));
    cur = relu(head_(cur));
    if (sp.task == "segment") {
      return resize_bilinear((*classifier_)(cur), in_h, in_w);
    }
    return dense(global_avg_pool(cur), head_w_.node, head_b_.node);
  }

 private:
  using typename Model<S>::Conv;
  struct Block {
    Conv c1, c2;
    std::optional<Conv> proj;
  };
  struct Stage {
    std::vector<Block> blocks;
  };
  static constexpr int kBlockPlan[4] = {2, 2, 3, 3};

  Conv stem_;
  std::vector<Stage> stages_;
  Conv aspp_1x1_;
  std::vector<Conv> aspp_atrous_;
  Conv aspp_pool_;
  Conv aspp_fuse_;
  Conv head_;
  std::optional<Conv> classifier_;
  Param<S> head_w_, head_b_;
};

template <typename S>
std::unique_ptr<Model<S>> build_model(const ModelSpec& spec) {
  spec.validate();
  if (spec.arch == "unet") return std::make_unique<UNet<S>>(spec);
  return std::make_unique<DeepLabV3<S>>(spec);
}

}  // namespace gbm
