// Registration predictors and the combination algebra.
//
// A model maps an image pair to a TransformMap. Atomic models are a small
// convolutional UNet (displacement head zero-initialized so the assembled
// model starts as the identity map) and a per-pair free displacement field.
// Down evaluates its child on 2x average-pooled inputs; TwoStep warps the
// source by the first map and lets the second model predict the residual.
#pragma once

#include <nlohmann/json.hpp>

#include "gradicon/geometry.hpp"

namespace gradicon {

class RegistrationModel {
 public:
  virtual ~RegistrationModel() = default;
  virtual TransformMap predict(const Image& ia, const Image& ib) = 0;
  // Parameter leaves, stable order; combinators return the union of children.
  virtual std::vector<Var> params() const = 0;
  virtual nlohmann::json describe() const = 0;
};

using ModelPtr = std::shared_ptr<RegistrationModel>;

class IdentityModel final : public RegistrationModel {
 public:
  TransformMap predict(const Image&, const Image&) override {
    return TransformMap::identity();
  }
  std::vector<Var> params() const override { return {}; }
  nlohmann::json describe() const override { return {{"kind", "identity"}}; }
};

// Owns one displacement field in normalized coordinates; ignores its inputs.
class DirectFieldModel final : public RegistrationModel {
 public:
  DirectFieldModel(int height, int width)
      : field_(leaf(Tensor({2, height, width}))) {}
  explicit DirectFieldModel(Tensor displacement) : field_(leaf(std::move(displacement))) {
    if (field_->value.shape.size() != 3 || field_->value.shape[0] != 2)
      throw std::invalid_argument("DirectFieldModel: expects (2,H,W)");
  }
  TransformMap predict(const Image&, const Image&) override {
    return TransformMap::field(field_);
  }
  std::vector<Var> params() const override { return {field_}; }
  nlohmann::json describe() const override {
    return {{"kind", "direct_field"},
            {"h", field_->value.shape[1]},
            {"w", field_->value.shape[2]}};
  }
  const Var& field() const { return field_; }

 private:
  Var field_;
};

struct UNetSpec {
  int levels = 3;
  int base_channels = 16;
  double leaky_slope = 0.2;
};

class UNetModel final : public RegistrationModel {
 public:
  UNetModel(const UNetSpec& spec, uint64_t seed) : spec_(spec), seed_(seed) {
    std::mt19937_64 rng(seed);
    auto conv_param = [&](int out_c, int in_c, int kh, int kw, bool zero) {
      const double std = zero ? 0.0 : std::sqrt(2.0 / (in_c * kh * kw));
      kernels_.push_back(leaf(zero ? Tensor({out_c, in_c, kh, kw})
                                   : random_normal({out_c, in_c, kh, kw}, rng, 0.0, std)));
      biases_.push_back(leaf(Tensor({out_c})));
    };
    int in_c = 2;
    for (int l = 0; l < spec.levels; ++l) {
      const int out_c = spec.base_channels << l;
      conv_param(out_c, in_c, 3, 3, false);  // encoder conv at level l
      in_c = out_c;
    }
    conv_param(in_c, in_c, 3, 3, false);  // bottleneck (below the last encoder)
    for (int l = spec.levels - 1; l >= 0; --l) {
      const int skip_c = spec.base_channels << l;
      const int cat_c = in_c + skip_c;
      conv_param(skip_c, cat_c, 3, 3, false);  // decoder conv at level l
      in_c = skip_c;
    }
    conv_param(2, in_c, 1, 1, true);  // displacement head, zero-initialized
  }

  TransformMap predict(const Image& ia, const Image& ib) override {
    if (!same_shape(ia.grid->value, ib.grid->value))
      throw std::invalid_argument("UNetModel: image shape mismatch");
    last_input_h_ = ia.height();
    last_input_w_ = ia.width();
    size_t p = 0;
    auto conv = [&](const Var& x) {
      Var y = conv2d(x, kernels_[p], biases_[p], 1, kernels_[p]->value.shape[2] / 2);
      ++p;
      return y;
    };
    Var x = concat_channels(ia.grid, ib.grid);
    std::vector<Var> skips;
    for (int l = 0; l < spec_.levels; ++l) {
      x = leaky_relu(conv(x), spec_.leaky_slope);
      skips.push_back(x);
      x = avg_pool2(x);
    }
    x = leaky_relu(conv(x), spec_.leaky_slope);
    for (int l = spec_.levels - 1; l >= 0; --l) {
      x = concat_channels(upsample2_nearest(x), skips[l]);
      x = leaky_relu(conv(x), spec_.leaky_slope);
    }
    Var disp = conv(x);  // linear head
    return TransformMap::field(disp);
  }

  std::vector<Var> params() const override {
    std::vector<Var> out;
    for (size_t i = 0; i < kernels_.size(); ++i) {
      out.push_back(kernels_[i]);
      out.push_back(biases_[i]);
    }
    return out;
  }

  nlohmann::json describe() const override {
    return {{"kind", "unet"},
            {"levels", spec_.levels},
            {"base_channels", spec_.base_channels},
            {"seed", seed_}};
  }

  // Spatial shape seen by the most recent predict(); used by tests that
  // assert at which resolution each atomic network runs.
  int last_input_height() const { return last_input_h_; }
  int last_input_width() const { return last_input_w_; }

 private:
  UNetSpec spec_;
  uint64_t seed_;
  std::vector<Var> kernels_, biases_;
  int last_input_h_ = 0, last_input_w_ = 0;
};

class DownModel final : public RegistrationModel {
 public:
  explicit DownModel(ModelPtr inner) : inner_(std::move(inner)) {}
  TransformMap predict(const Image& ia, const Image& ib) override {
    // Coordinates are resolution-free, so the half-resolution map acts on
    // the full-resolution domain unchanged.
    return inner_->predict(Image{avg_pool2(ia.grid)}, Image{avg_pool2(ib.grid)});
  }
  std::vector<Var> params() const override { return inner_->params(); }
  nlohmann::json describe() const override {
    return {{"kind", "down"}, {"inner", inner_->describe()}};
  }
  const ModelPtr& inner() const { return inner_; }

 private:
  ModelPtr inner_;
};

class TwoStepModel final : public RegistrationModel {
 public:
  TwoStepModel(ModelPtr first, ModelPtr second)
      : first_(std::move(first)), second_(std::move(second)) {}
  TransformMap predict(const Image& ia, const Image& ib) override {
    TransformMap coarse = first_->predict(ia, ib);
    Image warped = resample_image(ia, coarse);
    TransformMap residual = second_->predict(warped, ib);
    return compose(coarse, residual);
  }
  std::vector<Var> params() const override {
    std::vector<Var> out = first_->params();
    auto s = second_->params();
    out.insert(out.end(), s.begin(), s.end());
    return out;
  }
  nlohmann::json describe() const override {
    return {{"kind", "twostep"},
            {"first", first_->describe()},
            {"second", second_->describe()}};
  }
  const ModelPtr& first() const { return first_; }
  const ModelPtr& second() const { return second_; }

 private:
  ModelPtr first_, second_;
};

struct StageModels {
  ModelPtr stage;                        // the assembled combinator tree
  std::vector<std::shared_ptr<UNetModel>> atoms;  // Psi_1.. in order
};

// Stage1 = TS{ Down{ TS{ Down{Psi1}, Psi2 } }, Psi3 }; image extents must be
// divisible by 4 (two pooling levels).
inline StageModels build_stage1(const UNetSpec& spec, uint64_t seed) {
  auto psi1 = std::make_shared<UNetModel>(spec, seed * 4 + 1);
  auto psi2 = std::make_shared<UNetModel>(spec, seed * 4 + 2);
  auto psi3 = std::make_shared<UNetModel>(spec, seed * 4 + 3);
  auto inner = std::make_shared<TwoStepModel>(std::make_shared<DownModel>(psi1), psi2);
  auto stage = std::make_shared<TwoStepModel>(std::make_shared<DownModel>(inner), psi3);
  return {stage, {psi1, psi2, psi3}};
}

// Stage2 = TS{ Stage1, Psi4 }; Stage1's parameters stay live so training the
// result optimizes both jointly.
inline StageModels build_stage2(const StageModels& stage1, const UNetSpec& spec,
                                uint64_t seed) {
  auto psi4 = std::make_shared<UNetModel>(spec, seed * 4 + 4);
  StageModels out;
  out.stage = std::make_shared<TwoStepModel>(stage1.stage, psi4);
  out.atoms = stage1.atoms;
  out.atoms.push_back(psi4);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON header (kind tree + seed), '\n', flat float64 blob.
// ---------------------------------------------------------------------------

inline void save_checkpoint(const std::string& path, const RegistrationModel& model) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  const std::string header = model.describe().dump();
  f << header << '\n';
  for (const Var& p : model.params())
    f.write(reinterpret_cast<const char*>(p->value.data.data()),
            static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
}

// Loads the blob into an existing model whose structure matches the header.
inline void load_checkpoint(const std::string& path, RegistrationModel& model) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string header;
  std::getline(f, header);
  if (nlohmann::json::parse(header) != model.describe())
    throw std::runtime_error("load_checkpoint: structure mismatch in " + path);
  for (const Var& p : model.params()) {
    f.read(reinterpret_cast<char*>(p->value.data.data()),
           static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
    if (!f) throw std::runtime_error("load_checkpoint: short file " + path);
  }
}

inline long param_count(const RegistrationModel& model) {
  long n = 0;
  for (const Var& p : model.params()) n += p->value.numel();
  return n;
}

}  // namespace gradicon
