#pragma once

#include "hifi/detect_loss.hpp"
#include "hifi/net/config.hpp"
#include "hifi/nn/nn.hpp"
#include "hifi/tfr.hpp"

namespace hifi::net {

namespace modeldetail {

/// Parameter factory: seeds every leaf from one stream and collects the
/// registration order for checkpoints.
template <typename T>
struct ParamBook {
  Rng rng;
  std::vector<nn::Tensor<T>>* out;
  explicit ParamBook(std::uint64_t seed, std::vector<nn::Tensor<T>>* sink)
      : rng(seed), out(sink) {}

  nn::Tensor<T> conv_weight(const std::string& name, int co, int ci, int k) {
    auto t = nn::kaiming_conv_param<T>(co, ci, k, rng, name);
    out->push_back(t);
    return t;
  }
  nn::Tensor<T> zeros(const std::string& name, std::vector<int> shape) {
    auto t = nn::zero_param<T>(std::move(shape), name);
    out->push_back(t);
    return t;
  }
};

}  // namespace modeldetail

template <typename T>
struct ConvLayer {
  nn::Tensor<T> w, b;
  int stride = 1, pad = 0;

  ConvLayer() = default;
  ConvLayer(modeldetail::ParamBook<T>& book, const std::string& name, int ci, int co, int k,
            int stride_, int pad_)
      : w(book.conv_weight(name + ".w", co, ci, k)),
        b(book.zeros(name + ".b", {co})),
        stride(stride_),
        pad(pad_) {}

  nn::Tensor<T> operator()(const nn::Tensor<T>& x) const {
    return nn::conv2d(x, w, b, stride, pad);
  }
};

/// Backbone stage: optional low-frequency residual (1x1 conv of the pyramid
/// level added to the incoming features), a stride-2 conv to the stage
/// width, then a residual pair of 3x3 convs.
template <typename T>
struct LfeStage {
  ConvLayer<T> inner;  // 1x1, 1 -> C_{l-1}
  ConvLayer<T> outer;  // 3x3 stride 2, C_{l-1} -> C_l
  ConvLayer<T> body1, body2;
  bool use_lfe = false;

  LfeStage() = default;
  LfeStage(modeldetail::ParamBook<T>& book, const std::string& name, int c_in, int c_out,
           bool lfe)
      : use_lfe(lfe) {
    if (lfe) inner = ConvLayer<T>(book, name + ".inner", 1, c_in, 1, 1, 0);
    outer = ConvLayer<T>(book, name + ".outer", c_in, c_out, 3, 2, 1);
    body1 = ConvLayer<T>(book, name + ".body1", c_out, c_out, 3, 1, 1);
    body2 = ConvLayer<T>(book, name + ".body2", c_out, c_out, 3, 1, 1);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& x, const nn::Tensor<T>& pyr_level) const {
    using namespace hifi::nn;
    auto h = x;
    if (use_lfe && pyr_level.defined()) {
      if (pyr_level.dim(1) != x.dim(1) || pyr_level.dim(2) != x.dim(2))
        throw ShapeError("lfe stage: pyramid level size does not match features");
      h = add(h, inner(pyr_level));
    }
    auto y = silu(outer(h));
    auto t = silu(body1(y));
    auto u = silu(body2(t));
    return add(y, u);
  }
};

/// Content-adaptive resampler: cross-attention offsets between the
/// target-resolution guide (queries) and the channel-aligned source (keys)
/// are added to the fixed bilinear grid, then each of g channel groups is
/// grid-sampled with its own offset pair.
template <typename T>
struct CaResampler {
  ConvLayer<T> align;  // 1x1: C_in -> C_guide
  nn::Tensor<T> wv;    // [C_guide, 2g], zero-init so S=0 at start
  int groups = 4;
  double offset_scale = 0.25;
  int window = 0;  // odd side length; 0 = full attention

  CaResampler() = default;
  CaResampler(modeldetail::ParamBook<T>& book, const std::string& name, int c_in, int c_guide,
              int groups_, double offset_scale_, int window_)
      : align(book, name + ".align", c_in, c_guide, 1, 1, 0),
        wv(book.zeros(name + ".wv", {c_guide, 2 * groups_})),
        groups(groups_),
        offset_scale(offset_scale_),
        window(window_) {}

  nn::Tensor<T> forward(const nn::Tensor<T>& x_low, const nn::Tensor<T>& guide) const {
    using namespace hifi::nn;
    int c = x_low.dim(0), h = x_low.dim(1), w = x_low.dim(2);
    int ho = guide.dim(1), wo = guide.dim(2);
    if (c % groups != 0)
      throw ConfigError("ca_resample: channels not divisible by groups");
    auto aligned = align(x_low);
    auto q = chw_to_nc(guide);
    auto k = chw_to_nc(aligned);
    auto v = matmul(k, wv);  // [HW, 2g]
    Tensor<T> s;
    if (window > 0) {
      auto win = make_resample_windows(h, w, ho, wo, window / 2);
      s = local_attention(q, k, v, win);
    } else {
      s = scaled_dot_attention(q, k, v);
    }
    auto s_chw = nc_to_chw(s, ho, wo);  // [2g, Ho, Wo]

    auto grid = bilinear_grid<T>(h, w, ho, wo);
    // offsets are in source pixels; normalized units are 2/size per pixel
    T sx = static_cast<T>(offset_scale * 2.0 / w);
    T sy = static_cast<T>(offset_scale * 2.0 / h);
    int cg = c / groups;
    std::vector<Tensor<T>> outs;
    outs.reserve(static_cast<std::size_t>(groups));
    for (int g = 0; g < groups; ++g) {
      auto dx = mul_scalar(slice_d0(s_chw, 2 * g, 2 * g + 1), sx);
      auto dy = mul_scalar(slice_d0(s_chw, 2 * g + 1, 2 * g + 2), sy);
      auto offs = reshape(chw_to_nc(concat_d0(std::vector<Tensor<T>>{dx, dy})), {ho, wo, 2});
      auto coords = add(grid, offs);
      outs.push_back(grid_sample(slice_d0(x_low, g * cg, (g + 1) * cg), coords));
    }
    return concat_d0(outs);
  }
};

/// FPN top-down + PAN bottom-up neck over three backbone scales.
template <typename T>
struct Neck {
  ConvLayer<T> lat3, lat4, lat5;
  ConvLayer<T> fuse4, fuse3, pfuse4, pfuse5;
  ConvLayer<T> down3, down4;  // strided-conv downsamplers (baseline)
  CaResampler<T> up54, up43, dn34, dn45;
  UpMode up_mode = UpMode::kBilinear;
  DownMode down_mode = DownMode::kStridedConv;

  Neck() = default;
  Neck(modeldetail::ParamBook<T>& book, const ModelConfig& cfg, int c3, int c4, int c5)
      : lat3(book, "neck.lat3", c3, c3, 1, 1, 0),
        lat4(book, "neck.lat4", c4, c4, 1, 1, 0),
        lat5(book, "neck.lat5", c5, c5, 1, 1, 0),
        fuse4(book, "neck.fuse4", c4 + c5, c4, 3, 1, 1),
        fuse3(book, "neck.fuse3", c3 + c4, c3, 3, 1, 1),
        pfuse4(book, "neck.pfuse4", c4 + c3, c4, 3, 1, 1),
        pfuse5(book, "neck.pfuse5", c5 + c4, c5, 3, 1, 1),
        up_mode(cfg.resample_up),
        down_mode(cfg.resample_down) {
    if (down_mode == DownMode::kStridedConv) {
      down3 = ConvLayer<T>(book, "neck.down3", c3, c3, 3, 2, 1);
      down4 = ConvLayer<T>(book, "neck.down4", c4, c4, 3, 2, 1);
    }
    if (up_mode == UpMode::kCa) {
      up54 = CaResampler<T>(book, "neck.up54", c5, c4, cfg.groups, cfg.offset_scale,
                            cfg.attn_window);
      up43 = CaResampler<T>(book, "neck.up43", c4, c3, cfg.groups, cfg.offset_scale,
                            cfg.attn_window);
    }
    if (down_mode == DownMode::kCa) {
      dn34 = CaResampler<T>(book, "neck.dn34", c3, c4, cfg.groups, cfg.offset_scale,
                            cfg.attn_window);
      dn45 = CaResampler<T>(book, "neck.dn45", c4, c5, cfg.groups, cfg.offset_scale,
                            cfg.attn_window);
    }
  }

  std::vector<nn::Tensor<T>> forward(const nn::Tensor<T>& b3, const nn::Tensor<T>& b4,
                                     const nn::Tensor<T>& b5) const {
    using namespace hifi::nn;
    auto t3 = silu(lat3(b3));
    auto t4 = silu(lat4(b4));
    auto t5 = silu(lat5(b5));

    auto up = [&](const nn::Tensor<T>& x, const nn::Tensor<T>& guide,
                  const CaResampler<T>& ca) {
      return up_mode == UpMode::kCa ? ca.forward(x, guide)
                                    : resize(x, 2.0, ResizeMode::kBilinear);
    };
    auto down = [&](const nn::Tensor<T>& x, const nn::Tensor<T>& guide,
                    const CaResampler<T>& ca, const ConvLayer<T>& conv) {
      return down_mode == DownMode::kCa ? ca.forward(x, guide) : silu(conv(x));
    };

    auto u4 = up(t5, t4, up54);
    auto f4 = silu(fuse4(concat_d0(std::vector<nn::Tensor<T>>{t4, u4})));
    auto u3 = up(f4, t3, up43);
    auto f3 = silu(fuse3(concat_d0(std::vector<nn::Tensor<T>>{t3, u3})));

    auto d4 = down(f3, f4, dn34, down3);
    auto n4 = silu(pfuse4(concat_d0(std::vector<nn::Tensor<T>>{f4, d4})));
    auto d5 = down(n4, t5, dn45, down4);
    auto n5 = silu(pfuse5(concat_d0(std::vector<nn::Tensor<T>>{t5, d5})));
    return {f3, n4, n5};
  }
};

/// Prediction heads. Original mode: one coupled conv per scale. Recombination
/// mode: all neck maps are resized to the finest resolution, concatenated,
/// average-pooled back to each scale, then two independent single convs
/// (regression and classification) per scale.
template <typename T>
struct Heads {
  HeadMode mode = HeadMode::kRecombination;
  int num_classes = 14, anchors = 3;
  std::vector<ConvLayer<T>> coupled;
  std::vector<ConvLayer<T>> reg_heads, cls_heads;

  Heads() = default;
  Heads(modeldetail::ParamBook<T>& book, const ModelConfig& cfg, int c3, int c4, int c5)
      : mode(cfg.head_mode), num_classes(cfg.num_classes), anchors(cfg.anchors_per_scale) {
    int k = cfg.head_kernel;
    int pad = k / 2;
    int reg_ch = anchors * 5;
    int cls_ch = anchors * num_classes;
    if (mode == HeadMode::kOriginal) {
      int cs[3] = {c3, c4, c5};
      for (int s = 0; s < 3; ++s)
        coupled.emplace_back(book, "head.coupled" + std::to_string(s), cs[s],
                             reg_ch + cls_ch, k, 1, pad);
    } else {
      int cat = c3 + c4 + c5;
      for (int s = 0; s < 3; ++s) {
        reg_heads.emplace_back(book, "head.reg" + std::to_string(s), cat, reg_ch, k, 1, pad);
        cls_heads.emplace_back(book, "head.cls" + std::to_string(s), cat, cls_ch, k, 1, pad);
      }
    }
  }

  std::vector<det::ScalePred<T>> forward(const std::vector<nn::Tensor<T>>& feats) const {
    using namespace hifi::nn;
    std::vector<det::ScalePred<T>> out;
    int reg_ch = anchors * 5;
    if (mode == HeadMode::kOriginal) {
      for (int s = 0; s < 3; ++s) {
        auto m = coupled[static_cast<std::size_t>(s)](feats[static_cast<std::size_t>(s)]);
        out.push_back({slice_d0(m, 0, reg_ch), slice_d0(m, reg_ch, m.dim(0))});
      }
      return out;
    }
    // recombine at the finest resolution
    auto up4 = resize(feats[1], 2.0, ResizeMode::kBilinear);
    auto up5 = resize(resize(feats[2], 2.0, ResizeMode::kBilinear), 2.0,
                      ResizeMode::kBilinear);
    auto cat = concat_d0(std::vector<nn::Tensor<T>>{feats[0], up4, up5});
    for (int s = 0; s < 3; ++s) {
      auto pooled = s == 0 ? cat : avgpool2d(cat, 1 << s);
      out.push_back({reg_heads[static_cast<std::size_t>(s)](pooled),
                     cls_heads[static_cast<std::size_t>(s)](pooled)});
    }
    return out;
  }
};

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    modeldetail::ParamBook<T> book(cfg.seed, &params_);
    int c_prev = 1;
    for (int l = 1; l <= cfg.levels; ++l) {
      int c_out = cfg.channels[static_cast<std::size_t>(l - 1)];
      stages_.emplace_back(book, "backbone.s" + std::to_string(l), c_prev, c_out,
                           cfg.lfe_mode != LfeMode::kOff);
      c_prev = c_out;
    }
    int L = cfg.levels;
    int c3 = cfg.channels[static_cast<std::size_t>(L - 3)];
    int c4 = cfg.channels[static_cast<std::size_t>(L - 2)];
    int c5 = cfg.channels[static_cast<std::size_t>(L - 1)];
    neck_ = Neck<T>(book, cfg, c3, c4, c5);
    heads_ = Heads<T>(book, cfg, c3, c4, c5);
  }

  /// input: [1, H, W]; pyramid: levels 0..L-1 of the matching decomposition
  /// (empty when lfe is off).
  std::vector<det::ScalePred<T>> forward(const nn::Tensor<T>& input,
                                         const std::vector<nn::Tensor<T>>& pyramid) const {
    if (input.rank() != 3 || input.dim(0) != 1)
      throw ShapeError("model: expected [1,H,W] input");
    if (cfg_.lfe_mode != LfeMode::kOff &&
        static_cast<int>(pyramid.size()) < cfg_.levels)
      throw ShapeError("model: pyramid does not cover all stages");
    std::vector<nn::Tensor<T>> feats;
    auto x = input;
    for (int l = 0; l < cfg_.levels; ++l) {
      nn::Tensor<T> pyr;
      if (cfg_.lfe_mode != LfeMode::kOff) pyr = pyramid[static_cast<std::size_t>(l)];
      x = stages_[static_cast<std::size_t>(l)].forward(x, pyr);
      feats.push_back(x);
    }
    int L = cfg_.levels;
    auto neck_out = neck_.forward(feats[static_cast<std::size_t>(L - 3)],
                                  feats[static_cast<std::size_t>(L - 2)],
                                  feats[static_cast<std::size_t>(L - 1)]);
    return heads_.forward(neck_out);
  }

  std::vector<nn::Tensor<T>>& parameters() { return params_; }
  const std::vector<nn::Tensor<T>>& parameters() const { return params_; }
  const ModelConfig& config() const { return cfg_; }

  /// Loads values into parameters by name; missing or mismatched shapes throw.
  void load_state(const std::map<std::string, nn::Tensor<T>>& state) {
    for (auto& p : params_) {
      auto it = state.find(p.name());
      if (it == state.end()) throw IoError("checkpoint missing tensor " + p.name());
      if (it->second.shape() != p.shape())
        throw IoError("checkpoint shape mismatch for " + p.name());
      p.values() = it->second.values();
    }
  }

 private:
  ModelConfig cfg_;
  std::vector<LfeStage<T>> stages_;
  Neck<T> neck_;
  Heads<T> heads_;
  std::vector<nn::Tensor<T>> params_;
};

/// Net-orientation image tensor from a spectrogram: rows become the
/// frequency axis (y), columns the time axis (x), matching the ground-truth
/// box convention (x = time, y = frequency).
template <typename T>
nn::Tensor<T> image_from_spectrogram(const tfr::Matf& spec) {
  auto img = nn::Tensor<T>::zeros({1, spec.cols, spec.rows});
  for (int t = 0; t < spec.rows; ++t)
    for (int f = 0; f < spec.cols; ++f)
      img.data()[static_cast<std::size_t>(f) * spec.rows + t] = static_cast<T>(spec.at(t, f));
  return img;
}

/// Pyramid levels 0..L-1 in image orientation for the configured lfe mode;
/// empty when lfe is off.
template <typename T>
std::vector<nn::Tensor<T>> pyramid_from_image(const nn::Tensor<T>& img, LfeMode mode,
                                              int levels) {
  std::vector<nn::Tensor<T>> out;
  if (mode == LfeMode::kOff) return out;
  int h = img.dim(1), w = img.dim(2);
  tfr::Matd m(h, w);
  for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = static_cast<double>(img.data()[i]);
  std::vector<tfr::Matd> levels_mat;
  if (mode == LfeMode::kGaussian) {
    auto p = tfr::gaussian_pyramid(m, levels);
    levels_mat.assign(p.levels.begin(), p.levels.begin() + levels);
  } else {
    auto p = tfr::laplacian_pyramid(m, levels);
    levels_mat.assign(p.levels.begin(), p.levels.begin() + levels);
  }
  for (const auto& lvl : levels_mat) {
    auto t = nn::Tensor<T>::zeros({1, lvl.rows, lvl.cols});
    for (std::size_t i = 0; i < lvl.v.size(); ++i)
      t.data()[i] = static_cast<T>(lvl.v[i]);
    out.push_back(t);
  }
  return out;
}

}  // namespace hifi::net
