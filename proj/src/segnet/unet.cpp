#include "phaseseg/segnet/unet.hpp"

#include "phaseseg/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

namespace phaseseg::segnet {

void NetworkConfig::validate() const {
  if (in_channels < 1) fail(ErrorKind::validation, "in_channels must be >= 1");
  if (num_classes < 2) fail(ErrorKind::validation, "num_classes must be >= 2");
  if (base_width < 1) fail(ErrorKind::validation, "base_width must be >= 1");
  if (num_stages < 1) fail(ErrorKind::validation, "num_stages must be >= 1");
  if (num_stages > 8) fail(ErrorKind::validation, "num_stages must be <= 8");
  if (num_phases < 0) fail(ErrorKind::validation, "num_phases must be >= 0");
  if (num_classes > 256) fail(ErrorKind::validation, "num_classes must be <= 256");
}

std::uint64_t NetworkConfig::fingerprint() const {
  return fnv1a64(network_config_to_json(*this).dump());
}

nlohmann::json network_config_to_json(const NetworkConfig& cfg) {
  return nlohmann::json{
      {"in_channels", cfg.in_channels},
      {"num_classes", cfg.num_classes},
      {"base_width", cfg.base_width},
      {"num_stages", cfg.num_stages},
      {"pcd_mode", std::string(to_string(cfg.pcd_mode))},
      {"num_phases", cfg.num_phases},
      {"working_resolution", {{"width", cfg.working_resolution.width}, {"height", cfg.working_resolution.height}}},
      {"condition_bottleneck", cfg.condition_bottleneck},
  };
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  try {
    NetworkConfig cfg;
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.base_width = j.at("base_width").get<int>();
    cfg.num_stages = j.at("num_stages").get<int>();
    cfg.pcd_mode = pcd_mode_from_string(j.at("pcd_mode").get<std::string>());
    cfg.num_phases = j.at("num_phases").get<int>();
    cfg.working_resolution.width = j.at("working_resolution").at("width").get<int>();
    cfg.working_resolution.height = j.at("working_resolution").at("height").get<int>();
    cfg.condition_bottleneck = j.value("condition_bottleneck", false);
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("network config: ") + e.what());
  }
}

template <typename T>
ConvBlock<T>::ConvBlock(const std::string& name, int in, int out)
    : a_(name + ".conv1", in, out, 3), b_(name + ".conv2", out, out, 3) {}

template <typename T>
void ConvBlock<T>::init(Rng& rng) {
  a_.init(rng);
  b_.init(rng);
}

template <typename T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x, bool keep_cache) {
  Tensor<T> h = a_.forward(x, keep_cache);
  relu_inplace(h);
  Tensor<T> y = b_.forward(h, keep_cache);
  relu_inplace(y);
  if (keep_cache) {
    out_a_ = std::move(h);
    out_b_ = y;
  }
  return y;
}

template <typename T>
Tensor<T> ConvBlock<T>::backward(const Tensor<T>& dy, bool skip_input_grad) {
  Tensor<T> g = dy;
  relu_backward_inplace(g, out_b_);
  g = b_.backward(g);
  relu_backward_inplace(g, out_a_);
  out_a_ = Tensor<T>();
  out_b_ = Tensor<T>();
  return a_.backward(g, skip_input_grad);
}

template <typename T>
void ConvBlock<T>::collect(std::vector<Parameter<T>*>& out) {
  out.push_back(&a_.weight());
  out.push_back(&a_.bias());
  out.push_back(&b_.weight());
  out.push_back(&b_.bias());
}

template <typename T>
Tensor<T> PcdStage<T>::forward(const Tensor<T>& f, std::span<const PhaseId> phases, bool keep_cache) {
  if (mode_ == PcdMode::none) return f;
  if (static_cast<int>(phases.size()) != f.n) {
    fail(ErrorKind::shape_mismatch, "expected one phase id per sample (" + std::to_string(f.n) + "), got " +
                                        std::to_string(phases.size()));
  }
  const PhaseEmbeddingTable<T>& table = params_->table;
  table.check_level(level_, f.c);
  const std::size_t hw = f.plane();
  Tensor<T> out(f.n, f.c, f.h, f.w);
  Tensor<T> alpha;
  Tensor<T> fp;
  if (mode_ == PcdMode::gated) {
    alpha = Tensor<T>(f.n, 1, f.h, f.w);
    fp = Tensor<T>(1, f.c, f.h, f.w);
  }
  const BlendConv<T>* blend = mode_ == PcdMode::gated ? &params_->blend.at(level_) : nullptr;
  for (int i = 0; i < f.n; ++i) {
    const PhaseId p = phases[i];
    const T* g = table.gamma_row(level_, p).data();
    const T* b = table.beta_row(level_, p).data();
    if (mode_ == PcdMode::basic) {
      kernels::paft_forward(f.sample(i), g, b, f.c, hw, out.sample(i));
      continue;
    }
    kernels::paft_forward(f.sample(i), g, b, f.c, hw, fp.data.data());
    kernels::dfbf_forward(f.sample(i), blend->weight.value.data(), blend->bias.value[0],
                          table.eta_value(level_, p), f.c, hw, alpha.sample(i));
    kernels::cgate_forward(f.sample(i), fp.data.data(), alpha.sample(i), f.c, hw, out.sample(i));
  }
  if (keep_cache) {
    f_ = f;
    alpha_ = std::move(alpha);
    phases_.assign(phases.begin(), phases.end());
  }
  return out;
}

template <typename T>
Tensor<T> PcdStage<T>::backward(const Tensor<T>& dy) {
  if (mode_ == PcdMode::none) return dy;
  if (!f_.same_shape(dy)) fail(ErrorKind::shape_mismatch, "pcd backward without matching forward cache");
  PhaseEmbeddingTable<T>& table = params_->table;
  const int K = f_.c;
  const std::size_t hw = f_.plane();
  Tensor<T> df(f_.n, f_.c, f_.h, f_.w);
  Buffer<T> fp;
  Buffer<T> dfp;
  Buffer<T> dalpha;
  if (mode_ == PcdMode::gated) {
    fp.resize(static_cast<std::size_t>(K) * hw);
    dfp.resize(fp.size());
    dalpha.resize(hw);
  }
  for (int i = 0; i < f_.n; ++i) {
    const int row = table.row(phases_[static_cast<std::size_t>(i)]);
    const std::size_t off = static_cast<std::size_t>(row) * K;
    const T* gamma = table.gamma[level_].value.data() + off;
    const T* beta = table.beta[level_].value.data() + off;
    T* dgamma = table.gamma[level_].grad.data() + off;
    T* dbeta = table.beta[level_].grad.data() + off;
    if (mode_ == PcdMode::basic) {
      kernels::paft_backward(f_.sample(i), gamma, dy.sample(i), K, hw, df.sample(i), dgamma, dbeta);
      continue;
    }
    BlendConv<T>& blend = params_->blend.at(level_);
    const T* a = alpha_.sample(i);
    kernels::paft_forward(f_.sample(i), gamma, beta, K, hw, fp.data());
    std::fill(dfp.begin(), dfp.end(), T{0});
    std::fill(dalpha.begin(), dalpha.end(), T{0});
    kernels::cgate_backward(f_.sample(i), fp.data(), a, dy.sample(i), K, hw, df.sample(i), dfp.data(),
                            dalpha.data());
    kernels::paft_backward(f_.sample(i), gamma, dfp.data(), K, hw, df.sample(i), dgamma, dbeta);
    kernels::dfbf_backward(f_.sample(i), blend.weight.value.data(), a, dalpha.data(), K, hw, df.sample(i),
                           blend.weight.grad.data(), blend.bias.grad.data(),
                           table.eta[level_].grad.data() + row);
  }
  f_ = Tensor<T>();
  alpha_ = Tensor<T>();
  return df;
}

template <typename T>
UNet<T>::UNet(const NetworkConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int S = cfg_.num_stages;
  int in = cfg_.in_channels;
  for (int s = 0; s < S; ++s) {
    enc_.emplace_back("enc." + std::to_string(s), in, cfg_.width_at(s));
    pool_.emplace_back();
    in = cfg_.width_at(s);
  }
  bottleneck_ = ConvBlock<T>("bottleneck", in, cfg_.width_at(S));
  for (int s = 0; s < S; ++s) {
    up_.emplace_back("up." + std::to_string(s), cfg_.width_at(s + 1), cfg_.width_at(s));
    dec_.emplace_back("dec." + std::to_string(s), 2 * cfg_.width_at(s), cfg_.width_at(s));
  }
  std::vector<int> widths;
  for (int s = 0; s < S; ++s) widths.push_back(cfg_.width_at(s));
  if (cfg_.condition_bottleneck) widths.push_back(cfg_.width_at(S));
  pcd_ = PcdParams<T>::identity(cfg_.num_phases, widths);
  for (int l = 0; l < static_cast<int>(widths.size()); ++l) pcd_stage_.emplace_back(cfg_.pcd_mode, l, &pcd_);
  head_ = Conv2d<T>("head", cfg_.width_at(0), cfg_.num_classes, 1);
}

template <typename T>
void UNet<T>::init(Rng& rng) {
  for (auto& e : enc_) e.init(rng);
  bottleneck_.init(rng);
  for (int s = 0; s < cfg_.num_stages; ++s) {
    up_[s].init(rng);
    dec_[s].init(rng);
  }
  head_.init(rng);
  std::vector<int> widths = pcd_.table.widths;
  pcd_ = PcdParams<T>::identity(cfg_.num_phases, widths);
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& x, std::span<const PhaseId> phases, bool keep_cache) {
  if (x.c != cfg_.in_channels) {
    fail(ErrorKind::shape_mismatch, "model expects " + std::to_string(cfg_.in_channels) + " input channels, got " +
                                        std::to_string(x.c));
  }
  if (cfg_.pcd_mode != PcdMode::none && static_cast<int>(phases.size()) != x.n) {
    fail(ErrorKind::shape_mismatch, "expected one phase id per sample");
  }
  const int S = cfg_.num_stages;
  const int m = 1 << S;
  in_h_ = x.h;
  in_w_ = x.w;
  pad_h_ = (x.h + m - 1) / m * m;
  pad_w_ = (x.w + m - 1) / m * m;
  Tensor<T> cur = pad_reflect(x, pad_h_, pad_w_);
  std::vector<Tensor<T>> skips(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    skips[s] = enc_[s].forward(cur, keep_cache);
    cur = pool_[s].forward(skips[s], keep_cache);
  }
  cur = bottleneck_.forward(cur, keep_cache);
  if (cfg_.condition_bottleneck) cur = pcd_stage_[S].forward(cur, phases, keep_cache);
  for (int s = S - 1; s >= 0; --s) {
    Tensor<T> up = up_[s].forward(cur, keep_cache);
    cur = dec_[s].forward(concat_channels(up, skips[s]), keep_cache);
    skips[s] = Tensor<T>();
    cur = pcd_stage_[s].forward(cur, phases, keep_cache);
  }
  return crop(head_.forward(cur, keep_cache), in_h_, in_w_);
}

template <typename T>
void UNet<T>::backward(const Tensor<T>& dscores) {
  if (dscores.c != cfg_.num_classes || dscores.h != in_h_ || dscores.w != in_w_) {
    fail(ErrorKind::shape_mismatch, "score gradient does not match the last forward pass");
  }
  const int S = cfg_.num_stages;
  Tensor<T> g(dscores.n, dscores.c, pad_h_, pad_w_);
  for (int i = 0; i < dscores.n; ++i)
    for (int c = 0; c < dscores.c; ++c)
      for (int y = 0; y < in_h_; ++y)
        std::copy_n(&dscores.at(i, c, y, 0), in_w_, &g.at(i, c, y, 0));
  g = head_.backward(g);
  std::vector<Tensor<T>> skip_grads(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    g = pcd_stage_[s].backward(g);
    g = dec_[s].backward(g);
    Tensor<T> gup;
    split_channels(g, cfg_.width_at(s), gup, skip_grads[s]);
    g = up_[s].backward(gup);
  }
  if (cfg_.condition_bottleneck) g = pcd_stage_[S].backward(g);
  g = bottleneck_.backward(g);
  for (int s = S - 1; s >= 0; --s) {
    g = pool_[s].backward(g);
    const Tensor<T>& sg = skip_grads[s];
    for (std::size_t k = 0; k < g.size(); ++k) g.data[k] += sg.data[k];
    skip_grads[s] = Tensor<T>();
    g = enc_[s].backward(g, s == 0);
  }
}

template <typename T>
std::vector<Parameter<T>*> UNet<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& e : enc_) e.collect(out);
  bottleneck_.collect(out);
  for (int s = cfg_.num_stages - 1; s >= 0; --s) {
    out.push_back(&up_[s].weight());
    out.push_back(&up_[s].bias());
    dec_[s].collect(out);
  }
  out.push_back(&head_.weight());
  out.push_back(&head_.bias());
  if (cfg_.pcd_mode != PcdMode::none) {
    for (int l = 0; l < pcd_.table.levels(); ++l) {
      out.push_back(&pcd_.table.gamma[l]);
      out.push_back(&pcd_.table.beta[l]);
      if (cfg_.pcd_mode == PcdMode::gated) {
        out.push_back(&pcd_.table.eta[l]);
        out.push_back(&pcd_.blend[l].weight);
        out.push_back(&pcd_.blend[l].bias);
      }
    }
  }
  return out;
}

template <typename T>
void UNet<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
std::size_t UNet<T>::num_parameters() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->size();
  return n;
}

template <typename T>
void image_to_tensor(const Image& img, Tensor<T>& out, int sample) {
  if (img.channels() != out.c || img.height() != out.h || img.width() != out.w) {
    fail(ErrorKind::shape_mismatch, "image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                                        " does not match the model input " + std::to_string(out.w) + "x" +
                                        std::to_string(out.h));
  }
  for (int c = 0; c < out.c; ++c)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x) out.at(sample, c, y, x) = static_cast<T>(img.at(y, x, c)) / T{255};
}

LabelMap argmax_labels(const Tensor<float>& scores, int sample) {
  LabelMap out(scores.w, scores.h);
  for (int y = 0; y < scores.h; ++y)
    for (int x = 0; x < scores.w; ++x) {
      int best = 0;
      for (int c = 1; c < scores.c; ++c)
        if (scores.at(sample, c, y, x) > scores.at(sample, best, y, x)) best = c;
      out(y, x) = static_cast<std::uint8_t>(best);
    }
  return out;
}

template class ConvBlock<float>;
template class ConvBlock<double>;
template class PcdStage<float>;
template class PcdStage<double>;
template class UNet<float>;
template class UNet<double>;
template void image_to_tensor<float>(const Image&, Tensor<float>&, int);
template void image_to_tensor<double>(const Image&, Tensor<double>&, int);

}  // namespace phaseseg::segnet
