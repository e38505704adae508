#pragma once

#include <fstream>

#include <json.hpp>

#include "vcomp/layers.hpp"

namespace vcomp {

// Input encodings for the representation ablation. The two-channel signed
// form (magnitude + known mask) is the default.
enum class InputEncoding { Sdf2 = 0, Df1 = 1, Ternary1 = 2, Binary1 = 3 };

inline const char* encoding_name(InputEncoding e) {
  switch (e) {
    case InputEncoding::Sdf2: return "sdf";
    case InputEncoding::Df1: return "df";
    case InputEncoding::Ternary1: return "ternary";
    case InputEncoding::Binary1: return "binary";
  }
  return "?";
}

inline InputEncoding encoding_from_name(const std::string& s) {
  if (s == "sdf") return InputEncoding::Sdf2;
  if (s == "df") return InputEncoding::Df1;
  if (s == "ternary") return InputEncoding::Ternary1;
  if (s == "binary") return InputEncoding::Binary1;
  throw ConfigError("unknown input encoding: " + s);
}

inline int encoding_channels(InputEncoding e) { return e == InputEncoding::Sdf2 ? 2 : 1; }

template <typename T>
Tensor4<T> encode_epn_input(const TwoChannelGrid& input, InputEncoding enc, float trunc = 2.5f,
                            float iso_band = 1.0f) {
  const auto& dims = input.abs.meta.dims;
  if (enc == InputEncoding::Sdf2) {
    Tensor4<T> t(2, dims);
    size_t n = input.abs.values.size();
    for (size_t i = 0; i < n; ++i) {
      t.values[i] = T(std::min(input.abs.values[i], trunc));
      t.values[n + i] = T(input.known.values[i]);
    }
    return t;
  }
  if (enc == InputEncoding::Df1) {
    Tensor4<T> t(1, dims);
    for (size_t i = 0; i < input.abs.values.size(); ++i)
      t.values[i] = T(std::min(input.abs.values[i], trunc));
    return t;
  }
  VoxelGrid tsdf = recombine_channels(input);
  VoxelGrid rep = to_representation(
      tsdf, enc == InputEncoding::Ternary1 ? GridKind::Ternary : GridKind::Occupancy, iso_band);
  Tensor4<T> t(1, dims);
  for (size_t i = 0; i < rep.values.size(); ++i) t.values[i] = T(rep.values[i]);
  return t;
}

struct EpnConfig {
  int grid = 32;
  int in_channels = 2;
  std::array<int, 4> enc_channels{8, 16, 32, 64};
  int latent = 512;
  int class_width = 4;
  bool use_skips = true;
  InputEncoding encoding = InputEncoding::Sdf2;
  float truncation = 2.5f;

  int conv_kernel = 4;

  int bottleneck_dim() const {
    int side = grid / 16;
    return enc_channels[3] * side * side * side;
  }
};

template <typename T>
struct EpnTape {
  Tensor4<T> input;
  std::array<Tensor4<T>, 4> conv_out;   // pre-normalization encoder outputs
  std::array<BnCache<T>, 4> ebn_cache;
  std::array<Tensor4<T>, 4> enc_act;    // post BN+ReLU
  std::vector<T> fc1_act, latent_act, cat, fc3_act, fc4_act;
  std::array<Tensor4<T>, 4> dec_in;
  std::array<BnCache<T>, 4> dbn_cache;  // stages 1..3
  std::array<Tensor4<T>, 4> dec_act;    // stage outputs post activation; [0] is the prediction
};

// 3D encoder-predictor network: 4 stride-2 conv stages down to 2^3, two FC
// layers to the latent vector, class-vector concatenation, two FC layers
// back, and 4 up-convolution stages with skip concatenation per resolution.
// Final activation clamps at zero so predictions stay in the unsigned-DF
// range. Normalization applies to all volumetric stages except the last.
template <typename T>
class Epn {
 public:
  EpnConfig cfg;
  std::array<Conv3d<T>, 4> enc;
  std::array<BatchNorm<T>, 4> ebn;
  Linear<T> fc1, fc2, fc3, fc4;
  std::array<UpConv3d<T>, 4> dec;   // index = stage (3 coarsest .. 0 finest)
  std::array<BatchNorm<T>, 4> dbn;  // used for stages 3..1

  Epn() = default;

  explicit Epn(const EpnConfig& c, uint64_t seed = 1) : cfg(c) {
    const auto& ch = cfg.enc_channels;
    int k = cfg.conv_kernel;
    for (int j = 0; j < 4; ++j) {
      int in = j == 0 ? cfg.in_channels : ch[j - 1];
      enc[j] = Conv3d<T>(in, ch[j], k, 2, 1);
      ebn[j] = BatchNorm<T>(ch[j]);
    }
    int flat = cfg.bottleneck_dim();
    fc1 = Linear<T>(flat, cfg.latent);
    fc2 = Linear<T>(cfg.latent, cfg.latent);
    fc3 = Linear<T>(cfg.latent + cfg.class_width, cfg.latent);
    fc4 = Linear<T>(cfg.latent, flat);
    int mult = cfg.use_skips ? 2 : 1;
    dec[3] = UpConv3d<T>(ch[3] * mult, ch[2], k, 2, 1);
    dec[2] = UpConv3d<T>(ch[2] * mult, ch[1], k, 2, 1);
    dec[1] = UpConv3d<T>(ch[1] * mult, ch[0], k, 2, 1);
    dec[0] = UpConv3d<T>(ch[0] * mult, 1, k, 2, 1);
    for (int j = 1; j < 4; ++j) dbn[j] = BatchNorm<T>(dec[j].out_c);

    Rng rng(seed);
    for (auto& l : enc) l.init_he(rng);
    fc1.init_he(rng);
    fc2.init_he(rng);
    fc3.init_he(rng);
    fc4.init_he(rng);
    for (auto& l : dec) l.init_he(rng);
  }

  std::vector<ParamView<T>> params() {
    std::vector<ParamView<T>> v;
    for (auto& l : enc) l.collect(v);
    for (auto& l : ebn) l.collect(v);
    fc1.collect(v);
    fc2.collect(v);
    fc3.collect(v);
    fc4.collect(v);
    for (auto& l : dec) l.collect(v);
    for (int j = 1; j < 4; ++j) dbn[j].collect(v);
    return v;
  }

  // Parameters plus normalization running statistics; the checkpoint payload.
  std::vector<ParamView<T>> state() {
    std::vector<ParamView<T>> v = params();
    for (auto& l : ebn) l.collect_state(v);
    for (int j = 1; j < 4; ++j) dbn[j].collect_state(v);
    return v;
  }

  size_t param_count() {
    size_t n = 0;
    for (const auto& p : params()) n += p.size;
    return n;
  }

  void zero_grads() {
    for (auto& p : params()) std::fill(p.grad, p.grad + p.size, T(0));
  }

  // Training-mode forward keeps every intermediate needed by backward.
  Tensor4<T> forward(const Tensor4<T>& input, const std::vector<T>& class_probs, bool training,
                     EpnTape<T>* tape) const {
    check_input(input, class_probs);
    EpnTape<T> local;
    EpnTape<T>& t = tape ? *tape : local;
    t.input = input;

    Tensor4<T> cur = input;
    for (int j = 0; j < 4; ++j) {
      Tensor4<T> conv = conv3d_forward(cur, enc[j]);
      Tensor4<T> bn =
          training ? bn_forward_train(conv, ebn[j], t.ebn_cache[j]) : bn_forward_eval(conv, ebn[j]);
      t.conv_out[j] = std::move(conv);
      t.enc_act[j] = relu_forward(bn);
      cur = t.enc_act[j];
    }

    std::vector<T> flat(cur.values.begin(), cur.values.end());
    t.fc1_act = linear_forward(flat, fc1);
    relu_forward_vec(t.fc1_act);
    t.latent_act = linear_forward(t.fc1_act, fc2);
    relu_forward_vec(t.latent_act);

    t.cat = t.latent_act;
    t.cat.insert(t.cat.end(), class_probs.begin(), class_probs.end());
    t.fc3_act = linear_forward(t.cat, fc3);
    relu_forward_vec(t.fc3_act);
    t.fc4_act = linear_forward(t.fc3_act, fc4);
    relu_forward_vec(t.fc4_act);

    int side = cfg.grid / 16;
    Tensor4<T> dcur(cfg.enc_channels[3], {side, side, side});
    std::copy(t.fc4_act.begin(), t.fc4_act.end(), dcur.values.begin());

    for (int j = 3; j >= 0; --j) {
      t.dec_in[j] = cfg.use_skips ? concat_channels(dcur, t.enc_act[j]) : std::move(dcur);
      Tensor4<T> pre = upconv3d_forward(t.dec_in[j], dec[j]);
      if (j > 0) {
        Tensor4<T> bn = training ? bn_forward_train(pre, dbn[j], t.dbn_cache[j])
                                 : bn_forward_eval(pre, dbn[j]);
        t.dec_act[j] = relu_forward(bn);
      } else {
        t.dec_act[j] = relu_forward(pre);  // output clamp at zero
      }
      dcur = t.dec_act[j];
    }
    return t.dec_act[0];
  }

  // Exact reverse pass from d(loss)/d(prediction). Gradients accumulate into
  // the layer grad buffers; class inputs receive no gradient.
  void backward(const EpnTape<T>& t, const Tensor4<T>& dpred) {
    std::array<Tensor4<T>, 4> d_enc_act;
    for (int j = 0; j < 4; ++j)
      d_enc_act[j] = Tensor4<T>(t.enc_act[j].channels, t.enc_act[j].dims);

    Tensor4<T> da = dpred;  // gradient w.r.t. dec_act[j], starting at j = 0
    Tensor4<T> d_bottleneck;
    for (int j = 0; j <= 3; ++j) {
      Tensor4<T> dpre = relu_backward(t.dec_act[j], da);
      if (j > 0) dpre = bn_backward(t.dbn_cache[j], dbn[j], dpre);
      Tensor4<T> d_in;
      upconv3d_backward(t.dec_in[j], dec[j], dpre, &d_in);
      if (cfg.use_skips) {
        int main_c = d_in.channels - t.enc_act[j].channels;
        Tensor4<T> d_main(main_c, d_in.dims);
        std::copy(d_in.values.begin(), d_in.values.begin() + std::ptrdiff_t(d_main.size()),
                  d_main.values.begin());
        for (size_t q = 0; q < d_enc_act[j].size(); ++q)
          d_enc_act[j].values[q] += d_in.values[d_main.size() + q];
        da = std::move(d_main);
      } else {
        da = std::move(d_in);
      }
      if (j == 3) d_bottleneck = std::move(da);
    }

    // Latent path.
    std::vector<T> d_fc4(d_bottleneck.values.begin(), d_bottleneck.values.end());
    mask_relu(d_fc4, t.fc4_act);
    std::vector<T> d_fc3 = linear_backward(t.fc3_act, fc4, d_fc4);
    mask_relu(d_fc3, t.fc3_act);
    std::vector<T> d_cat = linear_backward(t.cat, fc3, d_fc3);
    std::vector<T> d_latent(d_cat.begin(), d_cat.begin() + cfg.latent);  // class part dropped
    mask_relu(d_latent, t.latent_act);
    std::vector<T> d_fc1 = linear_backward(t.fc1_act, fc2, d_latent);
    mask_relu(d_fc1, t.fc1_act);
    std::vector<T> flat(t.enc_act[3].values.begin(), t.enc_act[3].values.end());
    std::vector<T> d_flat = linear_backward(flat, fc1, d_fc1);
    for (size_t q = 0; q < d_enc_act[3].size(); ++q) d_enc_act[3].values[q] += d_flat[q];

    // Encoder, finest gradient last.
    for (int j = 3; j >= 0; --j) {
      Tensor4<T> dpre = relu_backward(t.enc_act[j], d_enc_act[j]);
      dpre = bn_backward(t.ebn_cache[j], ebn[j], dpre);
      Tensor4<T> dx;
      const Tensor4<T>& x = j == 0 ? t.input : t.enc_act[j - 1];
      conv3d_backward(x, enc[j], dpre, j == 0 ? nullptr : &dx);
      if (j > 0)
        for (size_t q = 0; q < dx.size(); ++q) d_enc_act[j - 1].values[q] += dx.values[q];
    }
  }

  // Folds this step's normalization statistics into the running averages.
  void update_running_stats(const EpnTape<T>& t) {
    for (int j = 0; j < 4; ++j) bn_update_running(ebn[j], t.ebn_cache[j]);
    for (int j = 1; j < 4; ++j) bn_update_running(dbn[j], t.dbn_cache[j]);
  }

 private:
  static void mask_relu(std::vector<T>& grad, const std::vector<T>& act) {
    for (size_t i = 0; i < grad.size(); ++i)
      if (!(act[i] > T(0))) grad[i] = T(0);
  }

  void check_input(const Tensor4<T>& input, const std::vector<T>& class_probs) const {
    if (input.channels != cfg.in_channels ||
        input.dims != std::array<int, 3>{cfg.grid, cfg.grid, cfg.grid})
      throw std::invalid_argument("epn: input resolution/channel mismatch");
    if (int(class_probs.size()) != cfg.class_width)
      throw std::invalid_argument("epn: class vector width mismatch");
    T sum = T(0);
    bool uniform_zero = true;
    for (T v : class_probs) {
      sum += v;
      if (v != T(0)) uniform_zero = false;
    }
    if (!uniform_zero && std::abs(double(sum) - 1.0) > 1e-4)
      throw std::invalid_argument("epn: class vector must sum to 1");
  }
};

// Mean absolute difference over unknown voxels; known voxels contribute
// nothing. Fields are already truncated by construction. Returns the loss and
// d(loss)/d(pred), with the L1 subgradient at zero taken as zero.
template <typename T>
T masked_l1_loss(const Tensor4<T>& pred, const Tensor4<T>& target, const Tensor4<T>& known,
                 Tensor4<T>& dpred) {
  if (!pred.same_shape(target) || !pred.same_shape(known))
    throw std::invalid_argument("masked_l1_loss: shape mismatch");
  dpred = Tensor4<T>(pred.channels, pred.dims);
  size_t count = 0;
  for (size_t i = 0; i < known.values.size(); ++i)
    if (known.values[i] == T(0)) ++count;
  if (count == 0) return T(0);
  T loss = T(0);
  T inv = T(1) / T(count);
  for (size_t i = 0; i < pred.values.size(); ++i) {
    if (known.values[i] != T(0)) continue;
    T diff = pred.values[i] - target.values[i];
    loss += std::abs(diff);
    if (diff != T(0)) dpred.values[i] = (diff > T(0) ? inv : -inv);
  }
  return loss * inv;
}

// Inference wrapper over voxel grids.
template <typename T>
VoxelGrid epn_predict(const Epn<T>& model, const TwoChannelGrid& input,
                      const std::vector<T>& class_probs) {
  Tensor4<T> in = encode_epn_input<T>(input, model.cfg.encoding, model.cfg.truncation);
  Tensor4<T> out = model.forward(in, class_probs, false, nullptr);
  return tensor_to_grid(out, input.abs.meta, GridKind::UnsignedDF);
}

// --- EPN1 checkpoint container ------------------------------------------------
// Magic "EPN1", u32 version, u64 json length, config json, u64 total f32
// count, parameters in collection order.

template <typename T>
void save_epn1(const std::string& path, const nlohmann::json& meta,
               std::vector<ParamView<T>> views) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("save_epn1: cannot open " + path);
  os.write("EPN1", 4);
  uint32_t version = 1;
  os.write(reinterpret_cast<const char*>(&version), 4);
  std::string js = meta.dump();
  uint64_t n = js.size();
  os.write(reinterpret_cast<const char*>(&n), 8);
  os.write(js.data(), std::streamsize(js.size()));
  uint64_t total = 0;
  for (const auto& v : views) total += v.size;
  os.write(reinterpret_cast<const char*>(&total), 8);
  for (const auto& v : views) {
    for (size_t i = 0; i < v.size; ++i) {
      float f = float(v.param[i]);
      os.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
  if (!os) throw DataError("save_epn1: write failed for " + path);
}

template <typename T>
nlohmann::json load_epn1(const std::string& path, std::vector<ParamView<T>> views) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_epn1: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "EPN1", 4) != 0) throw DataError("load_epn1: bad magic " + path);
  uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), 4);
  uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), 8);
  std::string js(n, '\0');
  is.read(js.data(), std::streamsize(n));
  nlohmann::json meta = nlohmann::json::parse(js);
  uint64_t total = 0;
  is.read(reinterpret_cast<char*>(&total), 8);
  uint64_t expect = 0;
  for (const auto& v : views) expect += v.size;
  if (total != expect) throw DataError("load_epn1: parameter count mismatch in " + path);
  for (const auto& v : views) {
    for (size_t i = 0; i < v.size; ++i) {
      float f;
      is.read(reinterpret_cast<char*>(&f), 4);
      v.param[i] = T(f);
    }
  }
  if (!is) throw DataError("load_epn1: truncated file " + path);
  return meta;
}

inline nlohmann::json epn_config_json(const EpnConfig& c) {
  return nlohmann::json{{"type", "epn"},
                        {"grid", c.grid},
                        {"in_channels", c.in_channels},
                        {"enc_channels", c.enc_channels},
                        {"latent", c.latent},
                        {"class_width", c.class_width},
                        {"use_skips", c.use_skips},
                        {"encoding", encoding_name(c.encoding)},
                        {"truncation", c.truncation},
                        {"conv_kernel", c.conv_kernel}};
}

inline EpnConfig epn_config_from_json(const nlohmann::json& j) {
  EpnConfig c;
  c.grid = j.at("grid").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  auto ch = j.at("enc_channels").get<std::vector<int>>();
  for (int i = 0; i < 4; ++i) c.enc_channels[i] = ch.at(i);
  c.latent = j.at("latent").get<int>();
  c.class_width = j.at("class_width").get<int>();
  c.use_skips = j.at("use_skips").get<bool>();
  c.encoding = encoding_from_name(j.at("encoding").get<std::string>());
  c.truncation = j.at("truncation").get<float>();
  c.conv_kernel = j.value("conv_kernel", 4);
  return c;
}

template <typename T>
void save_epn(const Epn<T>& model, const std::string& path) {
  auto& m = const_cast<Epn<T>&>(model);
  nlohmann::json meta = epn_config_json(model.cfg);
  meta["params"] = m.param_count();
  save_epn1(path, meta, m.state());
}

template <typename T>
Epn<T> load_epn(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_epn: cannot open " + path);
  is.seekg(8);
  uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), 8);
  std::string js(n, '\0');
  is.read(js.data(), std::streamsize(n));
  nlohmann::json meta = nlohmann::json::parse(js);
  if (meta.at("type") != "epn") throw DataError("load_epn: not an epn checkpoint: " + path);
  Epn<T> model(epn_config_from_json(meta), 0);
  load_epn1(path, model.state());
  return model;
}

}  // namespace vcomp
