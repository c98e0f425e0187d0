#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sgmc/binio.hpp"
#include "sgmc/corpus.hpp"
#include "sgmc/ops.hpp"
#include "sgmc/params.hpp"
#include "sgmc/rng.hpp"
#include "sgmc/tape.hpp"

namespace sgmc {

enum class Pooling { kMax, kAvg, kMin };

inline Pooling pooling_from_name(const std::string& s) {
  if (s == "max") return Pooling::kMax;
  if (s == "avg") return Pooling::kAvg;
  if (s == "min") return Pooling::kMin;
  throw ConfigError("unknown pooling kind: " + s);
}

inline ops::Reduce pooling_reduce(Pooling p) {
  switch (p) {
    case Pooling::kMax: return ops::Reduce::kMax;
    case Pooling::kAvg: return ops::Reduce::kAvg;
    case Pooling::kMin: return ops::Reduce::kMin;
  }
  throw ConfigError("bad pooling kind");
}

// Residual block: first conv kernel runs along the time axis, second along
// the channel (electrode) axis.
struct BlockSpec {
  std::size_t width;
  std::size_t kernel_len;
  std::size_t time_stride;
};

struct EncoderConfig {
  std::string preset = "tiny";
  std::size_t stem_width = 8;
  std::size_t stem_kernel_len = 3;
  std::size_t stem_stride = 1;
  bool stem_pool = false;
  std::vector<BlockSpec> blocks = {{16, 3, 1}, {32, 3, 2}};

  std::size_t out_dim() const {
    if (blocks.empty()) throw ConfigError("encoder config: needs at least one block");
    return blocks.back().width;
  }

  static EncoderConfig paper() {
    EncoderConfig c;
    c.preset = "paper";
    c.stem_width = 64;
    c.stem_kernel_len = 9;
    c.stem_stride = 2;
    c.stem_pool = true;
    c.blocks = {{64, 15, 1},  {64, 15, 1},  {128, 11, 2}, {128, 11, 1},
                {256, 7, 2},  {256, 7, 1},  {512, 3, 2},  {512, 3, 1}};
    return c;
  }

  static EncoderConfig tiny() { return EncoderConfig{}; }

  static EncoderConfig from_preset(const std::string& name) {
    if (name == "paper") return paper();
    if (name == "tiny") return tiny();
    throw ConfigError("unknown encoder preset: " + name);
  }

  std::string digest() const {
    std::ostringstream os;
    os << "stem:" << stem_width << "," << stem_kernel_len << "," << stem_stride << ","
       << stem_pool << ";blocks:";
    for (const auto& b : blocks)
      os << b.width << "," << b.kernel_len << "," << b.time_stride << ";";
    return os.str();
  }
};

struct ProjectorConfig {
  std::vector<std::size_t> hidden = {1024, 2048, 4096};
  Pooling pooling = Pooling::kMax;
  double dropout_rate = 0.5;

  std::size_t out_dim() const {
    if (hidden.size() != 3) throw ConfigError("projector config: expects three hidden widths");
    return hidden.back();
  }

  std::string digest() const {
    std::ostringstream os;
    os << "hidden:";
    for (auto h : hidden) os << h << ",";
    os << ";pool:" << static_cast<int>(pooling) << ";drop:" << dropout_rate;
    return os.str();
  }
};

struct ClassifierConfig {
  std::vector<std::size_t> hidden = {512, 256, 128};
  int n_classes = 2;
  double dropout_rate = 0.5;

  std::string digest() const {
    std::ostringstream os;
    os << "hidden:";
    for (auto h : hidden) os << h << ",";
    os << ";classes:" << n_classes << ";drop:" << dropout_rate;
    return os.str();
  }
};

namespace detail {

template <class T>
void add_conv(ParamStore<T>& store, const std::string& name, std::size_t out_c,
              std::size_t in_c, std::size_t kh, std::size_t kw, Rng& rng) {
  double fan_in = static_cast<double>(in_c * kh * kw);
  double bound = std::sqrt(6.0 / fan_in);
  store.add(name + ".w",
            random_uniform<T>({out_c, in_c, kh, kw}, rng, T(-bound), T(bound)));
  store.add(name + ".b", Tensor<T>({out_c}));
}

template <class T>
void add_linear(ParamStore<T>& store, const std::string& name, std::size_t out_d,
                std::size_t in_d, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(in_d));
  store.add(name + ".w", random_uniform<T>({out_d, in_d}, rng, T(-bound), T(bound)));
  store.add(name + ".b", Tensor<T>({out_d}));
}

template <class T>
void add_bn(ParamStore<T>& store, const std::string& name, std::size_t width) {
  store.add(name + ".g", Tensor<T>({width}, T(1)));
  store.add(name + ".bt", Tensor<T>({width}));
  store.add(name + ".rm", Tensor<T>({width}), /*trainable=*/false);
  store.add(name + ".rv", Tensor<T>({width}, T(1)), /*trainable=*/false);
}

template <class T>
Var bn_forward(Tape<T>& tape, ParamStore<T>& store, const BoundParams<T>& bp,
               const std::string& name, Var x, bool train) {
  return ops::batchnorm(tape, x, bp[name + ".g"], bp[name + ".bt"],
                        &store[name + ".rm"], &store[name + ".rv"], train);
}

}  // namespace detail

template <class T>
struct EncoderNet {
  EncoderConfig cfg;
  ParamStore<T> params;
};

template <class T>
struct ProjectorNet {
  ProjectorConfig cfg;
  ParamStore<T> params;
};

template <class T>
struct ClassifierNet {
  ClassifierConfig cfg;
  ParamStore<T> params;
};

template <class T>
EncoderNet<T> build_encoder(const EncoderConfig& cfg, Rng& rng) {
  if (cfg.blocks.empty()) throw ConfigError("encoder: needs at least one block");
  for (const auto& b : cfg.blocks)
    if (b.width == 0 || b.kernel_len == 0 || b.time_stride == 0)
      throw ConfigError("encoder: block extents must be positive");
  EncoderNet<T> net;
  net.cfg = cfg;
  Rng init = rng.substream("encoder_init");
  detail::add_conv(net.params, "stem", cfg.stem_width, 1, 1, cfg.stem_kernel_len, init);
  detail::add_bn(net.params, "stem.bn", cfg.stem_width);
  std::size_t in_w = cfg.stem_width;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const BlockSpec& b = cfg.blocks[i];
    std::string p = "b" + std::to_string(i);
    detail::add_conv(net.params, p + ".conv1", b.width, in_w, 1, b.kernel_len, init);
    detail::add_bn(net.params, p + ".bn1", b.width);
    detail::add_conv(net.params, p + ".conv2", b.width, b.width, b.kernel_len, 1, init);
    detail::add_bn(net.params, p + ".bn2", b.width);
    if (in_w != b.width || b.time_stride != 1) {
      detail::add_conv(net.params, p + ".proj", b.width, in_w, 1, 1, init);
      detail::add_bn(net.params, p + ".pbn", b.width);
    }
    in_w = b.width;
  }
  return net;
}

// x is [N, 1, C, M]; returns [N, D] representations.
template <class T>
Var encoder_forward(Tape<T>& tape, EncoderNet<T>& net, const BoundParams<T>& bp, Var x,
                    bool train) {
  const EncoderConfig& cfg = net.cfg;
  ops::Conv2dAttrs stem_at;
  stem_at.stride_w = cfg.stem_stride;
  stem_at.pad_w = cfg.stem_kernel_len / 2;
  Var h = ops::conv2d(tape, x, bp["stem.w"], bp["stem.b"], stem_at);
  h = detail::bn_forward(tape, net.params, bp, "stem.bn", h, train);
  h = ops::relu(tape, h);
  if (cfg.stem_pool) {
    ops::Pool2dAttrs pool_at;
    pool_at.kw = 3;
    pool_at.stride_w = 2;
    h = ops::maxpool2d(tape, h, pool_at);
  }
  std::size_t in_w = cfg.stem_width;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const BlockSpec& b = cfg.blocks[i];
    std::string p = "b" + std::to_string(i);
    ops::Conv2dAttrs at1;
    at1.stride_w = b.time_stride;
    at1.pad_w = b.kernel_len / 2;
    Var y = ops::conv2d(tape, h, bp[p + ".conv1.w"], bp[p + ".conv1.b"], at1);
    y = detail::bn_forward(tape, net.params, bp, p + ".bn1", y, train);
    y = ops::relu(tape, y);
    ops::Conv2dAttrs at2;
    at2.pad_h = b.kernel_len / 2;
    y = ops::conv2d(tape, y, bp[p + ".conv2.w"], bp[p + ".conv2.b"], at2);
    y = detail::bn_forward(tape, net.params, bp, p + ".bn2", y, train);
    Var shortcut = h;
    if (in_w != b.width || b.time_stride != 1) {
      ops::Conv2dAttrs pat;
      pat.stride_w = b.time_stride;
      shortcut = ops::conv2d(tape, h, bp[p + ".proj.w"], bp[p + ".proj.b"], pat);
      shortcut = detail::bn_forward(tape, net.params, bp, p + ".pbn", shortcut, train);
    }
    h = ops::relu(tape, ops::add(tape, y, shortcut));
    in_w = b.width;
  }
  return ops::spatial_mean(tape, h);
}

template <class T>
ProjectorNet<T> build_projector(const ProjectorConfig& cfg, std::size_t in_dim, Rng& rng) {
  if (cfg.hidden.size() != 3) throw ConfigError("projector: expects three hidden widths");
  ProjectorNet<T> net;
  net.cfg = cfg;
  Rng init = rng.substream("projector_init");
  detail::add_linear(net.params, "fc1", cfg.hidden[0], in_dim, init);
  detail::add_bn(net.params, "bn1", cfg.hidden[0]);
  detail::add_linear(net.params, "fc2", cfg.hidden[1], cfg.hidden[0], init);
  detail::add_bn(net.params, "bn2", cfg.hidden[1]);
  detail::add_linear(net.params, "fc3", cfg.hidden[2], cfg.hidden[1], init);
  return net;
}

// Per-member MLP l : [N, D] -> [N, H].
template <class T>
Var projector_base_forward(Tape<T>& tape, ProjectorNet<T>& net, const BoundParams<T>& bp,
                           Var h, bool train, Rng& dropout_rng) {
  Var y = ops::linear(tape, h, bp["fc1.w"], bp["fc1.b"]);
  y = detail::bn_forward(tape, net.params, bp, "bn1", y, train);
  y = ops::relu(tape, y);
  y = ops::linear(tape, y, bp["fc2.w"], bp["fc2.b"]);
  y = detail::bn_forward(tape, net.params, bp, "bn2", y, train);
  y = ops::relu(tape, y);
  y = ops::dropout(tape, y, static_cast<T>(net.cfg.dropout_rate), train, dropout_rng);
  return ops::linear(tape, y, bp["fc3.w"], bp["fc3.b"]);
}

// Symmetric pooling over consecutive member rows: [G*group_size, H] -> [G, H].
template <class T>
Var pool_groups(Tape<T>& tape, Var upgraded, std::size_t group_size, Pooling pooling) {
  const Tensor<T>& v = tape.value(upgraded);
  if (group_size == 0 || v.dim(0) % group_size != 0)
    throw ContractError("pool_groups: row count not divisible by group size");
  std::size_t n_groups = v.dim(0) / group_size;
  std::vector<Var> pooled;
  pooled.reserve(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g) {
    Var slice = ops::slice_rows(tape, upgraded, g * group_size, group_size);
    pooled.push_back(ops::reduce_rows(tape, slice, pooling_reduce(pooling)));
  }
  return ops::stack_rows(tape, pooled);
}

// Group projector g for one group: reps [Q, D] -> z [H].
template <class T>
Var project_group(Tape<T>& tape, ProjectorNet<T>& net, const BoundParams<T>& bp, Var reps,
                  bool train, Rng& dropout_rng) {
  const Tensor<T>& v = tape.value(reps);
  if (v.ndim() != 2 || v.dim(0) == 0) throw ContractError("project_group: empty group");
  Var up = projector_base_forward(tape, net, bp, reps, train, dropout_rng);
  return ops::reduce_rows(tape, up, pooling_reduce(net.cfg.pooling));
}

template <class T>
ClassifierNet<T> build_classifier(const ClassifierConfig& cfg, std::size_t in_dim, Rng& rng) {
  if (cfg.hidden.size() != 3) throw ConfigError("classifier: expects three hidden widths");
  if (cfg.n_classes < 2) throw ConfigError("classifier: n_classes must be >= 2");
  ClassifierNet<T> net;
  net.cfg = cfg;
  Rng init = rng.substream("classifier_init");
  detail::add_linear(net.params, "fc1", cfg.hidden[0], in_dim, init);
  detail::add_bn(net.params, "bn1", cfg.hidden[0]);
  detail::add_linear(net.params, "fc2", cfg.hidden[1], cfg.hidden[0], init);
  detail::add_bn(net.params, "bn2", cfg.hidden[1]);
  detail::add_linear(net.params, "fc3", cfg.hidden[2], cfg.hidden[1], init);
  detail::add_bn(net.params, "bn3", cfg.hidden[2]);
  detail::add_linear(net.params, "out", static_cast<std::size_t>(cfg.n_classes),
                     cfg.hidden[2], init);
  return net;
}

// h [N, D] -> logits [N, n_classes].
template <class T>
Var classifier_forward(Tape<T>& tape, ClassifierNet<T>& net, const BoundParams<T>& bp, Var h,
                       bool train, Rng& dropout_rng) {
  const Tensor<T>& v = tape.value(h);
  if (v.ndim() != 2) throw ShapeError("classifier: expected [N,D] input");
  Var y = ops::linear(tape, h, bp["fc1.w"], bp["fc1.b"]);
  y = detail::bn_forward(tape, net.params, bp, "bn1", y, train);
  y = ops::relu(tape, y);
  y = ops::dropout(tape, y, static_cast<T>(net.cfg.dropout_rate), train, dropout_rng);
  y = ops::linear(tape, y, bp["fc2.w"], bp["fc2.b"]);
  y = detail::bn_forward(tape, net.params, bp, "bn2", y, train);
  y = ops::relu(tape, y);
  y = ops::dropout(tape, y, static_cast<T>(net.cfg.dropout_rate), train, dropout_rng);
  y = ops::linear(tape, y, bp["fc3.w"], bp["fc3.b"]);
  y = detail::bn_forward(tape, net.params, bp, "bn3", y, train);
  y = ops::relu(tape, y);
  return ops::linear(tape, y, bp["out.w"], bp["out.b"]);
}

// Packs samples into the network input layout [N, 1, C, M].
template <class T>
Tensor<T> batch_to_tensor(const std::vector<EegSample>& samples) {
  if (samples.empty()) throw ContractError("batch_to_tensor: empty batch");
  std::size_t C = samples[0].channels(), M = samples[0].time_len();
  Tensor<T> out({samples.size(), 1, C, M});
  for (std::size_t n = 0; n < samples.size(); ++n) {
    check_same_shape(samples[n].values, samples[0].values, "batch_to_tensor");
    for (std::size_t i = 0; i < C * M; ++i)
      out[n * C * M + i] = static_cast<T>(samples[n].values[i]);
  }
  return out;
}

// ---- checkpoint container ----

inline std::uint64_t digest_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

template <class T>
struct CheckpointSection {
  std::string name;
  std::string digest;
  ParamStore<T>* store;
};

template <class T>
void save_checkpoint(const std::string& path,
                     const std::vector<CheckpointSection<T>>& sections) {
  binio::Writer w(path);
  w.write_bytes("SGMCCKPT");
  w.write_u32(1);
  w.write_u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& sec : sections) {
    w.write_u32(static_cast<std::uint32_t>(sec.name.size()));
    w.write_bytes(sec.name);
    w.write_u64(digest_hash(sec.digest));
    w.write_u32(static_cast<std::uint32_t>(sec.store->size()));
    for (const auto& e : sec.store->entries()) {
      w.write_u32(static_cast<std::uint32_t>(e.name.size()));
      w.write_bytes(e.name);
      w.write_u32(static_cast<std::uint32_t>(e.value.ndim()));
      for (std::size_t d = 0; d < e.value.ndim(); ++d)
        w.write_u32(static_cast<std::uint32_t>(e.value.dim(d)));
      for (std::size_t i = 0; i < e.value.numel(); ++i)
        w.write_f32(static_cast<float>(e.value[i]));
    }
  }
  w.close();
}

// Loads the requested sections into their stores. Every requested section
// must exist with a matching config digest; entry names and shapes must match
// the freshly built stores. Unrequested sections in the file are skipped.
template <class T>
void load_checkpoint(const std::string& path,
                     const std::vector<CheckpointSection<T>>& sections) {
  binio::Reader r(path);
  r.expect_magic("SGMCCKPT");
  std::uint32_t version = r.read_u32();
  if (version != 1)
    throw FormatError("unsupported checkpoint version " + std::to_string(version),
                      r.offset() - 4);
  std::uint32_t n_sections = r.read_u32();
  std::vector<bool> found(sections.size(), false);
  for (std::uint32_t s = 0; s < n_sections; ++s) {
    std::string name = r.read_bytes(r.read_u32());
    std::uint64_t digest = r.read_u64();
    std::uint32_t n_entries = r.read_u32();
    const CheckpointSection<T>* target = nullptr;
    for (std::size_t i = 0; i < sections.size(); ++i)
      if (sections[i].name == name) {
        target = &sections[i];
        found[i] = true;
      }
    if (target && digest_hash(target->digest) != digest)
      throw FormatError("checkpoint section \"" + name + "\" has a different config digest",
                        r.offset());
    for (std::uint32_t e = 0; e < n_entries; ++e) {
      std::string ename = r.read_bytes(r.read_u32());
      std::uint32_t ndim = r.read_u32();
      Shape shape(ndim);
      for (auto& d : shape) d = r.read_u32();
      std::size_t numel = shape_numel(shape);
      if (!target) {
        for (std::size_t i = 0; i < numel; ++i) r.read_f32();
        continue;
      }
      if (!target->store->contains(ename))
        throw FormatError("checkpoint entry \"" + name + "." + ename +
                              "\" not present in target store",
                          r.offset());
      Tensor<T>& dst = (*target->store)[ename];
      if (dst.shape() != shape)
        throw FormatError("checkpoint entry \"" + name + "." + ename + "\" has shape " +
                              shape_str(shape) + ", expected " + shape_str(dst.shape()),
                          r.offset());
      for (std::size_t i = 0; i < numel; ++i) dst[i] = static_cast<T>(r.read_f32());
    }
  }
  for (std::size_t i = 0; i < sections.size(); ++i)
    if (!found[i])
      throw FormatError("checkpoint is missing section \"" + sections[i].name + "\"", 0);
}

}  // namespace sgmc
