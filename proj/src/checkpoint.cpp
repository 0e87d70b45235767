// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "eciwb/config_json.hpp"
#include "eciwb/error.hpp"

namespace eciwb {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'E', 'C', 'I', 'F'};
constexpr std::uint8_t kLayoutF64 = 0;
constexpr std::uint8_t kLayoutNf4 = 1;

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bytes_.push_back(static_cast<std::uint8_t>(static_cast<std::make_unsigned_t<T>>(value) >> (8 * i)));
  }
  void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::make_unsigned_t<T>>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  void get_bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    get_bytes(s.data(), n);
    return s;
  }
  // Guards size fields against absurd values before allocating.
  std::size_t get_count(std::size_t element_bytes) {
    const auto n = get<std::uint64_t>();
    if (element_bytes && n > remaining() / element_bytes)
      throw FormatError(FormatError::Kind::kTruncated, "checkpoint truncated: record claims more data than present");
    return static_cast<std::size_t>(n);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (remaining() < n) throw FormatError(FormatError::Kind::kTruncated, "checkpoint truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void put_shape(Writer& w, const Shape& shape) {
  w.put(static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) w.put(static_cast<std::uint64_t>(d));
}

Shape get_shape(Reader& r) {
  const auto rank = r.get<std::uint32_t>();
  if (rank > 16) throw FormatError(FormatError::Kind::kCorrupt, "checkpoint corrupt: tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    d = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (d == 0) throw FormatError(FormatError::Kind::kCorrupt, "checkpoint corrupt: zero-sized dimension");
  }
  return shape;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.tensor;
  return nullptr;
}

const QuantizedTensor* Checkpoint::find_quantized(const std::string& name) const {
  for (const auto& [n, q] : quantized)
    if (n == name) return &q;
  return nullptr;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put(kCheckpointVersion);
  const std::string meta = ckpt.metadata.dump();
  w.put(static_cast<std::uint64_t>(meta.size()));
  w.put_bytes(meta.data(), meta.size());
  w.put(static_cast<std::uint32_t>(ckpt.tensors.size() + ckpt.quantized.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    w.put_string(name);
    w.put(kLayoutF64);
    put_shape(w, tensor.shape());
    for (double v : tensor.data()) w.put_f64(v);
  }
  for (const auto& [name, q] : ckpt.quantized) {
    w.put_string(name);
    w.put(kLayoutNf4);
    put_shape(w, q.shape);
    w.put(static_cast<std::uint32_t>(q.block_size));
    w.put(static_cast<std::uint8_t>(q.absmax_dq ? 1 : 0));
    w.put(static_cast<std::uint64_t>(q.blocks.size()));
    for (const auto& b : q.blocks) {
      w.put_f64(b.absmax);
      w.put(static_cast<std::uint64_t>(b.count));
      w.put_bytes(b.packed.data(), b.packed.size());
    }
    if (q.absmax_dq) {
      const auto& dq = *q.absmax_dq;
      w.put_f64(dq.mean);
      w.put(static_cast<std::uint64_t>(dq.group_size));
      w.put(static_cast<std::uint64_t>(dq.codes.size()));
      w.put_bytes(dq.codes.data(), dq.codes.size());
      w.put(static_cast<std::uint64_t>(dq.scales.size()));
      for (double s : dq.scales) w.put_f64(s);
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(FormatError::Kind::kBadMagic, "bad magic: not an ECIF checkpoint");
  Reader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError(FormatError::Kind::kVersionMismatch, "checkpoint version " + std::to_string(version) +
                                                               " is not supported (expected " +
                                                               std::to_string(kCheckpointVersion) + ")");
  Checkpoint ckpt;
  const std::size_t meta_len = r.get_count(1);
  std::string meta(meta_len, '\0');
  r.get_bytes(meta.data(), meta_len);
  try {
    ckpt.metadata = json::parse(meta);
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kCorrupt, std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    const auto layout = r.get<std::uint8_t>();
    Shape shape = get_shape(r);
    const std::size_t numel = shape_numel(shape);
    if (layout == kLayoutF64) {
      if (numel > r.remaining() / 8) throw FormatError(FormatError::Kind::kTruncated, "checkpoint truncated in '" + name + "'");
      std::vector<double> values(numel);
      for (double& v : values) v = r.get_f64();
      ckpt.tensors.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
    } else if (layout == kLayoutNf4) {
      QuantizedTensor q;
      q.shape = std::move(shape);
      q.block_size = r.get<std::uint32_t>();
      const bool dq = r.get<std::uint8_t>() != 0;
      const std::size_t nblocks = r.get_count(16);
      std::size_t total = 0;
      for (std::size_t b = 0; b < nblocks; ++b) {
        QuantizedBlock block;
        block.absmax = r.get_f64();
        block.count = r.get_count(0);
        if ((block.count + 1) / 2 > r.remaining())
          throw FormatError(FormatError::Kind::kTruncated, "checkpoint truncated in '" + name + "'");
        block.packed.resize((block.count + 1) / 2);
        r.get_bytes(block.packed.data(), block.packed.size());
        total += block.count;
        q.blocks.push_back(std::move(block));
      }
      if (total != numel)
        throw FormatError(FormatError::Kind::kCorrupt, "checkpoint corrupt: '" + name + "' block counts do not match shape");
      if (dq) {
        DoubleQuantized d;
        d.mean = r.get_f64();
        d.group_size = static_cast<std::size_t>(r.get<std::uint64_t>());
        d.codes.resize(r.get_count(1));
        r.get_bytes(d.codes.data(), d.codes.size());
        d.scales.resize(r.get_count(8));
        for (double& s : d.scales) s = r.get_f64();
        q.absmax_dq = std::move(d);
      }
      ckpt.quantized.emplace_back(std::move(name), std::move(q));
    } else {
      throw FormatError(FormatError::Kind::kCorrupt, "checkpoint corrupt: unknown layout tag " + std::to_string(layout));
    }
  }
  if (!r.at_end()) throw FormatError(FormatError::Kind::kCorrupt, "checkpoint corrupt: trailing bytes");
  return ckpt;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::kIo, "failed writing '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Checkpoint make_checkpoint(const LoraModel& model, const EciHead* eci, const TrainState& state,
                           const TrainConfig& config, const json& extra) {
  Checkpoint ckpt;
  json& meta = ckpt.metadata;
  meta["kind"] = "model";
  meta["model"] = model.base.config;
  meta["lora"] = model.config;
  meta["lora_adapters"] = !model.adapters.empty();
  meta["training"] = config;
  meta["lambda"] = config.lambda;
  meta["step"] = state.step;
  meta["adam_step"] = state.adam.step;
  meta["quantized"] = model.quantized != nullptr;
  if (model.quantized) meta["block_size"] = model.quantized->block_size;
  if (eci != nullptr) {
    meta["eci"] = eci->config;
    meta["class_names"] = eci->config.class_names;
  }
  meta["extra"] = extra;

  if (model.quantized) {
    for (const auto& [name, q] : model.quantized->quantized) ckpt.quantized.emplace_back("model." + name, q);
    for (const auto& [name, t] : model.quantized->full_precision) ckpt.tensors.push_back({"model." + name, t});
  } else {
    for (const auto& p : model.base.named_parameters()) ckpt.tensors.push_back({"model." + p.name, p.tensor});
  }
  for (const auto& p : model.adapter_parameters()) ckpt.tensors.push_back(p);
  if (eci != nullptr) {
    ckpt.tensors.push_back({"eci.pool", Tensor::from({2}, {static_cast<double>(eci->config.max_kernel),
                                                           static_cast<double>(eci->config.avg_kernel)})});
    for (const auto& p : eci->named_parameters()) ckpt.tensors.push_back(p);
  }
  for (const auto& [name, m] : state.adam.m)
    ckpt.tensors.push_back({"adam.m." + name, Tensor::from({m.size()}, m)});
  for (const auto& [name, v] : state.adam.v)
    ckpt.tensors.push_back({"adam.v." + name, Tensor::from({v.size()}, v)});
  return ckpt;
}

namespace {

Tensor require(const Checkpoint& ckpt, const std::string& name, const Shape& shape) {
  const Tensor* t = ckpt.find(name);
  if (t == nullptr) throw FormatError(FormatError::Kind::kCorrupt, "checkpoint is missing tensor '" + name + "'");
  if (t->shape() != shape)
    throw FormatError(FormatError::Kind::kCorrupt, "checkpoint tensor '" + name + "' has shape " + shape_str(t->shape()) +
                                                       ", expected " + shape_str(shape));
  return *t;
}

}  // namespace

TrainingBundle bundle_from_checkpoint(const Checkpoint& ckpt) {
  const json& meta = ckpt.metadata;
  if (meta.value("kind", "") != "model")
    throw FormatError(FormatError::Kind::kCorrupt, "checkpoint does not hold a model (kind '" +
                                                       meta.value("kind", std::string("?")) + "')");
  TrainingBundle bundle;
  try {
    const ModelConfig mc = meta.at("model").get<ModelConfig>();
    mc.validate();
    bundle.train_config = meta.at("training").get<TrainConfig>();
    const LoraConfig lc = meta.at("lora").get<LoraConfig>();

    // Base weights, dequantized view when stored as NF4.
    Model reference = init_model(mc, 0);
    const bool quantized = meta.value("quantized", false);
    std::shared_ptr<QuantizedModel> qm;
    if (quantized) {
      qm = std::make_shared<QuantizedModel>();
      qm->config = mc;
      qm->block_size = meta.value("block_size", std::size_t{64});
    }
    Model base;
    base.config = mc;
    std::vector<NamedTensor> loaded;
    for (const auto& p : reference.named_parameters()) {
      const std::string full = "model." + p.name;
      if (quantized) {
        if (const QuantizedTensor* q = ckpt.find_quantized(full)) {
          qm->quantized.emplace(p.name, *q);
          qm->memory.float64_bytes += p.tensor.numel() * sizeof(double);
          qm->memory.packed_bytes += q->storage_bytes();
          ++qm->memory.quantized_tensors;
          loaded.push_back({p.name, dequantize_tensor(*q)});
          continue;
        }
      }
      Tensor t = require(ckpt, full, p.tensor.shape());
      if (quantized) qm->full_precision.emplace(p.name, t);
      loaded.push_back({p.name, t});
    }
    std::size_t idx = 0;
    auto next = [&] { return loaded.at(idx++).tensor; };
    base.tok_emb = next();
    base.pos_emb = next();
    for (std::size_t i = 0; i < mc.n_layers; ++i) {
      DecoderLayer l;
      l.attn_norm = next();
      l.wq = next();
      l.wk = next();
      l.wv = next();
      l.wo = next();
      l.ffn_norm = next();
      l.w_up = next();
      l.w_down = next();
      base.layers.push_back(std::move(l));
    }
    base.final_norm = next();
    base.lm_head = next();
    base.set_requires_grad(false);

    bundle.model.base = std::move(base);
    bundle.model.config = lc;
    bundle.model.quantized = qm;
    if (meta.value("lora_adapters", false)) {
      for (std::size_t layer = 0; layer < mc.n_layers; ++layer) {
        for (const auto& target : lc.targets) {
          LoraAdapter ad;
          ad.key = AdapterKey{layer, parse_projection(target)};
          ad.rank = lc.rank;
          ad.alpha = lc.alpha;
          ad.a = require(ckpt, ad.name_prefix() + ".A", {lc.rank, mc.d_model});
          ad.b = require(ckpt, ad.name_prefix() + ".B", {mc.d_model, lc.rank});
          ad.a.set_requires_grad(true);
          ad.b.set_requires_grad(true);
          bundle.model.adapters.emplace(ad.key, std::move(ad));
        }
      }
    }

    if (meta.contains("eci")) {
      EciHead head;
      head.config = meta.at("eci").get<EciConfig>();
      head.config.validate();
      const EciParamCount count = eci_param_count(head.config);
      for (std::size_t i = 0; i < count.layers.size(); ++i) {
        const auto& layer = count.layers[i];
        Tensor w = require(ckpt, "eci.mlp." + std::to_string(i) + ".w", {layer.out, layer.in});
        Tensor b = require(ckpt, "eci.mlp." + std::to_string(i) + ".b", {layer.out});
        w.set_requires_grad(true);
        b.set_requires_grad(true);
        head.weights.push_back(w);
        head.biases.push_back(b);
      }
      bundle.eci = std::move(head);
    }

    bundle.state.step = meta.value("step", std::size_t{0});
    bundle.state.adam.step = meta.value("adam_step", std::int64_t{0});
    for (const auto& t : ckpt.tensors) {
      if (t.name.rfind("adam.m.", 0) == 0)
        bundle.state.adam.m[t.name.substr(7)].assign(t.tensor.data().begin(), t.tensor.data().end());
      else if (t.name.rfind("adam.v.", 0) == 0)
        bundle.state.adam.v[t.name.substr(7)].assign(t.tensor.data().begin(), t.tensor.data().end());
    }
    bundle.extra = meta.value("extra", json::object());
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kCorrupt, std::string("checkpoint metadata invalid: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(FormatError::Kind::kCorrupt, std::string("checkpoint metadata invalid: ") + e.what());
  }
  return bundle;
}

void save_checkpoint(const std::string& path, const LoraModel& model, const EciHead* eci, const TrainState& state,
                     const TrainConfig& config, const json& extra) {
  write_checkpoint(path, make_checkpoint(model, eci, state, config, extra));
}

TrainingBundle load_checkpoint(const std::string& path) { return bundle_from_checkpoint(read_checkpoint(path)); }

}  // namespace eciwb
