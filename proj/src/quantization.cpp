// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/quantization.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "eciwb/error.hpp"
#include "eciwb/kernels.hpp"

namespace eciwb {

namespace {

Nf4Codebook build_codebook() {
  const boost::math::normal_distribution<double> standard;
  const double offset = 0.9677083;
  std::vector<double> values;
  // Positive side: 9 grid points from offset down to 0.5, dropping the last.
  for (int i = 0; i < 8; ++i) {
    const double p = offset + (0.5 - offset) * i / 8.0;
    values.push_back(boost::math::quantile(standard, p));
  }
  // Negative side: 8 grid points, dropping the last.
  for (int i = 0; i < 7; ++i) {
    const double p = offset + (0.5 - offset) * i / 7.0;
    values.push_back(-boost::math::quantile(standard, p));
  }
  values.push_back(0.0);
  std::sort(values.begin(), values.end());
  const double top = values.back();
  Nf4Codebook cb{};
  for (std::size_t i = 0; i < 16; ++i) cb[i] = values[i] / top;
  // Both extremes are the same quantile, so this is exact up to rounding.
  cb.front() = -1.0;
  cb.back() = 1.0;
  return cb;
}

std::array<double, 15> build_midpoints(const Nf4Codebook& cb) {
  std::array<double, 15> mid{};
  for (std::size_t i = 0; i < 15; ++i) mid[i] = 0.5 * (cb[i] + cb[i + 1]);
  return mid;
}

}  // namespace

const Nf4Codebook& nf4_codebook() {
  static const Nf4Codebook cb = build_codebook();
  return cb;
}

double nf4_max_gap() {
  const auto& cb = nf4_codebook();
  double gap = 0.0;
  for (std::size_t i = 0; i + 1 < cb.size(); ++i) gap = std::max(gap, cb[i + 1] - cb[i]);
  return gap;
}

std::uint8_t nf4_nearest_code(double v) {
  static const auto mid = build_midpoints(nf4_codebook());
  // Number of midpoints strictly below v: a value sitting on a midpoint keeps
  // the lower code.
  std::uint8_t code = 0;
  for (double m : mid)
    if (v > m) ++code;
  return code;
}

std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes) {
  std::vector<std::uint8_t> packed((codes.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] > 15) throw ValueError("pack_codes: code " + std::to_string(codes[i]) + " does not fit 4 bits");
    packed[i / 2] |= static_cast<std::uint8_t>(i % 2 == 0 ? codes[i] : codes[i] << 4);
  }
  return packed;
}

std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> packed, std::size_t count) {
  if (packed.size() < (count + 1) / 2) throw ValueError("unpack_codes: not enough packed bytes");
  std::vector<std::uint8_t> codes(count);
  for (std::size_t i = 0; i < count; ++i)
    codes[i] = i % 2 == 0 ? (packed[i / 2] & 0x0F) : (packed[i / 2] >> 4);
  return codes;
}

std::vector<QuantizedBlock> nf4_quantize(std::span<const double> weights, std::size_t block_size) {
  if (block_size == 0) throw ValueError("nf4_quantize: block_size must be >= 1");
  for (double w : weights)
    if (!std::isfinite(w)) throw ValueError("nf4_quantize: non-finite weight");
  const auto& k = kernels::active();
  const std::uint8_t zero_code = nf4_nearest_code(0.0);
  std::vector<QuantizedBlock> blocks;
  std::vector<std::uint8_t> codes;
  for (std::size_t start = 0; start < weights.size(); start += block_size) {
    const std::size_t count = std::min(block_size, weights.size() - start);
    QuantizedBlock block;
    block.count = count;
    block.absmax = k.absmax(count, weights.data() + start);
    codes.assign(count, zero_code);
    if (block.absmax > 0.0)
      for (std::size_t i = 0; i < count; ++i) codes[i] = nf4_nearest_code(weights[start + i] / block.absmax);
    block.packed = pack_codes(codes);
    blocks.push_back(std::move(block));
  }
  return blocks;
}

std::vector<double> nf4_dequantize(std::span<const QuantizedBlock> blocks) {
  const auto& k = kernels::active();
  std::size_t total = 0;
  for (const auto& b : blocks) {
    if (b.packed.size() != (b.count + 1) / 2) throw ValueError("nf4_dequantize: packed size does not match count");
    total += b.count;
  }
  std::vector<double> out(total);
  std::size_t offset = 0;
  for (const auto& b : blocks) {
    k.nf4_decode(b.count, b.packed.data(), nf4_codebook().data(), b.absmax, out.data() + offset);
    offset += b.count;
  }
  return out;
}

DoubleQuantized double_quantize(std::span<const double> absmax, std::size_t group_size) {
  if (group_size == 0) throw ValueError("double_quantize: group_size must be >= 1");
  DoubleQuantized dq;
  dq.group_size = group_size;
  double total = 0.0;
  for (double a : absmax) total += a;
  dq.mean = absmax.empty() ? 0.0 : total / static_cast<double>(absmax.size());
  dq.codes.resize(absmax.size());
  for (std::size_t start = 0; start < absmax.size(); start += group_size) {
    const std::size_t count = std::min(group_size, absmax.size() - start);
    double amax = 0.0;
    for (std::size_t i = 0; i < count; ++i) amax = std::max(amax, std::fabs(absmax[start + i] - dq.mean));
    const double scale = amax / 127.0;
    dq.scales.push_back(scale);
    for (std::size_t i = 0; i < count; ++i) {
      const double q = scale > 0.0 ? std::round((absmax[start + i] - dq.mean) / scale) : 0.0;
      dq.codes[start + i] = static_cast<std::int8_t>(std::clamp(q, -127.0, 127.0));
    }
  }
  return dq;
}

std::vector<double> double_dequantize(const DoubleQuantized& dq) {
  std::vector<double> out(dq.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::max(0.0, dq.codes[i] * dq.scales[i / dq.group_size] + dq.mean);
  return out;
}

std::size_t QuantizedTensor::storage_bytes() const {
  std::size_t bytes = 0;
  for (const auto& b : blocks) bytes += b.packed.size();
  if (absmax_dq) {
    bytes += absmax_dq->codes.size() + absmax_dq->scales.size() * sizeof(double) + sizeof(double);
  } else {
    bytes += blocks.size() * sizeof(double);
  }
  return bytes;
}

QuantizedTensor quantize_tensor(const Tensor& t, std::size_t block_size, bool double_quant) {
  QuantizedTensor q;
  q.shape = t.shape();
  q.block_size = block_size;
  q.blocks = nf4_quantize(t.data(), block_size);
  if (double_quant) {
    std::vector<double> absmax;
    for (const auto& b : q.blocks) absmax.push_back(b.absmax);
    q.absmax_dq = double_quantize(absmax);
    const auto restored = double_dequantize(*q.absmax_dq);
    for (std::size_t i = 0; i < q.blocks.size(); ++i) q.blocks[i].absmax = restored[i];
  }
  return q;
}

Tensor dequantize_tensor(const QuantizedTensor& q) {
  auto values = nf4_dequantize(q.blocks);
  if (values.size() != q.numel())
    throw ValueError("dequantize_tensor: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(q.shape));
  return Tensor::from(q.shape, std::move(values));
}

QuantizedModel quantize_model(const Model& model, std::size_t block_size, bool double_quant) {
  QuantizedModel out;
  out.config = model.config;
  out.block_size = block_size;
  for (const auto& p : model.named_parameters()) {
    if (p.tensor.rank() == 2) {
      QuantizedTensor q = quantize_tensor(p.tensor, block_size, double_quant);
      out.memory.float64_bytes += p.tensor.numel() * sizeof(double);
      out.memory.packed_bytes += q.storage_bytes();
      ++out.memory.quantized_tensors;
      out.quantized.emplace(p.name, std::move(q));
    } else {
      out.full_precision.emplace(p.name, p.tensor.clone());
    }
  }
  return out;
}

Model QuantizedModel::materialize() const {
  auto get = [&](const std::string& name) -> Tensor {
    if (auto it = quantized.find(name); it != quantized.end()) return dequantize_tensor(it->second);
    if (auto it = full_precision.find(name); it != full_precision.end()) return it->second;
    throw ValueError("quantized model is missing tensor '" + name + "'");
  };
  Model m;
  m.config = config;
  m.tok_emb = get("tok_emb");
  m.pos_emb = get("pos_emb");
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    m.layers.push_back(DecoderLayer{get(p + "attn_norm"), get(p + "wq"), get(p + "wk"), get(p + "wv"),
                                    get(p + "wo"), get(p + "ffn_norm"), get(p + "w_up"), get(p + "w_down")});
  }
  m.final_norm = get("final_norm");
  m.lm_head = get("lm_head");
  return m;
}

}  // namespace eciwb
