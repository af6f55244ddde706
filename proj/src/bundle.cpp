#include "lowdim/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "lowdim/arithmetic.hpp"
#include "lowdim/bitstream.hpp"

namespace lowdim {

std::size_t EncodingGrids::index_bits(std::size_t grid_size) {
  if (grid_size < 2) return 0;
  std::size_t bits = 0;
  while ((1ull << bits) < grid_size) ++bits;
  return bits;
}

namespace {

template <typename T>
std::size_t find_index(const std::vector<T>& grid, T value, const char* what) {
  const auto it = std::find(grid.begin(), grid.end(), value);
  if (it == grid.end())
    throw std::invalid_argument(std::string(what) + " value not in its grid");
  return static_cast<std::size_t>(it - grid.begin());
}

// next representable finite half strictly above h
std::uint16_t next_half_above(std::uint16_t h) {
  if (h & 0x8000u) return h == 0x8000u ? 0x0001u : static_cast<std::uint16_t>(h - 1);
  return static_cast<std::uint16_t>(h + 1);
}

// Codebooks travel as exactly `r` entries where r is a grid value.  k-means
// may deliver fewer centers (duplicate snaps, few distinct inputs); pad with
// unused strictly-increasing half values so the payload matches the charged
// size.  Returns the smallest grid value that fits.
std::size_t pad_codebook_to_grid(Codebook& cb, const std::vector<std::size_t>& grid,
                                 const char* what) {
  std::size_t r = 0;
  bool found = false;
  for (std::size_t g : grid)
    if (g >= cb.size() && (!found || g < r)) {
      r = g;
      found = true;
    }
  if (!found)
    throw std::invalid_argument(std::string(what) + " codebook of " + std::to_string(cb.size()) +
                                " entries exceeds every grid value");
  std::vector<std::uint16_t> bits = cb.half_bits();
  while (bits.size() < r) {
    const std::uint16_t next = next_half_above(bits.back());
    if ((next & 0x7C00u) == 0x7C00u)
      throw std::invalid_argument("codebook padding overflowed half precision");
    bits.push_back(next);
  }
  cb = Codebook::from_half_bits(bits, cb.kind());
  return r;
}

constexpr std::uint32_t kCrcPoly = 0xEDB88320u;

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < size; ++i) {
    crc ^= data[i];
    for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (kCrcPoly & (0u - (crc & 1u)));
  }
  return crc ^ 0xFFFFFFFFu;
}

struct ByteWriter {
  std::vector<std::uint8_t> bytes;
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 1; i >= 0; --i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 3; i >= 0; --i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 7; i >= 0; --i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    static_assert(sizeof(double) == 8);
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
};

struct ByteReader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  std::uint8_t u8() {
    if (pos >= bytes.size()) throw std::runtime_error("bundle: truncated header");
    return bytes[pos++];
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>((u8() << 8) | u8()); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | u8();
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | u8();
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

// One self-delimiting encoded part: hyper indices, optional codebook, count
// table, then the arithmetic stream (always last so register lookahead stays
// inside the part).
struct PartBuilder {
  BitWriter bits;
  PartLengths lengths;

  void hyper(std::uint64_t index, std::size_t width) {
    bits.put_bits(index, width);
    lengths.hyper_bits += width;
  }

  void codebook(const Codebook& cb) {
    for (std::uint16_t h : cb.half_bits()) bits.put_bits(h, 16);
    lengths.codebook_bits += 16 * cb.size();
  }

  void stream(std::span<const std::uint32_t> indices, std::size_t r) {
    const FrequencyTable freq = FrequencyTable::from_indices(indices, r);
    const std::size_t before_table = bits.bit_count();
    freq.serialize(bits);
    lengths.table_bits += bits.bit_count() - before_table;
    const std::size_t before_stream = bits.bit_count();
    arithmetic_encode(indices, freq, bits);
    lengths.stream_bits += bits.bit_count() - before_stream;
  }

  void finalize() {
    lengths.prefix_bits = 32;
    lengths.total = lengths.prefix_bits + bits.bit_count();
  }
};

void append_part(ByteWriter& out, const PartBuilder& part) {
  out.u32(static_cast<std::uint32_t>(part.bits.bit_count()));
  out.bytes.insert(out.bytes.end(), part.bits.bytes().begin(), part.bits.bytes().end());
}

struct PartView {
  std::vector<std::uint8_t> bytes;
  std::size_t bit_count = 0;
};

PartView read_part(ByteReader& in) {
  PartView v;
  v.bit_count = in.u32();
  const std::size_t nbytes = (v.bit_count + 7) / 8;
  if (in.pos + nbytes > in.bytes.size()) throw std::runtime_error("bundle: truncated part");
  v.bytes.assign(in.bytes.begin() + static_cast<std::ptrdiff_t>(in.pos),
                 in.bytes.begin() + static_cast<std::ptrdiff_t>(in.pos + nbytes));
  in.pos += nbytes;
  return v;
}

}  // namespace

std::size_t EncodingGrids::index_of_l(std::size_t l) const { return find_index(l_grid, l, "l"); }
std::size_t EncodingGrids::index_of_k(std::size_t k) const { return find_index(k_grid, k, "k"); }
std::size_t EncodingGrids::index_of_rg(std::size_t r) const { return find_index(rg_grid, r, "r_g"); }
std::size_t EncodingGrids::index_of_rl(std::size_t r) const { return find_index(rl_grid, r, "r_l"); }
std::size_t EncodingGrids::index_of_lr(double lr) const { return find_index(lr_grid, lr, "lr"); }
std::size_t EncodingGrids::index_of_r_single(std::size_t r) const {
  return find_index(r_single_grid, r, "r");
}

EncodedBundle encode_bundle(const SubspaceModel& model, const Codebook& global_codebook,
                            const Codebook& local_codebook, const EncodingGrids& grids,
                            double lr) {
  if (model.mode() != ModeKind::shared)
    throw std::invalid_argument("encode_bundle: shared-mode model required");
  const std::size_t k = model.basis_size();
  const std::size_t l = model.block_dim();
  const std::size_t n = model.task_count();
  const NetworkSpec& spec = model.network();

  // container header: structural context, not charged
  ByteWriter out;
  out.bytes.insert(out.bytes.end(), {'L', 'D', 'E', 'B'});
  out.u8(1);  // version
  out.u64(model.theta0_seed());
  out.u64(model.basis().projector.seed());
  out.u32(static_cast<std::uint32_t>(n));
  out.u32(static_cast<std::uint32_t>(spec.input_dim));
  out.u32(static_cast<std::uint32_t>(spec.hidden.size()));
  for (std::size_t h : spec.hidden) out.u32(static_cast<std::uint32_t>(h));
  out.u32(static_cast<std::uint32_t>(spec.output_dim));
  out.u8(spec.activation == Activation::relu ? 0 : 1);

  // meta part: hyper indices, global codebook, table + stream over all kl
  // entries of v
  Codebook global_cb = global_codebook;
  const std::size_t rg = pad_codebook_to_grid(global_cb, grids.rg_grid, "global");
  PartBuilder meta;
  meta.hyper(grids.index_of_l(l), EncodingGrids::index_bits(grids.l_grid.size()));
  meta.hyper(grids.index_of_k(k), EncodingGrids::index_bits(grids.k_grid.size()));
  meta.hyper(grids.index_of_rg(rg), EncodingGrids::index_bits(grids.rg_grid.size()));
  meta.hyper(grids.index_of_lr(lr), EncodingGrids::index_bits(grids.lr_grid.size()));
  const QuantizedVector qv = quantize(model.basis().v, global_cb);
  meta.codebook(global_cb);
  meta.stream(qv.indices, global_cb.size());
  meta.finalize();

  // multitask part: r_l index, local codebook, one joint stream over the
  // n*k task coefficients
  Codebook local_cb = local_codebook;
  const std::size_t rl = pad_codebook_to_grid(local_cb, grids.rl_grid, "local");
  PartBuilder task;
  task.hyper(grids.index_of_rl(rl), EncodingGrids::index_bits(grids.rl_grid.size()));
  std::vector<std::uint32_t> all_alpha_idx;
  all_alpha_idx.reserve(n * k);
  for (const auto& alpha : model.alphas()) {
    const QuantizedVector qa = quantize(alpha, local_cb);
    all_alpha_idx.insert(all_alpha_idx.end(), qa.indices.begin(), qa.indices.end());
  }
  task.codebook(local_cb);
  task.stream(all_alpha_idx, local_cb.size());
  task.finalize();

  append_part(out, meta);
  append_part(out, task);

  // integrity: CRC over everything after the magic+version; decode-only
  // metadata, excluded from the certificate lengths
  const std::uint32_t crc = crc32(out.bytes.data() + 5, out.bytes.size() - 5);
  out.u32(crc);

  EncodedBundle bundle;
  bundle.bytes = std::move(out.bytes);
  bundle.meta = meta.lengths;
  bundle.multitask = task.lengths;
  return bundle;
}

DecodedBundle decode_bundle(const std::vector<std::uint8_t>& bytes, const EncodingGrids& grids) {
  if (bytes.size() < 9) throw std::runtime_error("bundle: too short");
  if (!(bytes[0] == 'L' && bytes[1] == 'D' && bytes[2] == 'E' && bytes[3] == 'B'))
    throw std::runtime_error("bundle: bad magic bytes");
  if (bytes[4] != 1) throw std::runtime_error("bundle: unsupported version");

  const std::uint32_t want = (static_cast<std::uint32_t>(bytes[bytes.size() - 4]) << 24) |
                             (static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 16) |
                             (static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 8) |
                             static_cast<std::uint32_t>(bytes[bytes.size() - 1]);
  const std::uint32_t got = crc32(bytes.data() + 5, bytes.size() - 9);
  if (want != got) throw std::runtime_error("bundle: checksum mismatch (corrupt container)");

  ByteReader in{bytes};
  in.pos = 5;
  const std::uint64_t theta0_seed = in.u64();
  const std::uint64_t basis_seed = in.u64();
  const std::uint32_t n = in.u32();
  NetworkSpec spec;
  spec.input_dim = in.u32();
  const std::uint32_t nh = in.u32();
  for (std::uint32_t i = 0; i < nh; ++i) spec.hidden.push_back(in.u32());
  spec.output_dim = in.u32();
  spec.activation = in.u8() == 0 ? Activation::relu : Activation::elu;

  const PartView meta_view = read_part(in);
  const PartView task_view = read_part(in);
  if (in.pos + 4 != bytes.size()) throw std::runtime_error("bundle: trailing bytes");

  // meta part
  BitReader meta(meta_view.bytes, meta_view.bit_count);
  PartLengths meta_len;
  const std::size_t l =
      grids.l_grid.at(meta.get_bits(EncodingGrids::index_bits(grids.l_grid.size())));
  const std::size_t k =
      grids.k_grid.at(meta.get_bits(EncodingGrids::index_bits(grids.k_grid.size())));
  const std::size_t rg =
      grids.rg_grid.at(meta.get_bits(EncodingGrids::index_bits(grids.rg_grid.size())));
  const double lr =
      grids.lr_grid.at(meta.get_bits(EncodingGrids::index_bits(grids.lr_grid.size())));
  meta_len.hyper_bits = meta.position();

  std::vector<std::uint16_t> gbits(rg);
  for (auto& b : gbits) b = static_cast<std::uint16_t>(meta.get_bits(16));
  Codebook global_cb = Codebook::from_half_bits(gbits, Codebook::Kind::global);
  if (global_cb.size() != rg)
    throw std::runtime_error("bundle: duplicate global codebook entries after decode");
  meta_len.codebook_bits = 16 * rg;

  const std::size_t before_table = meta.position();
  const FrequencyTable gfreq = FrequencyTable::deserialize(meta, rg, k * l);
  meta_len.table_bits = meta.position() - before_table;
  const std::vector<std::uint32_t> v_idx = arithmetic_decode(meta, gfreq, k * l);
  meta_len.stream_bits = meta_view.bit_count - meta_len.hyper_bits - meta_len.codebook_bits -
                         meta_len.table_bits;
  meta_len.prefix_bits = 32;
  meta_len.total = 32 + meta_view.bit_count;

  // multitask part
  BitReader task(task_view.bytes, task_view.bit_count);
  PartLengths task_len;
  const std::size_t rl =
      grids.rl_grid.at(task.get_bits(EncodingGrids::index_bits(grids.rl_grid.size())));
  task_len.hyper_bits = task.position();
  std::vector<std::uint16_t> lbits(rl);
  for (auto& b : lbits) b = static_cast<std::uint16_t>(task.get_bits(16));
  Codebook local_cb = Codebook::from_half_bits(lbits, Codebook::Kind::local);
  if (local_cb.size() != rl)
    throw std::runtime_error("bundle: duplicate local codebook entries after decode");
  task_len.codebook_bits = 16 * rl;
  const std::size_t before_ltable = task.position();
  const FrequencyTable lfreq = FrequencyTable::deserialize(task, rl, n * k);
  task_len.table_bits = task.position() - before_ltable;
  const std::vector<std::uint32_t> a_idx = arithmetic_decode(task, lfreq, n * k);
  task_len.stream_bits = task_view.bit_count - task_len.hyper_bits - task_len.codebook_bits -
                         task_len.table_bits;
  task_len.prefix_bits = 32;
  task_len.total = 32 + task_view.bit_count;

  DecodedBundle out{SubspaceModel::shared(spec, theta0_seed, l, k, n, basis_seed),
                    std::move(global_cb), std::move(local_cb), lr, meta_len, task_len};
  for (std::size_t i = 0; i < k * l; ++i)
    out.model.basis().v[i] = out.global_codebook.centers().at(v_idx[i]);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < k; ++i)
      out.model.alphas()[j][i] = out.local_codebook.centers().at(a_idx[j * k + i]);
  return out;
}

void save_bundle(const EncodedBundle& bundle, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open bundle for writing: " + path);
  os.write(reinterpret_cast<const char*>(bundle.bytes.data()),
           static_cast<std::streamsize>(bundle.bytes.size()));
  if (!os) throw std::runtime_error("bundle write failed: " + path);
}

std::vector<std::uint8_t> load_bundle_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open bundle: " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

SingleEncoding encode_single_coefficients(std::span<const double> w, const Codebook& codebook,
                                          const EncodingGrids& grids) {
  Codebook cb = codebook;
  const std::size_t r = pad_codebook_to_grid(cb, grids.r_single_grid, "single");
  PartBuilder part;
  part.hyper(grids.index_of_r_single(r),
             EncodingGrids::index_bits(grids.r_single_grid.size()));
  const QuantizedVector q = quantize(w, cb);
  part.codebook(cb);
  part.stream(q.indices, cb.size());
  part.finalize();

  SingleEncoding enc;
  enc.bytes = part.bits.bytes();
  enc.bit_count = part.lengths.total;
  enc.parts = part.lengths;
  return enc;
}

std::vector<double> decode_single_coefficients(const SingleEncoding& enc,
                                               const EncodingGrids& grids, std::size_t count) {
  BitReader in(enc.bytes, enc.bit_count - 32);
  const std::size_t r =
      grids.r_single_grid.at(in.get_bits(EncodingGrids::index_bits(grids.r_single_grid.size())));
  std::vector<std::uint16_t> bits(r);
  for (auto& b : bits) b = static_cast<std::uint16_t>(in.get_bits(16));
  const Codebook cb = Codebook::from_half_bits(bits, Codebook::Kind::single);
  const FrequencyTable freq = FrequencyTable::deserialize(in, r, count);
  const auto idx = arithmetic_decode(in, freq, count);
  std::vector<double> out;
  out.reserve(count);
  for (std::uint32_t i : idx) out.push_back(cb.centers().at(i));
  return out;
}

SingleEncoding encode_transfer_coefficients(std::span<const double> alpha,
                                            std::span<const double> w, const Codebook& codebook,
                                            bool reuse_codebook, const EncodingGrids& grids) {
  std::vector<double> coeffs(alpha.begin(), alpha.end());
  coeffs.insert(coeffs.end(), w.begin(), w.end());

  Codebook cb = codebook;
  PartBuilder part;
  part.hyper(reuse_codebook ? 1 : 0, 1);  // the 1-bit new-vs-reused choice
  if (!reuse_codebook) {
    const std::size_t r = pad_codebook_to_grid(cb, grids.r_single_grid, "transfer");
    part.hyper(grids.index_of_r_single(r),
               EncodingGrids::index_bits(grids.r_single_grid.size()));
    part.codebook(cb);
  }
  const QuantizedVector q = quantize(coeffs, cb);
  part.stream(q.indices, cb.size());
  part.finalize();

  SingleEncoding enc;
  enc.bytes = part.bits.bytes();
  enc.bit_count = part.lengths.total;
  enc.parts = part.lengths;
  return enc;
}

JointVsSeparate joint_vs_separate(const std::vector<std::vector<std::uint32_t>>& task_indices,
                                  std::size_t r) {
  std::vector<std::uint32_t> all;
  for (const auto& t : task_indices) all.insert(all.end(), t.begin(), t.end());

  JointVsSeparate out;
  {
    BitWriter w;
    const FrequencyTable freq = FrequencyTable::from_indices(all, r);
    freq.serialize(w);
    arithmetic_encode(all, freq, w);
    out.joint_bits = 16 * r + w.bit_count();  // codebook + table + stream
  }
  out.separate_bits = 16 * r;  // same codebook transmitted once
  for (const auto& t : task_indices) {
    BitWriter w;
    const FrequencyTable freq = FrequencyTable::from_indices(t, r);
    freq.serialize(w);
    arithmetic_encode(t, freq, w);
    out.separate_bits += w.bit_count();
  }
  return out;
}

bool is_prefix_free(const std::vector<std::vector<std::uint8_t>>& words,
                    const std::vector<std::size_t>& bit_lengths) {
  auto bit_of = [](const std::vector<std::uint8_t>& bytes, std::size_t i) {
    return (bytes[i / 8] >> (7 - i % 8)) & 1u;
  };
  for (std::size_t a = 0; a < words.size(); ++a)
    for (std::size_t b = 0; b < words.size(); ++b) {
      if (a == b) continue;
      if (bit_lengths[a] > bit_lengths[b]) continue;
      bool prefix = true;
      for (std::size_t i = 0; i < bit_lengths[a]; ++i)
        if (bit_of(words[a], i) != bit_of(words[b], i)) {
          prefix = false;
          break;
        }
      if (prefix) return false;
    }
  return true;
}

double kraft_sum(const std::vector<std::size_t>& bit_lengths) {
  double s = 0.0;
  for (std::size_t len : bit_lengths) s += std::pow(2.0, -static_cast<double>(len));
  return s;
}

}  // namespace lowdim
