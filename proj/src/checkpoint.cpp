#include "promptfocus/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "promptfocus/errors.hpp"

namespace pf {

namespace {

constexpr char kMagic[4] = {'P', 'F', 'F', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> b) : b_(b) {}
  bool done() const { return pos_ == b_.size(); }
  std::size_t pos() const { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) throw FormatError(std::string("truncated PFFC ") + what, b_.size());
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n, "name");
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const unsigned char> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(std::span<const nn::NamedTensor> tensors) {
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put_u32(out, kVersion);
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
    }
  }
  return out;
}

std::vector<nn::NamedTensor> decode_checkpoint(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("bad PFFC magic", 0);
  r.str(4);
  if (const auto v = r.u32("version"); v != kVersion) {
    throw FormatError("unsupported PFFC version " + std::to_string(v), 4);
  }
  std::vector<nn::NamedTensor> out;
  while (!r.done()) {
    const auto len = r.u32("name length");
    std::string name = r.str(len);
    const std::size_t rank_at = r.pos();
    const auto rank = r.u32("rank");
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank), rank_at);
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::size_t at = r.pos();
      const auto e = r.u32("extent");
      if (e == 0) throw FormatError("zero extent in tensor '" + name + "'", at);
      shape.push_back(e);
    }
    const std::size_t n = shape_numel(shape);
    r.need(n * 8, "payload");
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64("payload");
    out.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const nn::NamedTensor> tensors) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write checkpoint " + path.string());
}

std::vector<nn::NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string(), 0);
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

void restore_checkpoint(std::span<const nn::NamedTensor> saved, std::span<nn::NamedTensor> into) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& s : saved) by_name[s.name] = &s.tensor;
  for (auto& dst : into) {
    const auto it = by_name.find(dst.name);
    if (it == by_name.end()) throw DataError("checkpoint has no tensor '" + dst.name + "'");
    if (it->second->shape() != dst.tensor.shape()) {
      throw DimensionError("checkpoint tensor '" + dst.name + "' has shape " +
                           shape_str(it->second->shape()) + ", expected " +
                           shape_str(dst.tensor.shape()));
    }
    auto d = dst.tensor.mutable_data();
    std::copy(it->second->data().begin(), it->second->data().end(), d.begin());
  }
}

}  // namespace pf
