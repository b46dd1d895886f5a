#include "promptfocus/embedding_store.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include <json.hpp>

#include "promptfocus/errors.hpp"
#include "promptfocus/kernels.hpp"

namespace pf {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 16;
constexpr double kUnitTolerance = 1e-6;
constexpr double kRenormTolerance = 1e-3;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

std::uint32_t get_u32(std::span<const unsigned char> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

double get_f64(std::span<const unsigned char> b, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[off + i]) << (8 * i);
  return std::bit_cast<double>(v);
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

// Rescales rows that are within kRenormTolerance of unit norm. Rows already
// unit within kUnitTolerance are left untouched so a write/read round trip
// reproduces them bit for bit.
void renormalize_rows(std::vector<double>& rows, std::size_t dim,
                      const std::vector<std::string>& names) {
  const std::size_t count = rows.size() / dim;
  for (std::size_t r = 0; r < count; ++r) {
    std::span<double> row(rows.data() + r * dim, dim);
    const double n = l2_norm(row);
    if (std::abs(n - 1.0) > kRenormTolerance) {
      throw DataError("embedding row " + std::to_string(r) + " ('" +
                      (r < names.size() ? names[r] : std::string("?")) + "') has norm " +
                      std::to_string(n) + ", outside 1 ± 1e-3");
    }
    if (std::abs(n - 1.0) <= kUnitTolerance) continue;
    for (auto& v : row) v /= n;
  }
}

}  // namespace

std::string to_string(LibrarySource s) {
  return s == LibrarySource::Initial ? "initial" : "supplemented";
}

LibrarySource library_source_from_string(const std::string& s) {
  if (s == "initial") return LibrarySource::Initial;
  if (s == "supplemented") return LibrarySource::Supplemented;
  throw DataError("unknown library source '" + s + "'");
}

std::string canonical_class_name(std::string_view name) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!name.empty() && is_space(static_cast<unsigned char>(name.front()))) name.remove_prefix(1);
  while (!name.empty() && is_space(static_cast<unsigned char>(name.back()))) name.remove_suffix(1);
  std::string out(name);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// ---- CategoryLibrary --------------------------------------------------------

CategoryLibrary::CategoryLibrary(std::vector<std::string> names, LibrarySource source)
    : names_(std::move(names)), source_(source) {
  if (names_.empty()) throw DataError("category library is empty");
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    const auto key = canonical_class_name(n);
    if (key.empty()) throw DataError("category library contains a blank name");
    if (!seen.insert(key).second) throw DataError("duplicate class name '" + n + "'");
  }
}

std::optional<std::size_t> CategoryLibrary::index_of(std::string_view name) const {
  const auto key = canonical_class_name(name);
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (canonical_class_name(names_[i]) == key) return i;
  }
  return std::nullopt;
}

SupplementResult supplement_library(const CategoryLibrary& lib,
                                    std::span<const std::string> extra) {
  if (extra.empty()) return {lib, 0, 0};
  std::vector<std::string> names = lib.names();
  std::unordered_set<std::string> seen;
  for (const auto& n : names) seen.insert(canonical_class_name(n));
  std::size_t added = 0, dropped = 0;
  for (const auto& n : extra) {
    const auto key = canonical_class_name(n);
    if (key.empty() || !seen.insert(key).second) {
      ++dropped;
      continue;
    }
    names.push_back(n);
    ++added;
  }
  return {CategoryLibrary(std::move(names), LibrarySource::Supplemented), added, dropped};
}

std::vector<std::string> read_name_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open name list " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    const auto trimmed = canonical_class_name(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    // keep original case, drop surrounding whitespace
    const auto b = line.find_first_not_of(" \t\r\n");
    const auto e = line.find_last_not_of(" \t\r\n");
    names.push_back(line.substr(b, e - b + 1));
  }
  return names;
}

// ---- EmbeddingTable ---------------------------------------------------------

EmbeddingTable::EmbeddingTable(std::vector<std::string> names, std::size_t dim,
                               std::vector<double> rows)
    : names_(std::move(names)), dim_(dim), rows_(std::move(rows)) {
  if (dim_ == 0) throw DataError("embedding dimension must be positive");
  if (rows_.size() != names_.size() * dim_) {
    throw DataError("embedding table has " + std::to_string(rows_.size()) + " values for " +
                    std::to_string(names_.size()) + " names of dim " + std::to_string(dim_));
  }
  for (std::size_t r = 0; r < names_.size(); ++r) {
    if (!index_.emplace(canonical_class_name(names_[r]), r).second) {
      throw DataError("duplicate class name '" + names_[r] + "' in embedding table");
    }
    const double n = l2_norm(row(r));
    if (std::abs(n - 1.0) > kUnitTolerance) {
      throw DataError("embedding row '" + names_[r] + "' is not unit norm (" + std::to_string(n) + ")");
    }
  }
}

std::span<const double> EmbeddingTable::row(std::size_t i) const {
  return std::span<const double>(rows_).subspan(i * dim_, dim_);
}

std::span<const double> EmbeddingTable::row(std::string_view name) const {
  const auto idx = index_of(name);
  if (!idx) throw DataError("class '" + std::string(name) + "' not found in embedding table");
  return row(*idx);
}

std::optional<std::size_t> EmbeddingTable::index_of(std::string_view name) const {
  const auto it = index_.find(canonical_class_name(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

// ---- container I/O ----------------------------------------------------------

std::vector<unsigned char> encode_embt(std::size_t count, std::size_t dim,
                                       std::span<const double> values) {
  if (values.size() != count * dim) throw ContractError("encode_embt: value count mismatch");
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  out.reserve(kHeaderBytes + values.size() * 8);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(count));
  put_u32(out, static_cast<std::uint32_t>(dim));
  for (double v : values) put_f64(out, v);
  return out;
}

EmbtPayload decode_embt(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4) throw FormatError("truncated EMBT magic", bytes.size());
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("bad EMBT magic", 0);
  if (bytes.size() < 8) throw FormatError("truncated EMBT version", bytes.size());
  if (const auto ver = get_u32(bytes, 4); ver != kVersion) {
    throw FormatError("unsupported EMBT version " + std::to_string(ver), 4);
  }
  if (bytes.size() < kHeaderBytes) throw FormatError("truncated EMBT header", bytes.size());
  const std::size_t count = get_u32(bytes, 8);
  const std::size_t dim = get_u32(bytes, 12);
  if (count == 0) throw FormatError("EMBT count is zero", 8);
  if (dim == 0) throw FormatError("EMBT dim is zero", 12);
  const std::size_t need = kHeaderBytes + count * dim * 8;
  if (bytes.size() < need) throw FormatError("truncated EMBT payload", bytes.size());
  if (bytes.size() > need) throw FormatError("trailing bytes after EMBT payload", need);
  EmbtPayload p{count, dim, std::vector<double>(count * dim)};
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    p.values[i] = get_f64(bytes, kHeaderBytes + i * 8);
    if (!std::isfinite(p.values[i])) {
      throw FormatError("non-finite value in EMBT payload", kHeaderBytes + i * 8);
    }
  }
  return p;
}

std::filesystem::path fixture_binary_path(const std::filesystem::path& path) {
  auto p = path;
  return p.replace_extension(".embt");
}

std::filesystem::path fixture_manifest_path(const std::filesystem::path& path) {
  auto p = path;
  return p.replace_extension(".json");
}

Fixture load_fixture(const std::filesystem::path& path) {
  const auto bin = fixture_binary_path(path);
  const auto bytes = read_bytes(bin);
  auto payload = decode_embt(bytes);

  const auto manifest_path = fixture_manifest_path(path);
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("cannot open manifest " + manifest_path.string(), 0);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), e.byte);
  }
  std::vector<std::string> names;
  std::size_t m_dim = 0, m_count = 0;
  std::string source = "initial";
  try {
    names = manifest.at("names").get<std::vector<std::string>>();
    m_dim = manifest.at("dim").get<std::size_t>();
    m_count = manifest.at("count").get<std::size_t>();
    if (manifest.contains("source")) source = manifest.at("source").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest field error: ") + e.what(), 0);
  }
  if (m_count != payload.count || names.size() != payload.count) {
    throw FormatError("manifest count " + std::to_string(m_count) + " (" +
                          std::to_string(names.size()) + " names) disagrees with header count " +
                          std::to_string(payload.count),
                      8);
  }
  if (m_dim != payload.dim) {
    throw FormatError("manifest dim " + std::to_string(m_dim) + " disagrees with header dim " +
                          std::to_string(payload.dim),
                      12);
  }
  renormalize_rows(payload.values, payload.dim, names);
  CategoryLibrary lib(names, library_source_from_string(source));
  return {std::move(lib), EmbeddingTable(std::move(names), payload.dim, std::move(payload.values))};
}

void write_fixture(const std::filesystem::path& path, const CategoryLibrary& library,
                   const EmbeddingTable& table) {
  if (library.names() != table.names()) {
    throw ContractError("write_fixture: library and table names differ");
  }
  write_bytes(fixture_binary_path(path), encode_embt(table.count(), table.dim(), table.rows()));
  nlohmann::json manifest = {{"names", table.names()},
                             {"dim", table.dim()},
                             {"count", table.count()},
                             {"source", to_string(library.source())}};
  std::ofstream out(fixture_manifest_path(path), std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw Error("cannot write manifest for " + path.string());
}

std::vector<double> load_vector(const std::filesystem::path& path) {
  auto p = decode_embt(read_bytes(path));
  if (p.count != 1) throw FormatError("vector file must hold exactly one row", 8);
  return std::move(p.values);
}

void write_vector(const std::filesystem::path& path, std::span<const double> v) {
  write_bytes(path, encode_embt(1, v.size(), v));
}

// ---- similarity -------------------------------------------------------------

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> normalized(std::span<const double> v) {
  const double n = l2_norm(v);
  if (n == 0.0) throw ContractError("cannot normalize the zero vector");
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x /= n;
  return out;
}

SimilarityScores image_class_similarity(std::span<const double> image_embedding,
                                        const EmbeddingTable& table, double temperature) {
  if (!(temperature > 0.0)) throw ContractError("similarity temperature must be positive");
  if (image_embedding.size() != table.dim()) {
    throw ContractError("image embedding has dim " + std::to_string(image_embedding.size()) +
                        ", table has dim " + std::to_string(table.dim()));
  }
  if (std::abs(l2_norm(image_embedding) - 1.0) > kUnitTolerance) {
    throw ContractError("image embedding is not unit norm");
  }
  SimilarityScores s{std::vector<double>(table.count()), true};
  // rows are unit norm, so the dot product is the cosine
  kernels::gemm(table.rows(), image_embedding, s.values, table.count(), table.dim(), 1);
  for (auto& v : s.values) v /= temperature;
  kernels::softmax_rows(s.values, 1, s.values.size());
  return s;
}

}  // namespace pf
