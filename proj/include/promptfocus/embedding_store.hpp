#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace pf {

enum class LibrarySource { Initial, Supplemented };

std::string to_string(LibrarySource s);
LibrarySource library_source_from_string(const std::string& s);

/// Case-folded, whitespace-trimmed form used for uniqueness checks.
std::string canonical_class_name(std::string_view name);

/// Ordered, non-empty list of unique class names.
class CategoryLibrary {
 public:
  CategoryLibrary(std::vector<std::string> names, LibrarySource source = LibrarySource::Initial);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  LibrarySource source() const { return source_; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  bool contains(std::string_view name) const { return index_of(name).has_value(); }

 private:
  std::vector<std::string> names_;
  LibrarySource source_;
};

struct SupplementResult {
  CategoryLibrary library;
  std::size_t added = 0;
  std::size_t duplicates_dropped = 0;
};

/// Appends unseen names in order; duplicates (canonical form) are dropped and counted.
SupplementResult supplement_library(const CategoryLibrary& lib, std::span<const std::string> extra);

/// Reads a plain-text name list: one name per line, blank lines and '#' comments skipped.
std::vector<std::string> read_name_list(const std::filesystem::path& path);

/// Unit-norm text embeddings, one row per class name.
class EmbeddingTable {
 public:
  EmbeddingTable(std::vector<std::string> names, std::size_t dim, std::vector<double> rows);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t count() const { return names_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const double> rows() const { return rows_; }
  std::span<const double> row(std::size_t i) const;
  /// Row by class name; throws DataError if absent.
  std::span<const double> row(std::string_view name) const;
  std::optional<std::size_t> index_of(std::string_view name) const;

 private:
  std::vector<std::string> names_;
  std::size_t dim_;
  std::vector<double> rows_;
  std::unordered_map<std::string, std::size_t> index_;  // canonical name -> row
};

struct Fixture {
  CategoryLibrary library;
  EmbeddingTable table;
};

/// Paths of the binary (.embt) and the JSON manifest (.json) for a base path.
std::filesystem::path fixture_binary_path(const std::filesystem::path& path);
std::filesystem::path fixture_manifest_path(const std::filesystem::path& path);

/// Loads `<base>.embt` and its manifest `<base>.json`. `path` may name either
/// file or the extension-less base.
Fixture load_fixture(const std::filesystem::path& path);
void write_fixture(const std::filesystem::path& path, const CategoryLibrary& library,
                   const EmbeddingTable& table);

/// Single image embedding stored as a one-row EMBT container (no manifest).
std::vector<double> load_vector(const std::filesystem::path& path);
void write_vector(const std::filesystem::path& path, std::span<const double> v);

/// EMBT container bytes; exposed for byte-level tests.
std::vector<unsigned char> encode_embt(std::size_t count, std::size_t dim,
                                       std::span<const double> values);
struct EmbtPayload {
  std::size_t count;
  std::size_t dim;
  std::vector<double> values;
};
EmbtPayload decode_embt(std::span<const unsigned char> bytes);

struct SimilarityScores {
  std::vector<double> values;
  bool normalized = false;
};

/// Cosine similarity to every row divided by `temperature`, then softmax.
SimilarityScores image_class_similarity(std::span<const double> image_embedding,
                                        const EmbeddingTable& table, double temperature);

/// Scales v to unit L2 norm; throws ContractError on the zero vector.
std::vector<double> normalized(std::span<const double> v);
double l2_norm(std::span<const double> v);

}  // namespace pf
