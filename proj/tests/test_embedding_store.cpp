#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "promptfocus/embedding_store.hpp"
#include "promptfocus/errors.hpp"
#include "promptfocus/fixtures.hpp"
#include "promptfocus/rng.hpp"
#include "promptfocus/scene.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(testing::TempDir()) / "pf_embedding_store";
  fs::create_directories(dir);
  return dir / name;
}

pf::Fixture three_classes() {
  std::vector<double> rows{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::vector<std::string> names{"road", "car", "sky"};
  return {pf::CategoryLibrary(names), pf::EmbeddingTable(names, 3, rows)};
}

std::vector<unsigned char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Fixture, WellFormedThreeClassLoads) {
  const auto f = three_classes();
  const auto base = scratch("three");
  pf::write_fixture(base, f.library, f.table);
  const auto g = pf::load_fixture(base);
  EXPECT_EQ(g.library.size(), 3u);
  EXPECT_EQ(g.table.count(), 3u);
  EXPECT_EQ(g.table.dim(), 3u);
  EXPECT_EQ(g.library.names(), f.library.names());
  // either file of the pair names the fixture
  EXPECT_EQ(pf::load_fixture(pf::fixture_binary_path(base)).table.count(), 3u);
}

TEST(Fixture, WriteReadRoundTripIsBitIdentical) {
  pf::RngState rng(1);
  std::vector<std::string> names;
  std::vector<double> rows;
  for (int c = 0; c < 7; ++c) {
    names.push_back("class " + std::to_string(c));
    const auto r = pf::normalized(rng.normal_vector(16, 1.0));
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const pf::EmbeddingTable t(names, 16, rows);
  const auto base = scratch("seven");
  pf::write_fixture(base, pf::CategoryLibrary(names), t);
  const auto bytes = file_bytes(pf::fixture_binary_path(base));
  const auto g = pf::load_fixture(base);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ASSERT_EQ(std::memcmp(&rows[i], &g.table.rows()[i], sizeof(double)), 0);
  }
  pf::write_fixture(base, g.library, g.table);
  EXPECT_EQ(file_bytes(pf::fixture_binary_path(base)), bytes);
}

TEST(Embt, HeaderLayout) {
  const std::vector<double> v{1.0, 0.0};
  const auto b = pf::encode_embt(1, 2, v);
  ASSERT_EQ(b.size(), 16u + 16u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "EMBT");
  EXPECT_EQ(b[4], 1);  // version, little-endian
  EXPECT_EQ(b[8], 1);  // count
  EXPECT_EQ(b[12], 2); // dim
  double first;
  std::memcpy(&first, b.data() + 16, 8);
  EXPECT_EQ(first, 1.0);
}

TEST(Embt, TruncationReportsFirstMissingByte) {
  const std::vector<double> v{1.0, 0.0, 0.0, 1.0};
  const auto full = pf::encode_embt(2, 2, v);
  for (std::size_t cut : {2u, 6u, 13u, 20u, 47u}) {
    std::vector<unsigned char> part(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(cut));
    try {
      pf::decode_embt(part);
      FAIL() << "cut at " << cut;
    } catch (const pf::FormatError& e) {
      EXPECT_EQ(e.offset(), cut);
    }
  }
}

TEST(Embt, RejectsBadContainers) {
  const std::vector<double> v{1.0, 0.0};
  auto b = pf::encode_embt(1, 2, v);
  auto bad_magic = b;
  bad_magic[0] = 'X';
  EXPECT_THROW(pf::decode_embt(bad_magic), pf::FormatError);
  auto bad_version = b;
  bad_version[4] = 9;
  EXPECT_THROW(pf::decode_embt(bad_version), pf::FormatError);
  auto trailing = b;
  trailing.push_back(0);
  try {
    pf::decode_embt(trailing);
    FAIL();
  } catch (const pf::FormatError& e) {
    EXPECT_EQ(e.offset(), b.size());
  }
  auto nan = b;
  const double q = std::nan("");
  std::memcpy(nan.data() + 24, &q, 8);
  try {
    pf::decode_embt(nan);
    FAIL();
  } catch (const pf::FormatError& e) {
    EXPECT_EQ(e.offset(), 24u);
  }
}

TEST(Fixture, ManifestMustAgreeWithHeader) {
  const auto f = three_classes();
  const auto base = scratch("mismatch");
  pf::write_fixture(base, f.library, f.table);
  std::ofstream(pf::fixture_manifest_path(base), std::ios::trunc)
      << R"({"names":["road","car"],"dim":3,"count":2,"source":"initial"})";
  EXPECT_THROW(pf::load_fixture(base), pf::FormatError);
}

TEST(Fixture, NearUnitRowsRenormalizedOthersRejected) {
  const auto base = scratch("norms");
  const std::vector<std::string> names{"a", "b"};
  std::ofstream(pf::fixture_manifest_path(base)) << R"({"names":["a","b"],"dim":2,"count":2})";
  const auto write_rows = [&](std::vector<double> v) {
    const auto b = pf::encode_embt(2, 2, v);
    std::ofstream(pf::fixture_binary_path(base), std::ios::binary).write(
        reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  };
  write_rows({1.0005, 0.0, 0.0, 1.0});
  const auto f = pf::load_fixture(base);
  EXPECT_NEAR(f.table.row(0)[0], 1.0, 1e-15);
  write_rows({1.01, 0.0, 0.0, 1.0});
  try {
    pf::load_fixture(base);
    FAIL();
  } catch (const pf::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos);
  }
}

TEST(Fixture, NonUnitRowsRejected) {
  const std::vector<std::string> names{"a", "b"};
  EXPECT_THROW(pf::EmbeddingTable(names, 2, {1, 0, 0.5, 0.5}), pf::DataError);
  EXPECT_THROW(pf::EmbeddingTable(names, 2, {1, 0, 1, 0, 0}), pf::DataError);
  EXPECT_THROW(pf::EmbeddingTable({"a", "A "}, 1, {1, 1}), pf::DataError);
}

TEST(Library, CanonicalNamesAndLookup) {
  const pf::CategoryLibrary lib({"Traffic Light", "road"});
  EXPECT_EQ(pf::canonical_class_name("  Traffic Light "), "traffic light");
  EXPECT_EQ(lib.index_of("traffic light"), 0u);
  EXPECT_FALSE(lib.contains("sky"));
  EXPECT_THROW(pf::CategoryLibrary({}), pf::DataError);
  EXPECT_THROW(pf::CategoryLibrary({"car", "Car"}), pf::DataError);
}

TEST(Library, SupplementDeduplicates) {
  std::vector<std::string> base;
  for (int i = 0; i < 1000; ++i) base.push_back("imagenet class " + std::to_string(i));
  base[17] = "traffic cone";
  const pf::CategoryLibrary lib(base);
  const std::vector<std::string> extra{"traffic cone", "manhole cover"};
  const auto r = pf::supplement_library(lib, extra);
  EXPECT_EQ(r.library.size(), 1001u);
  EXPECT_EQ(r.added, 1u);
  EXPECT_EQ(r.duplicates_dropped, 1u);
  EXPECT_EQ(r.library.source(), pf::LibrarySource::Supplemented);
  EXPECT_EQ(r.library.names().back(), "manhole cover");

  const auto same = pf::supplement_library(lib, {});
  EXPECT_EQ(same.library.names(), lib.names());
  EXPECT_EQ(same.added, 0u);
}

// The committed supplement list and library together cover every class the
// toy task uses.
TEST(Library, StreetSupplementCoversToyOntology) {
  const fs::path data = fs::path(PF_SOURCE_DIR) / "data";
  const auto names = pf::read_name_list(data / "street_supplement.txt");
  EXPECT_FALSE(names.empty());
  const auto fixture = pf::load_fixture(data / "street20");
  const auto lib = pf::supplement_library(fixture.library, names).library;
  for (const auto& c : pf::street_ontology()) EXPECT_TRUE(lib.contains(c)) << c;
}

TEST(Library, NameListSkipsBlanksAndComments) {
  const auto p = scratch("names.txt");
  std::ofstream(p) << "# header\nroad\n\n  car  \n# trailing\n";
  EXPECT_EQ(pf::read_name_list(p), (std::vector<std::string>{"road", "car"}));
}

TEST(Similarity, PeaksOnMatchingRow) {
  const auto f = three_classes();
  const std::vector<double> img{0, 1, 0};
  const auto s = pf::image_class_similarity(img, f.table, 0.01);
  EXPECT_TRUE(s.normalized);
  EXPECT_GT(s.values[1], 1.0 - 1e-12);
  EXPECT_LT(s.values[0], 1e-40);
}

TEST(Similarity, IdenticalRowsGiveUniform) {
  const std::vector<double> row{0.6, 0.8};
  std::vector<double> rows;
  std::vector<std::string> names;
  for (int i = 0; i < 5; ++i) {
    rows.insert(rows.end(), row.begin(), row.end());
    names.push_back("c" + std::to_string(i));
  }
  const pf::EmbeddingTable t(names, 2, rows);
  const std::vector<double> img{1, 0};
  for (double p : pf::image_class_similarity(img, t, 0.07).values) EXPECT_NEAR(p, 0.2, 1e-15);
}

TEST(Similarity, MatchesDirectOracle) {
  pf::RngState rng(5);
  std::vector<std::string> names;
  std::vector<double> rows;
  for (int c = 0; c < 5; ++c) {
    names.push_back("k" + std::to_string(c));
    const auto r = pf::normalized(rng.normal_vector(8, 1.0));
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const pf::EmbeddingTable t(names, 8, rows);
  const auto img = pf::normalized(rng.normal_vector(8, 1.0));
  const auto got = pf::image_class_similarity(img, t, 0.05).values;
  const auto ref = oracle::similarity(img, t, 0.05);
  for (int c = 0; c < 5; ++c) EXPECT_NEAR(got[c], ref[c], 1e-12);
}

TEST(Similarity, Preconditions) {
  const auto f = three_classes();
  EXPECT_THROW(pf::image_class_similarity(std::vector<double>{1, 1, 0}, f.table, 0.01), pf::ContractError);
  EXPECT_THROW(pf::image_class_similarity(std::vector<double>{1, 0, 0}, f.table, 0.0), pf::ContractError);
  EXPECT_THROW(pf::image_class_similarity(std::vector<double>{1, 0}, f.table, 0.01), pf::ContractError);
}

TEST(Vector, RoundTrip) {
  const auto p = scratch("img.vec");
  const std::vector<double> v{0.6, 0.0, 0.8};
  pf::write_vector(p, v);
  EXPECT_EQ(pf::load_vector(p), v);
}

TEST(StreetFixture, CommittedFilesMatchGenerator) {
  const fs::path data = fs::path(PF_SOURCE_DIR) / "data";
  const auto committed = pf::load_fixture(data / "street20");
  const auto fresh = pf::make_street_fixture();
  ASSERT_EQ(committed.table.names(), fresh.table.names());
  for (std::size_t i = 0; i < fresh.table.rows().size(); ++i) {
    ASSERT_NEAR(committed.table.rows()[i], fresh.table.rows()[i], 1e-12);
  }
  EXPECT_EQ(committed.table.count(), 20u);
  EXPECT_FALSE(committed.library.contains("train"));
}

TEST(StreetFixture, PairwiseGeometry) {
  const auto f = pf::make_street_fixture();
  const auto& t = f.table;
  const auto d = [&](const char* a, const char* b) { return oracle::euclid(t.row(a), t.row(b)); };
  EXPECT_NEAR(d("minibus", "minivan"), 0.25, 1e-9);
  for (std::size_t i = 0; i < t.count(); ++i)
    for (std::size_t j = i + 1; j < t.count(); ++j) {
      if (t.names()[i] == "minibus" && t.names()[j] == "minivan") continue;
      EXPECT_GT(oracle::euclid(t.row(i), t.row(j)), 0.75) << t.names()[i] << " / " << t.names()[j];
    }
  double cos_van = 0.0, cos_sky = 0.0;
  for (std::size_t k = 0; k < t.dim(); ++k) {
    cos_van += t.row("minibus")[k] * t.row("minivan")[k];
    cos_sky += t.row("minibus")[k] * t.row("sky")[k];
  }
  EXPECT_GT(cos_van, cos_sky);
}
