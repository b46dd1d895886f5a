#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "promptfocus/embedding_store.hpp"

namespace pf {

/// The 20-class street library: the Cityscapes classes without "train",
/// plus "minibus" and "minivan".
std::vector<std::string> street_library_names();

/// Deterministic stand-in for encoded street class prompts. Unit rows of
/// width `dim`; vehicle classes share a common direction and "minivan" sits
/// at Euclidean distance ~0.25 from "minibus", every other pair above 0.75.
Fixture make_street_fixture(std::size_t dim = 64);

/// Image embedding of a street scene with road, car, building, sky,
/// minibus and minivan in view.
std::vector<double> street_scene_embedding(const Fixture& fixture);

/// Names appended to the library by the demo supplement file.
std::vector<std::string> street_supplement_names();

/// `count` well-separated random unit classes ("class_000", ...), for
/// selections that need no committed data.
Fixture make_synthetic_fixture(std::size_t count, std::size_t dim, std::uint64_t seed);

/// Image embedding pointing at the first class of a synthetic fixture.
std::vector<double> synthetic_image_embedding(const Fixture& fixture);

/// Writes street20.{embt,json}, street_scene.vec and street_supplement.txt into `dir`.
void write_street_data(const std::filesystem::path& dir);

}  // namespace pf
