#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace pf {

enum class GradScope { TensorCore, Pff, All };

std::string to_string(GradScope s);
GradScope grad_scope_from_string(const std::string& s);

struct GradCheckOptions {
  double epsilon = 1e-5;     // central-difference step
  double tolerance = 1e-4;   // on the relative error below
  std::uint64_t seed = 3;
  bool inject_fault = false; // adds an op with a deliberately wrong gradient rule
};

/// Worst error over the elements of one input tensor of one check.
/// Relative error per element is |a − n| / max(|a|, |n|, 1e-3).
struct GradCheckEntry {
  std::string check;      // op or configuration, e.g. "softmax_rows", "pff.full"
  std::string parameter;  // input tensor name
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double epsilon = 0.0;
  double tolerance = 0.0;

  bool passed() const;
  std::vector<std::string> failing_checks() const;
  nlohmann::json to_json() const;
};

GradCheckReport run_gradcheck(GradScope scope, const GradCheckOptions& options = {});

}  // namespace pf
