// acceptance.hpp - desk-scale acceptance suite: thirteen numbered criteria,
// each a list of measured-vs-reference sub-checks.
#pragma once

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cslab::acceptance {

inline constexpr int kCriterionCount = 13;
inline constexpr std::uint64_t kDefaultSeed = 20240601;

struct CheckOptions {
    std::uint64_t seed = kDefaultSeed;
    bool deep = false;          // 10x trajectory counts
    int jobs = 1;
    double lambda_scale = 1.0;  // scales the simulated rate in criterion 3 only (negative control)
    double size_factor = 1.0;   // extra trajectory-count multiplier (used by the determinism rerun)
};

struct SubCheck {
    std::string label;
    double measured = 0.0;
    double reference = 0.0;
    double tolerance = 0.0;  // absolute, unless the label says otherwise
    bool pass = false;
};

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::vector<SubCheck> subchecks;
    std::string error;  // set when the criterion threw
    double seconds = 0.0;
};

std::string criterion_name(int id);

CriterionResult run_criterion(int id, const CheckOptions& opts);

// Runs `only` (all criteria when empty) in ascending order.
std::vector<CriterionResult> run_acceptance(const CheckOptions& opts, const std::vector<int>& only = {});

// One line per criterion: "[PASS] 3 off-diagonal decay (...)"
std::string summary_line(const CriterionResult& r);

nlohmann::ordered_json to_json(const std::vector<CriterionResult>& results, const CheckOptions& opts);

} // namespace cslab::acceptance
