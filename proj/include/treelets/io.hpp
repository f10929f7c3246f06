#pragma once

#include "treelets/hclust_pca.hpp"
#include "treelets/stability.hpp"
#include "treelets/supervised.hpp"
#include "treelets/synth.hpp"
#include "treelets/treelet.hpp"

#include <json.hpp>

#include <optional>
#include <ostream>
#include <string>

namespace treelets {

using Json = nlohmann::ordered_json;

/// Shortest decimal string that parses back to the same double.
std::string format_double(double value);

/// {"p", "merges": [{"level","i","j","theta","similarity","sum","diff"}], "names"}
Json tree_to_json(const TreeletTree& tree);
TreeletTree tree_from_json(const Json& j);

Json to_json(const ComparisonReport& report);
Json to_json(const LevelSelection& selection);
Json to_json(const FrontierSelection& selection, const TreeletTree& tree);
Json to_json(const StabilityReport& report);

struct SynthConfig {
    BlockDesign design;
    std::optional<ResponseSpec> response;
};

/// {"n", "seed", "blocks": [{"size", "rho"}],
///  "response": {"active": [...], "coefficients": [...], "snr", "seed"}}
/// "response.active_blocks" may replace "active": every variable of the
/// listed blocks enters with its block's coefficient.
SynthConfig parse_synth_config(const Json& j);

void write_csv(std::ostream& out, const DataMatrix& x);
void write_csv(std::ostream& out, const ResponseVector& y, const std::string& name = "y");
void write_comparison_csv(std::ostream& out, const ComparisonReport& report);
void write_profile_csv(std::ostream& out, const StabilityReport& report);

}  // namespace treelets
