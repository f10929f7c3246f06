#include "treelets/io.hpp"

#include <array>
#include <charconv>
#include <cmath>

namespace treelets {

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

template <class T>
T required(const Json& j, const char* key) {
    if (!j.contains(key)) throw InputError(std::string("missing key '") + key + "'");
    return j.at(key).get<T>();
}

Json sorted_indices(const std::vector<std::size_t>& v) {
    Json out = Json::array();
    for (std::size_t x : v) out.push_back(x);
    return out;
}

}  // namespace

std::string format_double(double value) {
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), ptr);
}

Json tree_to_json(const TreeletTree& tree) {
    Json merges = Json::array();
    for (const auto& m : tree.merges()) {
        merges.push_back(Json{{"level", m.level},
                              {"i", m.i},
                              {"j", m.j},
                              {"theta", m.theta},
                              {"similarity", m.similarity},
                              {"sum", m.sum_index},
                              {"diff", m.diff_index}});
    }
    return Json{{"p", tree.p()}, {"merges", std::move(merges)}, {"names", tree.names()}};
}

TreeletTree tree_from_json(const Json& j) {
    try {
        const auto p = required<std::size_t>(j, "p");
        std::vector<MergeRecord> merges;
        for (const auto& m : j.at("merges")) {
            merges.push_back(MergeRecord{required<std::size_t>(m, "level"), required<std::size_t>(m, "i"),
                                         required<std::size_t>(m, "j"), required<double>(m, "theta"),
                                         required<double>(m, "similarity"), required<std::size_t>(m, "sum"),
                                         required<std::size_t>(m, "diff")});
        }
        std::vector<std::string> names;
        if (j.contains("names")) names = j.at("names").get<std::vector<std::string>>();
        return TreeletTree(p, std::move(merges), std::move(names));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed tree JSON: ") + e.what());
    }
}

Json to_json(const ComparisonReport& report) {
    Json levels = Json::array();
    for (const auto& l : report.levels) {
        levels.push_back(Json{{"level", l.level},
                              {"adjusted_rand", l.adjusted_rand},
                              {"max_principal_angle", l.max_principal_angle}});
    }
    return Json{{"cophenetic_correlation", report.cophenetic_correlation}, {"levels", std::move(levels)}};
}

Json to_json(const LevelSelection& selection) {
    return Json{{"level", selection.level}, {"losses", selection.losses}};
}

Json to_json(const FrontierSelection& selection, const TreeletTree& tree) {
    Json nodes = Json::array();
    for (std::size_t id : selection.frontier.nodes) {
        const auto& node = tree.nodes()[id];
        nodes.push_back(Json{{"node", id}, {"level", node.level}, {"members", sorted_indices(node.members)}});
    }
    Json trace = Json::array();
    for (const auto& s : selection.trace) {
        trace.push_back(Json{{"step", s.step},
                             {"node", s.node},
                             {"loss_before", s.loss_before},
                             {"loss_after", s.loss_after},
                             {"accepted", s.accepted}});
    }
    return Json{{"frontier", std::move(nodes)},
                {"root_loss", selection.root_loss},
                {"final_loss", selection.final_loss},
                {"trace", std::move(trace)}};
}

Json to_json(const StabilityReport& report) {
    Json levels = Json::array();
    for (std::size_t level = 0; level < report.level_stability.size(); ++level) {
        const auto& s = report.cut.levels[level];
        levels.push_back(Json{{"level", level},
                              {"mean_adjusted_rand", report.level_stability[level]},
                              {"group_jaccard", report.group_stability[level]},
                              {"selected", sorted_indices(s.selected)},
                              {"sparsity", s.sparsity},
                              {"selection_stability", s.stability},
                              {"within_bound", s.within_bound},
                              {"qualifies", s.qualifies}});
    }
    return Json{{"levels", std::move(levels)},
                {"chosen_cut",
                 Json{{"level", report.cut.level},
                      {"selected", sorted_indices(report.cut.selected)},
                      {"stable", report.cut.stable},
                      {"justification", report.cut.justification}}},
                {"degenerate_resamples", report.retries}};
}

SynthConfig parse_synth_config(const Json& j) {
    try {
        SynthConfig cfg;
        cfg.design.n = required<std::size_t>(j, "n");
        cfg.design.seed = j.value("seed", std::uint64_t{0});
        for (const auto& b : j.at("blocks")) {
            cfg.design.blocks.push_back(Block{required<std::size_t>(b, "size"), required<double>(b, "rho")});
        }
        cfg.design.validate();
        if (j.contains("response")) {
            const auto& r = j.at("response");
            ResponseSpec spec;
            spec.snr = required<double>(r, "snr");
            spec.seed = r.value("seed", cfg.design.seed + 1);
            const auto coefficients = required<std::vector<double>>(r, "coefficients");
            if (r.contains("active_blocks")) {
                const auto blocks = r.at("active_blocks").get<std::vector<std::size_t>>();
                if (blocks.size() != coefficients.size()) throw InputError("active_blocks and coefficients differ in length");
                std::vector<std::size_t> starts;
                std::size_t start = 0;
                for (const auto& b : cfg.design.blocks) {
                    starts.push_back(start);
                    start += b.size;
                }
                for (std::size_t k = 0; k < blocks.size(); ++k) {
                    if (blocks[k] >= cfg.design.blocks.size()) throw InputError("active block index out of range");
                    for (std::size_t v = 0; v < cfg.design.blocks[blocks[k]].size; ++v) {
                        spec.active.push_back(starts[blocks[k]] + v);
                        spec.coefficients.push_back(coefficients[k]);
                    }
                }
            } else {
                spec.active = required<std::vector<std::size_t>>(r, "active");
                spec.coefficients = coefficients;
            }
            if (spec.active.empty()) throw InputError("response active set is empty");
            bool any_nonzero = false;
            for (double c : spec.coefficients) any_nonzero = any_nonzero || c != 0.0;
            if (!any_nonzero) throw InputError("response coefficients are all zero (empty signal)");
            cfg.response = std::move(spec);
        }
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed synth config: ") + e.what());
    }
}

void write_csv(std::ostream& out, const DataMatrix& x) {
    const auto& names = x.names();
    for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << csv_field(names[j]);
    out << '\n';
    const Matrix& v = x.values();
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        for (Eigen::Index j = 0; j < v.cols(); ++j) out << (j ? "," : "") << format_double(v(i, j));
        out << '\n';
    }
}

void write_csv(std::ostream& out, const ResponseVector& y, const std::string& name) {
    out << csv_field(name) << '\n';
    for (Eigen::Index i = 0; i < y.values().size(); ++i) out << format_double(y.values()(i)) << '\n';
}

void write_comparison_csv(std::ostream& out, const ComparisonReport& report) {
    out << "level,adjusted_rand,max_principal_angle\n";
    for (const auto& l : report.levels) {
        out << l.level << ',' << format_double(l.adjusted_rand) << ',' << format_double(l.max_principal_angle) << '\n';
    }
}

void write_profile_csv(std::ostream& out, const StabilityReport& report) {
    out << "level,mean_adjusted_rand,min_group_jaccard,sparsity,qualifies_flag\n";
    for (const auto& row : report.profile()) {
        out << row.level << ',' << format_double(row.mean_adjusted_rand) << ',' << format_double(row.min_group_jaccard)
            << ',' << row.sparsity << ',' << (row.qualifies ? 1 : 0) << '\n';
    }
}

}  // namespace treelets
