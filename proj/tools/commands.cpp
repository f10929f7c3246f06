#include "commands.hpp"

#include "treelets/io.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#ifndef TREELETS_VERSION
#define TREELETS_VERSION "dev"
#endif

namespace treelets::cli {

namespace {

namespace fs = std::filesystem;

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

std::string digest_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    char c = 0;
    while (in.get(c)) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return std::string("fnv1a64:") + buf;
}

/// Resolved parameters of one invocation; embedded in every output.
struct RunManifest {
    std::string subcommand;
    Json parameters = Json::object();
    Json seeds = Json::object();
    Json input_digests = Json::object();

    void add_input(const std::string& role, const fs::path& path) {
        input_digests[role] = digest_file(path);
    }

    Json to_json() const {
        return Json{{"subcommand", subcommand},
                    {"parameters", parameters},
                    {"seeds", seeds},
                    {"input_digests", input_digests},
                    {"tool_version", TREELETS_VERSION}};
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

void write_json(const fs::path& path, const Json& j) {
    write_text(path, j.dump(2) + "\n");
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
    fs::path p = out;
    p.replace_extension();
    return p.string() + suffix;
}

LevelRange parse_level_range(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw InputError("--level-range must look like FIRST:LAST");
    try {
        return {std::stoul(text.substr(0, colon)), std::stoul(text.substr(colon + 1))};
    } catch (const std::exception&) {
        throw InputError("--level-range must look like FIRST:LAST");
    }
}

struct CommonInput {
    std::string input;
    bool no_header = false;
};

void add_input_options(CLI::App* cmd, CommonInput& in) {
    cmd->add_option("--input", in.input, "Sample CSV (rows = samples, columns = variables)")->required();
    cmd->add_flag("--no-header", in.no_header, "Input CSV files have no header row");
}

// --- build -----------------------------------------------------------------------

struct BuildArgs {
    CommonInput in;
    std::string out;
    std::optional<std::size_t> max_level;
};

void cmd_build(const BuildArgs& a) {
    const DataMatrix x = ingest_csv(a.in.input, !a.in.no_header);
    const TreeletTree tree = build_treelet_tree(x, a.max_level);
    RunManifest m{"build"};
    m.parameters = Json{{"input", a.in.input}, {"header", !a.in.no_header}, {"max_level", tree.max_level()}};
    m.add_input("input", a.in.input);
    Json j = tree_to_json(tree);
    j["manifest"] = m.to_json();
    write_json(a.out, j);
}

// --- compare ---------------------------------------------------------------------

struct CompareArgs {
    CommonInput in;
    std::string out;
    std::string csv;
    std::string level_range;
    bool self = false;
};

void cmd_compare(const CompareArgs& a) {
    const DataMatrix x = ingest_csv(a.in.input, !a.in.no_header);
    std::optional<LevelRange> range;
    if (!a.level_range.empty()) range = parse_level_range(a.level_range);
    const TreeletTree ttree = build_treelet_tree(x);
    ComparisonReport report;
    if (a.self) {
        report = compare(ttree, ttree, range);
    } else {
        report = compare(x, ttree, complete_linkage_tree(correlation_similarity(x)), range);
    }
    const fs::path csv = a.csv.empty() ? sibling(a.out, ".csv") : fs::path(a.csv);

    RunManifest m{"compare"};
    m.parameters = Json{{"input", a.in.input},
                        {"header", !a.in.no_header},
                        {"mode", a.self ? "treelet-vs-treelet" : "treelet-vs-complete-linkage-pca"},
                        {"level_range", a.level_range.empty() ? "all" : a.level_range},
                        {"csv", csv.string()}};
    m.add_input("input", a.in.input);
    Json j{{"manifest", m.to_json()}};
    j.update(to_json(report));
    write_json(a.out, j);
    std::ostringstream text;
    write_comparison_csv(text, report);
    write_text(csv, text.str());
}

// --- select ----------------------------------------------------------------------

struct SelectArgs {
    CommonInput in;
    std::string response;
    std::string out;
    std::string mode = "k-energy";
    std::string predictor = "lasso";
    std::optional<std::size_t> folds;
    std::uint64_t seed = 0;
    double tau = 0.0;
    std::size_t k = 1;
};

Predictor make_predictor(const std::string& name) {
    if (name == "ridge") return Predictor::ridge();
    if (name == "lasso") return Predictor::lasso();
    throw InputError("unknown predictor '" + name + "'");
}

void cmd_select(const SelectArgs& a) {
    const DataMatrix x = ingest_csv(a.in.input, !a.in.no_header);
    const TreeletTree tree = build_treelet_tree(x);
    RunManifest m{"select"};
    m.parameters = Json{{"input", a.in.input}, {"header", !a.in.no_header}, {"mode", a.mode}};
    m.add_input("input", a.in.input);

    Json result;
    if (a.mode == "k-energy") {
        m.parameters["k"] = a.k;
        m.parameters["criterion"] = "top-k coefficient energy (reconstructed criterion)";
        const CutResult cut = unsupervised_cut(tree, x, a.k);
        result = Json{{"level", cut.level}, {"scores", cut.scores}};
    } else if (a.mode == "cv" || a.mode == "frontier") {
        if (a.response.empty()) throw InputError("--response is required for mode '" + a.mode + "'");
        const ResponseVector y = ingest_response_csv(a.response, !a.in.no_header);
        if (y.size() != x.n()) throw InputError("response length differs from sample count");
        m.add_input("response", a.response);
        const Predictor predictor = make_predictor(a.predictor);
        const CVConfig cv{a.folds, a.seed};
        m.parameters["response"] = a.response;
        m.parameters["predictor"] = a.predictor;
        m.parameters["penalty_grid"] = predictor.grid;
        m.parameters["folds"] = cv.folds_for(x.n());
        m.seeds["cv"] = a.seed;
        if (a.mode == "cv") {
            result = to_json(cv_basis_selection(x, y, tree, predictor, cv));
        } else {
            m.parameters["tau"] = a.tau;
            result = to_json(nonuniform_cutoff(x, y, tree, predictor, cv, a.tau), tree);
        }
    } else {
        throw InputError("unknown mode '" + a.mode + "' (expected k-energy, cv or frontier)");
    }
    write_json(a.out, Json{{"manifest", m.to_json()}, {"mode", a.mode}, {"selection", result}});
}

// --- stability -------------------------------------------------------------------

struct StabilityArgs {
    CommonInput in;
    std::string response;
    std::string out;
    std::string profile;
    std::size_t replicates = 100;
    std::uint64_t seed = 0;
    double pi_min = 0.8;
    std::size_t g_max = kDefaultGroupBound;
    std::size_t k = 3;
    std::optional<std::size_t> folds;
};

void cmd_stability(const StabilityArgs& a) {
    if (a.replicates < 1) throw InputError("--replicates must be >= 1");
    const DataMatrix x = ingest_csv(a.in.input, !a.in.no_header);
    RunManifest m{"stability"};
    m.add_input("input", a.in.input);
    std::optional<ResponseVector> y;
    if (!a.response.empty()) {
        y = ingest_response_csv(a.response, !a.in.no_header);
        if (y->size() != x.n()) throw InputError("response length differs from sample count");
        m.add_input("response", a.response);
    }
    SelectionRule rule;
    rule.cv = CVConfig{a.folds, a.seed};
    rule.k = a.k;
    const fs::path profile = a.profile.empty() ? sibling(a.out, "_profile.csv") : fs::path(a.profile);
    m.parameters = Json{{"input", a.in.input},
                        {"header", !a.in.no_header},
                        {"response", a.response.empty() ? Json(nullptr) : Json(a.response)},
                        {"replicates", a.replicates},
                        {"pi_min", a.pi_min},
                        {"g_max", a.g_max},
                        {"selection", y ? "lasso on basis coordinates" : "top-k energy columns"},
                        {"profile", profile.string()}};
    if (y) {
        m.parameters["folds"] = rule.cv.folds_for(x.n());
    } else {
        m.parameters["k"] = a.k;
    }
    m.seeds = Json{{"bootstrap", a.seed}, {"cv", a.seed}};

    const StabilityReport report = stability_analysis(x, y, BootstrapConfig{a.replicates, a.seed}, rule, a.pi_min, a.g_max);
    Json j{{"manifest", m.to_json()}};
    j.update(to_json(report));
    write_json(a.out, j);
    std::ostringstream text;
    write_profile_csv(text, report);
    write_text(profile, text.str());
}

// --- synth -----------------------------------------------------------------------

struct SynthArgs {
    std::string config;
    std::string out;
    std::string response_out;
};

void cmd_synth(const SynthArgs& a) {
    std::ifstream in(a.config, std::ios::binary);
    if (!in) throw InputError("cannot open '" + a.config + "'");
    Json raw;
    try {
        raw = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed config JSON: ") + e.what());
    }
    const SynthConfig cfg = parse_synth_config(raw);
    const DataMatrix x = generate(cfg.design);
    std::ostringstream text;
    write_csv(text, x);
    write_text(a.out, text.str());
    if (!a.response_out.empty()) {
        if (!cfg.response) throw InputError("--response-out given but the config has no 'response'");
        std::ostringstream ytext;
        write_csv(ytext, generate_response(x, *cfg.response));
        write_text(a.response_out, ytext.str());
    }
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Treelet transform, local-PCA comparison, supervised cuts and bootstrap stability"};
    app.set_version_flag("--version", TREELETS_VERSION);
    app.require_subcommand(1);

    BuildArgs build;
    auto* build_cmd = app.add_subcommand("build", "Build a treelet tree and write it as JSON");
    add_input_options(build_cmd, build.in);
    build_cmd->add_option("--out", build.out, "Tree JSON output")->required();
    build_cmd->add_option("--max-level", build.max_level, "Number of merges (default p - 1)");

    CompareArgs cmp;
    auto* cmp_cmd = app.add_subcommand("compare", "Compare treelets with complete linkage + local PCA");
    add_input_options(cmp_cmd, cmp.in);
    cmp_cmd->add_option("--out", cmp.out, "Comparison JSON output")->required();
    cmp_cmd->add_option("--csv", cmp.csv, "Per-level CSV output (default <out>.csv)");
    cmp_cmd->add_option("--level-range", cmp.level_range, "Inclusive FIRST:LAST level range");
    cmp_cmd->add_flag("--self", cmp.self, "Compare the treelet tree with itself");

    SelectArgs sel;
    auto* sel_cmd = app.add_subcommand("select", "Choose a basis: top-K energy, CV level, or CV frontier");
    add_input_options(sel_cmd, sel.in);
    sel_cmd->add_option("--response", sel.response, "Single-column response CSV");
    sel_cmd->add_option("--out", sel.out, "Selection JSON output")->required();
    sel_cmd->add_option("--mode", sel.mode, "k-energy | cv | frontier")
        ->check(CLI::IsMember({"k-energy", "cv", "frontier"}));
    sel_cmd->add_option("--predictor", sel.predictor, "ridge | lasso")->check(CLI::IsMember({"ridge", "lasso"}));
    sel_cmd->add_option("--folds", sel.folds, "CV folds (default min(10, n))");
    sel_cmd->add_option("--seed", sel.seed, "Seed for fold assignment");
    sel_cmd->add_option("--tau", sel.tau, "Minimum CV-loss decrease to expand a frontier node");
    sel_cmd->add_option("--k", sel.k, "K for the top-K energy cut");

    StabilityArgs st;
    auto* st_cmd = app.add_subcommand("stability", "Bootstrap stability and the stable sparse cut");
    add_input_options(st_cmd, st.in);
    st_cmd->add_option("--response", st.response, "Single-column response CSV (enables lasso selection)");
    st_cmd->add_option("--out", st.out, "Stability report JSON output")->required();
    st_cmd->add_option("--profile", st.profile, "Profile CSV output (default <out>_profile.csv)");
    st_cmd->add_option("--replicates", st.replicates, "Bootstrap replicates");
    st_cmd->add_option("--seed", st.seed, "Seed for resampling and CV");
    st_cmd->add_option("--pi-min", st.pi_min, "Required mean Jaccard stability in [0, 1]");
    st_cmd->add_option("--g-max", st.g_max, "Largest allowed group size");
    st_cmd->add_option("--k", st.k, "Columns selected per level without a response");
    st_cmd->add_option("--folds", st.folds, "CV folds for lasso selection");

    SynthArgs syn;
    auto* syn_cmd = app.add_subcommand("synth", "Generate block-correlated data and a response");
    syn_cmd->add_option("--config", syn.config, "Design JSON")->required();
    syn_cmd->add_option("--out", syn.out, "Data CSV output")->required();
    syn_cmd->add_option("--response-out", syn.response_out, "Response CSV output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (*build_cmd) cmd_build(build);
        if (*cmp_cmd) cmd_compare(cmp);
        if (*sel_cmd) cmd_select(sel);
        if (*st_cmd) cmd_stability(st);
        if (*syn_cmd) cmd_synth(syn);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitNumerical;
    }
    return 0;
}

}  // namespace treelets::cli
