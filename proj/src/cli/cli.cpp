#include "faultline/cli/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"

#include "faultline/attack/bfa.hpp"
#include "faultline/dram/profiler.hpp"
#include "faultline/qnn/quant.hpp"

namespace faultline::cli {

using nlohmann::json;
namespace dram = faultline::dram;
namespace qnn = faultline::qnn;
namespace attack = faultline::attack;

namespace {

using Clock = std::chrono::steady_clock;

void write_manifest(const std::string& output_path, const std::string& subcommand,
                    const json& resolved, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, const json& seeds,
                    Clock::time_point started) {
    json m;
    m["format_version"] = kFormatVersion;
    m["tool_version"] = kToolVersion;
    m["subcommand"] = subcommand;
    m["resolved"] = resolved;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["seeds"] = seeds;
    m["duration_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started).count();
    std::ofstream out(output_path + ".manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + output_path + ".manifest.json");
    out << m.dump(2) << '\n';
}

// Applies "--config file.json" by prepending "--key value" tokens so that
// explicit flags (parsed later, TakeLast) override the file.
std::vector<std::string> apply_config_file(const std::vector<std::string>& args) {
    std::string config_path;
    for (size_t i = 0; i + 1 < args.size(); ++i)
        if (args[i] == "--config") config_path = args[i + 1];
    if (config_path.empty()) return args;

    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw IoError("cannot read config file " + config_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(config_path + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(config_path + ": config must be a JSON object");

    std::vector<std::string> out;
    out.push_back(args.empty() ? "" : args[0]);  // subcommand stays first
    for (const auto& [key, value] : j.items()) {
        out.push_back("--" + key);
        if (value.is_string())
            out.push_back(value.get<std::string>());
        else
            out.push_back(value.dump());
    }
    for (size_t i = 1; i < args.size(); ++i) out.push_back(args[i]);
    return out;
}

void set_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

dram::DefenseConfig parse_defense(const std::string& text) {
    if (text == "unlimited") return dram::DefenseConfig::unlimited();
    if (text == "untested") return {dram::DefenseMode::Untested, 0, true, false};
    if (text.rfind("mac:", 0) == 0) {
        const uint64_t t_mac = std::stoull(text.substr(4));
        return dram::DefenseConfig::mac(t_mac);
    }
    throw ValidationError("bad --defense value '" + text + "' (unlimited|untested|mac:<N>)");
}

dram::Mechanism parse_mechanism(const std::string& text) {
    if (text == "rh") return dram::Mechanism::RH;
    if (text == "rp") return dram::Mechanism::RP;
    throw ValidationError("bad --mech value '" + text + "' (rh|rp)");
}

bool parse_on_off(const std::string& text, const char* flag) {
    if (text == "on") return true;
    if (text == "off") return false;
    throw ValidationError(std::string("bad ") + flag + " value '" + text + "' (on|off)");
}

qnn::ModelSpec parse_arch(const std::string& arch, int classes) {
    if (arch == "mlp") return qnn::ModelSpec::mlp(classes);
    if (arch == "cnn") return qnn::ModelSpec::cnn(classes);
    return qnn::ModelSpec::parse(arch);
}

struct DatasetArgs {
    std::string kind = "blobs";
    int classes = 10;
    int samples = 2000;
    uint64_t seed = 1;

    qnn::Dataset build() const {
        return qnn::make_dataset(qnn::dataset_kind_from(kind), classes, samples, seed);
    }
    json to_json() const {
        return {{"kind", kind}, {"classes", classes}, {"samples", samples}, {"seed", seed}};
    }
};

// Dataset provenance travels with the checkpoint so later stages can
// regenerate it. Stored in the checkpoint sidecar next to the model file.
void save_dataset_args(const DatasetArgs& d, const std::string& model_path) {
    std::ofstream out(model_path + ".dataset.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + model_path + ".dataset.json");
    json j = d.to_json();
    j["format_version"] = kFormatVersion;
    out << j.dump(2) << '\n';
}

DatasetArgs load_dataset_args(const std::string& model_path) {
    std::ifstream in(model_path + ".dataset.json", std::ios::binary);
    if (!in) throw IoError("cannot read " + model_path + ".dataset.json");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(model_path + ".dataset.json: " + e.what());
    }
    DatasetArgs d;
    d.kind = j.at("kind").get<std::string>();
    d.classes = j.at("classes").get<int>();
    d.samples = j.at("samples").get<int>();
    d.seed = j.at("seed").get<uint64_t>();
    return d;
}

uint64_t median_of(std::vector<uint64_t> v) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

struct GenChipArgs {
    dram::ChipGeometry geometry;
    dram::TimingParams timing;
    dram::VulnerabilityConfig vuln;
    std::string output;
    int threads = 0;
};

int run_gen_chip(const GenChipArgs& a, Clock::time_point started) {
    set_threads(a.threads);
    dram::ChipState chip = dram::generate_chip(a.geometry, a.timing, a.vuln);
    dram::save_chip_descriptor(chip, a.output);
    uint64_t rh = 0, rp = 0;
    chip.for_each_cell([&](const dram::DramAddress&, const dram::VulnCell& c) {
        if (dram::is_hammer_capable(c.mechanism)) ++rh;
        if (dram::is_press_capable(c.mechanism)) ++rp;
    });
    std::cout << "chip " << chip.fingerprint() << ": " << a.geometry.banks << " bank(s) x "
              << a.geometry.rows_per_bank << " rows x " << a.geometry.bits_per_row
              << " bits, hammer cells " << rh << ", press cells " << rp << "\n";
    write_manifest(a.output, "gen-chip",
                   json::parse(dram::chip_descriptor_json(a.geometry, a.timing, a.vuln)), {},
                   {a.output}, {{"seed", a.vuln.seed}}, started);
    return 0;
}

struct ProfileArgs {
    std::string chip_path;
    std::string mech = "rh";
    uint64_t max_budget = 0;  // 0: default for mechanism
    std::string polarity = "both";
    std::string output;
    int threads = 0;
};

int run_profile(const ProfileArgs& a, Clock::time_point started) {
    set_threads(a.threads);
    dram::ChipState chip = dram::load_chip_descriptor(a.chip_path);
    const dram::Mechanism mech = parse_mechanism(a.mech);
    const uint64_t budget = a.max_budget > 0 ? a.max_budget : dram::default_max_budget(chip, mech);
    const auto polarity =
        a.polarity == "single" ? dram::Polarity::Single : dram::Polarity::Both;
    dram::VulnProfile profile = dram::profile_chip(chip, mech, budget, polarity);
    dram::save_profile(profile, a.output);
    std::cout << "profiled " << profile.cells.size() << " " << a.mech << " cells at budget "
              << budget << "\n";
    write_manifest(a.output, "profile",
                   {{"chip", a.chip_path},
                    {"mech", a.mech},
                    {"max_budget", budget},
                    {"polarity", a.polarity}},
                   {a.chip_path}, {a.output, a.output + ".json"}, json::object(), started);
    return 0;
}

struct CurveArgs {
    std::string chip_path;
    std::string mech = "rp";
    std::string grid = "log16";
    uint64_t max_budget = 0;
    std::string output;
    int threads = 0;
};

int run_curve(const CurveArgs& a, Clock::time_point started) {
    set_threads(a.threads);
    dram::ChipState chip = dram::load_chip_descriptor(a.chip_path);
    const dram::Mechanism mech = parse_mechanism(a.mech);
    if (a.grid.rfind("log", 0) != 0)
        throw ValidationError("bad --grid value '" + a.grid + "' (log<N>)");
    const auto points = static_cast<size_t>(std::stoul(a.grid.substr(3)));
    const auto grid = dram::log_budget_grid(chip, mech, points);
    const uint64_t budget = a.max_budget > 0 ? a.max_budget : dram::default_max_budget(chip, mech);
    dram::VulnProfile profile = dram::profile_chip(chip, mech, budget);
    dram::FlipCurve curve = dram::flip_curve(profile, grid);
    std::ofstream out(a.output, std::ios::binary);
    if (!out) throw IoError("cannot write " + a.output);
    out << "budget,cumulative_flips\n";
    for (const auto& [b, n] : curve.points) out << b << ',' << n << '\n';
    write_manifest(a.output, "curve",
                   {{"chip", a.chip_path},
                    {"mech", a.mech},
                    {"grid", a.grid},
                    {"max_budget", budget}},
                   {a.chip_path}, {a.output}, json::object(), started);
    return 0;
}

struct TrainArgs {
    DatasetArgs data;
    std::string arch = "mlp";
    int epochs = 20;
    double lr = 0.05;
    double weight_decay = 5e-3;
    int batch_size = 32;
    int n_q = 8;
    uint64_t seed = 0;
    std::string output;
    int threads = 0;
};

int run_train(const TrainArgs& a, Clock::time_point started) {
    set_threads(a.threads);
    qnn::Dataset data = a.data.build();
    qnn::ModelSpec spec = parse_arch(a.arch, data.num_classes);
    qnn::TrainOptions opts;
    opts.epochs = a.epochs;
    opts.lr = a.lr;
    opts.weight_decay = a.weight_decay;
    opts.batch_size = a.batch_size;
    opts.seed = a.seed;
    qnn::TrainReport report;
    qnn::FloatModel model = qnn::train_float(spec, data, opts, &report);
    qnn::QuantizedModel qmodel = qnn::quantize(model, a.n_q);
    qmodel.set_seed(a.seed);
    qnn::save_model(qmodel, a.output);
    save_dataset_args(a.data, a.output);
    const auto qacc = qnn::accuracy(qmodel, data);
    std::cout << "train acc " << report.train_accuracy << ", test acc " << report.test_accuracy
              << ", quantized test acc " << qacc.accuracy << " (random guess "
              << qacc.random_guess << ")\n";
    write_manifest(a.output, "train-victim",
                   {{"dataset", a.data.to_json()},
                    {"arch", spec.to_text()},
                    {"epochs", a.epochs},
                    {"lr", a.lr},
                    {"weight_decay", a.weight_decay},
                    {"batch_size", a.batch_size},
                    {"nq", a.n_q},
                    {"seed", a.seed}},
                   {}, {a.output, a.output + ".dataset.json"},
                   {{"train_seed", a.seed}, {"data_seed", a.data.seed}}, started);
    return 0;
}

struct AttackArgs {
    std::string chip_path;
    std::string model_path;
    std::string profile_path;
    std::string map = "shuffle";
    uint64_t seed = 0;
    double objective_acc = -1.0;
    uint32_t max_flips = 500;
    std::string commit = "logical";
    std::string direction_aware = "on";
    std::string defense = "unlimited";
    std::string allow_collateral = "on";
    int batch_size = 128;
    uint32_t candidate_pool = 20;
    std::string output;
    int threads = 0;
};

attack::AttackResult attack_once(dram::ChipState& chip, const dram::VulnProfile& profile,
                                 qnn::QuantizedModel& model, const qnn::Dataset& data,
                                 const AttackArgs& a, uint64_t seed) {
    const attack::MapLayout layout = a.map == "sequential" ? attack::MapLayout::Sequential
                                                           : attack::MapLayout::SeededShuffle;
    attack::WeightMap map = attack::build_weight_map(model, chip, layout, seed);
    attack::AttackConfig config;
    config.objective_accuracy = a.objective_acc;
    config.max_flips = a.max_flips;
    config.commit_mode =
        a.commit == "physical" ? attack::CommitMode::Physical : attack::CommitMode::Logical;
    config.direction_aware = parse_on_off(a.direction_aware, "--direction-aware");
    config.defense = parse_defense(a.defense);
    config.allow_collateral = parse_on_off(a.allow_collateral, "--allow-collateral");
    config.candidate_pool = a.candidate_pool;
    attack::AttackBatch batch =
        attack::make_attack_batch(data, static_cast<size_t>(a.batch_size), seed);
    return attack::run_attack(model, chip, profile, map, config, batch, data);
}

int run_attack_cmd(const AttackArgs& a, Clock::time_point started) {
    set_threads(a.threads);
    if (a.commit != "logical" && a.commit != "physical")
        throw ValidationError("bad --commit value '" + a.commit + "' (logical|physical)");
    dram::ChipState chip = dram::load_chip_descriptor(a.chip_path);
    dram::VulnProfile profile = dram::load_profile(a.profile_path);
    qnn::QuantizedModel model = qnn::load_model(a.model_path);
    qnn::Dataset data = load_dataset_args(a.model_path).build();

    attack::AttackResult result = attack_once(chip, profile, model, data, a, a.seed);
    const std::string csv_path = a.output + ".csv";
    attack::save_attack_result(result, a.output, csv_path);
    std::cout << (result.succeeded ? "success" : "failure") << ": accuracy "
              << result.baseline_accuracy << " -> " << result.final_accuracy << " with "
              << result.total_flips << " flips (objective " << result.objective_accuracy
              << ")\n";
    write_manifest(a.output, "attack",
                   {{"chip", a.chip_path},
                    {"model", a.model_path},
                    {"profile", a.profile_path},
                    {"map", a.map},
                    {"seed", a.seed},
                    {"objective_acc", result.objective_accuracy},
                    {"max_flips", a.max_flips},
                    {"commit", a.commit},
                    {"direction_aware", a.direction_aware},
                    {"defense", a.defense},
                    {"batch_size", a.batch_size}},
                   {a.chip_path, a.model_path, a.profile_path}, {a.output, csv_path},
                   {{"seed", a.seed}}, started);
    return 0;
}

struct CompareArgs {
    std::string chip_path;
    std::string model_path;
    std::string profiles;  // comma-separated CSV paths
    int seeds = 5;
    AttackArgs attack;  // shared attack settings
    std::string output;
    int threads = 0;
};

int run_compare(const CompareArgs& a, Clock::time_point started) {
    set_threads(a.threads);
    dram::ChipState chip = dram::load_chip_descriptor(a.chip_path);
    qnn::Dataset data = load_dataset_args(a.model_path).build();

    std::vector<std::string> profile_paths;
    {
        std::istringstream in(a.profiles);
        std::string tok;
        while (std::getline(in, tok, ',')) profile_paths.push_back(tok);
    }
    if (profile_paths.empty()) throw ValidationError("compare: no profiles given");

    json per_profile = json::object();
    std::vector<std::pair<dram::Mechanism, uint64_t>> medians;
    for (const std::string& path : profile_paths) {
        dram::VulnProfile profile = dram::load_profile(path);
        json runs = json::array();
        std::vector<uint64_t> flips;
        for (int s = 0; s < a.seeds; ++s) {
            qnn::QuantizedModel model = qnn::load_model(a.model_path);
            dram::ChipState run_chip = chip;
            attack::AttackResult r =
                attack_once(run_chip, profile, model, data, a.attack, static_cast<uint64_t>(s));
            flips.push_back(r.total_flips);
            runs.push_back({{"seed", s},
                            {"flips", r.total_flips},
                            {"succeeded", r.succeeded},
                            {"final_accuracy", r.final_accuracy}});
        }
        const uint64_t med = median_of(flips);
        const char* mech = profile.mechanism == dram::Mechanism::RH ? "rh" : "rp";
        per_profile[mech] = {{"path", path}, {"runs", runs}, {"median_flips", med}};
        medians.emplace_back(profile.mechanism, med);
    }

    json j;
    j["format_version"] = kFormatVersion;
    j["tool_version"] = kToolVersion;
    j["seeds"] = a.seeds;
    j["profiles"] = per_profile;
    uint64_t med_rh = 0, med_rp = 0;
    for (const auto& [mech, med] : medians)
        (mech == dram::Mechanism::RH ? med_rh : med_rp) = med;
    if (med_rh > 0 && med_rp > 0) {
        j["median_flips_rh"] = med_rh;
        j["median_flips_rp"] = med_rp;
        j["flip_ratio_rh_over_rp"] = static_cast<double>(med_rh) / static_cast<double>(med_rp);
        j["reference_ratio"] = 3.6;  // published hammer/press efficiency reference
    }
    std::ofstream out(a.output, std::ios::binary);
    if (!out) throw IoError("cannot write " + a.output);
    out << j.dump(2) << '\n';
    std::cout << "compare: median flips rh=" << med_rh << " rp=" << med_rp << "\n";
    write_manifest(a.output, "compare",
                   {{"chip", a.chip_path},
                    {"model", a.model_path},
                    {"profiles", a.profiles},
                    {"seeds", a.seeds},
                    {"commit", a.attack.commit},
                    {"direction_aware", a.attack.direction_aware},
                    {"defense", a.attack.defense},
                    {"max_flips", a.attack.max_flips},
                    {"batch_size", a.attack.batch_size}},
                   {a.chip_path, a.model_path, a.profiles}, {a.output}, json::object(),
                   started);
    return 0;
}

struct ReportArgs {
    std::string inputs;  // comma-separated artifact files
    std::string output;
};

int run_report(const ReportArgs& a, Clock::time_point started) {
    std::vector<std::string> files;
    std::istringstream in(a.inputs);
    std::string tok;
    while (std::getline(in, tok, ',')) files.push_back(tok);
    if (files.empty()) throw ValidationError("report: no inputs given");

    std::ostringstream md;
    md << "# Fault-injection report\n";
    for (const std::string& path : files) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot read " + path);
        if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
            json j;
            try {
                f >> j;
            } catch (const json::exception& e) {
                throw ParseError(path + ": " + e.what());
            }
            auto num = [](const json& v) {
                std::ostringstream ss;
                ss.precision(4);
                ss << v.get<double>();
                return ss.str();
            };
            if (j.contains("flip_ratio_rh_over_rp")) {
                md << "\n## Comparison (" << path << ")\n\n";
                md << "| profile | median flips |\n|---|---|\n";
                md << "| hammer | " << j["median_flips_rh"] << " |\n";
                md << "| press | " << j["median_flips_rp"] << " |\n\n";
                md << "Flip ratio (hammer / press): " << num(j["flip_ratio_rh_over_rp"])
                   << " (reference " << num(j["reference_ratio"]) << ")\n";
            } else if (j.contains("flips")) {
                md << "\n## Attack run (" << path << ")\n\n";
                md << "- result: " << (j["succeeded"].get<bool>() ? "success" : "failure")
                   << "\n";
                md << "- accuracy: " << num(j["baseline_accuracy"]) << " -> "
                   << num(j["final_accuracy"]) << " (objective "
                   << num(j["objective_accuracy"]) << ")\n";
                md << "- bit flips: " << j["total_flips"] << "\n";
            } else {
                md << "\n## " << path << "\n\nUnrecognized JSON artifact.\n";
            }
        } else {
            std::string header;
            std::getline(f, header);
            if (header == "budget,cumulative_flips") {
                size_t rows = 0;
                std::string line, last;
                while (std::getline(f, line))
                    if (!line.empty()) {
                        ++rows;
                        last = line;
                    }
                md << "\n## Flip curve (" << path << ")\n\n";
                md << "- points: " << rows << "\n";
                md << "- final: " << last << " (budget,flips)\n";
            } else if (header == "bank,row,column,mechanism,threshold,direction") {
                size_t rows = 0;
                std::string line;
                while (std::getline(f, line))
                    if (!line.empty()) ++rows;
                md << "\n## Profile (" << path << ")\n\n- vulnerable cells: " << rows << "\n";
            } else {
                md << "\n## " << path << "\n\nUnrecognized CSV artifact.\n";
            }
        }
    }
    std::ofstream out(a.output, std::ios::binary);
    if (!out) throw IoError("cannot write " + a.output);
    out << md.str();
    write_manifest(a.output, "report", {{"inputs", a.inputs}}, files, {a.output},
                   json::object(), started);
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& raw_args) {
    const auto started = Clock::now();
    CLI::App app{"DRAM disturbance simulation and profile-aware weight-bit attacks"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    std::string config_dummy;

    // gen-chip
    GenChipArgs gen;
    auto* cmd_gen = app.add_subcommand("gen-chip", "Generate a synthetic chip descriptor");
    cmd_gen->add_option("--config", config_dummy, "JSON config file mirroring the flags");
    cmd_gen->add_option("--banks", gen.geometry.banks);
    cmd_gen->add_option("--rows", gen.geometry.rows_per_bank);
    cmd_gen->add_option("--bits-per-row", gen.geometry.bits_per_row);
    cmd_gen->add_option("--seed", gen.vuln.seed);
    cmd_gen->add_option("--rh-density", gen.vuln.rh_cell_density);
    cmd_gen->add_option("--rp-density", gen.vuln.rp_cell_density);
    cmd_gen->add_option("--overlap", gen.vuln.overlap_fraction);
    cmd_gen->add_option("--rh-bias", gen.vuln.rh_direction_bias);
    cmd_gen->add_option("--rp-bias", gen.vuln.rp_direction_bias);
    cmd_gen->add_option("--hc-low", gen.vuln.hc_threshold_distribution.low);
    cmd_gen->add_option("--hc-high", gen.vuln.hc_threshold_distribution.high);
    cmd_gen->add_option("--press-low", gen.vuln.press_threshold_distribution.low);
    cmd_gen->add_option("--press-high", gen.vuln.press_threshold_distribution.high);
    cmd_gen->add_option("--freq-mhz", gen.timing.freq_mhz);
    cmd_gen->add_option("--t-ras", gen.timing.t_ras_cycles);
    cmd_gen->add_option("--t-rp", gen.timing.t_rp_cycles);
    cmd_gen->add_option("--sleep-cycles", gen.timing.sleep_cycles);
    cmd_gen->add_option("--t-refw-ms", gen.timing.t_refw_ms);
    cmd_gen->add_option("--max-hc", gen.timing.max_hc_per_window);
    cmd_gen->add_option("--threads", gen.threads);
    cmd_gen->add_option("-o,--output", gen.output)->required();

    // profile
    ProfileArgs prof;
    auto* cmd_prof = app.add_subcommand("profile", "Discover vulnerable cells and thresholds");
    cmd_prof->add_option("--config", config_dummy);
    cmd_prof->add_option("--chip", prof.chip_path)->required();
    cmd_prof->add_option("--mech", prof.mech)->required();
    cmd_prof->add_option("--max-budget", prof.max_budget);
    cmd_prof->add_option("--polarity", prof.polarity);
    cmd_prof->add_option("--threads", prof.threads);
    cmd_prof->add_option("-o,--output", prof.output)->required();

    // curve
    CurveArgs curve;
    auto* cmd_curve = app.add_subcommand("curve", "Emit a flip-vs-budget curve CSV");
    cmd_curve->add_option("--config", config_dummy);
    cmd_curve->add_option("--chip", curve.chip_path)->required();
    cmd_curve->add_option("--mech", curve.mech)->required();
    cmd_curve->add_option("--grid", curve.grid);
    cmd_curve->add_option("--max-budget", curve.max_budget);
    cmd_curve->add_option("--threads", curve.threads);
    cmd_curve->add_option("-o,--output", curve.output)->required();

    // train-victim
    TrainArgs train;
    auto* cmd_train = app.add_subcommand("train-victim", "Train and quantize a victim model");
    cmd_train->add_option("--config", config_dummy);
    cmd_train->add_option("--dataset", train.data.kind);
    cmd_train->add_option("--classes", train.data.classes);
    cmd_train->add_option("--samples", train.data.samples);
    cmd_train->add_option("--data-seed", train.data.seed);
    cmd_train->add_option("--arch", train.arch);
    cmd_train->add_option("--epochs", train.epochs);
    cmd_train->add_option("--lr", train.lr);
    cmd_train->add_option("--weight-decay", train.weight_decay);
    cmd_train->add_option("--batch-size", train.batch_size);
    cmd_train->add_option("--nq", train.n_q);
    cmd_train->add_option("--seed", train.seed);
    cmd_train->add_option("--threads", train.threads);
    cmd_train->add_option("-o,--output", train.output)->required();

    // attack
    AttackArgs atk;
    auto* cmd_attack = app.add_subcommand("attack", "Run the profile-aware bit-flip attack");
    cmd_attack->add_option("--config", config_dummy);
    cmd_attack->add_option("--chip", atk.chip_path)->required();
    cmd_attack->add_option("--model", atk.model_path)->required();
    cmd_attack->add_option("--profile", atk.profile_path)->required();
    cmd_attack->add_option("--map", atk.map);
    cmd_attack->add_option("--seed", atk.seed);
    cmd_attack->add_option("--objective-acc", atk.objective_acc);
    cmd_attack->add_option("--max-flips", atk.max_flips);
    cmd_attack->add_option("--commit", atk.commit);
    cmd_attack->add_option("--direction-aware", atk.direction_aware);
    cmd_attack->add_option("--defense", atk.defense);
    cmd_attack->add_option("--batch-size", atk.batch_size);
    cmd_attack->add_option("--candidate-pool", atk.candidate_pool);
    cmd_attack->add_option("--allow-collateral", atk.allow_collateral);
    cmd_attack->add_option("--threads", atk.threads);
    cmd_attack->add_option("-o,--output", atk.output)->required();

    // compare
    CompareArgs cmp;
    auto* cmd_cmp = app.add_subcommand("compare", "Paired attacks across seeds and profiles");
    cmd_cmp->add_option("--config", config_dummy);
    cmd_cmp->add_option("--chip", cmp.chip_path)->required();
    cmd_cmp->add_option("--model", cmp.model_path)->required();
    cmd_cmp->add_option("--profiles", cmp.profiles)->required();
    cmd_cmp->add_option("--seeds", cmp.seeds);
    cmd_cmp->add_option("--objective-acc", cmp.attack.objective_acc);
    cmd_cmp->add_option("--max-flips", cmp.attack.max_flips);
    cmd_cmp->add_option("--commit", cmp.attack.commit);
    cmd_cmp->add_option("--direction-aware", cmp.attack.direction_aware);
    cmd_cmp->add_option("--defense", cmp.attack.defense);
    cmd_cmp->add_option("--batch-size", cmp.attack.batch_size);
    cmd_cmp->add_option("--candidate-pool", cmp.attack.candidate_pool);
    cmd_cmp->add_option("--map", cmp.attack.map);
    cmd_cmp->add_option("--threads", cmp.threads);
    cmd_cmp->add_option("-o,--output", cmp.output)->required();

    // report
    ReportArgs rep;
    auto* cmd_rep = app.add_subcommand("report", "Summarize artifact files (no simulation)");
    cmd_rep->add_option("--config", config_dummy);
    cmd_rep->add_option("--inputs", rep.inputs)->required();
    cmd_rep->add_option("-o,--output", rep.output)->required();

    try {
        const std::vector<std::string> args = apply_config_file(raw_args);
        std::vector<const char*> argv;
        argv.push_back("faultline");
        for (const auto& s : args) argv.push_back(s.c_str());
        app.parse(static_cast<int>(argv.size()), argv.data());

        if (*cmd_gen) return run_gen_chip(gen, started);
        if (*cmd_prof) return run_profile(prof, started);
        if (*cmd_curve) return run_curve(curve, started);
        if (*cmd_train) return run_train(train, started);
        if (*cmd_attack) return run_attack_cmd(atk, started);
        if (*cmd_cmp) {
            cmp.attack.chip_path = cmp.chip_path;
            cmp.attack.model_path = cmp.model_path;
            return run_compare(cmp, started);
        }
        if (*cmd_rep) return run_report(rep, started);
        std::cerr << "error: no subcommand given\n";
        return 2;
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const FingerprintMismatch& e) {
        std::cerr << "fingerprint mismatch: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace faultline::cli
