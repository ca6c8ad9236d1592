// clear-align: command-line driver for the layer-search and erasure pipeline.
//
//   clear-align gen       --out DIR                       planted activations
//   clear-align search    --data FILE --out DIR           differentiable layer search
//   clear-align oracle    --data FILE --mode brute|stride --out DIR
//   clear-align intervene --run DIR [--oracle DIR] --out DIR
//   clear-align probe     (--data FILE | --run DIR) --out DIR
//   clear-align report    --runs DIR... --out DIR
//
// Exit codes: 0 success, 1 validation/user error, 2 divergence or runtime error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <clear_align/runconfig.hpp>
#include <clear_align/runio.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace clear_align;

namespace {

constexpr const char* kVersion = "0.1.0";

enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("CLEAR_ALIGN_LOG");
        if (!env) return LogLevel::info;
        const std::string v = env;
        if (v == "error") return LogLevel::error;
        if (v == "debug") return LogLevel::debug;
        if (v != "info") std::cerr << "clear-align: CLEAR_ALIGN_LOG=" << v << " not one of error|info|debug, using info\n";
        return LogLevel::info;
    }();
    return level;
}

void log(LogLevel lvl, const std::string& msg) {
    static const char* names[] = {"error", "info", "debug"};
    if (int(lvl) <= int(log_level())) std::cerr << "[clear-align " << names[int(lvl)] << "] " << msg << "\n";
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

struct Globals {
    std::string config_path;
    std::string preset = "desk";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::string out;
};

RunConfig load_config(const Globals& g, const std::vector<std::string>& extras) {
    RunConfig cfg;
    if (g.preset == "fullscale") cfg.merge(RunConfig::fullscale_preset(), "preset fullscale");
    else if (g.preset != "desk") throw ConfigError("--preset must be desk or fullscale, got " + g.preset);
    if (!g.config_path.empty()) {
        if (!fs::exists(g.config_path)) throw PathError("config file not found: " + g.config_path);
        cfg.merge(read_json(g.config_path), g.config_path);
    }
    std::vector<std::pair<std::string, std::string>> kv;
    std::vector<std::string> stray;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& a = extras[i];
        if (a.rfind("--", 0) != 0) {
            stray.push_back(a);
            continue;
        }
        const auto eq = a.find('=');
        if (eq != std::string::npos) kv.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
        else if (i + 1 < extras.size()) kv.emplace_back(a.substr(2), extras[++i]);
        else stray.push_back(a + " (missing value)");
    }
    if (!stray.empty()) {
        std::string msg = "unrecognized arguments:";
        for (const auto& s : stray) msg += " " + s;
        throw ConfigError(msg);
    }
    cfg.apply_overrides(kv);
    json top = json::object();
    if (g.seed) top["seed"] = *g.seed;
    if (g.jobs) top["jobs"] = *g.jobs;
    cfg.merge(top, "global flags");
    return cfg;
}

fs::path require_out(const Globals& g) {
    if (g.out.empty()) throw ConfigError("--out DIR is required");
    fs::create_directories(g.out);
    return g.out;
}

json input_entry(const fs::path& p) {
    if (!fs::exists(p)) throw PathError("input not found: " + p.string());
    return {{"path", p.string()}, {"sha256", sha256_hex(read_file(p))}};
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg, const json& inputs,
                    const std::vector<std::string>& outputs) {
    const json m = {{"command", command},
                    {"version", kVersion},
                    {"config_sha256", sha256_hex(cfg.canonical())},
                    {"inputs", inputs},
                    {"outputs", outputs}};
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

void write_config_echo(const fs::path& dir, const RunConfig& cfg) { write_text(dir / "config.json", cfg.canonical() + "\n"); }

json config_inputs(const Globals& g) {
    json in = json::object();
    if (!g.config_path.empty()) in["config"] = input_entry(g.config_path);
    return in;
}

// ---------------------------------------------------------------------------

int cmd_gen(const Globals& g, const RunConfig& cfg) {
    const auto out = require_out(g);
    const PlantSpec spec = cfg.plant_spec();
    RngStream rng(cfg.get<std::uint64_t>("seed"), 0x6E6E);
    const auto acts = generate_planted(spec, rng);
    write_activations(acts, out / "activations.clra");
    write_config_echo(out, cfg);
    write_manifest(out, "gen", cfg, config_inputs(g), {"activations.clra", "config.json"});
    log(LogLevel::info, "wrote " + (out / "activations.clra").string() + " (planted layer " +
                            std::to_string(spec.planted_layer()) + ")");
    return 0;
}

int cmd_search(const Globals& g, const RunConfig& cfg, const std::string& data) {
    if (data.empty()) throw ConfigError("search needs --data FILE");
    const auto out = require_out(g);
    const auto acts = read_activations(data);
    const TrainConfig tc = cfg.train_config();
    log(LogLevel::info, "search: L=" + std::to_string(acts.L) + ", T_max=" + std::to_string(tc.T_max));
    const SearchResult r = run_search(tc, acts);
    write_search_run(out, r, acts.L, cfg.json());
    json res = search_result_json(r);
    if (acts.meta.is_object() && acts.meta.contains("l_star_plant")) res["l_star_plant"] = acts.meta["l_star_plant"];
    write_text(out / "result.json", res.dump(2) + "\n");
    json in = config_inputs(g);
    in["data"] = input_entry(data);
    write_manifest(out, "search", cfg, in,
                   {"config.json", "trace.csv", "sae.clrs", "masks.clrm", "result.json", "timing.json"});
    log(LogLevel::info, "l* = " + std::to_string(r.l_star) + ", max prob " + fmt17(r.max_prob));
    return 0;
}

int cmd_oracle(const Globals& g, const RunConfig& cfg, const std::string& data, std::string mode) {
    if (data.empty()) throw ConfigError("oracle needs --data FILE");
    if (mode.empty()) mode = cfg.get<std::string>("oracle.mode");
    if (mode != "brute" && mode != "stride") throw ConfigError("--mode must be brute or stride, got " + mode);
    const auto out = require_out(g);
    const auto acts = read_activations(data);
    const TrainConfig tc = cfg.train_config();
    const auto jobs = cfg.get<std::size_t>("jobs");
    const OracleResult o = mode == "brute" ? brute_force_search(tc, acts, jobs)
                                           : stride_search(tc, acts, cfg.get<std::size_t>("oracle.stride"), jobs);
    write_oracle_run(out, o, acts.L, cfg.json());
    json in = config_inputs(g);
    in["data"] = input_entry(data);
    std::vector<std::string> outputs = {"config.json", "scores.csv", "oracle.json", "timing.json"};
    for (const auto& ol : o.layers)
        if (!ol.diverged) {
            outputs.push_back(layer_file(ol.layer, "clrs"));
            outputs.push_back(layer_file(ol.layer, "clrm"));
        }
    write_manifest(out, "oracle", cfg, in, outputs);
    for (const auto& ol : o.layers)
        if (ol.diverged) log(LogLevel::error, "layer " + std::to_string(ol.layer) + " excluded: " + ol.error);
    log(LogLevel::info, mode + " oracle best layer " + std::to_string(o.best_layer) + " after " +
                            std::to_string(o.trainings) + " trainings" + (o.no_clear_optimum ? " (no clear optimum)" : ""));
    return 0;
}

// The data file a search run was made from, checked against its hash.
fs::path run_data_path(const fs::path& run) {
    const json m = read_json(run / "manifest.json");
    if (m.value("command", "") != "search") throw ConfigError(run.string() + " is not a search run directory");
    const fs::path data = m.at("inputs").at("data").at("path").get<std::string>();
    if (sha256_hex(read_file(data)) != m["inputs"]["data"]["sha256"].get<std::string>())
        throw ConfigError("data file " + data.string() + " changed since the search run");
    return data;
}

struct LoadedLayer {
    SparseAutoencoder sae;
    ConceptMasks masks;
};

int cmd_intervene(const Globals& g, const RunConfig& cfg, const std::string& run_dir, const std::string& oracle_dir) {
    if (run_dir.empty()) throw ConfigError("intervene needs --run DIR");
    const auto out = require_out(g);
    const fs::path run = run_dir;
    const fs::path data = run_data_path(run);
    const auto acts = read_activations(data);
    const json result = read_json(run / "result.json");
    const std::size_t l_star = result.at("l_star");

    // Layers ranked by final preference for Top-k.
    std::vector<std::size_t> ranked(acts.L);
    const auto logits = result.at("final_logits").get<std::vector<double>>();
    for (std::size_t l = 0; l < acts.L; ++l) ranked[l] = l;
    std::stable_sort(ranked.begin(), ranked.end(), [&](auto a, auto b) { return logits[a] > logits[b]; });

    std::vector<std::vector<std::size_t>> layer_sets;
    const auto explicit_layers = cfg.get<std::vector<std::size_t>>("intervene.layers");
    if (!explicit_layers.empty()) {
        layer_sets.push_back(explicit_layers);
    } else {
        const auto k = std::max<std::size_t>(1, std::min(cfg.get<std::size_t>("intervene.top_k"), acts.L));
        for (std::size_t j = 1; j <= k; ++j) layer_sets.emplace_back(ranked.begin(), ranked.begin() + std::ptrdiff_t(j));
    }

    std::map<std::size_t, LoadedLayer> loaded;
    loaded[l_star] = {read_sae(run / "sae.clrs"), read_masks(run / "masks.clrm")};
    json inputs = config_inputs(g);
    inputs["run_result"] = input_entry(run / "result.json");
    inputs["run_sae"] = input_entry(run / "sae.clrs");
    inputs["data"] = input_entry(data);
    for (const auto& set : layer_sets)
        for (std::size_t l : set) {
            if (l >= acts.L) throw ConfigError("intervene layer " + std::to_string(l) + " out of range");
            if (loaded.count(l)) continue;
            if (oracle_dir.empty())
                throw ConfigError("layer " + std::to_string(l) + " has no checkpoint; pass --oracle DIR from a brute-force run");
            const fs::path ck = fs::path(oracle_dir) / layer_file(l, "clrs");
            const fs::path mk = fs::path(oracle_dir) / layer_file(l, "clrm");
            if (!fs::exists(ck) || !fs::exists(mk)) throw ConfigError("missing oracle checkpoint for layer " + std::to_string(l));
            loaded[l] = {read_sae(ck), read_masks(mk)};
            inputs["oracle_layer_" + std::to_string(l)] = input_entry(ck);
        }

    // Default grid: the nominal {8, 10, 12} rescaled to this data so that 12
    // lands on the concept-energy minimizing gamma at l*.
    std::vector<double> gammas = cfg.get<std::vector<double>>("intervene.gammas");
    double gamma_star = 0.0;
    const auto plant = plant_of(acts);
    if (plant) {
        const auto pos_rows = acts.rows_of(acts.instances_with(Label::positive));
        const auto& ll = loaded[l_star];
        gamma_star = calibrated_gamma(acts.slabs[l_star], concept_vectors(acts.slabs[l_star], ll.sae, ll.masks),
                                      plant->concept_dir, pos_rows);
    }
    if (gammas.empty()) {
        if (!plant) throw ConfigError("intervene.gammas is empty and the data has no plant metadata to calibrate from");
        for (double nominal : {8.0, 10.0, 12.0}) gammas.push_back(nominal / 12.0 * gamma_star);
    }

    ReportOptions ro;
    ro.seed = cfg.get<std::uint64_t>("seed");
    ro.cv_folds = cfg.get<std::size_t>("probe.cv_folds");
    ro.probe = cfg.probe_config();
    ro.allow_probe_only = !plant.has_value();

    std::string csv =
        "gamma,layers,report_layer,concept_energy_before,concept_energy_after,control_energy_before,control_energy_after,"
        "probe_error_target_before,probe_error_target_after,probe_error_control_before,probe_error_control_after\n";
    auto opt_str = [](const std::optional<double>& v) { return v ? fmt17(*v) : std::string(); };
    json reports = json::array();
    for (double gamma : gammas)
        for (const auto& set : layer_sets) {
            std::vector<LayerIntervention> plan;
            std::string names;
            for (std::size_t l : set) {
                plan.push_back({l, gamma, &loaded[l].sae, &loaded[l].masks});
                names += (names.empty() ? "" : ";") + std::to_string(l);
            }
            const auto after = erase_multi_layer(acts, plan);
            for (std::size_t l : set) {
                const ErasureReport rep = erasure_report(acts, after, l, ro);
                csv += fmt17(gamma) + "," + names + "," + std::to_string(l) + "," + opt_str(rep.concept_energy_before) + "," +
                       opt_str(rep.concept_energy_after) + "," + opt_str(rep.control_energy_before) + "," +
                       opt_str(rep.control_energy_after) + "," + fmt17(rep.probe_error_target_before) + "," +
                       fmt17(rep.probe_error_target_after) + "," + opt_str(rep.probe_error_control_before) + "," +
                       opt_str(rep.probe_error_control_after) + "\n";
                json j = {{"gamma", gamma}, {"layers", set}, {"report_layer", l},
                          {"probe_error_target_before", rep.probe_error_target_before},
                          {"probe_error_target_after", rep.probe_error_target_after}};
                if (plant) {
                    j.update({{"concept_energy_before", *rep.concept_energy_before},
                              {"concept_energy_after", *rep.concept_energy_after},
                              {"control_energy_before", *rep.control_energy_before},
                              {"control_energy_after", *rep.control_energy_after},
                              {"concept_reduction", rep.concept_reduction()},
                              {"control_change", rep.control_change()},
                              {"probe_error_control_before", *rep.probe_error_control_before},
                              {"probe_error_control_after", *rep.probe_error_control_after}});
                }
                reports.push_back(j);
            }
        }
    write_text(out / "interventions.csv", csv);
    write_text(out / "result.json",
               json{{"l_star", l_star}, {"calibrated_gamma", gamma_star}, {"gammas", gammas}, {"reports", reports}}.dump(2) + "\n");
    write_config_echo(out, cfg);
    write_manifest(out, "intervene", cfg, inputs, {"interventions.csv", "result.json", "config.json"});
    log(LogLevel::info, "wrote " + std::to_string(reports.size()) + " erasure reports");
    return 0;
}

int cmd_probe(const Globals& g, const RunConfig& cfg, std::string data, const std::string& run_dir) {
    if (data.empty() && run_dir.empty()) throw ConfigError("probe needs --data FILE or --run DIR");
    if (data.empty()) data = run_data_path(run_dir).string();
    const auto out = require_out(g);
    const auto acts = read_activations(data);
    const auto seed = cfg.get<std::uint64_t>("seed");
    const double frac = cfg.get<double>("probe.train_fraction");
    const ProbeConfig pc = cfg.probe_config();
    json inputs = config_inputs(g);
    inputs["data"] = input_entry(data);
    std::vector<std::string> outputs = {"probe_curve.csv", "config.json"};
    write_text(out / "probe_curve.csv", probe_curve_csv(probe_curve(acts, frac, seed, pc)));

    if (!run_dir.empty()) {
        // Curve after erasing at l* with the first configured gamma, or the
        // calibrated one when none is configured.
        const fs::path run = run_dir;
        const std::size_t l_star = read_json(run / "result.json").at("l_star");
        const auto sae = read_sae(run / "sae.clrs");
        const auto masks = read_masks(run / "masks.clrm");
        auto gammas = cfg.get<std::vector<double>>("intervene.gammas");
        double gamma;
        if (!gammas.empty()) gamma = gammas.front();
        else if (const auto plant = plant_of(acts)) {
            const auto rows = acts.rows_of(acts.instances_with(Label::positive));
            gamma = calibrated_gamma(acts.slabs[l_star], concept_vectors(acts.slabs[l_star], sae, masks), plant->concept_dir, rows);
        } else
            throw ConfigError("no intervene.gammas configured and no plant metadata to calibrate from");
        const auto after = erase_multi_layer(acts, {{l_star, gamma, &sae, &masks}});
        write_text(out / "probe_curve_after.csv", probe_curve_csv(probe_curve(after, frac, seed, pc)));
        inputs["run_sae"] = input_entry(run / "sae.clrs");
        outputs.push_back("probe_curve_after.csv");
    }
    write_config_echo(out, cfg);
    write_manifest(out, "probe", cfg, inputs, outputs);
    return 0;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(read_file(p));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

int cmd_report(const Globals& g, const RunConfig& cfg, const std::vector<std::string>& dirs) {
    if (dirs.empty()) throw ConfigError("report needs --runs DIR...");
    const auto out = require_out(g);
    json report = {{"environment", {{"version", kVersion}, {"seed", cfg.get<std::uint64_t>("seed")}}},
                   {"oracles", json::array()}, {"erasure", json::array()}, {"probe_curves", json::array()}};
    json inputs = json::object();
    std::optional<std::size_t> search_l, brute_l;
    std::optional<std::uint64_t> search_cost, brute_cost;

    for (const auto& d : dirs) {
        const fs::path dir = d;
        const json m = read_json(dir / "manifest.json");
        for (const auto& f : m.at("outputs"))
            if (!fs::exists(dir / f.get<std::string>()))
                throw PathError("artifact " + (dir / f.get<std::string>()).string() + " listed in manifest is missing");
        inputs[d] = input_entry(dir / "manifest.json");
        const std::string cmd = m.at("command");
        if (cmd == "search") {
            const json r = read_json(dir / "result.json");
            const std::string echoed = read_file(dir / "config.json");
            const json echoed_cfg = json::parse(echoed);
            const std::string hash = sha256_hex(echoed_cfg.dump(2));
            if (hash != m.at("config_sha256")) throw ConfigError("config hash in " + d + " does not match its echoed config");
            report["search"] = {{"dir", d}, {"l_star", r.at("l_star")}, {"max_prob", r.at("max_prob")},
                                {"sae_grad_evals", r.at("sae_grad_evals")}, {"wall_clock_s", read_json(dir / "timing.json").at("wall_clock_s")}};
            if (r.contains("l_star_plant")) report["search"]["l_star_plant"] = r["l_star_plant"];
            report["environment"]["config_sha256"] = hash;
            report["environment"]["config"] = echoed_cfg;
            search_l = r.at("l_star").get<std::size_t>();
            search_cost = r.at("sae_grad_evals").get<std::uint64_t>();
        } else if (cmd == "oracle") {
            const json o = read_json(dir / "oracle.json");
            report["oracles"].push_back({{"dir", d}, {"mode", o.at("mode")}, {"best_layer", o.at("best_layer")},
                                         {"trainings", o.at("trainings")}, {"sae_grad_evals", o.at("sae_grad_evals")},
                                         {"no_clear_optimum", o.at("no_clear_optimum")},
                                         {"wall_clock_s", read_json(dir / "timing.json").at("wall_clock_s")}});
            if (o.at("mode") == "brute") {
                brute_l = o.at("best_layer").get<std::size_t>();
                brute_cost = o.at("sae_grad_evals").get<std::uint64_t>();
            }
        } else if (cmd == "intervene") {
            report["erasure"].push_back({{"dir", d}, {"result", read_json(dir / "result.json")}});
        } else if (cmd == "probe") {
            json curves = {{"dir", d}};
            for (const char* name : {"probe_curve.csv", "probe_curve_after.csv"}) {
                if (!fs::exists(dir / name)) continue;
                std::vector<double> errs;
                const auto rows = read_csv(dir / name);
                for (std::size_t i = 1; i < rows.size(); ++i) errs.push_back(std::stod(rows[i].at(1)));
                curves[std::string(name) == "probe_curve.csv" ? "before" : "after"] = errs;
            }
            report["probe_curves"].push_back(curves);
        } else {
            log(LogLevel::debug, "skipping " + d + " (" + cmd + ")");
        }
    }
    if (search_l && brute_l) {
        report["comparison"] = {{"l_star_search", *search_l}, {"l_star_brute", *brute_l},
                                {"agreement", std::abs(long(*search_l) - long(*brute_l))},
                                {"cost_search", *search_cost}, {"cost_brute", *brute_cost},
                                {"cost_ratio", double(*brute_cost) / double(*search_cost)}};
    }
    write_text(out / "report.json", report.dump(2) + "\n");
    write_manifest(out, "report", cfg, inputs, {"report.json"});
    log(LogLevel::info, "wrote " + (out / "report.json").string());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"clear-align: differentiable intervention-layer search and SAE concept erasure on planted activations"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.fallthrough();
    app.allow_extras();   // config overrides; validated by load_config

    Globals g;
    app.add_option("--config", g.config_path, "JSON config file (flat dotted keys or nested objects)");
    app.add_option("--preset", g.preset, "optimizer defaults: desk (planted data) or fullscale");
    app.add_option("--seed", g.seed, "run seed (overrides config 'seed')");
    app.add_option("--jobs", g.jobs, "parallel workers for oracle layers");
    app.add_option("--out", g.out, "output directory");

    std::string data, mode, run_dir, oracle_dir;
    std::vector<std::string> runs;
    const char* override_help = "  Any config key can be overridden as --<key> VALUE, e.g. --train.lambda 0.5";

    auto* gen = app.add_subcommand("gen", "generate planted activations");
    auto* search = app.add_subcommand("search", "run the differentiable layer search");
    search->add_option("--data", data, "activation file (.clra)");
    auto* oracle = app.add_subcommand("oracle", "brute-force or stride oracle over layers");
    oracle->add_option("--data", data, "activation file (.clra)");
    oracle->add_option("--mode", mode, "brute | stride");
    auto* intervene = app.add_subcommand("intervene", "apply erasure and write reports");
    intervene->add_option("--run", run_dir, "search run directory");
    intervene->add_option("--oracle", oracle_dir, "brute-force oracle directory (for layers other than l*)");
    auto* probe = app.add_subcommand("probe", "layer-wise linear probe curve");
    probe->add_option("--data", data, "activation file (.clra)");
    probe->add_option("--run", run_dir, "search run directory (adds an after-erasure curve)");
    auto* report = app.add_subcommand("report", "consolidate run directories");
    report->add_option("--runs", runs, "run directories")->expected(1, -1);
    for (auto* sub : {gen, search, oracle, intervene, probe, report}) {
        sub->allow_extras();
        sub->footer(override_help);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        const RunConfig cfg = load_config(g, app.remaining(true));
        log(LogLevel::debug, "config:\n" + cfg.canonical());
        if (sub == gen) return cmd_gen(g, cfg);
        if (sub == search) return cmd_search(g, cfg, data);
        if (sub == oracle) return cmd_oracle(g, cfg, data, mode);
        if (sub == intervene) return cmd_intervene(g, cfg, run_dir, oracle_dir);
        if (sub == probe) return cmd_probe(g, cfg, data, run_dir);
        if (sub == report) return cmd_report(g, cfg, runs);
    } catch (const Error& e) {
        log(LogLevel::error, e.what());
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        log(LogLevel::error, std::string("invalid JSON value: ") + e.what());
        return 1;
    } catch (const fs::filesystem_error& e) {
        log(LogLevel::error, std::string("path error: ") + e.what());
        return 1;
    } catch (const std::exception& e) {
        log(LogLevel::error, std::string("runtime error: ") + e.what());
        return 2;
    }
    return 1;
}
