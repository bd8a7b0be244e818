// dspatchsim: trace generation, simulation runs, capacity sweeps, reports.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dspatch/simulator.hpp"

namespace fs = std::filesystem;
using namespace dspatch;

namespace {

struct SynthCli {
    std::string kind;
    uint64_t pages = 0;
    uint64_t base_page = 0;
    std::string pc;
    uint64_t seed = 0;
    int stride = 0;
    std::string offsets;
    int trigger = -1;
    double density = -1.0;
    int jitter = -1;
    std::string pcs;
    std::string offset_sets;

    void add_options(CLI::App* app, bool kind_required) {
        auto* k = app->add_option("--synth,--kind", kind,
                                  "workload kind: sequential|strided|region-permute|"
                                  "sparse-random|multi-pc-region");
        if (kind_required)
            k->required();
        app->add_option("--pages", pages, "pages to generate");
        app->add_option("--base-page", base_page, "first physical page number");
        app->add_option("--pc", pc, "instruction address for single-PC generators");
        app->add_option("--seed", seed, "generator seed");
        app->add_option("--stride", stride, "line stride for the strided generator");
        app->add_option("--offsets", offsets, "comma-separated line offsets (trigger first)");
        app->add_option("--trigger", trigger, "trigger offset; moved to the front of --offsets");
        app->add_option("--density", density, "line density in (0,1] for sparse-random");
        app->add_option("--jitter", jitter, "extra random offsets per page (region generators)");
        app->add_option("--pcs", pcs, "comma-separated PCs for multi-pc-region");
        app->add_option("--offset-sets", offset_sets,
                        "offset sets for multi-pc-region, sets separated by '|'");
    }

    // Applies only the options the user actually set, on top of cfg.synth.
    void apply(RunConfig& cfg) const {
        if (!kind.empty()) {
            apply_config_entry(cfg, "run.synth.kind", kind);
            cfg.use_synth = true;
        }
        if (pages)
            apply_config_entry(cfg, "run.synth.pages", std::to_string(pages));
        if (base_page)
            apply_config_entry(cfg, "run.synth.base_page", std::to_string(base_page));
        if (!pc.empty())
            apply_config_entry(cfg, "run.synth.pc", pc);
        if (seed)
            apply_config_entry(cfg, "run.seed", std::to_string(seed));
        if (stride)
            apply_config_entry(cfg, "run.synth.stride", std::to_string(stride));
        if (!offsets.empty())
            apply_config_entry(cfg, "run.synth.offsets", offsets);
        if (density >= 0)
            apply_config_entry(cfg, "run.synth.density", std::to_string(density));
        if (jitter >= 0)
            apply_config_entry(cfg, "run.synth.jitter", std::to_string(jitter));
        if (!pcs.empty())
            apply_config_entry(cfg, "run.synth.pcs", pcs);
        if (!offset_sets.empty())
            apply_config_entry(cfg, "run.synth.offset_sets", offset_sets);
        if (trigger >= 0) {
            auto& offs = cfg.synth.offsets;
            auto it = std::find(offs.begin(), offs.end(), static_cast<unsigned>(trigger));
            if (it != offs.end())
                offs.erase(it);
            offs.insert(offs.begin(), static_cast<unsigned>(trigger));
        }
    }
};

void print_summary(const RunMetrics& m) {
    auto pct = [](std::optional<double> v) {
        if (!v)
            return std::string("n/a");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f%%", *v * 100.0);
        return std::string(buf);
    };
    std::cout << "demands              " << m.demands << "\n"
              << "  dram fetches       " << m.demand_dram_fetches << "\n"
              << "  covered            " << m.covered_demands << "\n"
              << "prefetches issued    " << m.prefetches_issued << " (stride "
              << m.prefetches_issued_stride << ", dspatch " << m.prefetches_issued_dspatch
              << ")\n"
              << "  useful/unused      " << m.prefetches_useful << "/" << m.prefetches_unused
              << " (+" << m.prefetches_unresolved << " unresolved)\n"
              << "coverage             " << pct(coverage(m)) << "\n"
              << "accuracy             " << pct(accuracy(m)) << "\n"
              << "misprediction rate   " << pct(misprediction_rate(m)) << "\n"
              << "cas count            " << m.cas_count << "\n"
              << "bw signal histogram  [" << m.bw_histogram[0] << ", " << m.bw_histogram[1]
              << ", " << m.bw_histogram[2] << ", " << m.bw_histogram[3] << "] mean "
              << m.bw_mean_signal << "\n"
              << "selection mix        covp " << m.choice_covp << ", accp " << m.choice_accp
              << ", none " << m.choice_none << "\n";
    if (m.pollution) {
        std::cout << "pollution            no-reuse " << m.pollution->no_reuse
                  << ", prefetched-before-use " << m.pollution->prefetched_before_use
                  << ", bad " << m.pollution->bad_pollution << "\n";
    }
}

std::vector<SweepPoint> parse_sweep_axis(const std::string& bw_list,
                                         const std::string& variants) {
    std::vector<std::pair<unsigned, unsigned>> capacities;
    for (const std::string& part : detail::split(bw_list, ',')) {
        auto colon = part.find(':');
        if (colon == std::string::npos)
            throw ConfigError("bandwidth point must be <channels>:<data-rate-mts>, got " + part);
        capacities.emplace_back(std::stoul(part.substr(0, colon)),
                                std::stoul(part.substr(colon + 1)));
    }
    std::vector<SelectionPolicy> policies;
    for (const std::string& name : detail::split(variants, ','))
        policies.push_back(detail::policy_of(name));

    if (capacities.empty() && policies.empty())
        throw ConfigError("sweep needs --bw points and/or --variants");
    const bool base_capacity = capacities.empty();
    if (base_capacity)
        capacities.push_back({0, 0}); // keep the run config's capacity
    const bool multi_policy = policies.size() > 1;
    if (policies.empty())
        policies.push_back(SelectionPolicy::Full);

    std::vector<SweepPoint> axis;
    for (auto [ch, mts] : capacities) {
        for (SelectionPolicy p : policies) {
            SweepPoint pt;
            pt.channels = ch;
            pt.data_rate_mts = mts;
            pt.policy = p;
            pt.name = ch ? std::to_string(ch) + "x" + std::to_string(mts) : "";
            if (multi_policy || base_capacity)
                pt.name += (pt.name.empty() ? "" : "-") + std::string(detail::policy_name(p));
            axis.push_back(pt);
        }
    }
    return axis;
}

int cmd_gen(const SynthCli& synth, const std::string& out, bool binary) {
    RunConfig cfg;
    synth.apply(cfg);
    std::string why;
    if (!cfg.synth.valid(&why))
        throw ConfigError("synth spec: " + why);
    TraceFile t = generate(cfg.synth);
    serialize(t, out, binary);
    std::cout << "wrote " << t.records.size() << " records to " << out << "\n";
    return 0;
}

RunConfig build_run_config(const std::string& config_path, const std::string& trace,
                           const SynthCli& synth, const std::vector<std::string>& sets) {
    RunConfig cfg;
    if (!config_path.empty())
        load_config_file(cfg, config_path);
    if (!trace.empty()) {
        apply_config_entry(cfg, "run.trace", trace);
        cfg.use_synth = false;
    }
    synth.apply(cfg);
    for (const std::string& kv : sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got " + kv);
        apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

int cmd_run(const RunConfig& cfg, const std::string& out_dir) {
    auto art = execute_run(cfg, out_dir);
    print_summary(art.metrics);
    std::cout << "reports in " << out_dir << " (metrics.json, metrics.csv"
              << (cfg.histograms ? ", histograms.csv" : "") << ", config.echo)\n";
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& bw_list, const std::string& variants,
              const std::string& out_dir) {
    auto axis = parse_sweep_axis(bw_list, variants);
    for (SweepPoint& pt : axis) {
        if (pt.channels == 0) { // base capacity from the run config
            pt.channels = cfg.sim.dram.channels;
            pt.data_rate_mts = cfg.sim.dram.data_rate_mts;
        }
    }
    auto result = execute_sweep(cfg, axis, out_dir);
    std::cout << "point                coverage  accuracy  mispred   mean-bw  covp/accp/none\n";
    for (const auto& [pt, m] : result.points) {
        auto pct = [](std::optional<double> v) {
            char buf[16];
            if (!v)
                return std::string("  n/a ");
            std::snprintf(buf, sizeof buf, "%6.2f", *v * 100.0);
            return std::string(buf);
        };
        char line[192];
        std::snprintf(line, sizeof line, "%-20s %s%%   %s%%   %s%%   %7.3f  %llu/%llu/%llu",
                      pt.name.c_str(), pct(coverage(m)).c_str(), pct(accuracy(m)).c_str(),
                      pct(misprediction_rate(m)).c_str(), m.bw_mean_signal,
                      static_cast<unsigned long long>(m.choice_covp),
                      static_cast<unsigned long long>(m.choice_accp),
                      static_cast<unsigned long long>(m.choice_none));
        std::cout << line << "\n";
    }
    std::cout << "combined csv: " << (fs::path(out_dir) / "sweep.csv").string() << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& files, const std::string& csv_out) {
    std::ostringstream csv;
    csv << "report,coverage,accuracy,misprediction_rate,demand_dram_fetches,cas_count,"
           "bw_mean_signal\n";
    std::cout << "report                           coverage  accuracy  mispred\n";
    for (const std::string& file : files) {
        std::ifstream f(file);
        if (!f)
            throw ConfigError("cannot open report: " + file);
        nlohmann::json j = nlohmann::json::parse(f);
        auto field = [&](const char* name) -> std::string {
            return j.contains(name) && !j[name].is_null() ? j[name].dump() : "nan";
        };
        auto pct = [&](const char* name) -> std::string {
            if (!j.contains(name) || j[name].is_null())
                return "n/a";
            char buf[16];
            std::snprintf(buf, sizeof buf, "%.2f%%", j[name].get<double>() * 100.0);
            return std::string(buf);
        };
        char line[160];
        std::snprintf(line, sizeof line, "%-32s %-9s %-9s %-9s", file.c_str(),
                      pct("coverage").c_str(), pct("accuracy").c_str(),
                      pct("misprediction_rate").c_str());
        std::cout << line << "\n";
        csv << file << "," << field("coverage") << "," << field("accuracy") << ","
            << field("misprediction_rate") << "," << j["demand"]["dram_fetches"].dump() << ","
            << j["dram"]["cas_count"].dump() << "," << j["dram"]["bw_mean_signal"].dump()
            << "\n";
    }
    if (!csv_out.empty()) {
        std::ofstream f(csv_out, std::ios::binary);
        if (!f)
            throw ConfigError("cannot write " + csv_out);
        f << csv.str();
        std::cout << "merged csv: " << csv_out << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"DSPatch dual-spatial-pattern prefetcher simulator"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic access trace");
    SynthCli gen_synth;
    gen_synth.add_options(gen, /*kind_required=*/true);
    std::string gen_out;
    bool gen_binary = false;
    gen->add_option("--out", gen_out, "output trace path")->required();
    gen->add_flag("--binary", gen_binary, "write the packed binary form");

    // shared run/sweep options
    auto add_run_options = [](CLI::App* cmd, std::string& config_path, std::string& trace,
                              SynthCli& synth, std::vector<std::string>& sets,
                              std::string& out_dir) {
        cmd->add_option("--config", config_path, "key=value config file");
        cmd->add_option("--trace", trace, "input trace file (text or binary)");
        synth.add_options(cmd, /*kind_required=*/false);
        cmd->add_option("--set", sets, "override any config key, e.g. --set dram.channels=2");
        cmd->add_option("--out", out_dir, "report output directory")->required();
    };

    auto* run = app.add_subcommand("run", "simulate one configuration");
    std::string run_config_path, run_trace, run_out;
    SynthCli run_synth;
    std::vector<std::string> run_sets;
    add_run_options(run, run_config_path, run_trace, run_synth, run_sets, run_out);
    std::string run_stride_toggle, run_dspatch_toggle, run_mode;
    run->add_option("--l1-stride", run_stride_toggle, "on|off");
    run->add_option("--dspatch", run_dspatch_toggle, "on|off");
    run->add_option("--dspatch-mode", run_mode, "full|always-covp|mod-covp");

    auto* sweep = app.add_subcommand("sweep", "run one workload across sweep points");
    std::string sweep_config_path, sweep_trace, sweep_out, sweep_bw, sweep_variants;
    SynthCli sweep_synth;
    std::vector<std::string> sweep_sets;
    add_run_options(sweep, sweep_config_path, sweep_trace, sweep_synth, sweep_sets, sweep_out);
    sweep->add_option("--bw", sweep_bw,
                      "DRAM capacity points, e.g. 1:1600,1:2133,2:2133,2:2400");
    sweep->add_option("--variants", sweep_variants, "engine variants, e.g. full,always-covp");

    auto* report = app.add_subcommand("report", "summarize metrics.json reports");
    std::vector<std::string> report_files;
    std::string report_csv;
    report->add_option("files", report_files, "metrics.json files")->required();
    report->add_option("--csv", report_csv, "write a merged csv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen(gen_synth, gen_out, gen_binary);
        if (run->parsed()) {
            RunConfig cfg = build_run_config(run_config_path, run_trace, run_synth, run_sets);
            if (!run_stride_toggle.empty())
                apply_config_entry(cfg, "stride.enabled", run_stride_toggle);
            if (!run_dspatch_toggle.empty())
                apply_config_entry(cfg, "dspatch.enabled", run_dspatch_toggle);
            if (!run_mode.empty())
                apply_config_entry(cfg, "dspatch.mode", run_mode);
            return cmd_run(cfg, run_out);
        }
        if (sweep->parsed()) {
            RunConfig cfg =
                build_run_config(sweep_config_path, sweep_trace, sweep_synth, sweep_sets);
            return cmd_sweep(cfg, sweep_bw, sweep_variants, sweep_out);
        }
        if (report->parsed())
            return cmd_report(report_files, report_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
