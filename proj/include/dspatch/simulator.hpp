#ifndef DSPATCH_SIMULATOR_HPP
#define DSPATCH_SIMULATOR_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "dspatch/config.hpp"
#include "dspatch/memsim.hpp"
#include "dspatch/metrics.hpp"

namespace dspatch {

// Runs one trace through a fresh hierarchy and collects the accounting.
inline RunMetrics run_simulation(const MemSimConfig& cfg, const TraceFile& trace) {
    MemoryHierarchy sim(cfg);
    for (const AccessRecord& r : trace.records)
        sim.step(r);
    sim.finish();

    RunMetrics m;
    const auto& c = sim.counters();
    m.demands = c.demands;
    m.demand_hits_l1 = c.demand_hits_l1;
    m.demand_hits_l2 = c.demand_hits_l2;
    m.demand_hits_llc = c.demand_hits_llc;
    m.demand_hits_inflight = c.demand_hits_inflight;
    m.demand_dram_fetches = c.demand_dram_fetches;
    m.covered_demands = c.covered_demands;
    m.prefetches_issued_stride = c.prefetches_issued_stride;
    m.prefetches_issued_dspatch = c.prefetches_issued_dspatch;
    m.prefetches_issued = c.prefetches_issued_stride + c.prefetches_issued_dspatch;
    m.prefetch_dram_fills = c.prefetch_dram_fills;
    m.prefetches_useful = c.prefetches_useful;
    m.prefetches_unused = c.prefetches_unused;
    m.prefetches_unresolved = sim.unresolved_prefetches();
    m.prefetches_dropped_mshr = c.prefetches_dropped_mshr;
    m.prefetches_deduped = c.prefetches_deduped;
    m.cas_count = sim.bwmon().total_cas();
    m.bw_histogram = sim.bwmon().sample_histogram();
    m.bw_mean_signal = sim.bwmon().mean_signal();
    const EngineStats& es = sim.engine().stats();
    m.choice_covp = es.choice_covp;
    m.choice_accp = es.choice_accp;
    m.choice_none = es.choice_none;
    m.covp_resets = es.covp_resets;
    m.spt_trainings = es.trainings;
    if (cfg.track_pollution)
        m.pollution = sim.pollution_breakdown();
    auto storage = StorageAccount::of(cfg.dspatch);
    m.storage_pb_bits = storage.pb_bits;
    m.storage_spt_bits = storage.spt_bits;
    m.end_cycle = sim.now();
    return m;
}

inline TraceFile load_workload(const RunConfig& cfg) {
    return cfg.use_synth ? generate(cfg.synth) : parse(cfg.trace_path);
}

// --- report emission -------------------------------------------------------

inline nlohmann::ordered_json metrics_to_json(const RunMetrics& m) {
    nlohmann::ordered_json j;
    j["demand"] = {
        {"total", m.demands},
        {"hits_l1", m.demand_hits_l1},
        {"hits_l2", m.demand_hits_l2},
        {"hits_llc", m.demand_hits_llc},
        {"hits_inflight", m.demand_hits_inflight},
        {"dram_fetches", m.demand_dram_fetches},
        {"covered", m.covered_demands},
    };
    if (m.baseline_demand_dram_fetches)
        j["demand"]["baseline_dram_fetches"] = *m.baseline_demand_dram_fetches;
    j["prefetch"] = {
        {"issued", m.prefetches_issued},
        {"issued_stride", m.prefetches_issued_stride},
        {"issued_dspatch", m.prefetches_issued_dspatch},
        {"dram_fills", m.prefetch_dram_fills},
        {"useful", m.prefetches_useful},
        {"unused", m.prefetches_unused},
        {"unresolved", m.prefetches_unresolved},
        {"dropped_mshr", m.prefetches_dropped_mshr},
        {"deduped", m.prefetches_deduped},
    };
    auto opt = [](std::optional<double> v) {
        return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    };
    j["coverage"] = opt(coverage(m));
    j["accuracy"] = opt(accuracy(m));
    j["misprediction_rate"] = opt(misprediction_rate(m));
    j["dram"] = {
        {"cas_count", m.cas_count},
        {"bw_histogram", m.bw_histogram},
        {"bw_mean_signal", m.bw_mean_signal},
    };
    j["dspatch"] = {
        {"choice_covp", m.choice_covp},
        {"choice_accp", m.choice_accp},
        {"choice_none", m.choice_none},
        {"covp_resets", m.covp_resets},
        {"spt_trainings", m.spt_trainings},
    };
    if (m.pollution) {
        j["pollution"] = {
            {"no_reuse", m.pollution->no_reuse},
            {"prefetched_before_use", m.pollution->prefetched_before_use},
            {"bad_pollution", m.pollution->bad_pollution},
        };
    }
    j["storage"] = {
        {"pb_bits", m.storage_pb_bits},
        {"spt_bits", m.storage_spt_bits},
        {"total_bits", m.storage_pb_bits + m.storage_spt_bits},
    };
    j["end_cycle"] = m.end_cycle;
    return j;
}

// Flat key,value rows for spreadsheet use.
inline std::string metrics_to_csv(const RunMetrics& m) {
    std::ostringstream os;
    os << "key,value\n";
    auto flatten = [&os](const nlohmann::ordered_json& j, const std::string& prefix,
                         auto&& self) -> void {
        for (auto it = j.begin(); it != j.end(); ++it) {
            std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
            if (it->is_object()) {
                self(*it, key, self);
            } else if (it->is_array()) {
                for (size_t i = 0; i < it->size(); ++i)
                    os << key << "[" << i << "]," << (*it)[i].dump() << "\n";
            } else {
                os << key << "," << it->dump() << "\n";
            }
        }
    };
    auto j = metrics_to_json(m);
    flatten(j, "", flatten);
    return os.str();
}

// Long-format histogram CSV: one (histogram, key, value) row per bucket.
inline std::string histograms_to_csv(const std::map<int, uint64_t>& deltas,
                                     const CompressionLoss& loss,
                                     const std::array<uint64_t, 4>& bw) {
    std::ostringstream os;
    os << "histogram,key,value\n";
    for (const auto& [delta, count] : deltas)
        os << "line_delta," << delta << "," << count << "\n";
    std::map<int, uint64_t> loss_pct;
    for (double r : loss.per_page_ratio)
        ++loss_pct[static_cast<int>(r * 100.0)];
    for (const auto& [pct, count] : loss_pct)
        os << "compression_loss_pct," << pct << "," << count << "\n";
    for (unsigned lvl = 0; lvl < 4; ++lvl)
        os << "bw_signal," << lvl << "," << bw[lvl] << "\n";
    return os.str();
}

struct RunArtifacts {
    RunMetrics metrics;
    std::filesystem::path metrics_json;
    std::filesystem::path metrics_csv;
    std::filesystem::path histograms_csv; // empty when disabled
    std::filesystem::path config_echo;
};

// cmd_run core: executes the configured run and writes the report files.
inline RunArtifacts execute_run(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    std::string why;
    if (!cfg.valid(&why))
        throw ConfigError(why);
    TraceFile trace = load_workload(cfg);

    RunArtifacts art;
    art.metrics = run_simulation(cfg.sim, trace);
    if (cfg.baseline) {
        MemSimConfig off = cfg.sim;
        off.stride.enabled = false;
        off.dspatch_enabled = false;
        off.track_pollution = false;
        art.metrics.baseline_demand_dram_fetches =
            run_simulation(off, trace).demand_dram_fetches;
    }

    std::filesystem::create_directories(out_dir);
    auto write = [&](const std::filesystem::path& p, const std::string& content) {
        std::ofstream f(p, std::ios::binary);
        if (!f)
            throw ConfigError("cannot write " + p.string());
        f << content;
        if (!f)
            throw ConfigError("write failed: " + p.string());
    };

    art.metrics_json = out_dir / "metrics.json";
    write(art.metrics_json, metrics_to_json(art.metrics).dump(2) + "\n");
    art.metrics_csv = out_dir / "metrics.csv";
    write(art.metrics_csv, metrics_to_csv(art.metrics));
    if (cfg.histograms) {
        art.histograms_csv = out_dir / "histograms.csv";
        write(art.histograms_csv, histograms_to_csv(delta_histogram(trace),
                                                    CompressionLoss::of(trace),
                                                    art.metrics.bw_histogram));
    }
    art.config_echo = out_dir / "config.echo";
    write(art.config_echo, echo_config(cfg));
    return art;
}

// One sweep point: a DRAM capacity setting and/or an engine variant.
struct SweepPoint {
    std::string name;
    unsigned channels = 1;
    unsigned data_rate_mts = 2133;
    SelectionPolicy policy = SelectionPolicy::Full;
};

struct SweepResult {
    std::vector<std::pair<SweepPoint, RunMetrics>> points;
};

// cmd_sweep core: runs every point on the same workload, writes per-point
// reports plus a combined CSV keyed by point name.
inline SweepResult execute_sweep(RunConfig cfg, const std::vector<SweepPoint>& axis,
                                 const std::filesystem::path& out_dir) {
    if (axis.empty())
        throw ConfigError("sweep needs at least one point");
    SweepResult result;
    for (const SweepPoint& pt : axis) {
        RunConfig point_cfg = cfg;
        point_cfg.sim.dram.channels = pt.channels;
        point_cfg.sim.dram.data_rate_mts = pt.data_rate_mts;
        point_cfg.sim.dspatch.policy = pt.policy;
        auto art = execute_run(point_cfg, out_dir / pt.name);
        result.points.emplace_back(pt, art.metrics);
    }

    std::ostringstream os;
    os << "point,channels,data_rate_mts,mode,coverage,accuracy,misprediction_rate,"
          "bw_mean_signal,choice_covp,choice_accp,choice_none,cas_count,demand_dram_fetches\n";
    auto num = [](std::optional<double> v) { return v ? std::to_string(*v) : std::string("nan"); };
    for (const auto& [pt, m] : result.points) {
        os << pt.name << "," << pt.channels << "," << pt.data_rate_mts << ","
           << detail::policy_name(pt.policy) << "," << num(coverage(m)) << ","
           << num(accuracy(m)) << "," << num(misprediction_rate(m)) << "," << m.bw_mean_signal
           << "," << m.choice_covp << "," << m.choice_accp << "," << m.choice_none << ","
           << m.cas_count << "," << m.demand_dram_fetches << "\n";
    }
    std::filesystem::create_directories(out_dir);
    std::ofstream f(out_dir / "sweep.csv", std::ios::binary);
    f << os.str();
    if (!f)
        throw ConfigError("cannot write sweep.csv");
    return result;
}

} // namespace dspatch

#endif // DSPATCH_SIMULATOR_HPP
