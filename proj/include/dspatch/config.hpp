#ifndef DSPATCH_CONFIG_HPP
#define DSPATCH_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dspatch/memsim.hpp"
#include "dspatch/trace.hpp"

namespace dspatch {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Everything one simulation run needs: the hardware model, the workload
// source and the metrics toggles. Fully round-trippable through the
// key=value config format, so the echo emitted next to a report reproduces
// the run exactly.
struct RunConfig {
    MemSimConfig sim;

    std::string trace_path; // empty when synthetic
    bool use_synth = true;
    SynthSpec synth;

    bool histograms = true; // delta + compression-loss histograms in reports
    bool baseline = false;  // also replay with prefetchers off for comparison

    bool valid(std::string* why = nullptr) const {
        auto fail = [&](const std::string& m) {
            if (why)
                *why = m;
            return false;
        };
        if (!use_synth && trace_path.empty())
            return fail("no trace path and no synthetic workload");
        if (use_synth) {
            std::string sub;
            if (!synth.valid(&sub))
                return fail("synth spec: " + sub);
        }
        if (sim.dram.channels == 0)
            return fail("dram.channels must be > 0");
        if (!sim.dram.bwmon_config().valid())
            return fail("bandwidth monitor thresholds degenerate; raise capacity");
        for (const CacheLevelConfig* c : {&sim.l1, &sim.l2, &sim.llc}) {
            if (c->ways == 0 || c->size_bytes == 0 || c->size_bytes % (c->ways * 64) != 0)
                return fail("cache level geometry: size must be sets*ways*64");
        }
        if (sim.dspatch.pb_entries == 0 || sim.dspatch.spt_entries == 0)
            return fail("dspatch tables need at least one entry");
        return true;
    }
};

namespace detail {

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "on" || v == "1" || v == "yes")
        return true;
    if (v == "false" || v == "off" || v == "0" || v == "no")
        return false;
    throw ConfigError("not a boolean: " + v);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty())
        out.push_back(cur);
    return out;
}

inline std::vector<unsigned> parse_offsets(const std::string& v) {
    std::vector<unsigned> out;
    for (const std::string& part : split(v, ','))
        out.push_back(static_cast<unsigned>(std::stoul(part)));
    return out;
}

inline std::string join_offsets(const std::vector<unsigned>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i)
        out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

inline const char* synth_kind_name(SynthKind k) {
    switch (k) {
    case SynthKind::Sequential:
        return "sequential";
    case SynthKind::Strided:
        return "strided";
    case SynthKind::RegionPermute:
        return "region-permute";
    case SynthKind::SparseRandom:
        return "sparse-random";
    case SynthKind::MultiPcRegion:
        return "multi-pc-region";
    }
    return "sequential";
}

inline SynthKind synth_kind_of(const std::string& name) {
    for (SynthKind k : {SynthKind::Sequential, SynthKind::Strided, SynthKind::RegionPermute,
                        SynthKind::SparseRandom, SynthKind::MultiPcRegion})
        if (name == synth_kind_name(k))
            return k;
    throw ConfigError("unknown synth kind: " + name);
}

inline const char* policy_name(SelectionPolicy p) {
    switch (p) {
    case SelectionPolicy::Full:
        return "full";
    case SelectionPolicy::AlwaysCovP:
        return "always-covp";
    case SelectionPolicy::ModCovP:
        return "mod-covp";
    }
    return "full";
}

inline SelectionPolicy policy_of(const std::string& name) {
    for (SelectionPolicy p :
         {SelectionPolicy::Full, SelectionPolicy::AlwaysCovP, SelectionPolicy::ModCovP})
        if (name == policy_name(p))
            return p;
    throw ConfigError("unknown dspatch mode: " + name);
}

struct KeyDef {
    const char* name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<KeyDef>& key_table() {
    auto u32 = [](const std::string& v) { return static_cast<uint32_t>(std::stoul(v)); };
    auto u64 = [](const std::string& v) { return std::stoull(v); };

    static const std::vector<KeyDef> table = {
        // caches
#define DSPATCH_CACHE_KEYS(level)                                                                 \
    {#level ".size_bytes", [u32](RunConfig& c, const std::string& v) { c.sim.level.size_bytes = u32(v); },   \
     [](const RunConfig& c) { return std::to_string(c.sim.level.size_bytes); }},                  \
    {#level ".ways", [u32](RunConfig& c, const std::string& v) { c.sim.level.ways = u32(v); },    \
     [](const RunConfig& c) { return std::to_string(c.sim.level.ways); }},                        \
    {#level ".latency", [u32](RunConfig& c, const std::string& v) { c.sim.level.latency = u32(v); }, \
     [](const RunConfig& c) { return std::to_string(c.sim.level.latency); }},                     \
    {#level ".mshrs", [u32](RunConfig& c, const std::string& v) { c.sim.level.mshrs = u32(v); },  \
     [](const RunConfig& c) { return std::to_string(c.sim.level.mshrs); }}
        DSPATCH_CACHE_KEYS(l1),
        DSPATCH_CACHE_KEYS(l2),
        DSPATCH_CACHE_KEYS(llc),
#undef DSPATCH_CACHE_KEYS
        // dram + bandwidth monitor
        {"dram.channels",
         [u32](RunConfig& c, const std::string& v) { c.sim.dram.channels = u32(v); },
         [](const RunConfig& c) { return std::to_string(c.sim.dram.channels); }},
        {"dram.data_rate_mts",
         [u32](RunConfig& c, const std::string& v) { c.sim.dram.data_rate_mts = u32(v); },
         [](const RunConfig& c) { return std::to_string(c.sim.dram.data_rate_mts); }},
        {"dram.trc_ns",
         [](RunConfig& c, const std::string& v) { c.sim.dram.trc_ns = std::stod(v); },
         [](const RunConfig& c) {
             std::ostringstream os;
             os << c.sim.dram.trc_ns;
             return os.str();
         }},
        {"dram.latency_cycles",
         [u32](RunConfig& c, const std::string& v) { c.sim.dram.latency_cycles = u32(v); },
         [](const RunConfig& c) { return std::to_string(c.sim.dram.latency_cycles); }},
        {"core.freq_ghz",
         [](RunConfig& c, const std::string& v) { c.sim.dram.core_ghz = std::stod(v); },
         [](const RunConfig& c) {
             std::ostringstream os;
             os << c.sim.dram.core_ghz;
             return os.str();
         }},
        {"bwmon.peak_cas_override",
         [u64](RunConfig& c, const std::string& v) { c.sim.dram.peak_cas_override = u64(v); },
         [](const RunConfig& c) { return std::to_string(c.sim.dram.peak_cas_override); }},
        {"bwmon.steady_state_thresholds",
         [](RunConfig& c, const std::string& v) { c.sim.dram.steady_state_thresholds = parse_bool(v); },
         [](const RunConfig& c) { return c.sim.dram.steady_state_thresholds ? "true" : "false"; }},
        // stride prefetcher
        {"stride.enabled",
         [](RunConfig& c, const std::string& v) { c.sim.stride.enabled = parse_bool(v); },
         [](const RunConfig& c) { return c.sim.stride.enabled ? "true" : "false"; }},
        {"stride.degree",
         [u32](RunConfig& c, const std::string& v) { c.sim.stride.degree = u32(v); },
         [](const RunConfig& c) { return std::to_string(c.sim.stride.degree); }},
        {"stride.table_entries",
         [u32](RunConfig& c, const std::string& v) { c.sim.stride.table_entries = u32(v); },
         [](const RunConfig& c) { return std::to_string(c.sim.stride.table_entries); }},
        {"stride.confidence_threshold",
         [u32](RunConfig& c, const std::string& v) { c.sim.stride.confidence_threshold = u32(v); },
         [](const RunConfig& c) { return std::to_string(c.sim.stride.confidence_threshold); }},
        // dspatch engine
        {"dspatch.enabled",
         [](RunConfig& c, const std::string& v) { c.sim.dspatch_enabled = parse_bool(v); },
         [](const RunConfig& c) { return c.sim.dspatch_enabled ? "true" : "false"; }},
        {"dspatch.mode",
         [](RunConfig& c, const std::string& v) { c.sim.dspatch.policy = policy_of(v); },
         [](const RunConfig& c) { return std::string(policy_name(c.sim.dspatch.policy)); }},
        {"dspatch.pb_entries",
         [u32](RunConfig& c, const std::string& v) { c.sim.dspatch.pb_entries = u32(v); },
         [](const RunConfig& c) { return std::to_string(c.sim.dspatch.pb_entries); }},
        {"dspatch.spt_entries",
         [u32](RunConfig& c, const std::string& v) { c.sim.dspatch.spt_entries = u32(v); },
         [](const RunConfig& c) { return std::to_string(c.sim.dspatch.spt_entries); }},
        {"dspatch.or_cap",
         [](RunConfig& c, const std::string& v) { c.sim.dspatch.or_cap = static_cast<uint8_t>(std::stoul(v)); },
         [](const RunConfig& c) { return std::to_string(c.sim.dspatch.or_cap); }},
        {"dspatch.acc_thr_quartile",
         [](RunConfig& c, const std::string& v) {
             c.sim.dspatch.acc_thr_quartile = static_cast<uint8_t>(std::stoul(v));
         },
         [](const RunConfig& c) { return std::to_string(c.sim.dspatch.acc_thr_quartile); }},
        {"dspatch.cov_thr_quartile",
         [](RunConfig& c, const std::string& v) {
             c.sim.dspatch.cov_thr_quartile = static_cast<uint8_t>(std::stoul(v));
         },
         [](const RunConfig& c) { return std::to_string(c.sim.dspatch.cov_thr_quartile); }},
        {"dspatch.prefetch_triggers",
         [](RunConfig& c, const std::string& v) { c.sim.prefetch_triggers = parse_bool(v); },
         [](const RunConfig& c) { return c.sim.prefetch_triggers ? "true" : "false"; }},
        // metrics
        {"metrics.pollution",
         [](RunConfig& c, const std::string& v) { c.sim.track_pollution = parse_bool(v); },
         [](const RunConfig& c) { return c.sim.track_pollution ? "true" : "false"; }},
        {"metrics.reuse_window",
         [u64](RunConfig& c, const std::string& v) { c.sim.reuse_window = u64(v); },
         [](const RunConfig& c) { return std::to_string(c.sim.reuse_window); }},
        {"metrics.histograms",
         [](RunConfig& c, const std::string& v) { c.histograms = parse_bool(v); },
         [](const RunConfig& c) { return c.histograms ? "true" : "false"; }},
        {"metrics.baseline",
         [](RunConfig& c, const std::string& v) { c.baseline = parse_bool(v); },
         [](const RunConfig& c) { return c.baseline ? "true" : "false"; }},
        // workload source
        {"run.trace",
         [](RunConfig& c, const std::string& v) {
             c.trace_path = v;
             c.use_synth = v.empty();
         },
         [](const RunConfig& c) { return c.trace_path; }},
        {"run.synth.kind",
         [](RunConfig& c, const std::string& v) { c.synth.kind = synth_kind_of(v); },
         [](const RunConfig& c) { return std::string(synth_kind_name(c.synth.kind)); }},
        {"run.synth.pages",
         [u64](RunConfig& c, const std::string& v) { c.synth.pages = u64(v); },
         [](const RunConfig& c) { return std::to_string(c.synth.pages); }},
        {"run.synth.base_page",
         [u64](RunConfig& c, const std::string& v) { c.synth.base_page = u64(v); },
         [](const RunConfig& c) { return std::to_string(c.synth.base_page); }},
        {"run.synth.pc",
         [](RunConfig& c, const std::string& v) { c.synth.pc = std::stoull(v, nullptr, 0); },
         [](const RunConfig& c) { return "0x" + [&] {
              std::ostringstream os;
              os << std::hex << c.synth.pc;
              return os.str();
          }(); }},
        {"run.synth.stride",
         [](RunConfig& c, const std::string& v) { c.synth.stride = std::stoi(v); },
         [](const RunConfig& c) { return std::to_string(c.synth.stride); }},
        {"run.synth.offsets",
         [](RunConfig& c, const std::string& v) { c.synth.offsets = parse_offsets(v); },
         [](const RunConfig& c) { return join_offsets(c.synth.offsets); }},
        {"run.synth.density",
         [](RunConfig& c, const std::string& v) { c.synth.density = std::stod(v); },
         [](const RunConfig& c) {
             std::ostringstream os;
             os << c.synth.density;
             return os.str();
         }},
        {"run.synth.jitter",
         [u32](RunConfig& c, const std::string& v) { c.synth.jitter = u32(v); },
         [](const RunConfig& c) { return std::to_string(c.synth.jitter); }},
        {"run.synth.pcs",
         [](RunConfig& c, const std::string& v) {
             c.synth.pcs.clear();
             for (const std::string& part : split(v, ','))
                 c.synth.pcs.push_back(std::stoull(part, nullptr, 0));
         },
         [](const RunConfig& c) {
             std::string out;
             for (size_t i = 0; i < c.synth.pcs.size(); ++i) {
                 std::ostringstream os;
                 os << std::hex << c.synth.pcs[i];
                 out += (i ? "," : "") + ("0x" + os.str());
             }
             return out;
         }},
        {"run.synth.offset_sets",
         [](RunConfig& c, const std::string& v) {
             c.synth.offset_sets.clear();
             for (const std::string& set : split(v, '|'))
                 c.synth.offset_sets.push_back(parse_offsets(set));
         },
         [](const RunConfig& c) {
             std::string out;
             for (size_t i = 0; i < c.synth.offset_sets.size(); ++i)
                 out += (i ? "|" : "") + join_offsets(c.synth.offset_sets[i]);
             return out;
         }},
        {"run.seed",
         [u64](RunConfig& c, const std::string& v) { c.synth.seed = u64(v); },
         [](const RunConfig& c) { return std::to_string(c.synth.seed); }},
    };
    return table;
}

} // namespace detail

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const detail::KeyDef& def : detail::key_table()) {
        if (key == def.name) {
            try {
                def.set(cfg, value);
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception&) {
                throw ConfigError("bad value for " + key + ": '" + value + "'");
            }
            return;
        }
    }
    throw ConfigError("unknown config key: " + key);
}

// key = value lines; '#' starts a comment; blank lines ignored.
inline void load_config_stream(RunConfig& cfg, std::istream& is, const std::string& name) {
    std::string line;
    uint64_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        auto trim = [](std::string s) {
            size_t b = s.find_first_not_of(" \t\r");
            size_t e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        std::string stripped = trim(line);
        if (stripped.empty())
            continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key = value");
        try {
            apply_config_entry(cfg, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(name + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw ConfigError("cannot open config file: " + path);
    load_config_stream(cfg, f, path);
}

// Emits every key with its resolved value; feeding the result back through
// load_config_stream reproduces the configuration.
inline std::string echo_config(const RunConfig& cfg) {
    std::ostringstream os;
    for (const detail::KeyDef& def : detail::key_table()) {
        std::string v = def.get(cfg);
        if (std::string(def.name) == "run.trace" && v.empty())
            continue; // synthetic runs carry no trace path
        os << def.name << " = " << v << "\n";
    }
    return os.str();
}

} // namespace dspatch

#endif // DSPATCH_CONFIG_HPP
