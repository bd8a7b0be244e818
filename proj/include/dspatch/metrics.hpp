#ifndef DSPATCH_METRICS_HPP
#define DSPATCH_METRICS_HPP

#include <array>
#include <cassert>
#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "dspatch/bitpattern.hpp"
#include "dspatch/engine.hpp"
#include "dspatch/trace.hpp"

namespace dspatch {

// LLC victims evicted by inaccurate prefetches, classified by what happens
// to the victim next.
struct PollutionBreakdown {
    uint64_t no_reuse = 0;             // no demand within the reuse window
    uint64_t prefetched_before_use = 0; // brought back (or still on-die) first
    uint64_t bad_pollution = 0;        // next demand missed to DRAM

    uint64_t total() const { return no_reuse + prefetched_before_use + bad_pollution; }
};

// Tracks LLC victim addresses evicted by prefetch fills and the fate of the
// evicting prefetch. A victim only counts once its evictor is confirmed
// inaccurate (evicted from all on-die caches without use); victims of
// prefetches that end up used are discarded. Victims with no demand before
// the trace ends are counted as NoReuse.
class PollutionTracker {
public:
    explicit PollutionTracker(uint64_t reuse_window = 10'000'000)
        : reuse_window_(reuse_window) {}

    // An LLC fill caused by prefetch `fill_id` evicted `victim_line`.
    void on_llc_prefetch_victim(uint64_t victim_line, uint64_t fill_id, uint64_t seq) {
        pending_by_line_[victim_line].push_back({fill_id, seq, false});
    }

    // Any prefetch fill of `line`, at any cache level.
    void on_line_prefetched(uint64_t line) {
        auto it = pending_by_line_.find(line);
        if (it == pending_by_line_.end())
            return;
        for (Victim& v : it->second)
            v.reprefetched = true;
    }

    // A demand access touched `line`; hit_on_die is false when it had to go
    // to DRAM (in-flight prefetch hits count as on-die).
    void on_demand(uint64_t seq, uint64_t line, bool hit_on_die) {
        auto it = pending_by_line_.find(line);
        if (it == pending_by_line_.end())
            return;
        for (Victim& v : it->second) {
            Outcome out;
            if (seq - v.evict_seq > reuse_window_)
                out = Outcome::NoReuse;
            else if (v.reprefetched || hit_on_die)
                out = Outcome::PrefetchedBeforeUse;
            else
                out = Outcome::BadPollution;
            resolve(v.fill_id, out);
        }
        pending_by_line_.erase(it);
    }

    // Final verdict for a prefetch: used by a demand, or dead (evicted from
    // every on-die cache without use).
    void on_prefetch_fate(uint64_t fill_id, bool used) {
        assert(!fates_.count(fill_id));
        fates_[fill_id] = used;
        auto it = stashed_.find(fill_id);
        if (it == stashed_.end())
            return;
        if (!used)
            for (Outcome out : it->second)
                count(out);
        stashed_.erase(it);
    }

    // Classifies victims never demanded again and returns the breakdown.
    PollutionBreakdown finalize() {
        for (auto& [line, victims] : pending_by_line_)
            for (Victim& v : victims)
                resolve(v.fill_id, Outcome::NoReuse);
        pending_by_line_.clear();
        return breakdown_;
    }

private:
    enum class Outcome { NoReuse, PrefetchedBeforeUse, BadPollution };

    struct Victim {
        uint64_t fill_id;
        uint64_t evict_seq;
        bool reprefetched;
    };

    void count(Outcome out) {
        switch (out) {
        case Outcome::NoReuse:
            ++breakdown_.no_reuse;
            break;
        case Outcome::PrefetchedBeforeUse:
            ++breakdown_.prefetched_before_use;
            break;
        case Outcome::BadPollution:
            ++breakdown_.bad_pollution;
            break;
        }
    }

    void resolve(uint64_t fill_id, Outcome out) {
        auto fate = fates_.find(fill_id);
        if (fate == fates_.end()) {
            stashed_[fill_id].push_back(out); // evictor's fate still unknown
        } else if (!fate->second) {
            count(out); // evictor confirmed inaccurate
        }
    }

    uint64_t reuse_window_;
    std::unordered_map<uint64_t, std::vector<Victim>> pending_by_line_;
    std::unordered_map<uint64_t, bool> fates_; // fill_id -> used
    std::unordered_map<uint64_t, std::vector<Outcome>> stashed_;
    PollutionBreakdown breakdown_;
};

// Aggregated accounting of one simulation run.
struct RunMetrics {
    // Demand stream.
    uint64_t demands = 0;
    uint64_t demand_hits_l1 = 0;
    uint64_t demand_hits_l2 = 0;
    uint64_t demand_hits_llc = 0;
    uint64_t demand_hits_inflight = 0;
    uint64_t demand_dram_fetches = 0;
    uint64_t covered_demands = 0; // demand hits on undemanded DRAM prefetches
    std::optional<uint64_t> baseline_demand_dram_fetches; // prefetch-off replay

    // Prefetch stream.
    uint64_t prefetches_issued = 0;
    uint64_t prefetches_issued_stride = 0;
    uint64_t prefetches_issued_dspatch = 0;
    uint64_t prefetch_dram_fills = 0;
    uint64_t prefetches_useful = 0;
    uint64_t prefetches_unused = 0;      // confirmed dead
    uint64_t prefetches_unresolved = 0;  // still resident or in flight at end
    uint64_t prefetches_dropped_mshr = 0;
    uint64_t prefetches_deduped = 0;

    // DRAM / bandwidth signal.
    uint64_t cas_count = 0;
    std::array<uint64_t, 4> bw_histogram{};
    double bw_mean_signal = 0.0;

    // DSPatch selection mix.
    uint64_t choice_covp = 0;
    uint64_t choice_accp = 0;
    uint64_t choice_none = 0;
    uint64_t covp_resets = 0;
    uint64_t spt_trainings = 0;

    std::optional<PollutionBreakdown> pollution;

    // Hardware bit budget of the configured engine (constant per config).
    uint64_t storage_pb_bits = 0;
    uint64_t storage_spt_bits = 0;

    uint64_t end_cycle = 0;

    // Merges accumulators of independently-run simulations.
    void merge(const RunMetrics& o) {
        demands += o.demands;
        demand_hits_l1 += o.demand_hits_l1;
        demand_hits_l2 += o.demand_hits_l2;
        demand_hits_llc += o.demand_hits_llc;
        demand_hits_inflight += o.demand_hits_inflight;
        demand_dram_fetches += o.demand_dram_fetches;
        covered_demands += o.covered_demands;
        prefetches_issued += o.prefetches_issued;
        prefetches_issued_stride += o.prefetches_issued_stride;
        prefetches_issued_dspatch += o.prefetches_issued_dspatch;
        prefetch_dram_fills += o.prefetch_dram_fills;
        prefetches_useful += o.prefetches_useful;
        prefetches_unused += o.prefetches_unused;
        prefetches_unresolved += o.prefetches_unresolved;
        prefetches_dropped_mshr += o.prefetches_dropped_mshr;
        prefetches_deduped += o.prefetches_deduped;
        cas_count += o.cas_count;
        for (unsigned i = 0; i < 4; ++i)
            bw_histogram[i] += o.bw_histogram[i];
        choice_covp += o.choice_covp;
        choice_accp += o.choice_accp;
        choice_none += o.choice_none;
        covp_resets += o.covp_resets;
        spt_trainings += o.spt_trainings;
        end_cycle = std::max(end_cycle, o.end_cycle);
        uint64_t n = 0, s = 0;
        for (unsigned i = 0; i < 4; ++i) {
            n += bw_histogram[i];
            s += i * bw_histogram[i];
        }
        bw_mean_signal = n ? static_cast<double>(s) / static_cast<double>(n) : 0.0;
        if (o.pollution) {
            if (!pollution)
                pollution = PollutionBreakdown{};
            pollution->no_reuse += o.pollution->no_reuse;
            pollution->prefetched_before_use += o.pollution->prefetched_before_use;
            pollution->bad_pollution += o.pollution->bad_pollution;
        }
    }
};

// Fraction of DRAM-bound demands removed by prefetching: hits on
// prefetched-from-DRAM lines over those hits plus the demand fetches that
// still went to DRAM. Undefined (not zero) when the trace produced neither.
inline std::optional<double> coverage(const RunMetrics& m) {
    const uint64_t den = m.covered_demands + m.demand_dram_fetches;
    if (den == 0)
        return std::nullopt;
    return static_cast<double>(m.covered_demands) / static_cast<double>(den);
}

// Unused prefetches normalized by the same denominator as coverage, so a
// coverage delta and a misprediction delta are commensurable.
inline std::optional<double> misprediction_rate(const RunMetrics& m) {
    const uint64_t den = m.covered_demands + m.demand_dram_fetches;
    if (den == 0)
        return std::nullopt;
    return static_cast<double>(m.prefetches_unused) / static_cast<double>(den);
}

// Classic accuracy: fraction of issued prefetches that were used.
inline std::optional<double> accuracy(const RunMetrics& m) {
    if (m.prefetches_issued == 0)
        return std::nullopt;
    return static_cast<double>(m.prefetches_useful) / static_cast<double>(m.prefetches_issued);
}

// Per-page consecutive line-address deltas over the whole trace.
inline std::map<int, uint64_t> delta_histogram(const TraceFile& trace) {
    std::map<int, uint64_t> hist;
    std::unordered_map<uint64_t, uint64_t> last_line;
    for (const AccessRecord& r : trace.records) {
        auto [it, fresh] = last_line.try_emplace(r.page(), r.line());
        if (!fresh) {
            int delta = static_cast<int>(static_cast<int64_t>(r.line()) -
                                         static_cast<int64_t>(it->second));
            assert(delta >= -63 && delta <= 63);
            ++hist[delta];
            it->second = r.line();
        }
    }
    return hist;
}

// Per-page misprediction ratio induced by 128B-granularity compression:
// wrong lines of decompress(compress(p)) over its total lines. Bounded by
// 0.5: each predicted block contributes at most one wrong line.
struct CompressionLoss {
    std::vector<double> per_page_ratio;
    double fraction_zero = 0.0;       // pages with no induced mispredictions
    double fraction_below_25pct = 0.0;

    static CompressionLoss of(const TraceFile& trace) {
        std::map<uint64_t, LinePattern> pages;
        for (const AccessRecord& r : trace.records)
            pages[r.page()].set(r.offset());
        CompressionLoss out;
        uint64_t zero = 0, below = 0;
        for (const auto& [page, pattern] : pages) {
            LinePattern predicted = decompress128(compress128(pattern));
            double ratio = static_cast<double>((predicted - pattern).count()) /
                           static_cast<double>(predicted.count());
            out.per_page_ratio.push_back(ratio);
            if (ratio == 0.0)
                ++zero;
            if (ratio < 0.25)
                ++below;
        }
        if (!out.per_page_ratio.empty()) {
            out.fraction_zero = static_cast<double>(zero) / out.per_page_ratio.size();
            out.fraction_below_25pct = static_cast<double>(below) / out.per_page_ratio.size();
        }
        return out;
    }
};

// Bit budget of the hardware structures for a given configuration.
struct StorageAccount {
    uint64_t pb_bits = 0;
    uint64_t spt_bits = 0;
    uint64_t total_bits = 0;

    // Page number (36) + bit-pattern (64) + two trigger records (PC 8 +
    // offset 6 each); the published entry budget of 158 bits also carries
    // the valid/replacement bookkeeping beyond those itemized fields.
    static constexpr uint64_t pb_entry_bits = 158;
    static constexpr uint64_t spt_entry_bits = 32 + 2 * 2 + 2 * 2 + 32 + 2 * 2; // 76

    static StorageAccount of(const EngineConfig& cfg) {
        StorageAccount s;
        s.pb_bits = cfg.pb_entries * pb_entry_bits;
        s.spt_bits = cfg.spt_entries * spt_entry_bits;
        s.total_bits = s.pb_bits + s.spt_bits;
        return s;
    }

    double total_kb() const { return static_cast<double>(total_bits) / 8.0 / 1024.0; }
};

} // namespace dspatch

#endif // DSPATCH_METRICS_HPP
