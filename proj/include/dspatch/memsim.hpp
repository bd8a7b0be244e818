#ifndef DSPATCH_MEMSIM_HPP
#define DSPATCH_MEMSIM_HPP

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dspatch/bwmon.hpp"
#include "dspatch/engine.hpp"
#include "dspatch/metrics.hpp"
#include "dspatch/trace.hpp"

namespace dspatch {

struct CacheLevelConfig {
    uint32_t size_bytes = 32 * 1024;
    uint32_t ways = 8;
    uint32_t latency = 5; // round-trip cycles
    uint32_t mshrs = 16;

    uint32_t sets() const {
        assert(size_bytes % (ways * 64) == 0);
        return size_bytes / (ways * 64);
    }
};

struct DramConfig {
    unsigned channels = 1;
    unsigned data_rate_mts = 2133; // DDR4-2133
    double trc_ns = 54.0;          // tRAS + tRP = 39 + 15
    unsigned latency_cycles = 120; // fixed access component (~tRCD + tCL)
    double core_ghz = 4.0;
    uint64_t peak_cas_override = 0;
    bool steady_state_thresholds = false;

    Cycle trc_cycles() const { return static_cast<Cycle>(std::llround(trc_ns * core_ghz)); }
    // One CAS moves a 64B line: eight beats on the 64-bit channel bus.
    Cycle tburst_cycles() const {
        double ns = 8000.0 / static_cast<double>(data_rate_mts);
        return std::max<Cycle>(1, static_cast<Cycle>(std::llround(ns * core_ghz)));
    }

    BwMonitorConfig bwmon_config() const {
        auto cfg = BwMonitorConfig::from_dram(trc_cycles(), tburst_cycles(), channels,
                                              peak_cas_override);
        cfg.steady_state_base = steady_state_thresholds;
        return cfg;
    }
};

struct StrideConfig {
    bool enabled = true;
    unsigned table_entries = 64;
    unsigned degree = 2;
    unsigned confidence_threshold = 2;
};

struct MemSimConfig {
    CacheLevelConfig l1{32 * 1024, 8, 5, 16};
    CacheLevelConfig l2{256 * 1024, 8, 8, 32};
    CacheLevelConfig llc{2 * 1024 * 1024, 16, 30, 32};
    DramConfig dram;
    StrideConfig stride;
    EngineConfig dspatch;
    bool dspatch_enabled = true;
    // Whether an L1-prefetch miss may record a trigger (it always trains
    // the accumulated pattern).
    bool prefetch_triggers = true;
    bool track_pollution = false;
    uint64_t reuse_window = 10'000'000;
};

enum class HitLevel : uint8_t { L1, L2, LLC, InFlight, DRAM };

struct AccessOutcome {
    HitLevel hit_level = HitLevel::L1;
    Cycle cost = 0;
    unsigned dram_fetches = 0;     // demand line transfers for this access
    unsigned prefetches_issued = 0;
};

// Classic PC-indexed stride prefetcher (reference-prediction-table style):
// tolerate one stride blip while confident, adopt the observed stride when
// confidence is exhausted, prefetch ahead once the stride repeats.
class StridePrefetcher {
public:
    explicit StridePrefetcher(const StrideConfig& cfg) : cfg_(cfg), table_(cfg.table_entries) {}

    std::vector<uint64_t> observe(uint64_t pc, uint64_t line_addr) {
        Entry& e = table_[pc % table_.size()];
        std::vector<uint64_t> out;
        if (e.tag != pc) {
            e = Entry{pc, line_addr, 0, 0};
            return out;
        }
        const int64_t delta = static_cast<int64_t>(line_addr) - static_cast<int64_t>(e.last_line);
        e.last_line = line_addr;
        if (delta == e.stride) {
            if (e.confidence < 3)
                ++e.confidence;
        } else if (e.confidence > 0) {
            --e.confidence;
        } else {
            e.stride = delta;
            e.confidence = 1;
        }
        if (e.confidence >= cfg_.confidence_threshold && e.stride != 0) {
            const uint64_t page = line_addr >> 6;
            for (unsigned k = 1; k <= cfg_.degree; ++k) {
                int64_t target = static_cast<int64_t>(line_addr) + e.stride * static_cast<int64_t>(k);
                if (target >= 0 && (static_cast<uint64_t>(target) >> 6) == page)
                    out.push_back(static_cast<uint64_t>(target));
            }
        }
        return out;
    }

private:
    struct Entry {
        uint64_t tag = ~uint64_t{0};
        uint64_t last_line = 0;
        int64_t stride = 0;
        unsigned confidence = 0;
    };

    StrideConfig cfg_;
    std::vector<Entry> table_;
};

// One set-associative LRU cache level. Entries carry the id of the prefetch
// that brought them in (0 = demand) so usefulness can be resolved later.
class CacheLevel {
public:
    struct Entry {
        uint64_t line;
        uint64_t fill_id; // 0 when demand-filled or already demanded
    };

    struct EvictedLine {
        bool valid = false;
        uint64_t line = 0;
        uint64_t fill_id = 0;
    };

    explicit CacheLevel(const CacheLevelConfig& cfg)
        : cfg_(cfg), sets_(cfg.sets()) {}

    // MRU-order lookup; touching moves the entry to the front.
    Entry* lookup(uint64_t line, bool touch = true) {
        auto& set = sets_[set_of(line)];
        for (size_t i = 0; i < set.size(); ++i) {
            if (set[i].line == line) {
                if (touch && i > 0)
                    std::rotate(set.begin(), set.begin() + i, set.begin() + i + 1);
                return &set[touch ? 0 : i];
            }
        }
        return nullptr;
    }

    bool contains(uint64_t line) const {
        const auto& set = sets_[set_of(line)];
        for (const Entry& e : set)
            if (e.line == line)
                return true;
        return false;
    }

    // Inserts at MRU, or at LRU for low-priority fills. A line never
    // resides twice in the same set: refilling an existing line updates it
    // in place.
    EvictedLine fill(uint64_t line, uint64_t fill_id, bool low_priority = false) {
        auto& set = sets_[set_of(line)];
        if (Entry* hit = lookup(line, !low_priority)) {
            hit->fill_id = fill_id ? fill_id : hit->fill_id;
            return {};
        }
        EvictedLine victim;
        if (set.size() >= cfg_.ways) {
            victim = {true, set.back().line, set.back().fill_id};
            set.pop_back();
        }
        if (low_priority)
            set.push_back({line, fill_id});
        else
            set.insert(set.begin(), {line, fill_id});
        return victim;
    }

    void erase(uint64_t line) {
        auto& set = sets_[set_of(line)];
        for (size_t i = 0; i < set.size(); ++i) {
            if (set[i].line == line) {
                set.erase(set.begin() + static_cast<ptrdiff_t>(i));
                return;
            }
        }
    }

    const CacheLevelConfig& config() const { return cfg_; }

private:
    size_t set_of(uint64_t line) const { return line % sets_.size(); }

    CacheLevelConfig cfg_;
    std::vector<std::vector<Entry>> sets_; // each set MRU -> LRU
};

// Trace-driven L1/L2/LLC hierarchy with an L1 PC-stride prefetcher, the
// DSPatch engine at L2, and a bandwidth-accounted DRAM back end. Demands
// are processed serially with a simple additive clock; each DRAM line
// transfer occupies one burst slot on its (line-interleaved) channel, FCFS.
class MemoryHierarchy {
public:
    struct Counters {
        uint64_t demands = 0;
        uint64_t demand_hits_l1 = 0;
        uint64_t demand_hits_l2 = 0;
        uint64_t demand_hits_llc = 0;
        uint64_t demand_hits_inflight = 0;
        uint64_t demand_dram_fetches = 0;
        uint64_t covered_demands = 0;
        uint64_t prefetches_issued_stride = 0;
        uint64_t prefetches_issued_dspatch = 0;
        uint64_t prefetch_dram_fills = 0;
        uint64_t prefetches_useful = 0;
        uint64_t prefetches_unused = 0;
        uint64_t prefetches_dropped_mshr = 0;
        uint64_t prefetches_deduped = 0;
        uint64_t dram_line_transfers = 0;
    };

    explicit MemoryHierarchy(const MemSimConfig& cfg)
        : cfg_(cfg),
          l1_(cfg.l1),
          l2_(cfg.l2),
          llc_(cfg.llc),
          stride_(cfg.stride),
          engine_(cfg.dspatch),
          bwmon_(cfg.dram.bwmon_config()),
          channel_free_(cfg.dram.channels, 0) {
        if (cfg.track_pollution)
            pollution_.emplace(cfg.reuse_window);
    }

    // Processes one trace record. Records must arrive in seq order.
    AccessOutcome step(const AccessRecord& r) {
        if (seen_any_ && r.seq <= last_seq_)
            throw TraceError("out-of-order seq " + std::to_string(r.seq));
        if (!canonical_paddr(r.paddr))
            throw TraceError("non-canonical paddr in record " + std::to_string(r.seq));
        last_seq_ = r.seq;
        seen_any_ = true;

        drain_ready_prefetches();

        AccessOutcome out;
        const uint64_t line = r.line();
        ++counters_.demands;

        bool l1_miss = false;
        if (CacheLevel::Entry* e = l1_.lookup(line)) {
            out.hit_level = HitLevel::L1;
            out.cost = cfg_.l1.latency;
            ++counters_.demand_hits_l1;
            consume_prefetch(*e);
            note_demand(r.seq, line, true);
        } else {
            l1_miss = true;
            if (const InFlight* f = find_inflight(line)) {
                out.hit_level = HitLevel::InFlight;
                out.cost = f->ready > now_ ? f->ready - now_ : 0;
                ++counters_.demand_hits_inflight;
                complete_inflight_used(line);
                l1_.fill(line, 0);
                note_demand(r.seq, line, true);
            } else if (CacheLevel::Entry* e2 = l2_.lookup(line)) {
                out.hit_level = HitLevel::L2;
                out.cost = cfg_.l2.latency;
                ++counters_.demand_hits_l2;
                consume_prefetch(*e2);
                fill_level(l1_, line, 0, false);
                note_demand(r.seq, line, true);
            } else if (CacheLevel::Entry* e3 = llc_.lookup(line)) {
                out.hit_level = HitLevel::LLC;
                out.cost = cfg_.llc.latency;
                ++counters_.demand_hits_llc;
                consume_prefetch(*e3);
                fill_level(l1_, line, 0, false);
                fill_level(l2_, line, 0, false);
                note_demand(r.seq, line, true);
            } else {
                out.hit_level = HitLevel::DRAM;
                const Cycle wait = dram_queue_delay(line);
                out.cost = cfg_.llc.latency + wait + cfg_.dram.latency_cycles;
                out.dram_fetches = 1;
                ++counters_.demand_dram_fetches;
                ++counters_.dram_line_transfers;
                note_demand(r.seq, line, false);
                fill_level(l1_, line, 0, false);
                fill_level(l2_, line, 0, false);
                fill_level(llc_, line, 0, false);
            }
        }

        // Prefetchers react at miss time, so their DRAM transfers overlap
        // the demand's latency. The L1 prefetcher observes every demand
        // access; DSPatch trains on L1 misses (demands here, L1-prefetch
        // misses inside issue_stride_prefetch).
        if (cfg_.stride.enabled) {
            for (uint64_t target : stride_.observe(r.pc, line))
                out.prefetches_issued += issue_stride_prefetch(r.pc, target);
        }
        if (l1_miss && cfg_.dspatch_enabled)
            out.prefetches_issued += train_dspatch(r.pc, r.paddr, true);

        now_ += out.cost;
        return out;
    }

    // Advances the clock over an idle gap; bandwidth-monitor windows elapse.
    void advance_to(Cycle cycle) {
        assert(cycle >= now_);
        now_ = cycle;
        drain_ready_prefetches();
        bwmon_.tick(now_);
    }

    // Completes outstanding fills and settles prefetch fates that are
    // already decidable. Still-resident unused prefetches stay unresolved.
    void finish() {
        for (const InFlight& f : inflight_)
            now_ = std::max(now_, f.ready);
        drain_ready_prefetches();
        bwmon_.tick(now_);
    }

    PollutionBreakdown pollution_breakdown() {
        assert(pollution_.has_value());
        return pollution_->finalize();
    }

    const Counters& counters() const { return counters_; }
    const DspatchEngine& engine() const { return engine_; }
    DspatchEngine& engine() { return engine_; }
    const BandwidthMonitor& bwmon() const { return bwmon_; }
    Cycle now() const { return now_; }
    uint64_t unresolved_prefetches() const {
        uint64_t live = 0;
        for (const auto& [id, st] : prefetch_state_)
            if (!st.used && st.present > 0)
                ++live;
        return live + inflight_.size();
    }

    bool resident(uint64_t line) const {
        return l1_.contains(line) || l2_.contains(line) || llc_.contains(line);
    }

    // Diagnostic: observes every DSPatch prefetch candidate before dedupe.
    std::function<void(const EnginePrefetch&)> dspatch_probe;

private:
    struct InFlight {
        uint64_t line;
        Cycle ready;
        bool fills_l1; // stride target; otherwise fills L2 + LLC
        bool low_priority;
        uint64_t fill_id;
    };

    struct PrefetchState {
        unsigned present = 0; // copies resident in any level
        bool used = false;
        bool from_dram = false;
    };

    // --- DRAM timing ------------------------------------------------------

    unsigned channel_of(uint64_t line) const {
        return static_cast<unsigned>(line % channel_free_.size());
    }

    // Books one burst slot; returns the queueing delay seen by the request.
    Cycle dram_queue_delay(uint64_t line) {
        bwmon_.record_cas(now_);
        Cycle& free_at = channel_free_[channel_of(line)];
        const Cycle start = std::max(now_, free_at);
        free_at = start + cfg_.dram.tburst_cycles();
        return start - now_;
    }

    // --- prefetch plumbing ------------------------------------------------

    const InFlight* find_inflight(uint64_t line) const {
        for (const InFlight& f : inflight_)
            if (f.line == line)
                return &f;
        return nullptr;
    }

    unsigned inflight_count(bool fills_l1) const {
        unsigned n = 0;
        for (const InFlight& f : inflight_)
            n += (f.fills_l1 == fills_l1);
        return n;
    }

    unsigned issue_stride_prefetch(uint64_t pc, uint64_t target_line) {
        if (l1_.contains(target_line) || find_inflight(target_line)) {
            ++counters_.prefetches_deduped;
            return 0;
        }
        if (inflight_count(true) >= cfg_.l1.mshrs) {
            ++counters_.prefetches_dropped_mshr;
            return 0;
        }
        ++counters_.prefetches_issued_stride;
        const uint64_t id = next_fill_id_++;
        if (l2_.lookup(target_line, false) || llc_.lookup(target_line, false)) {
            register_fill(id, false);
            fill_level(l1_, target_line, id, false);
            if (pollution_)
                pollution_->on_line_prefetched(target_line);
        } else {
            const Cycle wait = dram_queue_delay(target_line);
            ++counters_.prefetch_dram_fills;
            ++counters_.dram_line_transfers;
            register_fill(id, true);
            inflight_.push_back(
                {target_line, now_ + wait + cfg_.dram.tburst_cycles() + cfg_.dram.latency_cycles,
                 true, false, id});
        }

        // The prefetch itself missed L1, so it trains DSPatch like any
        // other L1 miss (trigger eligibility per config).
        unsigned issued = 1;
        if (cfg_.dspatch_enabled)
            issued += train_dspatch(pc, target_line << 6, cfg_.prefetch_triggers);
        return issued;
    }

    unsigned issue_dspatch_prefetch(const EnginePrefetch& p) {
        if (l2_.contains(p.line_addr) || find_inflight(p.line_addr)) {
            ++counters_.prefetches_deduped;
            return 0;
        }
        if (inflight_count(false) >= cfg_.l2.mshrs) {
            ++counters_.prefetches_dropped_mshr;
            return 0;
        }
        ++counters_.prefetches_issued_dspatch;
        const uint64_t id = next_fill_id_++;
        if (llc_.lookup(p.line_addr, false)) {
            register_fill(id, false);
            fill_level(l2_, p.line_addr, id, p.low_priority);
            if (pollution_)
                pollution_->on_line_prefetched(p.line_addr);
        } else {
            const Cycle wait = dram_queue_delay(p.line_addr);
            ++counters_.prefetch_dram_fills;
            ++counters_.dram_line_transfers;
            register_fill(id, true);
            inflight_.push_back(
                {p.line_addr, now_ + wait + cfg_.dram.tburst_cycles() + cfg_.dram.latency_cycles,
                 false, p.low_priority, id});
        }
        return 1;
    }

    unsigned train_dspatch(uint64_t pc, uint64_t paddr, bool allow_trigger) {
        unsigned issued = 0;
        const Quartile bw = bwmon_.tick(now_);
        for (const EnginePrefetch& p : engine_.on_l1_miss(pc, paddr, bw, allow_trigger)) {
            if (dspatch_probe)
                dspatch_probe(p);
            issued += issue_dspatch_prefetch(p);
        }
        return issued;
    }

    void drain_ready_prefetches() {
        for (size_t i = 0; i < inflight_.size();) {
            if (inflight_[i].ready <= now_) {
                InFlight f = inflight_[i];
                inflight_.erase(inflight_.begin() + static_cast<ptrdiff_t>(i));
                land_prefetch(f);
            } else {
                ++i;
            }
        }
    }

    void land_prefetch(const InFlight& f) {
        if (pollution_)
            pollution_->on_line_prefetched(f.line);
        if (f.fills_l1) {
            fill_level(l1_, f.line, f.fill_id, false);
        } else {
            fill_level(l2_, f.line, f.fill_id, f.low_priority);
            fill_level(llc_, f.line, f.fill_id, f.low_priority);
        }
    }

    // A demand arrived while the prefetch was still in flight: the fill
    // lands now and counts as used immediately.
    void complete_inflight_used(uint64_t line) {
        for (size_t i = 0; i < inflight_.size(); ++i) {
            if (inflight_[i].line == line) {
                InFlight f = inflight_[i];
                inflight_.erase(inflight_.begin() + static_cast<ptrdiff_t>(i));
                land_prefetch(f);
                mark_used(f.fill_id);
                return;
            }
        }
        assert(false && "no in-flight entry for line");
    }

    void register_fill(uint64_t id, bool from_dram) {
        PrefetchState st;
        st.from_dram = from_dram;
        prefetch_state_.emplace(id, st);
    }

    // Demand hit on a cache entry: if an undemanded prefetch brought it in,
    // resolve that prefetch as used (covered when it came from DRAM).
    void consume_prefetch(CacheLevel::Entry& e) {
        if (e.fill_id != 0)
            mark_used(e.fill_id);
    }

    void mark_used(uint64_t id) {
        auto it = prefetch_state_.find(id);
        assert(it != prefetch_state_.end());
        if (it->second.used)
            return;
        it->second.used = true;
        ++counters_.prefetches_useful;
        if (it->second.from_dram)
            ++counters_.covered_demands;
        if (pollution_)
            pollution_->on_prefetch_fate(id, true);
    }

    void note_demand(uint64_t seq, uint64_t line, bool hit_on_die) {
        if (pollution_)
            pollution_->on_demand(seq, line, hit_on_die);
    }

    // Fill with eviction bookkeeping: prefetch fates resolve when the last
    // copy of an unused prefetched line leaves the hierarchy, and LLC
    // victims of prefetch fills feed the pollution classifier.
    void fill_level(CacheLevel& cache, uint64_t line, uint64_t fill_id, bool low_priority) {
        if (fill_id != 0) {
            auto it = prefetch_state_.find(fill_id);
            assert(it != prefetch_state_.end());
            ++it->second.present;
        }
        CacheLevel::EvictedLine victim = cache.fill(line, fill_id, low_priority);
        if (!victim.valid)
            return;
        if (&cache == &llc_ && fill_id != 0 && pollution_)
            pollution_->on_llc_prefetch_victim(victim.line, fill_id, last_seq_);
        if (victim.fill_id != 0)
            release_copy(victim.fill_id);
    }

    void release_copy(uint64_t id) {
        auto it = prefetch_state_.find(id);
        assert(it != prefetch_state_.end());
        assert(it->second.present > 0);
        --it->second.present;
        if (it->second.present == 0 && !it->second.used) {
            ++counters_.prefetches_unused;
            if (pollution_)
                pollution_->on_prefetch_fate(id, false);
        }
    }

    MemSimConfig cfg_;
    CacheLevel l1_;
    CacheLevel l2_;
    CacheLevel llc_;
    StridePrefetcher stride_;
    DspatchEngine engine_;
    BandwidthMonitor bwmon_;
    std::vector<Cycle> channel_free_;
    std::vector<InFlight> inflight_;
    std::unordered_map<uint64_t, PrefetchState> prefetch_state_;
    std::optional<PollutionTracker> pollution_;
    Counters counters_;
    Cycle now_ = 0;
    uint64_t last_seq_ = 0;
    bool seen_any_ = false;
    uint64_t next_fill_id_ = 1;
};

} // namespace dspatch

#endif // DSPATCH_MEMSIM_HPP
