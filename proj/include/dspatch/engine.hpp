#ifndef DSPATCH_ENGINE_HPP
#define DSPATCH_ENGINE_HPP

#include <cassert>
#include <cstdint>
#include <functional>
#include <vector>

#include "dspatch/bitpattern.hpp"

namespace dspatch {

// 2-bit saturating counter.
class SatCounter2 {
public:
    void up() {
        if (v_ < 3)
            ++v_;
    }
    void down() {
        if (v_ > 0)
            --v_;
    }
    void reset() { v_ = 0; }
    uint8_t value() const { return v_; }
    bool saturated() const { return v_ == 3; }

private:
    uint8_t v_ = 0;
};

// First access to a 2KB segment of a page: hashed PC plus cacheline offset.
struct TriggerRecord {
    uint8_t pc_hash = 0;
    uint8_t offset = 0; // 0..63 within the 4KB page
    bool valid = false;
};

struct PageBufferEntry {
    uint64_t page_number = 0;
    LinePattern pattern;        // accumulated L1-miss lines
    TriggerRecord triggers[2];  // one per 2KB segment
    uint64_t last_use = 0;      // LRU stamp
};

// One entry of the Signature Pattern Table. covp/accp are stored at 128B
// block granularity; segment-0 triggers use the full 32-bit page view and
// segment-1 triggers read and write the low 16 bits as their
// trigger-relative window, so the two segments alias storage within the
// 76-bit entry budget. The initialized flags are simulation bookkeeping
// outside that budget.
struct SptEntry {
    BlockPattern covp;
    BlockPattern accp;
    SatCounter2 measure_covp[2];
    SatCounter2 or_count[2];
    SatCounter2 measure_accp[2];
    bool initialized[2] = {false, false};
};

enum class PatternKind : uint8_t { UseCovP, UseAccP, NoPrefetch };

struct PatternChoice {
    PatternKind kind = PatternKind::NoPrefetch;
    bool low_priority_fill = false; // only meaningful with UseCovP
};

struct EnginePrefetch {
    uint64_t line_addr = 0; // cacheline index (byte address >> 6)
    bool low_priority = false;
};

// Selection-policy variants: Full is the bandwidth-adaptive scheme;
// AlwaysCovP never consults the bandwidth signal; ModCovP only throttles
// at the highest utilization level and never uses AccP.
enum class SelectionPolicy : uint8_t { Full, AlwaysCovP, ModCovP };

struct EngineConfig {
    uint32_t pb_entries = 64;
    uint32_t spt_entries = 256;
    uint8_t or_cap = 3;
    // A measured quartile below these levels counts as "less than 50%" in
    // the goodness-counter update rules.
    uint8_t acc_thr_quartile = 2;
    uint8_t cov_thr_quartile = 2;
    SelectionPolicy policy = SelectionPolicy::Full;
};

struct EngineStats {
    uint64_t triggers = 0;
    uint64_t choice_covp = 0;
    uint64_t choice_accp = 0;
    uint64_t choice_none = 0;
    uint64_t low_priority_choices = 0;
    uint64_t prefetch_lines = 0;
    uint64_t trainings = 0;
    uint64_t covp_resets = 0;
    uint64_t pb_evictions = 0;
};

// Emitted after every per-segment SPT training update; diagnostics/tests.
struct TrainEvent {
    uint32_t spt_index = 0;
    unsigned segment = 0;
    bool first_touch = false;
    bool covp_reset = false;
    bool or_added = false;
    const SptEntry* entry = nullptr;
};

// The DSPatch prefetch engine: a Page Buffer accumulating per-page L1-miss
// bit-patterns and a tagless direct-mapped Signature Pattern Table holding
// the coverage-biased (CovP) and accuracy-biased (AccP) patterns per
// trigger-PC signature. The caller supplies the 2-bit DRAM bandwidth
// utilization signal with every event.
class DspatchEngine {
public:
    explicit DspatchEngine(const EngineConfig& cfg = {}) : cfg_(cfg), spt_(cfg.spt_entries) {
        assert(cfg.pb_entries > 0 && cfg.spt_entries > 0);
        pb_.reserve(cfg.pb_entries);
    }

    // Folded-XOR hash of the PC: XOR of all eight bytes.
    static uint8_t hash_pc(uint64_t pc) {
        uint8_t h = 0;
        for (unsigned b = 0; b < 8; ++b)
            h ^= static_cast<uint8_t>(pc >> (8 * b));
        return h;
    }

    // Tagless direct-mapped indexing; aliasing of PCs is intentional.
    uint32_t spt_index(uint8_t pc_hash) const { return pc_hash % cfg_.spt_entries; }

    // Pattern selection for prefetch generation: picks CovP or AccP (or
    // nothing) from the bandwidth level and the segment's goodness
    // counters.
    PatternChoice select_pattern(const SptEntry& entry, unsigned segment, Quartile bw) const {
        assert(segment < 2);
        if (!entry.initialized[segment])
            return {PatternKind::NoPrefetch, false};

        switch (cfg_.policy) {
        case SelectionPolicy::AlwaysCovP:
            return {PatternKind::UseCovP, covp_low_priority(entry, segment, bw)};
        case SelectionPolicy::ModCovP:
            if (bw == Quartile::Q3)
                return {PatternKind::NoPrefetch, false};
            return {PatternKind::UseCovP, covp_low_priority(entry, segment, bw)};
        case SelectionPolicy::Full:
            break;
        }

        if (bw == Quartile::Q3) {
            if (entry.measure_accp[segment].saturated())
                return {PatternKind::NoPrefetch, false};
            return {PatternKind::UseAccP, false};
        }
        if (bw == Quartile::Q2) {
            if (entry.measure_covp[segment].saturated())
                return {PatternKind::UseAccP, false};
            return {PatternKind::UseCovP, false};
        }
        return {PatternKind::UseCovP, covp_low_priority(entry, segment, bw)};
    }

    // Records an L1 miss. Allocates or refreshes the Page Buffer entry and,
    // on the first access to a 2KB segment, stores a trigger record and
    // consults the SPT to emit prefetch candidates. Misses that are not
    // trigger-eligible (L1-prefetch misses under the corresponding config)
    // still accumulate into the pattern.
    std::vector<EnginePrefetch> on_l1_miss(uint64_t pc, uint64_t paddr, Quartile bw,
                                           bool allow_trigger = true) {
        const uint64_t page = paddr >> 12;
        const unsigned offset = static_cast<unsigned>((paddr >> 6) & 63);
        const unsigned segment = offset >> 5;

        PageBufferEntry* entry = find_pb(page);
        if (!entry) {
            if (pb_.size() >= cfg_.pb_entries)
                evict_lru(bw);
            pb_.emplace_back();
            entry = &pb_.back();
            entry->page_number = page;
        }
        entry->last_use = ++use_clock_;
        entry->pattern.set(offset);

        std::vector<EnginePrefetch> out;
        if (allow_trigger && !entry->triggers[segment].valid) {
            const uint8_t h = hash_pc(pc);
            entry->triggers[segment] = {h, static_cast<uint8_t>(offset), true};
            ++stats_.triggers;

            const SptEntry& spt = spt_[spt_index(h)];
            PatternChoice choice = select_pattern(spt, segment, bw);
            tally_choice(choice);
            if (choice.kind != PatternKind::NoPrefetch) {
                BlockPattern stored = choice.kind == PatternKind::UseCovP ? spt.covp : spt.accp;
                predict(stored, page, offset, segment, choice.low_priority_fill, out);
            }
        }
        return out;
    }

    // Trains the SPT from an evicted Page Buffer entry: for each valid
    // trigger, the accumulated pattern is compressed to 128B blocks,
    // restricted to the trigger's scope (full page for segment 0, the 2KB
    // segment for segment 1), anchored to the trigger block, and folded
    // into CovP/AccP under the dual-pattern modulation rules.
    void on_pb_evict(const PageBufferEntry& entry, Quartile bw) {
        assert(entry.triggers[0].valid || entry.triggers[1].valid);
        const BlockPattern page_program = compress128(entry.pattern);

        const TriggerRecord& t0 = entry.triggers[0];
        if (t0.valid) {
            SptEntry& spt = spt_[spt_index(t0.pc_hash)];
            BlockPattern program = anchor(page_program, block_of(t0.offset));
            BlockPattern covp = spt.covp;
            BlockPattern accp = spt.accp;
            TrainEvent ev = train_patterns(spt, 0, covp, accp, program, bw);
            spt.covp = covp;
            spt.accp = accp;
            ev.spt_index = spt_index(t0.pc_hash);
            ev.entry = &spt;
            if (train_hook)
                train_hook(ev);
        }
        const TriggerRecord& t1 = entry.triggers[1];
        if (t1.valid) {
            SptEntry& spt = spt_[spt_index(t1.pc_hash)];
            SegmentPattern program =
                anchor(second_segment(page_program), block_in_segment(t1.offset));
            SegmentPattern covp = segment_window(spt.covp);
            SegmentPattern accp = segment_window(spt.accp);
            TrainEvent ev = train_patterns(spt, 1, covp, accp, program, bw);
            set_segment_window(spt.covp, covp);
            set_segment_window(spt.accp, accp);
            ev.spt_index = spt_index(t1.pc_hash);
            ev.entry = &spt;
            if (train_hook)
                train_hook(ev);
        }
    }

    const EngineConfig& config() const { return cfg_; }
    const EngineStats& stats() const { return stats_; }
    const SptEntry& spt_entry(uint32_t index) const { return spt_[index]; }
    size_t pb_size() const { return pb_.size(); }

    // Flushes every Page Buffer entry through SPT training (end of run).
    void drain(Quartile bw) {
        for (const PageBufferEntry& e : pb_) {
            ++stats_.pb_evictions;
            if (e.triggers[0].valid || e.triggers[1].valid)
                on_pb_evict(e, bw);
        }
        pb_.clear();
    }

    // Diagnostic hook fired after every per-segment training update.
    std::function<void(const TrainEvent&)> train_hook;

private:
    static unsigned block_of(unsigned offset) { return offset >> 1; }
    static unsigned block_in_segment(unsigned offset) {
        assert(offset >= 32);
        return (offset - 32) >> 1;
    }

    // The SPT stores the second segment's trigger-relative window in the
    // low 16 bits of covp/accp; the observed program restricted to that
    // segment lives in page blocks 16..31.
    static SegmentPattern segment_window(BlockPattern p) {
        return SegmentPattern::from_raw(p.raw() & 0xFFFF);
    }
    static void set_segment_window(BlockPattern& p, SegmentPattern w) {
        p = BlockPattern::from_raw((p.raw() & ~uint64_t{0xFFFF}) | w.raw());
    }
    static SegmentPattern second_segment(BlockPattern p) {
        return SegmentPattern::from_raw(p.raw() >> 16);
    }

    // Low-priority fill applies when bandwidth utilization is below 50%
    // and Measure_CovP says CovP is suspect.
    bool covp_low_priority(const SptEntry& entry, unsigned segment, Quartile bw) const {
        return bw < Quartile::Q2 && entry.measure_covp[segment].saturated();
    }

    void tally_choice(const PatternChoice& c) {
        switch (c.kind) {
        case PatternKind::UseCovP:
            ++stats_.choice_covp;
            if (c.low_priority_fill)
                ++stats_.low_priority_choices;
            break;
        case PatternKind::UseAccP:
            ++stats_.choice_accp;
            break;
        case PatternKind::NoPrefetch:
            ++stats_.choice_none;
            break;
        }
    }

    PageBufferEntry* find_pb(uint64_t page) {
        for (PageBufferEntry& e : pb_)
            if (e.page_number == page)
                return &e;
        return nullptr;
    }

    void evict_lru(Quartile bw) {
        size_t victim = 0;
        for (size_t i = 1; i < pb_.size(); ++i)
            if (pb_[i].last_use < pb_[victim].last_use)
                victim = i;
        ++stats_.pb_evictions;
        PageBufferEntry evicted = pb_[victim];
        pb_.erase(pb_.begin() + static_cast<ptrdiff_t>(victim));
        if (evicted.triggers[0].valid || evicted.triggers[1].valid)
            on_pb_evict(evicted, bw);
    }

    // Expands the stored (anchored) pattern into prefetch line addresses:
    // un-anchor by the trigger block, decompress to 64B lines, drop the
    // trigger's own line. Rotation wraps within the scope, so every
    // candidate lies inside the triggering page (segment-0 trigger) or
    // 2KB segment (segment-1 trigger).
    void predict(BlockPattern stored, uint64_t page, unsigned trigger_offset, unsigned segment,
                 bool low_priority, std::vector<EnginePrefetch>& out) {
        LinePattern lines;
        if (segment == 0) {
            lines = decompress128(unanchor(stored, block_of(trigger_offset)));
        } else {
            SegmentPattern window =
                unanchor(segment_window(stored), block_in_segment(trigger_offset));
            lines = decompress128(BlockPattern::from_raw(window.raw() << 16));
        }
        lines.reset(trigger_offset);
        const uint64_t page_line = page << 6;
        for (unsigned i = 0; i < 64; ++i) {
            if (lines.test(i)) {
                out.push_back({page_line + i, low_priority});
                ++stats_.prefetch_lines;
            }
        }
    }

    // The per-segment CovP/AccP update sequence, on the scope-restricted
    // anchored program pattern. An SPT segment never trained before adopts
    // the first observation outright.
    template <unsigned W>
    TrainEvent train_patterns(SptEntry& spt, unsigned segment, BitPattern<W>& covp,
                              BitPattern<W>& accp, BitPattern<W> program, Quartile bw) {
        // The trigger's own line is set within its scope, so the program
        // pattern is never empty here.
        assert(program.any());
        ++stats_.trainings;

        TrainEvent ev;
        ev.segment = segment;

        if (!spt.initialized[segment]) {
            covp = program;
            accp = program;
            spt.measure_covp[segment].reset();
            spt.or_count[segment].reset();
            spt.measure_accp[segment].reset();
            spt.initialized[segment] = true;
            ev.first_touch = true;
            return ev;
        }

        const PredictionQuality q_cov = quantify_prediction(program, covp);
        const PredictionQuality q_acc = quantify_prediction(program, accp);

        // An undefined quartile (empty stored pattern) contributes no
        // increment: its term counts as satisfied.
        const bool covp_acc_bad = q_cov.acc_defined && level(q_cov.acc) < cfg_.acc_thr_quartile;
        const bool covp_cov_bad = q_cov.cov_defined && level(q_cov.cov) < cfg_.cov_thr_quartile;
        if (covp_acc_bad || covp_cov_bad)
            spt.measure_covp[segment].up();

        if (spt.measure_covp[segment].saturated() && (bw == Quartile::Q3 || covp_cov_bad)) {
            covp = program;
            spt.or_count[segment].reset();
            spt.measure_covp[segment].reset();
            ++stats_.covp_resets;
            ev.covp_reset = true;
        } else if (spt.or_count[segment].value() < cfg_.or_cap) {
            BitPattern<W> merged = covp | program;
            if (merged != covp) {
                spt.or_count[segment].up();
                ev.or_added = true;
            }
            covp = merged;
        }
        // A saturated OrCount freezes CovP until the next reset.

        accp = program & covp;

        const bool accp_acc_bad = q_acc.acc_defined && level(q_acc.acc) < cfg_.acc_thr_quartile;
        if (accp_acc_bad)
            spt.measure_accp[segment].up();
        else
            spt.measure_accp[segment].down();

        return ev;
    }

    EngineConfig cfg_;
    std::vector<SptEntry> spt_;
    std::vector<PageBufferEntry> pb_;
    uint64_t use_clock_ = 0;
    EngineStats stats_;
};

} // namespace dspatch

#endif // DSPATCH_ENGINE_HPP
