#ifndef DSPATCH_BWMON_HPP
#define DSPATCH_BWMON_HPP

#include <array>
#include <cassert>
#include <cstdint>

#include "dspatch/bitpattern.hpp"

namespace dspatch {

using Cycle = uint64_t;

// DRAM bandwidth-utilization monitor. Counts issued CAS commands in a
// window of 4*tRC cycles; the counter is halved at every window boundary
// for hysteresis. At every tRC boundary the live counter is compared to
// three quartile thresholds, producing the 2-bit signal broadcast to the
// prefetcher. Events that land exactly on a boundary cycle belong to the
// new window: the halving and the sample are applied first.
struct BwMonitorConfig {
    Cycle trc_cycles = 216;          // tRC at the core clock (54ns @ 4GHz)
    uint64_t peak_cas_per_window = 57; // max CAS servable in one 4*tRC window
    // Calibration base for the quartile thresholds. The sustained-peak
    // residue of the halved counter settles at peak_cas_per_window, so the
    // default keeps "utilization >= 75% => level 3" true at every sample.
    // The pre-halve steady maximum (2x peak) is available for experiments.
    bool steady_state_base = false;

    uint64_t counter_max() const {
        return steady_state_base ? 2 * peak_cas_per_window : peak_cas_per_window;
    }
    // k = 1..3 -> ceil(k * counter_max / 4); strictly increasing for max >= 3.
    uint64_t threshold(unsigned k) const {
        assert(k >= 1 && k <= 3);
        return (k * counter_max() + 3) / 4;
    }
    bool valid() const {
        return trc_cycles > 0 && peak_cas_per_window >= 3 &&
               threshold(1) < threshold(2) && threshold(2) < threshold(3);
    }

    // Peak CAS per window from the channel configuration: one CAS moves one
    // 64B line, occupying the channel for one burst. tburst_cycles is the
    // 64B transfer time at the configured data rate.
    static BwMonitorConfig from_dram(Cycle trc_cycles, Cycle tburst_cycles, unsigned channels,
                                     uint64_t peak_override = 0) {
        assert(trc_cycles > 0 && tburst_cycles > 0 && channels > 0);
        BwMonitorConfig cfg;
        cfg.trc_cycles = trc_cycles;
        cfg.peak_cas_per_window =
            peak_override ? peak_override : channels * (4 * trc_cycles / tburst_cycles);
        return cfg;
    }
};

class BandwidthMonitor {
public:
    explicit BandwidthMonitor(const BwMonitorConfig& cfg) : cfg_(cfg) {
        assert(cfg.valid());
        next_sample_ = cfg_.trc_cycles;
        next_halve_ = 4 * cfg_.trc_cycles;
    }

    void record_cas(Cycle now) {
        assert(now >= last_now_);
        advance(now);
        ++counter_;
        ++total_cas_;
        last_now_ = now;
    }

    Quartile tick(Cycle now) {
        assert(now >= last_now_);
        advance(now);
        last_now_ = now;
        return level_;
    }

    uint64_t counter() const { return counter_; }
    uint64_t total_cas() const { return total_cas_; }
    Quartile signal() const { return level_; }

    // Number of tRC samples that produced each level; equispaced samples
    // make this a time-weighted histogram of the broadcast signal.
    const std::array<uint64_t, 4>& sample_histogram() const { return samples_; }

    double mean_signal() const {
        uint64_t n = 0, sum = 0;
        for (unsigned l = 0; l < 4; ++l) {
            n += samples_[l];
            sum += l * samples_[l];
        }
        return n ? static_cast<double>(sum) / static_cast<double>(n) : 0.0;
    }

private:
    Quartile quantize() const {
        if (counter_ >= cfg_.threshold(3))
            return Quartile::Q3;
        if (counter_ >= cfg_.threshold(2))
            return Quartile::Q2;
        if (counter_ >= cfg_.threshold(1))
            return Quartile::Q1;
        return Quartile::Q0;
    }

    void advance(Cycle now) {
        while (next_sample_ <= now) {
            if (next_sample_ == next_halve_) {
                counter_ >>= 1;
                next_halve_ += 4 * cfg_.trc_cycles;
            }
            level_ = quantize();
            ++samples_[level(level_)];
            next_sample_ += cfg_.trc_cycles;
        }
    }

    BwMonitorConfig cfg_;
    uint64_t counter_ = 0;
    uint64_t total_cas_ = 0;
    Cycle next_sample_ = 0;
    Cycle next_halve_ = 0;
    Cycle last_now_ = 0;
    Quartile level_ = Quartile::Q0;
    std::array<uint64_t, 4> samples_{};
};

} // namespace dspatch

#endif // DSPATCH_BWMON_HPP
