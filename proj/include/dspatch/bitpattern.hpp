#ifndef DSPATCH_BITPATTERN_HPP
#define DSPATCH_BITPATTERN_HPP

#include <bit>
#include <cassert>
#include <cstdint>
#include <string>

namespace dspatch {

// Fixed-width bit set over a single 64-bit word. Bit 0 is the lowest
// address within the region; printing follows the same order (index 0
// first), so a pattern string reads left-to-right as offsets 0..N-1.
template <unsigned N>
class BitPattern {
    static_assert(N >= 1 && N <= 64, "pattern width must fit one word");

public:
    static constexpr unsigned width = N;

    constexpr BitPattern() = default;

    static constexpr BitPattern from_raw(uint64_t bits) {
        BitPattern p;
        p.bits_ = bits & mask();
        return p;
    }

    // Builds a pattern from a list of set offsets, e.g. {1, 4, 5, 11, 12}.
    static constexpr BitPattern from_offsets(std::initializer_list<unsigned> offsets) {
        BitPattern p;
        for (unsigned o : offsets)
            p.set(o);
        return p;
    }

    // Parses "1011_0100..." (underscores and spaces ignored), char i -> bit i.
    static BitPattern from_string(std::string_view s) {
        BitPattern p;
        unsigned idx = 0;
        for (char c : s) {
            if (c == '_' || c == ' ')
                continue;
            assert(c == '0' || c == '1');
            assert(idx < N);
            if (c == '1')
                p.set(idx);
            ++idx;
        }
        assert(idx == N);
        return p;
    }

    constexpr uint64_t raw() const { return bits_; }

    constexpr bool test(unsigned i) const {
        assert(i < N);
        return (bits_ >> i) & 1u;
    }
    constexpr void set(unsigned i) {
        assert(i < N);
        bits_ |= uint64_t{1} << i;
    }
    constexpr void reset(unsigned i) {
        assert(i < N);
        bits_ &= ~(uint64_t{1} << i);
    }
    constexpr void clear() { bits_ = 0; }

    constexpr unsigned count() const { return static_cast<unsigned>(std::popcount(bits_)); }
    constexpr bool any() const { return bits_ != 0; }
    constexpr bool none() const { return bits_ == 0; }

    constexpr bool contains(BitPattern other) const { return (other.bits_ & ~bits_) == 0; }

    friend constexpr BitPattern operator&(BitPattern a, BitPattern b) {
        return from_raw(a.bits_ & b.bits_);
    }
    friend constexpr BitPattern operator|(BitPattern a, BitPattern b) {
        return from_raw(a.bits_ | b.bits_);
    }
    // Set difference: bits in a that are not in b.
    friend constexpr BitPattern operator-(BitPattern a, BitPattern b) {
        return from_raw(a.bits_ & ~b.bits_);
    }
    friend constexpr bool operator==(BitPattern a, BitPattern b) { return a.bits_ == b.bits_; }
    friend constexpr bool operator!=(BitPattern a, BitPattern b) { return a.bits_ != b.bits_; }

    std::string to_string() const {
        std::string s(N, '0');
        for (unsigned i = 0; i < N; ++i)
            if (test(i))
                s[i] = '1';
        return s;
    }

private:
    static constexpr uint64_t mask() { return N == 64 ? ~uint64_t{0} : (uint64_t{1} << N) - 1; }

    uint64_t bits_ = 0;
};

// 4KB page at 64B cacheline granularity: bit i <-> cacheline i.
using LinePattern = BitPattern<64>;
// 4KB page at 128B block granularity: bit b <-> cachelines 2b and 2b+1.
using BlockPattern = BitPattern<32>;
// 2KB segment at 128B block granularity (the trigger-relative window of a
// second-segment trigger).
using SegmentPattern = BitPattern<16>;

// Rotates the pattern so that the trigger offset lands at index 0; index a
// of the result then encodes the delta +a (mod N) from the trigger.
template <unsigned N>
constexpr BitPattern<N> anchor(BitPattern<N> p, unsigned trigger_index) {
    assert(trigger_index < N);
    if (trigger_index == 0)
        return p;
    uint64_t b = p.raw();
    return BitPattern<N>::from_raw((b >> trigger_index) | (b << (N - trigger_index)));
}

// Exact inverse of anchor: moves index 0 back to the trigger offset.
template <unsigned N>
constexpr BitPattern<N> unanchor(BitPattern<N> p, unsigned trigger_index) {
    assert(trigger_index < N);
    if (trigger_index == 0)
        return p;
    uint64_t b = p.raw();
    return BitPattern<N>::from_raw((b << trigger_index) | (b >> (N - trigger_index)));
}

// 128B-granularity compression: block b covers cachelines 2b and 2b+1.
// Pairing is page-aligned and independent of any trigger.
inline constexpr BlockPattern compress128(LinePattern p) {
    uint64_t b = p.raw();
    uint64_t pairs = (b | (b >> 1)) & 0x5555555555555555ull;
    uint64_t out = 0;
    for (unsigned blk = 0; blk < 32; ++blk)
        out |= ((pairs >> (2 * blk)) & 1u) << blk;
    return BlockPattern::from_raw(out);
}

inline constexpr LinePattern decompress128(BlockPattern p) {
    uint64_t out = 0;
    for (unsigned blk = 0; blk < 32; ++blk)
        if (p.test(blk))
            out |= uint64_t{3} << (2 * blk);
    return LinePattern::from_raw(out);
}

// Quantized accuracy/coverage/bandwidth level: one quarter of [0,100%].
enum class Quartile : uint8_t {
    Q0 = 0, // [ 0, 25)
    Q1 = 1, // [25, 50)
    Q2 = 2, // [50, 75)
    Q3 = 3, // [75,100]
};

inline constexpr uint8_t level(Quartile q) { return static_cast<uint8_t>(q); }

// Buckets num/den into a quartile by comparing 4*num against den, 2*den and
// 3*den; 100% lands in Q3.
inline constexpr Quartile quantize_fraction(uint64_t num, uint64_t den) {
    assert(den > 0);
    assert(num <= den);
    uint64_t scaled = 4 * num;
    if (scaled < den)
        return Quartile::Q0;
    if (scaled < 2 * den)
        return Quartile::Q1;
    if (scaled < 3 * den)
        return Quartile::Q2;
    return Quartile::Q3;
}

// PopCount-based accuracy/coverage measurement of a predicted pattern
// against the program pattern. A quartile is undefined when its denominator
// is zero (empty predicted resp. program pattern); callers check the flags.
struct PredictionQuality {
    unsigned c_acc = 0;  // popcount(program & predicted)
    unsigned c_pred = 0; // popcount(predicted)
    unsigned c_real = 0; // popcount(program)
    Quartile acc = Quartile::Q0;
    Quartile cov = Quartile::Q0;
    bool acc_defined = false;
    bool cov_defined = false;
};

template <unsigned N>
constexpr PredictionQuality quantify_prediction(BitPattern<N> program, BitPattern<N> predicted) {
    PredictionQuality q;
    q.c_pred = predicted.count();
    q.c_real = program.count();
    q.c_acc = (program & predicted).count();
    if (q.c_pred > 0) {
        q.acc = quantize_fraction(q.c_acc, q.c_pred);
        q.acc_defined = true;
    }
    if (q.c_real > 0) {
        q.cov = quantize_fraction(q.c_acc, q.c_real);
        q.cov_defined = true;
    }
    return q;
}

} // namespace dspatch

#endif // DSPATCH_BITPATTERN_HPP
