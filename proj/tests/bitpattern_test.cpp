#include <gtest/gtest.h>

#include <random>

#include "dspatch/bitpattern.hpp"

using namespace dspatch;

namespace {

// Independent index-remap oracle for anchor: out[a] = in[(a + t) mod N].
template <unsigned N>
BitPattern<N> anchor_oracle(BitPattern<N> p, unsigned t) {
    BitPattern<N> out;
    for (unsigned a = 0; a < N; ++a)
        if (p.test((a + t) % N))
            out.set(a);
    return out;
}

// Independent pairing oracle for 128B compression.
BlockPattern compress_oracle(LinePattern p) {
    BlockPattern out;
    for (unsigned b = 0; b < 32; ++b)
        if (p.test(2 * b) || p.test(2 * b + 1))
            out.set(b);
    return out;
}

std::mt19937_64 rng(0x5eed);

template <unsigned N>
BitPattern<N> random_pattern() {
    return BitPattern<N>::from_raw(rng());
}

TEST(BitPattern, BasicOps) {
    auto p = LinePattern::from_offsets({0, 5, 62, 63});
    EXPECT_EQ(p.count(), 4u);
    EXPECT_TRUE(p.test(62));
    EXPECT_FALSE(p.test(1));
    p.reset(62);
    EXPECT_EQ(p.count(), 3u);
    EXPECT_EQ(LinePattern::from_string(p.to_string()), p);
}

TEST(Anchor, Fig2DerivedExample) {
    // 16-bit pattern {1,4,5,11,12} anchored to trigger 1 -> {0,3,4,10,11}.
    auto p = BitPattern<16>::from_offsets({1, 4, 5, 11, 12});
    auto expect = BitPattern<16>::from_offsets({0, 3, 4, 10, 11});
    EXPECT_EQ(anchor(p, 1), expect);
    EXPECT_EQ(anchor_oracle(p, 1), expect);
}

TEST(Anchor, TriggerZeroIsIdentity) {
    for (int i = 0; i < 100; ++i) {
        auto p = random_pattern<64>();
        EXPECT_EQ(anchor(p, 0), p);
        EXPECT_EQ(unanchor(p, 0), p);
    }
}

TEST(Anchor, ReorderedStreamsShareOnePattern) {
    // Streams B and C of the motivating example: same trigger, same offsets,
    // different delta orders (+4,-1,+7,+1 vs +4,+6,-7,+8).
    auto accumulate = [](unsigned trigger, std::initializer_list<int> deltas) {
        BitPattern<16> p;
        unsigned cur = trigger;
        p.set(cur);
        for (int d : deltas) {
            cur = static_cast<unsigned>(static_cast<int>(cur) + d);
            p.set(cur);
        }
        return p;
    };
    auto b = accumulate(1, {4, -1, 7, 1});
    auto c = accumulate(1, {4, 6, -7, 8});
    EXPECT_EQ(b, BitPattern<16>::from_offsets({1, 4, 5, 11, 12}));
    EXPECT_EQ(b, c);
    EXPECT_EQ(anchor(b, 1), anchor(c, 1));
}

TEST(Anchor, MatchesOracleAndInverts) {
    for (int i = 0; i < 2000; ++i) {
        auto p64 = random_pattern<64>();
        unsigned t64 = static_cast<unsigned>(rng() % 64);
        EXPECT_EQ(anchor(p64, t64), anchor_oracle(p64, t64));
        EXPECT_EQ(unanchor(anchor(p64, t64), t64), p64);
        EXPECT_EQ(anchor(unanchor(p64, t64), t64), p64);
        EXPECT_EQ(anchor(p64, t64).count(), p64.count());

        auto p32 = random_pattern<32>();
        unsigned t32 = static_cast<unsigned>(rng() % 32);
        EXPECT_EQ(anchor(p32, t32), anchor_oracle(p32, t32));
        EXPECT_EQ(unanchor(anchor(p32, t32), t32), p32);
    }
}

TEST(Unanchor, IndexArithmetic) {
    // 32-bit pattern {0,3}, trigger block 5 -> {5,8}.
    auto p = BitPattern<32>::from_offsets({0, 3});
    EXPECT_EQ(unanchor(p, 5), BitPattern<32>::from_offsets({5, 8}));
    auto q = random_pattern<64>();
    EXPECT_EQ(unanchor(anchor(q, 13), 13), q);
}

TEST(Compress128, PairsLines) {
    EXPECT_EQ(compress128(LinePattern::from_offsets({0, 1})), BlockPattern::from_offsets({0}));
    EXPECT_EQ(compress128(LinePattern::from_offsets({2})), BlockPattern::from_offsets({1}));
    EXPECT_EQ(compress128(LinePattern::from_offsets({0, 5, 62, 63})),
              BlockPattern::from_offsets({0, 2, 31}));
}

TEST(Decompress128, ExpandsBlocks) {
    EXPECT_EQ(decompress128(BlockPattern::from_offsets({1})), LinePattern::from_offsets({2, 3}));
    EXPECT_TRUE(decompress128(BlockPattern{}).none());
}

TEST(Compress128, RoundTripSupersetAndExcess) {
    for (int i = 0; i < 5000; ++i) {
        auto p = random_pattern<64>();
        auto round = decompress128(compress128(p));
        EXPECT_TRUE(round.contains(p));
        EXPECT_EQ(round.count(), 2 * compress128(p).count());
        // Excess = blocks where exactly one line of the pair is set.
        unsigned lone = 0;
        for (unsigned b = 0; b < 32; ++b)
            if (p.test(2 * b) != p.test(2 * b + 1))
                ++lone;
        EXPECT_EQ((round - p).count(), lone);
        EXPECT_LE((round - p).count(), p.count());
        EXPECT_EQ(compress128(p), compress_oracle(p));
    }
}

TEST(Compress128, Monotone) {
    for (int i = 0; i < 2000; ++i) {
        auto q = random_pattern<64>();
        auto p = q & random_pattern<64>(); // p subset of q
        EXPECT_TRUE(compress128(q).contains(compress128(p)));
        auto qb = random_pattern<32>();
        auto pb = qb & random_pattern<32>();
        EXPECT_TRUE(decompress128(qb).contains(decompress128(pb)));
    }
}

TEST(QuantizeFraction, PaperPlacements) {
    EXPECT_EQ(quantize_fraction(3, 5), Quartile::Q2); // 60% -> 50-75%
    EXPECT_EQ(quantize_fraction(3, 8), Quartile::Q1); // 37.5% -> 25-50%
    EXPECT_EQ(quantize_fraction(7, 7), Quartile::Q3); // 100% boundary
}

TEST(QuantizeFraction, MatchesRationalBucketingExhaustively) {
    for (uint64_t den = 1; den <= 64; ++den) {
        for (uint64_t num = 0; num <= den; ++num) {
            // Exact rational bucket: k such that num/den in [k/4,(k+1)/4),
            // with num == den in the top bucket.
            int k = num == den ? 3 : static_cast<int>(4 * num / den);
            if (k > 3)
                k = 3;
            EXPECT_EQ(level(quantize_fraction(num, den)), k)
                << num << "/" << den;
        }
    }
}

TEST(QuantifyPrediction, GoldenTable) {
    auto program = BitPattern<16>::from_string("1011_0100_0011_1100");
    auto predicted = BitPattern<16>::from_string("1010_0110_0000_0001");
    auto q = quantify_prediction(program, predicted);
    EXPECT_EQ(q.c_real, 8u);
    EXPECT_EQ(q.c_pred, 5u);
    EXPECT_EQ(q.c_acc, 3u);
    EXPECT_EQ(q.acc, Quartile::Q2);
    EXPECT_EQ(q.cov, Quartile::Q1);
    EXPECT_TRUE(q.acc_defined);
    EXPECT_TRUE(q.cov_defined);
}

TEST(QuantifyPrediction, EdgeCases) {
    auto p = BlockPattern::from_offsets({3, 7, 9});
    auto q = quantify_prediction(p, p);
    EXPECT_EQ(q.acc, Quartile::Q3);
    EXPECT_EQ(q.cov, Quartile::Q3);

    auto disjoint = quantify_prediction(BlockPattern::from_offsets({0, 1}),
                                        BlockPattern::from_offsets({2, 3}));
    EXPECT_EQ(disjoint.c_acc, 0u);
    EXPECT_EQ(disjoint.acc, Quartile::Q0);
    EXPECT_EQ(disjoint.cov, Quartile::Q0);

    auto empty_pred = quantify_prediction(p, BlockPattern{});
    EXPECT_FALSE(empty_pred.acc_defined);
    EXPECT_TRUE(empty_pred.cov_defined);
    auto empty_prog = quantify_prediction(BlockPattern{}, p);
    EXPECT_FALSE(empty_prog.cov_defined);
    EXPECT_TRUE(empty_prog.acc_defined);
}

TEST(Anchor, PermutationInvariance) {
    // Any two access orderings of the same offset set with the same first
    // element accumulate to the same pattern, hence anchor identically.
    std::mt19937_64 gen(42);
    for (int round = 0; round < 1000; ++round) {
        unsigned n = 2 + static_cast<unsigned>(gen() % 10);
        std::vector<unsigned> offsets;
        BitPattern<64> acc1, acc2;
        while (offsets.size() < n) {
            unsigned o = static_cast<unsigned>(gen() % 64);
            bool dup = false;
            for (unsigned e : offsets)
                dup |= (e == o);
            if (!dup)
                offsets.push_back(o);
        }
        unsigned trigger = offsets[0];
        auto shuffled = offsets;
        for (size_t i = shuffled.size() - 1; i > 1; --i)
            std::swap(shuffled[i], shuffled[1 + gen() % i]); // keep [0] fixed
        for (unsigned o : offsets)
            acc1.set(o);
        for (unsigned o : shuffled)
            acc2.set(o);
        ASSERT_EQ(acc1, acc2);
        ASSERT_EQ(anchor(acc1, trigger), anchor(acc2, trigger));
    }
}

TEST(BitPatternDeath, RejectsOutOfRangeTrigger) {
    auto p = BlockPattern::from_offsets({1});
    EXPECT_DEATH((void)anchor(p, 32), "");
    EXPECT_DEATH((void)unanchor(p, 40), "");
    EXPECT_DEATH((void)quantize_fraction(1, 0), "");
    EXPECT_DEATH((void)quantize_fraction(5, 4), "");
}

} // namespace
