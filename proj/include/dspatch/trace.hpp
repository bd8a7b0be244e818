#ifndef DSPATCH_TRACE_HPP
#define DSPATCH_TRACE_HPP

#include <cassert>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dspatch {

// One trace event: an instruction-ordered memory access.
struct AccessRecord {
    uint64_t seq = 0;   // strictly increasing access index
    uint64_t pc = 0;    // instruction address
    uint64_t paddr = 0; // physical byte address (48-bit canonical)
    bool is_store = false;

    uint64_t line() const { return paddr >> 6; }
    uint64_t page() const { return paddr >> 12; }
    unsigned offset() const { return static_cast<unsigned>((paddr >> 6) & 63); }

    friend bool operator==(const AccessRecord&, const AccessRecord&) = default;
};

inline bool canonical_paddr(uint64_t paddr) { return paddr < (uint64_t{1} << 48); }

class TraceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Access trace with a (version, record count) header. Two on-disk forms:
//
//   text    "dsptrace 1 <count>" header line, then one record per line:
//           "<seq> <pc-hex> <paddr-hex> <L|S>"
//   binary  8-byte magic "DSPTRACE", u32 version, u64 count, then packed
//           little-endian records of (u64 seq, u64 pc, u64 paddr, u8 kind)
//
// Text is the interchange default; binary is for large runs. parse()
// auto-detects the form.
struct TraceFile {
    static constexpr uint32_t format_version = 1;
    std::vector<AccessRecord> records;

    friend bool operator==(const TraceFile&, const TraceFile&) = default;
};

namespace detail {

inline constexpr char binary_magic[8] = {'D', 'S', 'P', 'T', 'R', 'A', 'C', 'E'};

inline void validate_record(const AccessRecord& r, uint64_t prev_seq, bool first,
                            const std::string& where) {
    if (!first && r.seq <= prev_seq)
        throw TraceError(where + ": non-monotonic seq " + std::to_string(r.seq));
    if (!canonical_paddr(r.paddr))
        throw TraceError(where + ": non-canonical paddr");
}

} // namespace detail

inline void serialize_text(const TraceFile& t, std::ostream& os) {
    os << "dsptrace " << TraceFile::format_version << " " << t.records.size() << "\n";
    char buf[96];
    for (const AccessRecord& r : t.records) {
        std::snprintf(buf, sizeof buf, "%llu 0x%llx 0x%llx %c\n",
                      static_cast<unsigned long long>(r.seq),
                      static_cast<unsigned long long>(r.pc),
                      static_cast<unsigned long long>(r.paddr), r.is_store ? 'S' : 'L');
        os << buf;
    }
}

inline void serialize_binary(const TraceFile& t, std::ostream& os) {
    os.write(detail::binary_magic, 8);
    uint32_t version = TraceFile::format_version;
    uint64_t count = t.records.size();
    os.write(reinterpret_cast<const char*>(&version), sizeof version);
    os.write(reinterpret_cast<const char*>(&count), sizeof count);
    for (const AccessRecord& r : t.records) {
        os.write(reinterpret_cast<const char*>(&r.seq), 8);
        os.write(reinterpret_cast<const char*>(&r.pc), 8);
        os.write(reinterpret_cast<const char*>(&r.paddr), 8);
        char kind = r.is_store ? 1 : 0;
        os.write(&kind, 1);
    }
}

inline TraceFile parse_text(std::istream& is) {
    TraceFile t;
    std::string line;
    if (!std::getline(is, line))
        throw TraceError("line 1: empty trace file");
    std::istringstream header(line);
    std::string magic;
    uint32_t version = 0;
    uint64_t count = 0;
    if (!(header >> magic >> version >> count) || magic != "dsptrace")
        throw TraceError("line 1: bad header, expected 'dsptrace <version> <count>'");
    if (version != TraceFile::format_version)
        throw TraceError("line 1: unsupported version " + std::to_string(version));

    t.records.reserve(count);
    uint64_t lineno = 1;
    uint64_t prev_seq = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        const std::string where = "line " + std::to_string(lineno);
        std::istringstream ls(line);
        AccessRecord r;
        std::string pc_s, paddr_s, kind_s;
        if (!(ls >> r.seq >> pc_s >> paddr_s >> kind_s))
            throw TraceError(where + ": unparsable record");
        try {
            r.pc = std::stoull(pc_s, nullptr, 16);
            r.paddr = std::stoull(paddr_s, nullptr, 16);
        } catch (const std::exception&) {
            throw TraceError(where + ": unparsable address field");
        }
        if (kind_s == "L")
            r.is_store = false;
        else if (kind_s == "S")
            r.is_store = true;
        else
            throw TraceError(where + ": access kind must be L or S");
        detail::validate_record(r, prev_seq, t.records.empty(), where);
        prev_seq = r.seq;
        t.records.push_back(r);
    }
    if (t.records.size() != count)
        throw TraceError("header count " + std::to_string(count) + " != " +
                         std::to_string(t.records.size()) + " records");
    return t;
}

inline TraceFile parse_binary(std::istream& is) {
    TraceFile t;
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::binary_magic, 8) != 0)
        throw TraceError("bad binary magic");
    uint32_t version = 0;
    uint64_t count = 0;
    is.read(reinterpret_cast<char*>(&version), sizeof version);
    is.read(reinterpret_cast<char*>(&count), sizeof count);
    if (!is || version != TraceFile::format_version)
        throw TraceError("unsupported binary version");
    t.records.reserve(count);
    uint64_t prev_seq = 0;
    for (uint64_t i = 0; i < count; ++i) {
        AccessRecord r;
        char kind = 0;
        is.read(reinterpret_cast<char*>(&r.seq), 8);
        is.read(reinterpret_cast<char*>(&r.pc), 8);
        is.read(reinterpret_cast<char*>(&r.paddr), 8);
        is.read(&kind, 1);
        if (!is)
            throw TraceError("truncated binary trace at record " + std::to_string(i));
        r.is_store = kind != 0;
        detail::validate_record(r, prev_seq, i == 0, "record " + std::to_string(i));
        prev_seq = r.seq;
        t.records.push_back(r);
    }
    return t;
}

inline TraceFile parse(std::istream& is) {
    int c = is.peek();
    if (c == 'D') {
        // Could be either form; the binary magic starts "DSPTRACE" while the
        // text header starts "dsptrace".
        return parse_binary(is);
    }
    return parse_text(is);
}

inline TraceFile parse(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw TraceError("cannot open trace file: " + path);
    return parse(f);
}

inline void serialize(const TraceFile& t, const std::string& path, bool binary = false) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw TraceError("cannot write trace file: " + path);
    if (binary)
        serialize_binary(t, f);
    else
        serialize_text(t, f);
    if (!f)
        throw TraceError("write failed: " + path);
}

// Deterministic generator randomness: splitmix64, stable across platforms.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}
    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    // Uniform in [0, bound) by rejection; bound > 0.
    uint64_t bounded(uint64_t bound) {
        assert(bound > 0);
        uint64_t limit = ~uint64_t{0} - ~uint64_t{0} % bound;
        uint64_t v;
        do {
            v = next();
        } while (v >= limit);
        return v % bound;
    }

private:
    uint64_t state_;
};

enum class SynthKind : uint8_t {
    Sequential,    // every line of every page, in order
    Strided,       // lines stepping by a fixed stride
    RegionPermute, // per fresh page: trigger offset first, rest shuffled
    SparseRandom,  // each line of a page included with probability density
    MultiPcRegion, // RegionPermute with several PCs, one offset set each
};

struct SynthSpec {
    SynthKind kind = SynthKind::Sequential;
    uint64_t pages = 1;
    uint64_t base_page = 16; // first physical page used
    uint64_t pc = 0x401000;
    uint64_t seed = 1;
    int stride = 1;                     // Strided
    std::vector<unsigned> offsets;      // RegionPermute: trigger first
    double density = 0.25;              // SparseRandom
    unsigned jitter = 0;                // RegionPermute: extra random offsets per page
    std::vector<uint64_t> pcs;          // MultiPcRegion
    std::vector<std::vector<unsigned>> offset_sets; // MultiPcRegion, parallel to pcs

    bool valid(std::string* why = nullptr) const {
        auto fail = [&](const char* msg) {
            if (why)
                *why = msg;
            return false;
        };
        if (pages == 0)
            return fail("pages must be > 0");
        switch (kind) {
        case SynthKind::Sequential:
            break;
        case SynthKind::Strided:
            if (stride == 0)
                return fail("stride must be nonzero");
            break;
        case SynthKind::RegionPermute: {
            if (offsets.empty())
                return fail("region-permute needs a nonempty offset set");
            for (unsigned o : offsets)
                if (o >= 64)
                    return fail("offset out of page range");
            for (size_t i = 0; i < offsets.size(); ++i)
                for (size_t j = i + 1; j < offsets.size(); ++j)
                    if (offsets[i] == offsets[j])
                        return fail("duplicate offset");
            break;
        }
        case SynthKind::SparseRandom:
            if (density <= 0.0 || density > 1.0)
                return fail("density must be in (0,1]");
            break;
        case SynthKind::MultiPcRegion:
            if (pcs.empty() || pcs.size() != offset_sets.size())
                return fail("multi-pc-region needs parallel pcs/offset sets");
            for (const auto& set : offset_sets) {
                if (set.empty())
                    return fail("empty offset set");
                for (unsigned o : set)
                    if (o >= 64)
                        return fail("offset out of page range");
            }
            break;
        }
        return true;
    }
};

// Deterministic synthetic workload generation. Every generated address lies
// in the declared page range; region-permute pages always start with the
// declared trigger offset.
inline TraceFile generate(const SynthSpec& spec) {
    std::string why;
    if (!spec.valid(&why))
        throw TraceError("invalid synth spec: " + why);

    TraceFile t;
    SplitMix64 rng(spec.seed);
    uint64_t seq = 0;
    auto emit = [&](uint64_t pc, uint64_t paddr) {
        t.records.push_back({seq++, pc, paddr, false});
    };
    auto page_base = [&](uint64_t p) { return (spec.base_page + p) << 12; };

    auto emit_permuted_page = [&](uint64_t page, uint64_t pc,
                                  const std::vector<unsigned>& offsets, unsigned jitter) {
        std::vector<unsigned> order = offsets;
        if (jitter > 0) {
            // Extra per-page offsets make the per-signature pattern vary.
            for (unsigned j = 0; j < jitter; ++j) {
                unsigned o = static_cast<unsigned>(rng.bounded(64));
                bool dup = false;
                for (unsigned e : order)
                    dup |= (e == o);
                if (!dup)
                    order.push_back(o);
            }
        }
        // Fisher-Yates over order[1..]: the trigger stays first.
        for (size_t i = order.size() - 1; i > 1; --i)
            std::swap(order[i], order[1 + rng.bounded(i)]);
        for (unsigned o : order)
            emit(pc, page_base(page) | (static_cast<uint64_t>(o) << 6));
    };

    switch (spec.kind) {
    case SynthKind::Sequential:
        for (uint64_t p = 0; p < spec.pages; ++p)
            for (unsigned l = 0; l < 64; ++l)
                emit(spec.pc, page_base(p) | (static_cast<uint64_t>(l) << 6));
        break;
    case SynthKind::Strided: {
        // Global line index walks by the stride across the page range.
        const int64_t total = static_cast<int64_t>(spec.pages) * 64;
        int64_t line = spec.stride > 0 ? 0 : total - 1;
        while (line >= 0 && line < total) {
            emit(spec.pc, (page_base(0)) + (static_cast<uint64_t>(line) << 6));
            line += spec.stride;
        }
        break;
    }
    case SynthKind::RegionPermute:
        for (uint64_t p = 0; p < spec.pages; ++p)
            emit_permuted_page(p, spec.pc, spec.offsets, spec.jitter);
        break;
    case SynthKind::SparseRandom: {
        const uint64_t threshold =
            static_cast<uint64_t>(spec.density * 18446744073709551615.0);
        for (uint64_t p = 0; p < spec.pages; ++p)
            for (unsigned l = 0; l < 64; ++l)
                if (rng.next() <= threshold)
                    emit(spec.pc, page_base(p) | (static_cast<uint64_t>(l) << 6));
        break;
    }
    case SynthKind::MultiPcRegion:
        for (uint64_t p = 0; p < spec.pages; ++p) {
            size_t which = p % spec.pcs.size();
            emit_permuted_page(p, spec.pcs[which], spec.offset_sets[which], spec.jitter);
        }
        break;
    }
    return t;
}

} // namespace dspatch

#endif // DSPATCH_TRACE_HPP
