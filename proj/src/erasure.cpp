#include "das/erasure.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <mutex>
#include <stdexcept>

namespace das {

namespace gf16 {
namespace {

constexpr std::uint32_t kPrimitivePoly = 0x1100B;
constexpr std::uint32_t kFieldOrder = 1u << 16;
constexpr std::uint32_t kGroupOrder = kFieldOrder - 1;

struct Tables {
    std::vector<std::uint16_t> log;
    std::vector<std::uint16_t> exp;  // doubled so mul never reduces mod group order

    Tables() : log(kFieldOrder, 0), exp(2 * kGroupOrder, 0) {
        std::uint32_t x = 1;
        for (std::uint32_t i = 0; i < kGroupOrder; ++i) {
            exp[i] = static_cast<std::uint16_t>(x);
            exp[i + kGroupOrder] = static_cast<std::uint16_t>(x);
            log[x] = static_cast<std::uint16_t>(i);
            x <<= 1;
            if (x & kFieldOrder) x ^= kPrimitivePoly;
        }
    }
};

const Tables& tables() {
    static const Tables t;
    return t;
}

}  // namespace

std::uint16_t mul(std::uint16_t a, std::uint16_t b) {
    if (a == 0 || b == 0) return 0;
    const Tables& t = tables();
    return t.exp[static_cast<std::uint32_t>(t.log[a]) + t.log[b]];
}

std::uint16_t inv(std::uint16_t a) {
    if (a == 0) throw std::domain_error("gf16: inverse of zero");
    const Tables& t = tables();
    return t.exp[kGroupOrder - t.log[a]];
}

std::uint16_t mul_slow(std::uint16_t a, std::uint16_t b) {
    std::uint32_t acc = 0;
    std::uint32_t aa = a;
    for (std::uint32_t bb = b; bb != 0; bb >>= 1) {
        if (bb & 1) acc ^= aa;
        aa <<= 1;
        if (aa & kFieldOrder) aa ^= kPrimitivePoly;
    }
    return static_cast<std::uint16_t>(acc);
}

}  // namespace gf16

namespace {

// Lagrange evaluation coefficients: value at every target position as a
// linear combination of the shares at `sources`. All positions are field
// elements; subtraction is xor.
std::vector<std::vector<std::uint16_t>> eval_coeffs(const std::vector<std::uint16_t>& sources,
                                                    const std::vector<std::uint16_t>& targets) {
    const std::size_t k = sources.size();
    // Barycentric weights w_s = 1 / prod_{s' != s} (x_s - x_s')
    std::vector<std::uint16_t> w(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::uint16_t prod = 1;
        for (std::size_t j = 0; j < k; ++j) {
            if (j == i) continue;
            prod = gf16::mul(prod, sources[i] ^ sources[j]);
        }
        w[i] = gf16::inv(prod);
    }
    std::vector<std::vector<std::uint16_t>> coeffs(targets.size(),
                                                   std::vector<std::uint16_t>(k));
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        std::uint16_t x = targets[ti];
        // l(x) = prod_s (x - x_s); nonzero because targets avoid sources.
        std::uint16_t lx = 1;
        for (std::size_t i = 0; i < k; ++i) lx = gf16::mul(lx, x ^ sources[i]);
        for (std::size_t i = 0; i < k; ++i) {
            coeffs[ti][i] = gf16::mul(gf16::mul(lx, w[i]), gf16::inv(x ^ sources[i]));
        }
    }
    return coeffs;
}

std::uint32_t symbols_per_payload(const GridParams& params) {
    if (params.cell_payload_bytes % 2 != 0) {
        throw std::invalid_argument("erasure: cell payload must be an even byte count");
    }
    return params.cell_payload_bytes / 2;
}

inline std::uint16_t load_sym(const std::uint8_t* payload, std::uint32_t s) {
    return static_cast<std::uint16_t>(payload[2 * s] |
                                      (static_cast<std::uint16_t>(payload[2 * s + 1]) << 8));
}

inline void store_sym(std::uint8_t* payload, std::uint32_t s, std::uint16_t v) {
    payload[2 * s] = static_cast<std::uint8_t>(v & 0xff);
    payload[2 * s + 1] = static_cast<std::uint8_t>(v >> 8);
}

// Applies coefficient rows to k source payloads, producing one payload per
// target. Shared by extension and reconstruction.
void apply_coeffs(const std::vector<std::vector<std::uint16_t>>& coeffs,
                  const std::vector<const std::uint8_t*>& sources, std::uint32_t syms,
                  const std::vector<std::uint8_t*>& outputs) {
    const std::size_t k = sources.size();
    std::vector<std::uint16_t> column(k);
    for (std::uint32_t s = 0; s < syms; ++s) {
        for (std::size_t i = 0; i < k; ++i) column[i] = load_sym(sources[i], s);
        for (std::size_t ti = 0; ti < outputs.size(); ++ti) {
            const std::vector<std::uint16_t>& row = coeffs[ti];
            std::uint16_t acc = 0;
            for (std::size_t i = 0; i < k; ++i) {
                if (column[i] != 0) acc ^= gf16::mul(row[i], column[i]);
            }
            store_sym(outputs[ti], s, acc);
        }
    }
}

// Parity coefficients for systematic extension (sources [0,k), targets
// [k,n)), cached per grid geometry.
const std::vector<std::vector<std::uint16_t>>& extension_coeffs(std::uint32_t k,
                                                                std::uint32_t n) {
    static std::mutex mu;
    static std::map<std::pair<std::uint32_t, std::uint32_t>,
                    std::vector<std::vector<std::uint16_t>>>
        cache;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_pair(k, n);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    std::vector<std::uint16_t> sources(k), targets(n - k);
    for (std::uint32_t i = 0; i < k; ++i) sources[i] = static_cast<std::uint16_t>(i);
    for (std::uint32_t i = k; i < n; ++i) targets[i - k] = static_cast<std::uint16_t>(i);
    return cache.emplace(key, eval_coeffs(sources, targets)).first->second;
}

}  // namespace

std::vector<Bytes> extend_line(const std::vector<Bytes>& data_payloads,
                               const GridParams& params) {
    params.validate();
    const std::uint32_t k = params.k;
    const std::uint32_t n = params.n();
    const std::uint32_t syms = symbols_per_payload(params);
    if (data_payloads.size() != k) {
        throw std::invalid_argument("extend_line: expected k data payloads");
    }
    for (const Bytes& p : data_payloads) {
        if (p.size() != params.cell_payload_bytes) {
            throw std::invalid_argument("extend_line: payload size mismatch");
        }
    }
    std::vector<Bytes> out(n);
    for (std::uint32_t i = 0; i < k; ++i) out[i] = data_payloads[i];
    for (std::uint32_t i = k; i < n; ++i) out[i].assign(params.cell_payload_bytes, 0);

    std::vector<const std::uint8_t*> sources(k);
    for (std::uint32_t i = 0; i < k; ++i) sources[i] = out[i].data();
    std::vector<std::uint8_t*> outputs(n - k);
    for (std::uint32_t i = k; i < n; ++i) outputs[i - k] = out[i].data();
    apply_coeffs(extension_coeffs(k, n), sources, syms, outputs);
    return out;
}

ExtendedBlobMatrix extend_blob(ByteSpan original_payloads, const GridParams& params) {
    params.validate();
    const std::uint32_t k = params.k;
    const std::uint32_t n = params.n();
    const std::uint32_t psz = params.cell_payload_bytes;
    const std::uint32_t syms = symbols_per_payload(params);
    const std::uint64_t expected = static_cast<std::uint64_t>(k) * k * psz;
    if (original_payloads.size() != expected) {
        throw std::invalid_argument("extend_blob: original must be k*k payloads");
    }

    Bytes flat(static_cast<std::size_t>(n) * n * psz, 0);
    auto cell_ptr = [&](std::uint32_t r, std::uint32_t c) {
        return flat.data() + (static_cast<std::uint64_t>(r) * n + c) * psz;
    };
    for (std::uint32_t r = 0; r < k; ++r) {
        std::memcpy(cell_ptr(r, 0), original_payloads.data() + static_cast<std::uint64_t>(r) * k * psz,
                    static_cast<std::size_t>(k) * psz);
    }

    const auto& coeffs = extension_coeffs(k, n);
    std::vector<const std::uint8_t*> sources(k);
    std::vector<std::uint8_t*> outputs(n - k);

    // Row extension over the original rows.
    for (std::uint32_t r = 0; r < k; ++r) {
        for (std::uint32_t c = 0; c < k; ++c) sources[c] = cell_ptr(r, c);
        for (std::uint32_t c = k; c < n; ++c) outputs[c - k] = cell_ptr(r, c);
        apply_coeffs(coeffs, sources, syms, outputs);
    }
    // Column extension over all n columns; parity-of-parity comes out of the
    // row-extended parity columns.
    for (std::uint32_t c = 0; c < n; ++c) {
        for (std::uint32_t r = 0; r < k; ++r) sources[r] = cell_ptr(r, c);
        for (std::uint32_t r = k; r < n; ++r) outputs[r - k] = cell_ptr(r, c);
        apply_coeffs(coeffs, sources, syms, outputs);
    }
    return ExtendedBlobMatrix(params, std::move(flat));
}

ReconstructOutcome reconstruct_line(const LineCodeword& partial, const GridParams& params) {
    params.validate();
    const std::uint32_t k = params.k;
    const std::uint32_t n = params.n();
    const std::uint32_t syms = symbols_per_payload(params);

    ReconstructOutcome out;
    if (partial.shares.size() < k) {
        out.status = ReconstructStatus::InsufficientShares;
        return out;
    }
    for (const auto& [pos, payload] : partial.shares) {
        if (pos >= n) throw std::out_of_range("reconstruct_line: share position out of range");
        if (payload.size() != params.cell_payload_bytes) {
            throw std::invalid_argument("reconstruct_line: share payload size mismatch");
        }
    }

    // Basis: first k shares in position order. Everything else is derived,
    // then checked against any extra provided shares.
    std::vector<std::uint16_t> basis_pos;
    std::vector<const std::uint8_t*> basis_data;
    basis_pos.reserve(k);
    basis_data.reserve(k);
    for (const auto& [pos, payload] : partial.shares) {
        if (basis_pos.size() == k) break;
        basis_pos.push_back(static_cast<std::uint16_t>(pos));
        basis_data.push_back(payload.data());
    }

    out.payloads.assign(n, Bytes());
    std::vector<std::uint16_t> targets;
    std::vector<std::uint8_t*> outputs;
    {
        std::size_t bi = 0;
        for (std::uint32_t pos = 0; pos < n; ++pos) {
            if (bi < basis_pos.size() && basis_pos[bi] == pos) {
                out.payloads[pos].assign(basis_data[bi], basis_data[bi] + params.cell_payload_bytes);
                ++bi;
            } else {
                out.payloads[pos].assign(params.cell_payload_bytes, 0);
                targets.push_back(static_cast<std::uint16_t>(pos));
            }
        }
        for (std::uint16_t t : targets) outputs.push_back(out.payloads[t].data());
    }
    if (!targets.empty()) {
        apply_coeffs(eval_coeffs(basis_pos, targets), basis_data, syms, outputs);
    }

    // Extra shares must lie on the decoded codeword.
    std::size_t seen = 0;
    for (const auto& [pos, payload] : partial.shares) {
        if (seen++ < k) continue;
        if (out.payloads[pos] != payload) {
            out.status = ReconstructStatus::InconsistentShares;
            out.payloads.clear();
            return out;
        }
    }
    return out;
}

void close_presence(PresenceGrid& presence, const GridParams& params) {
    const std::uint32_t k = params.k;
    const std::uint32_t n = params.n();
    if (presence.n() != n) throw std::invalid_argument("close_presence: grid size mismatch");

    // Worklist of decodable, incomplete lines.
    std::vector<LineId> work;
    for (std::uint32_t i = 0; i < n; ++i) {
        if (presence.row_count(i) >= k && presence.row_count(i) < n)
            work.push_back({LineKind::Row, i});
        if (presence.col_count(i) >= k && presence.col_count(i) < n)
            work.push_back({LineKind::Column, i});
    }
    while (!work.empty()) {
        LineId line = work.back();
        work.pop_back();
        if (presence.line_count(line) >= n) continue;
        for (std::uint32_t pos = 0; pos < n; ++pos) {
            CellIndex c = line_cell_at(line, pos);
            if (!presence.set(c)) continue;
            // Completing this cell may make the crossing line decodable.
            LineId crossing = line.kind == LineKind::Row ? LineId{LineKind::Column, c.col}
                                                         : LineId{LineKind::Row, c.row};
            std::uint32_t cnt = presence.line_count(crossing);
            if (cnt == k) work.push_back(crossing);
        }
    }
}

bool reconstructable(const std::vector<CellIndex>& available, const GridParams& params) {
    params.validate();
    PresenceGrid presence(params);
    for (CellIndex c : available) {
        if (c.row >= params.n() || c.col >= params.n()) {
            throw std::out_of_range("reconstructable: cell index out of range");
        }
        presence.set(c);
    }
    close_presence(presence, params);
    return presence.full();
}

}  // namespace das
