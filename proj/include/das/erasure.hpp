// Systematic Reed-Solomon coding of rows and columns over GF(2^16).
// A line of n cells holds one codeword per 16-bit symbol position: data
// symbols sit at positions [0, k), parity at [k, n) is the evaluation of the
// degree-<k interpolating polynomial at those points. Any k of the n
// positions determine the line.

#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "das/grid.hpp"

namespace das {

// GF(2^16), primitive polynomial x^16 + x^12 + x^3 + x + 1 (0x1100B).
namespace gf16 {

std::uint16_t mul(std::uint16_t a, std::uint16_t b);
std::uint16_t inv(std::uint16_t a);
inline std::uint16_t add(std::uint16_t a, std::uint16_t b) { return a ^ b; }

// Reference multiply (shift-and-reduce), used as the table oracle in tests.
std::uint16_t mul_slow(std::uint16_t a, std::uint16_t b);

}  // namespace gf16

struct LineCodeword {
    LineId line;
    std::map<std::uint32_t, Bytes> shares;  // position -> cell payload
};

enum class ReconstructStatus : std::uint8_t { Ok, InsufficientShares, InconsistentShares };

struct ReconstructOutcome {
    ReconstructStatus status = ReconstructStatus::Ok;
    std::vector<Bytes> payloads;  // n payloads in position order when Ok

    bool ok() const { return status == ReconstructStatus::Ok; }
};

// Extends a k x k original payload matrix (row-major flat buffer,
// k*k*cell_payload_bytes) to the n x n matrix. Systematic: the top-left
// quadrant equals the input. Every row and column of the result is a valid
// codeword; the result does not depend on the extension order.
ExtendedBlobMatrix extend_blob(ByteSpan original_payloads, const GridParams& params);

// Full line (n payloads, data positions [0, k)) from its first k payloads.
std::vector<Bytes> extend_line(const std::vector<Bytes>& data_payloads, const GridParams& params);

// Recovers all n payloads of a line from any >= k shares. Extra shares are
// checked against the decoded codeword; a mismatch reports
// InconsistentShares rather than silently propagating corrupt data.
ReconstructOutcome reconstruct_line(const LineCodeword& partial, const GridParams& params);

// Greedy line closure: repeatedly complete any row or column with >= k
// present cells until fixpoint.
void close_presence(PresenceGrid& presence, const GridParams& params);

// True iff iterated row/column decoding from `available` reaches the full
// n x n matrix.
bool reconstructable(const std::vector<CellIndex>& available, const GridParams& params);

}  // namespace das
