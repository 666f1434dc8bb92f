// Blob cell-grid geometry: grid parameters, cell/line addressing, byte-size
// accounting, and the dense extended-matrix container used by the builder.
// Nodes hold sparse subsets; PresenceGrid tracks per-cell availability with
// per-line counts.

#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "das/bytes.hpp"

namespace das {

struct GridParams {
    std::uint32_t k = 256;                 // original rows/cols (cells)
    std::uint32_t cell_payload_bytes = 512;
    std::uint32_t proof_bytes = 48;

    std::uint32_t n() const { return 2 * k; }
    std::uint32_t cell_bytes() const { return cell_payload_bytes + proof_bytes; }
    std::uint64_t cell_count() const { return static_cast<std::uint64_t>(n()) * n(); }

    void validate() const {
        if (k == 0) throw std::invalid_argument("grid: k must be positive");
        if (cell_payload_bytes == 0) throw std::invalid_argument("grid: empty cell payload");
    }
};

struct CellIndex {
    std::uint32_t row = 0;
    std::uint32_t col = 0;

    auto operator<=>(const CellIndex&) const = default;
};

// Flat ordinal row*n+col; the canonical dense/bitset indexing.
inline std::uint32_t cell_ordinal(CellIndex c, const GridParams& p) {
    return c.row * p.n() + c.col;
}
inline CellIndex cell_from_ordinal(std::uint32_t ord, const GridParams& p) {
    return CellIndex{ord / p.n(), ord % p.n()};
}

enum class LineKind : std::uint8_t { Row = 0, Column = 1 };

struct LineId {
    LineKind kind = LineKind::Row;
    std::uint32_t index = 0;

    auto operator<=>(const LineId&) const = default;
};

// Cell at position `pos` along a line: rows vary by column, columns by row.
inline CellIndex line_cell_at(LineId line, std::uint32_t pos) {
    return line.kind == LineKind::Row ? CellIndex{line.index, pos} : CellIndex{pos, line.index};
}

// The n cells of a line, ordered by the varying coordinate.
std::vector<CellIndex> line_cells(LineId line, const GridParams& params);

// n^2 * (payload + proof).
std::uint64_t extended_blob_bytes(const GridParams& params);

struct Cell {
    CellIndex index;
    Bytes payload;
    Bytes proof;
};

// Proof placeholder: hash of (blob id, cell index, payload), truncated or
// zero-padded to proof_bytes. Keeps message sizes byte-accurate and gives
// receivers a recomputable integrity check.
Bytes make_cell_proof(const Hash32& blob_id, CellIndex index, ByteSpan payload,
                      std::uint32_t proof_bytes);
bool verify_cell_proof(const Hash32& blob_id, const Cell& cell, const GridParams& params);

// Dense n x n matrix of cell payloads (single flat buffer) with optional
// sealed proofs. Built once per slot by the builder; immutable afterwards.
class ExtendedBlobMatrix {
public:
    ExtendedBlobMatrix(GridParams params, Bytes payloads);

    const GridParams& params() const { return params_; }

    ByteSpan payload(CellIndex c) const {
        std::uint64_t off =
            static_cast<std::uint64_t>(cell_ordinal(c, params_)) * params_.cell_payload_bytes;
        return ByteSpan{payloads_.data() + off, params_.cell_payload_bytes};
    }

    // Computes and stores per-cell proofs bound to `blob_id`.
    void seal(const Hash32& blob_id);
    bool sealed() const { return !proofs_.empty(); }
    const Hash32& blob_id() const { return blob_id_; }

    ByteSpan proof(CellIndex c) const {
        std::uint64_t off =
            static_cast<std::uint64_t>(cell_ordinal(c, params_)) * params_.proof_bytes;
        return ByteSpan{proofs_.data() + off, params_.proof_bytes};
    }

    Cell cell(CellIndex c) const;

private:
    GridParams params_;
    Bytes payloads_;
    Bytes proofs_;
    Hash32 blob_id_{};
};

// Bitset over the n x n grid with per-row/per-column population counts.
// Backs erasure closure checks and per-node holdings in the simulator.
class PresenceGrid {
public:
    explicit PresenceGrid(const GridParams& p)
        : n_(p.n()),
          bits_((static_cast<std::size_t>(n_) * n_ + 63) / 64, 0),
          row_counts_(n_, 0),
          col_counts_(n_, 0) {}

    std::uint32_t n() const { return n_; }
    std::uint64_t count() const { return count_; }

    bool test(CellIndex c) const {
        std::uint64_t ord = static_cast<std::uint64_t>(c.row) * n_ + c.col;
        return (bits_[ord >> 6] >> (ord & 63)) & 1;
    }

    // Returns true if the bit was newly set.
    bool set(CellIndex c) {
        std::uint64_t ord = static_cast<std::uint64_t>(c.row) * n_ + c.col;
        std::uint64_t& w = bits_[ord >> 6];
        std::uint64_t m = 1ull << (ord & 63);
        if (w & m) return false;
        w |= m;
        ++row_counts_[c.row];
        ++col_counts_[c.col];
        ++count_;
        return true;
    }

    std::uint32_t row_count(std::uint32_t r) const { return row_counts_[r]; }
    std::uint32_t col_count(std::uint32_t c) const { return col_counts_[c]; }
    std::uint32_t line_count(LineId line) const {
        return line.kind == LineKind::Row ? row_counts_[line.index] : col_counts_[line.index];
    }
    bool full() const { return count_ == static_cast<std::uint64_t>(n_) * n_; }

private:
    std::uint32_t n_;
    std::vector<std::uint64_t> bits_;
    std::vector<std::uint32_t> row_counts_;
    std::vector<std::uint32_t> col_counts_;
    std::uint64_t count_ = 0;
};

}  // namespace das
