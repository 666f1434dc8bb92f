#include "das/grid.hpp"

#include <algorithm>
#include <cstring>

namespace das {

std::vector<CellIndex> line_cells(LineId line, const GridParams& params) {
    params.validate();
    if (line.index >= params.n()) throw std::out_of_range("line_cells: line index out of range");
    std::vector<CellIndex> out;
    out.reserve(params.n());
    for (std::uint32_t pos = 0; pos < params.n(); ++pos) out.push_back(line_cell_at(line, pos));
    return out;
}

std::uint64_t extended_blob_bytes(const GridParams& params) {
    params.validate();
    return params.cell_count() * params.cell_bytes();
}

Bytes make_cell_proof(const Hash32& blob_id, CellIndex index, ByteSpan payload,
                      std::uint32_t proof_bytes) {
    HashWriter w;
    w.write(as_span(blob_id))
        .write_u64(index.row)
        .write_u64(index.col)
        .write(payload);
    Hash32 digest = w.finish();
    Bytes proof(proof_bytes, 0);
    std::memcpy(proof.data(), digest.data(), std::min<std::size_t>(proof.size(), digest.size()));
    return proof;
}

bool verify_cell_proof(const Hash32& blob_id, const Cell& cell, const GridParams& params) {
    if (cell.payload.size() != params.cell_payload_bytes) return false;
    if (cell.proof.size() != params.proof_bytes) return false;
    return make_cell_proof(blob_id, cell.index, cell.payload, params.proof_bytes) == cell.proof;
}

ExtendedBlobMatrix::ExtendedBlobMatrix(GridParams params, Bytes payloads)
    : params_(params), payloads_(std::move(payloads)) {
    params_.validate();
    std::uint64_t expected = params_.cell_count() * params_.cell_payload_bytes;
    if (payloads_.size() != expected) {
        throw std::invalid_argument("ExtendedBlobMatrix: payload buffer size mismatch");
    }
}

void ExtendedBlobMatrix::seal(const Hash32& blob_id) {
    blob_id_ = blob_id;
    proofs_.assign(params_.cell_count() * params_.proof_bytes, 0);
    const std::uint32_t n = params_.n();
    for (std::uint32_t r = 0; r < n; ++r) {
        for (std::uint32_t c = 0; c < n; ++c) {
            CellIndex idx{r, c};
            Bytes p = make_cell_proof(blob_id, idx, payload(idx), params_.proof_bytes);
            std::uint64_t off =
                static_cast<std::uint64_t>(cell_ordinal(idx, params_)) * params_.proof_bytes;
            std::memcpy(proofs_.data() + off, p.data(), p.size());
        }
    }
}

Cell ExtendedBlobMatrix::cell(CellIndex c) const {
    Cell out;
    out.index = c;
    ByteSpan pay = payload(c);
    out.payload.assign(pay.begin(), pay.end());
    if (sealed()) {
        ByteSpan pr = proof(c);
        out.proof.assign(pr.begin(), pr.end());
    } else {
        out.proof.assign(params_.proof_bytes, 0);
    }
    return out;
}

}  // namespace das
