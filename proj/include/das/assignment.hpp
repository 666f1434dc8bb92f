// Deterministic per-epoch custody assignment. sigma(node, epoch seed) derives
// a per-node PRNG stream by hashing the epoch seed with the node id, then
// rejection-samples distinct rows and columns. No view parameter: any two
// parties compute identical assignments for a node they both know.

#pragma once

#include <cstdint>
#include <vector>

#include "das/bytes.hpp"
#include "das/grid.hpp"

namespace das {

struct NodeId {
    Hash32 bytes{};

    auto operator<=>(const NodeId&) const = default;
};

// Stable id for test and simulator populations.
NodeId make_node_id(std::uint64_t index);

struct EpochSeed {
    std::uint64_t epoch = 0;
    Hash32 seed{};  // opaque; known one epoch in advance
};

struct AssignmentParams {
    std::uint32_t rows_per_node = 8;
    std::uint32_t cols_per_node = 8;
};

struct Assignment {
    NodeId node;
    std::uint64_t epoch = 0;
    std::vector<std::uint16_t> rows;  // sorted, distinct
    std::vector<std::uint16_t> cols;  // sorted, distinct

    bool has_row(std::uint32_t r) const;
    bool has_col(std::uint32_t c) const;
    bool covers_line(LineId line) const {
        return line.kind == LineKind::Row ? has_row(line.index) : has_col(line.index);
    }
    bool covers_cell(CellIndex c) const { return has_row(c.row) || has_col(c.col); }
};

struct View {
    NodeId owner;
    std::vector<NodeId> members;  // may omit live nodes and include dead ones
};

Assignment sigma(const NodeId& node, const EpochSeed& es, const GridParams& params,
                 const AssignmentParams& ap = {});

// Union of all cells on the assigned rows and columns; intersections counted
// once. Sorted by ordinal.
std::vector<CellIndex> custody_cells(const Assignment& a, const GridParams& params);

std::vector<NodeId> holders_of_line(LineId line, const View& view, const EpochSeed& es,
                                    const GridParams& params, const AssignmentParams& ap = {});

std::vector<NodeId> holders_of_cell(CellIndex cell, const View& view, const EpochSeed& es,
                                    const GridParams& params, const AssignmentParams& ap = {});

}  // namespace das
