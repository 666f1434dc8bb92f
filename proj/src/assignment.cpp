#include "das/assignment.hpp"

#include <algorithm>

#include "das/rng.hpp"

namespace das {

NodeId make_node_id(std::uint64_t index) {
    HashWriter w;
    w.write("node-id").write_u64(index);
    return NodeId{w.finish()};
}

bool Assignment::has_row(std::uint32_t r) const {
    return std::binary_search(rows.begin(), rows.end(), static_cast<std::uint16_t>(r));
}

bool Assignment::has_col(std::uint32_t c) const {
    return std::binary_search(cols.begin(), cols.end(), static_cast<std::uint16_t>(c));
}

Assignment sigma(const NodeId& node, const EpochSeed& es, const GridParams& params,
                 const AssignmentParams& ap) {
    params.validate();
    const std::uint32_t n = params.n();
    if (ap.rows_per_node > n || ap.cols_per_node > n) {
        throw std::invalid_argument("sigma: per-node line count exceeds grid dimension");
    }
    HashWriter w;
    w.write("sigma").write_u64(es.epoch).write(as_span(es.seed)).write(as_span(node.bytes));
    DetRng rng(w.finish());

    Assignment a;
    a.node = node;
    a.epoch = es.epoch;
    for (std::uint64_t v : rng.sample_distinct(ap.rows_per_node, n)) {
        a.rows.push_back(static_cast<std::uint16_t>(v));
    }
    for (std::uint64_t v : rng.sample_distinct(ap.cols_per_node, n)) {
        a.cols.push_back(static_cast<std::uint16_t>(v));
    }
    std::sort(a.rows.begin(), a.rows.end());
    std::sort(a.cols.begin(), a.cols.end());
    return a;
}

std::vector<CellIndex> custody_cells(const Assignment& a, const GridParams& params) {
    const std::uint32_t n = params.n();
    std::vector<CellIndex> out;
    out.reserve(static_cast<std::size_t>(a.rows.size() + a.cols.size()) * n);
    for (std::uint16_t r : a.rows) {
        for (std::uint32_t c = 0; c < n; ++c) out.push_back(CellIndex{r, c});
    }
    for (std::uint16_t c : a.cols) {
        for (std::uint32_t r = 0; r < n; ++r) {
            if (!a.has_row(r)) out.push_back(CellIndex{r, c});  // intersections counted once
        }
    }
    std::sort(out.begin(), out.end(),
              [&](CellIndex x, CellIndex y) { return cell_ordinal(x, params) < cell_ordinal(y, params); });
    return out;
}

std::vector<NodeId> holders_of_line(LineId line, const View& view, const EpochSeed& es,
                                    const GridParams& params, const AssignmentParams& ap) {
    std::vector<NodeId> out;
    for (const NodeId& m : view.members) {
        if (sigma(m, es, params, ap).covers_line(line)) out.push_back(m);
    }
    return out;
}

std::vector<NodeId> holders_of_cell(CellIndex cell, const View& view, const EpochSeed& es,
                                    const GridParams& params, const AssignmentParams& ap) {
    std::vector<NodeId> out;
    for (const NodeId& m : view.members) {
        if (sigma(m, es, params, ap).covers_cell(cell)) out.push_back(m);
    }
    return out;
}

}  // namespace das
