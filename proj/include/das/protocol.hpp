// Builder-side protocol pieces: the peer directory for one epoch, seeding
// policies and parcel planning, consolidation boost maps, the fetch schedule,
// and the wire-size accounting for the simulated message vocabulary.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "das/assignment.hpp"
#include "das/grid.hpp"
#include "das/rng.hpp"

namespace das {

// Dense handle for a node within one simulated population.
using PeerIndex = std::uint32_t;

// Assignments and line membership for a whole population, computed once per
// epoch. Line membership is bitmask-backed so per-cell custody tests are
// constant time during fetch scoring.
class PeerDirectory {
public:
    PeerDirectory(GridParams grid, EpochSeed epoch, AssignmentParams ap,
                  std::vector<NodeId> ids);

    // Directory over hand-picked assignments (test scaffolding).
    PeerDirectory(GridParams grid, EpochSeed epoch, std::vector<Assignment> assignments);

    std::size_t size() const { return ids_.size(); }
    const GridParams& grid() const { return grid_; }
    const EpochSeed& epoch() const { return epoch_; }
    const AssignmentParams& assignment_params() const { return ap_; }

    const NodeId& id(PeerIndex i) const { return ids_[i]; }
    const Assignment& assignment(PeerIndex i) const { return assignments_[i]; }

    bool peer_has_row(PeerIndex i, std::uint32_t row) const {
        return test_mask(row_masks_, i, row);
    }
    bool peer_has_col(PeerIndex i, std::uint32_t col) const {
        return test_mask(col_masks_, i, col);
    }
    bool peer_covers_cell(PeerIndex i, CellIndex c) const {
        return peer_has_row(i, c.row) || peer_has_col(i, c.col);
    }
    bool peer_covers_line(PeerIndex i, LineId line) const {
        return line.kind == LineKind::Row ? peer_has_row(i, line.index)
                                          : peer_has_col(i, line.index);
    }

    // All population members holding the line, ascending peer index.
    const std::vector<PeerIndex>& holders_of(LineId line) const;

private:
    void index_lines();

    bool test_mask(const std::vector<std::uint64_t>& masks, PeerIndex i,
                   std::uint32_t bit) const {
        return (masks[i * words_per_mask_ + (bit >> 6)] >> (bit & 63)) & 1;
    }

    GridParams grid_;
    EpochSeed epoch_;
    AssignmentParams ap_;
    std::vector<NodeId> ids_;
    std::vector<Assignment> assignments_;
    std::uint32_t words_per_mask_;
    std::vector<std::uint64_t> row_masks_;  // size() * words_per_mask_
    std::vector<std::uint64_t> col_masks_;
    std::vector<std::vector<PeerIndex>> line_holders_;  // rows then columns
};

enum class PolicyKind : std::uint8_t { Minimal, Single, Redundant };

struct SeedingPolicy {
    PolicyKind kind = PolicyKind::Redundant;
    std::uint32_t redundancy_k = 8;  // copies per parcel, Redundant only
};

// Contiguous run of positions [begin, end) along one line.
struct LineRange {
    LineId line;
    std::uint16_t begin = 0;
    std::uint16_t end = 0;

    std::uint32_t length() const { return end - begin; }
};

struct BoostEntry {
    PeerIndex peer = 0;
    LineRange range;
};

struct SeedMessage {
    std::uint64_t slot = 0;
    std::uint64_t builder_token = 0;  // proposer-signed legitimacy placeholder
    std::vector<LineRange> parcels;
    std::vector<BoostEntry> boost;
    std::uint64_t cell_count = 0;  // sum of parcel lengths
};

struct SeedPlan {
    std::map<PeerIndex, SeedMessage> messages;  // ordered for determinism
    std::uint64_t total_cells = 0;              // with redundancy multiplicity
    std::uint64_t unseeded_cells = 0;           // cells of lines with no known holder
};

// Closed-form outgoing payload budget for a policy: minimal k^2, single n^2,
// redundant k_r * n^2 cells, times the cell wire size.
std::uint64_t policy_volume_bytes(const SeedingPolicy& policy, const GridParams& grid);

// The half-line each line contributes under single/redundant seeding. Every
// cell is covered by exactly one line, so the total volume matches the
// policy budget while both row and column custodians receive direct seed:
// rows carry the diagonal quadrants (top-left, bottom-right), columns the
// off-diagonal ones. Minimal keeps only the top-left quadrant, the smallest
// reconstructable set (k full-rate rows). Empty range when the line
// contributes nothing under the policy.
std::optional<LineRange> seeded_range(LineId line, const GridParams& grid, PolicyKind kind);

// Splits each line's seeded range into contiguous parcels over the holders
// the builder knows, one parcel per holder up to the policy's per-line
// recipient cap (k for minimal, n otherwise); under Redundant each parcel
// additionally goes to redundancy_k - 1 other distinct holders. Cells in
// `withheld` are silently dropped from every parcel.
SeedPlan plan_seeding(const SeedingPolicy& policy, const PeerDirectory& directory,
                      const std::vector<PeerIndex>& builder_view, std::uint64_t slot,
                      std::uint64_t builder_token, DetRng& rng,
                      const PresenceGrid* withheld = nullptr);

// Fills every recipient's boost map: for each line of the recipient's
// assignment, the parcels of that line planned for other holders.
void build_boost_maps(SeedPlan& plan, const PeerDirectory& directory);

struct FetchSchedule {
    std::vector<std::int64_t> timeouts_us;   // per round, last value repeats
    std::vector<std::uint32_t> redundancy;   // per round, last value repeats
    std::int64_t cb_boost = 10000;
    std::uint32_t max_rounds = 50;

    std::int64_t timeout_us(std::uint32_t round) const {  // rounds are 1-based
        return timeouts_us[std::min<std::size_t>(round - 1, timeouts_us.size() - 1)];
    }
    std::uint32_t redundancy_k(std::uint32_t round) const {
        return redundancy[std::min<std::size_t>(round - 1, redundancy.size() - 1)];
    }
};

// Decaying timeouts (400, 200, then 100 ms) with redundancy ramping by two
// per round to a cap of 10.
FetchSchedule default_schedule();

// Fixed 400 ms timeout and redundancy 1 in every round.
FetchSchedule constant_schedule();

struct QueryMessage {
    std::uint64_t qid = 0;
    std::vector<std::uint32_t> cells;  // cell ordinals, sorted
};

struct ReplyMessage {
    std::uint64_t qid = 0;
    std::vector<std::uint32_t> cells;
};

// Simulated wire sizes (bandwidth accounting, not a frozen format): fixed
// 8 B headers, 8 B per requested cell id, full cell (payload + proof) per
// carried cell, 8 B per boost entry, 64 B seed legitimacy token.
inline std::uint64_t query_wire_bytes(std::size_t cells) { return 8 + 8 * cells; }
inline std::uint64_t reply_wire_bytes(std::size_t cells, const GridParams& g) {
    return 8 + static_cast<std::uint64_t>(g.cell_bytes()) * cells;
}
inline std::uint64_t seed_wire_bytes(const SeedMessage& m, const GridParams& g) {
    return 8 + 64 + static_cast<std::uint64_t>(g.cell_bytes()) * m.cell_count +
           8 * m.boost.size();
}

}  // namespace das
