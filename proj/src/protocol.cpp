#include "das/protocol.hpp"

#include <algorithm>
#include <stdexcept>

namespace das {

PeerDirectory::PeerDirectory(GridParams grid, EpochSeed epoch, AssignmentParams ap,
                             std::vector<NodeId> ids)
    : grid_(grid), epoch_(epoch), ap_(ap), ids_(std::move(ids)) {
    grid_.validate();
    assignments_.reserve(ids_.size());
    for (PeerIndex i = 0; i < ids_.size(); ++i) {
        assignments_.push_back(sigma(ids_[i], epoch_, grid_, ap_));
    }
    index_lines();
}

PeerDirectory::PeerDirectory(GridParams grid, EpochSeed epoch,
                             std::vector<Assignment> assignments)
    : grid_(grid), epoch_(epoch), assignments_(std::move(assignments)) {
    grid_.validate();
    ids_.reserve(assignments_.size());
    for (const Assignment& a : assignments_) ids_.push_back(a.node);
    index_lines();
}

void PeerDirectory::index_lines() {
    const std::uint32_t n = grid_.n();
    words_per_mask_ = (n + 63) / 64;
    row_masks_.assign(assignments_.size() * words_per_mask_, 0);
    col_masks_.assign(assignments_.size() * words_per_mask_, 0);
    line_holders_.assign(2 * static_cast<std::size_t>(n), {});
    for (PeerIndex i = 0; i < assignments_.size(); ++i) {
        const Assignment& a = assignments_[i];
        for (std::uint16_t r : a.rows) {
            if (r >= n) throw std::out_of_range("directory: row out of range");
            row_masks_[i * words_per_mask_ + (r >> 6)] |= 1ull << (r & 63);
            line_holders_[r].push_back(i);
        }
        for (std::uint16_t c : a.cols) {
            if (c >= n) throw std::out_of_range("directory: column out of range");
            col_masks_[i * words_per_mask_ + (c >> 6)] |= 1ull << (c & 63);
            line_holders_[n + c].push_back(i);
        }
    }
}

const std::vector<PeerIndex>& PeerDirectory::holders_of(LineId line) const {
    const std::uint32_t n = grid_.n();
    if (line.index >= n) throw std::out_of_range("holders_of: line index out of range");
    std::size_t key = line.kind == LineKind::Row ? line.index : n + line.index;
    return line_holders_[key];
}

std::uint64_t policy_volume_bytes(const SeedingPolicy& policy, const GridParams& grid) {
    grid.validate();
    const std::uint64_t k2 = static_cast<std::uint64_t>(grid.k) * grid.k;
    const std::uint64_t n2 = grid.cell_count();
    switch (policy.kind) {
        case PolicyKind::Minimal:
            return k2 * grid.cell_bytes();
        case PolicyKind::Single:
            return n2 * grid.cell_bytes();
        case PolicyKind::Redundant:
            return static_cast<std::uint64_t>(policy.redundancy_k) * n2 * grid.cell_bytes();
    }
    throw std::logic_error("policy_volume_bytes: unknown policy");
}

std::optional<LineRange> seeded_range(LineId line, const GridParams& grid, PolicyKind kind) {
    const auto k = static_cast<std::uint16_t>(grid.k);
    const auto n = static_cast<std::uint16_t>(grid.n());
    if (line.index >= n) throw std::out_of_range("seeded_range: line index out of range");
    if (kind == PolicyKind::Minimal) {
        if (line.kind == LineKind::Row && line.index < k) {
            return LineRange{line, 0, k};
        }
        return std::nullopt;
    }
    if (line.kind == LineKind::Row) {
        return line.index < k ? LineRange{line, 0, k} : LineRange{line, k, n};
    }
    return line.index < k ? LineRange{line, k, n} : LineRange{line, 0, k};
}

namespace {

// Appends [begin, end) minus withheld cells as maximal contiguous runs.
void append_parcel(SeedMessage& msg, LineId line, std::uint16_t begin, std::uint16_t end,
                   const PresenceGrid* withheld, std::uint64_t& total_cells) {
    if (withheld == nullptr) {
        msg.parcels.push_back(LineRange{line, begin, end});
        msg.cell_count += end - begin;
        total_cells += end - begin;
        return;
    }
    std::uint16_t run_start = begin;
    for (std::uint16_t pos = begin; pos <= end; ++pos) {
        bool blocked = pos == end || withheld->test(line_cell_at(line, pos));
        if (blocked) {
            if (pos > run_start) {
                msg.parcels.push_back(LineRange{line, run_start, pos});
                msg.cell_count += pos - run_start;
                total_cells += pos - run_start;
            }
            run_start = static_cast<std::uint16_t>(pos + 1);
        }
    }
}

}  // namespace

SeedPlan plan_seeding(const SeedingPolicy& policy, const PeerDirectory& directory,
                      const std::vector<PeerIndex>& builder_view, std::uint64_t slot,
                      std::uint64_t builder_token, DetRng& rng, const PresenceGrid* withheld) {
    if (builder_view.empty()) throw std::invalid_argument("plan_seeding: empty view");
    const GridParams& grid = directory.grid();
    const std::uint32_t n = grid.n();
    if (policy.kind == PolicyKind::Redundant && policy.redundancy_k == 0) {
        throw std::invalid_argument("plan_seeding: zero redundancy");
    }

    std::vector<std::uint8_t> in_view(directory.size(), 0);
    for (PeerIndex p : builder_view) in_view[p] = 1;

    SeedPlan plan;
    auto message_for = [&](PeerIndex p) -> SeedMessage& {
        auto [it, inserted] = plan.messages.try_emplace(p);
        if (inserted) {
            it->second.slot = slot;
            it->second.builder_token = builder_token;
        }
        return it->second;
    };

    const std::uint32_t recipient_cap = policy.kind == PolicyKind::Minimal ? grid.k : n;
    std::vector<PeerIndex> holders;
    std::vector<PeerIndex> extras;

    auto plan_line = [&](LineId line) {
        std::optional<LineRange> range = seeded_range(line, grid, policy.kind);
        if (!range) return;
        holders.clear();
        for (PeerIndex p : directory.holders_of(line)) {
            if (in_view[p]) holders.push_back(p);
        }
        if (holders.empty()) {
            plan.unseeded_cells += range->length();
            return;
        }
        rng.shuffle(holders);
        const std::uint32_t cells = range->length();
        const std::uint32_t parcel_count =
            std::min({static_cast<std::uint32_t>(holders.size()), recipient_cap, cells});
        const std::uint32_t base = cells / parcel_count;
        const std::uint32_t extra = cells % parcel_count;
        std::uint16_t start = range->begin;
        for (std::uint32_t i = 0; i < parcel_count; ++i) {
            const std::uint32_t len = base + (i < extra ? 1 : 0);
            const auto end = static_cast<std::uint16_t>(start + len);
            append_parcel(message_for(holders[i]), line, start, end, withheld,
                          plan.total_cells);
            if (policy.kind == PolicyKind::Redundant && policy.redundancy_k > 1) {
                // The parcel goes to redundancy_k - 1 further distinct holders.
                std::uint32_t want = std::min<std::uint32_t>(
                    policy.redundancy_k - 1, static_cast<std::uint32_t>(holders.size()) - 1);
                extras.clear();
                while (extras.size() < want) {
                    auto j = static_cast<std::uint32_t>(rng.uniform_below(holders.size()));
                    if (j == i) continue;
                    PeerIndex cand = holders[j];
                    if (std::find(extras.begin(), extras.end(), cand) != extras.end()) continue;
                    extras.push_back(cand);
                }
                for (PeerIndex p : extras) {
                    append_parcel(message_for(p), line, start, end, withheld, plan.total_cells);
                }
            }
            start = end;
        }
    };

    for (std::uint32_t r = 0; r < n; ++r) plan_line(LineId{LineKind::Row, r});
    for (std::uint32_t c = 0; c < n; ++c) plan_line(LineId{LineKind::Column, c});
    return plan;
}

void build_boost_maps(SeedPlan& plan, const PeerDirectory& directory) {
    const std::uint32_t n = directory.grid().n();
    // Parcel assignments grouped per line.
    std::vector<std::vector<BoostEntry>> per_line(2 * static_cast<std::size_t>(n));
    for (const auto& [peer, msg] : plan.messages) {
        for (const LineRange& parcel : msg.parcels) {
            std::size_t key =
                parcel.line.kind == LineKind::Row ? parcel.line.index : n + parcel.line.index;
            per_line[key].push_back(BoostEntry{peer, parcel});
        }
    }
    for (auto& [peer, msg] : plan.messages) {
        msg.boost.clear();
        const Assignment& a = directory.assignment(peer);
        auto add_line = [&](LineId line) {
            std::size_t key = line.kind == LineKind::Row ? line.index : n + line.index;
            for (const BoostEntry& e : per_line[key]) {
                if (e.peer != peer) msg.boost.push_back(e);
            }
        };
        for (std::uint16_t r : a.rows) add_line(LineId{LineKind::Row, r});
        for (std::uint16_t c : a.cols) add_line(LineId{LineKind::Column, c});
    }
}

FetchSchedule default_schedule() {
    FetchSchedule s;
    s.timeouts_us = {400000, 200000, 100000};
    s.redundancy = {1, 2, 4, 6, 8, 10};
    s.cb_boost = 10000;
    s.max_rounds = 50;
    return s;
}

FetchSchedule constant_schedule() {
    FetchSchedule s;
    s.timeouts_us = {400000};
    s.redundancy = {1};
    s.cb_boost = 10000;
    s.max_rounds = 50;
    return s;
}

}  // namespace das
