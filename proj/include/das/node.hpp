// Node-side state machines: cell holdings with custody-line reconstruction,
// the round-based adaptive fetch tasks for consolidation and sampling,
// incoming-query buffering, and the pre-seed trigger timer. Strictly
// event-driven: time is injected and every transition returns its outbound
// messages and timer requests through an Outbox.

#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "das/protocol.hpp"

namespace das {

// Sparse per-node cell store. Tracks the full-grid held bitset plus, for the
// node's custody lines, per-line missing masks and counts so that fetch
// scoring and reconstruction triggers are cheap. Completing any custody line
// to >= k cells marks the whole line held (erasure reconstruction at the
// presence level; byte-level decoding is the erasure module's concern).
class NodeHoldings {
public:
    NodeHoldings(const GridParams& grid, const Assignment& assignment,
                 std::vector<std::uint32_t> sample_ordinals);

    // Marks a cell held; cascades custody-line reconstruction. Every newly
    // held ordinal (including reconstructed ones) is appended to `newly`.
    // Returns false for duplicates.
    bool acquire(std::uint32_t ordinal, std::vector<std::uint32_t>& newly);

    // Batch form: marks without reconstructing. Callers ingest a whole
    // message first, then run close_pending once, so reconstruction never
    // preempts cells that were delivered anyway.
    bool mark_held(std::uint32_t ordinal, std::vector<std::uint32_t>& newly);
    void close_pending(std::vector<std::uint32_t>& newly);

    bool held(std::uint32_t ordinal) const {
        return (held_bits_[ordinal >> 6] >> (ordinal & 63)) & 1;
    }
    bool in_custody(std::uint32_t ordinal) const {
        return custody_slot_of(ordinal) != kNoSlot || crossing_slot_of(ordinal) != kNoSlot;
    }

    std::uint64_t custody_missing() const { return custody_missing_; }
    std::uint64_t sample_missing() const { return sample_missing_; }
    std::uint64_t custody_size() const { return custody_size_; }
    std::uint64_t reconstructed_cells() const { return reconstructed_cells_; }
    const std::vector<std::uint32_t>& sample_ordinals() const { return sample_ordinals_; }

    // Custody lines in slot order: assignment rows, then columns.
    std::uint32_t custody_line_count() const {
        return static_cast<std::uint32_t>(lines_.size());
    }
    LineId custody_line(std::uint32_t slot) const { return lines_[slot].line; }
    std::uint32_t line_missing_count(std::uint32_t slot) const { return lines_[slot].missing; }

    // Missing cells of one custody line within positions [begin, end).
    std::uint32_t missing_in_range(std::uint32_t slot, std::uint32_t begin,
                                   std::uint32_t end) const;

    // Appends ordinals of all missing cells of one custody line.
    void missing_cells_of_line(std::uint32_t slot, std::vector<std::uint32_t>& out) const;

    // Custody slot for a row/column index, or kNoSlot.
    static constexpr std::uint32_t kNoSlot = 0xFFFFFFFF;
    std::uint32_t row_slot(std::uint32_t row) const { return row_slot_[row]; }
    std::uint32_t col_slot(std::uint32_t col) const { return col_slot_[col]; }

    const GridParams& grid() const { return grid_; }
    const Assignment& assignment() const { return *assignment_; }

private:
    struct CustodyLine {
        LineId line;
        std::uint32_t missing;                 // cells of the line not yet held
        std::vector<std::uint64_t> missing_mask;  // bit per position
    };

    std::uint32_t custody_slot_of(std::uint32_t ordinal) const {
        return row_slot_[ordinal / grid_.n()];
    }
    std::uint32_t crossing_slot_of(std::uint32_t ordinal) const {
        return col_slot_[ordinal % grid_.n()];
    }
    void mark_line_position(std::uint32_t slot, std::uint32_t pos);
    bool set_cell(std::uint32_t ordinal, std::vector<std::uint32_t>& newly);

    GridParams grid_;
    const Assignment* assignment_;
    std::vector<std::uint64_t> held_bits_;
    std::vector<CustodyLine> lines_;
    std::vector<std::uint32_t> row_slot_;
    std::vector<std::uint32_t> col_slot_;
    std::vector<std::uint32_t> sample_ordinals_;  // sorted
    std::vector<std::uint32_t> pending_decodable_;  // custody slots at >= k cells
    std::uint64_t custody_size_ = 0;
    std::uint64_t custody_missing_ = 0;
    std::uint64_t sample_missing_ = 0;
    std::uint64_t reconstructed_cells_ = 0;
};

enum class FetchKind : std::uint8_t { Consolidation, Sampling };

struct FetchPlanEntry {
    PeerIndex peer = 0;
    std::vector<std::uint32_t> cells;  // ordinals, sorted
};

// One fetch task: the queryable set Q (a node leaves permanently once
// queried), per-round scoring, and the greedy redundancy-capped query plan.
class FetchTask {
public:
    FetchTask(FetchKind kind, std::vector<PeerIndex> candidates)
        : kind_(kind), candidates_(std::move(candidates)) {}

    FetchKind kind() const { return kind_; }
    std::uint64_t missing(const NodeHoldings& h) const {
        return kind_ == FetchKind::Consolidation ? h.custody_missing() : h.sample_missing();
    }
    bool exhausted() const { return candidates_.empty(); }
    std::size_t candidates_left() const { return candidates_.size(); }

    // Scoring + planning for one round. Planned peers leave Q; zero-score
    // candidates are dropped permanently (missing sets only shrink).
    // `boost_by_peer` applies to consolidation only.
    std::vector<FetchPlanEntry> plan_round(
        const NodeHoldings& holdings, const PeerDirectory& directory, std::uint32_t round,
        const FetchSchedule& schedule,
        const std::unordered_map<PeerIndex, std::vector<LineRange>>* boost_by_peer);

    // |sigma(cand) ∩ missing|, before any boost.
    std::int64_t score_candidate(PeerIndex cand, const NodeHoldings& h,
                                 const PeerDirectory& dir) const;
    // The candidate's cells of interest: sigma(cand) ∩ missing, sorted.
    void interest_cells(PeerIndex cand, const NodeHoldings& h, const PeerDirectory& dir,
                        std::vector<std::uint32_t>& out) const;

private:
    FetchKind kind_;
    std::vector<PeerIndex> candidates_;
};

struct NodeRoundStats {
    std::uint32_t msgs = 0;
    std::uint64_t cells_requested = 0;
    std::uint32_t replies_in = 0;
    std::uint32_t replies_after = 0;
    std::uint64_t cells_in = 0;
    std::uint64_t cells_after = 0;
    std::uint64_t cons_missing_end = 0;
    std::uint64_t samp_missing_end = 0;
    bool closed = false;
};

struct NodeProtocolMetrics {
    std::int64_t time_to_seeding_us = -1;
    std::int64_t time_to_consolidation_us = -1;
    std::int64_t time_to_sampling_us = -1;
    std::uint64_t seed_cells = 0;
    std::uint64_t duplicate_cells = 0;
    std::uint64_t reconstructed_cells = 0;
    std::uint64_t invalid_seed_messages = 0;
    std::uint64_t queries_sent = 0;
    std::uint64_t replies_sent = 0;
    std::uint64_t buffered_queries = 0;
    std::uint64_t f0_cons = 0;  // missing at fetch start
    std::uint64_t f0_samp = 0;
    std::uint32_t rounds_executed = 0;
    std::vector<NodeRoundStats> rounds;

    bool sampling_complete() const { return time_to_sampling_us >= 0; }
};

class NodeMachine {
public:
    struct Outbox {
        struct OutQuery {
            PeerIndex to;
            QueryMessage msg;
        };
        struct OutReply {
            PeerIndex to;
            ReplyMessage msg;
        };
        std::vector<OutQuery> queries;
        std::vector<OutReply> replies;
        std::optional<std::int64_t> trigger_timer_at;
        std::optional<std::int64_t> round_timer_at;
    };

    NodeMachine(PeerIndex self, const PeerDirectory& directory,
                std::vector<PeerIndex> view_members, std::vector<std::uint32_t> sample_ordinals,
                const FetchSchedule& schedule, std::int64_t trigger_us,
                std::int64_t slot_deadline_us, std::uint64_t expected_builder_token);

    void on_seed(const SeedMessage& msg, std::int64_t now, Outbox& out);
    void on_query(PeerIndex from, const QueryMessage& msg, std::int64_t now, Outbox& out);
    void on_reply(const ReplyMessage& msg, std::int64_t now, Outbox& out);
    void on_trigger_timer(std::int64_t now, Outbox& out);
    void on_round_timer(std::int64_t now, Outbox& out);

    // Fills trailing round snapshots once the simulation drains.
    void finalize();

    bool started() const { return started_; }
    const NodeHoldings& holdings() const { return holdings_; }
    const NodeProtocolMetrics& metrics() const { return metrics_; }
    PeerIndex self() const { return self_; }

private:
    struct OpenQuery {
        FetchKind kind;
        std::uint32_t round;
        std::int64_t round_end_us;
    };
    struct PendingQuery {
        PeerIndex from;
        std::uint64_t qid;
        std::vector<std::uint32_t> reply_cells;  // answered when all are held
        std::uint32_t awaiting;
        bool done = false;
    };

    void start_fetching(std::int64_t now, Outbox& out);
    void execute_round(std::int64_t now, Outbox& out);
    void run_task(FetchTask& task, Outbox& out);
    void ingest_cells(const std::vector<std::uint32_t>& cells, std::int64_t now, Outbox& out,
                      std::uint64_t* new_count);
    void note_acquired(std::uint32_t ordinal, std::int64_t now, Outbox& out);
    void snapshot_round_end();
    NodeRoundStats& round_stats(std::uint32_t round);

    PeerIndex self_;
    const PeerDirectory& directory_;
    const FetchSchedule& schedule_;
    std::int64_t trigger_us_;
    std::int64_t deadline_us_;
    std::uint64_t expected_token_;

    NodeHoldings holdings_;
    FetchTask cons_task_;
    FetchTask samp_task_;
    std::unordered_map<PeerIndex, std::vector<LineRange>> boost_by_peer_;
    bool seed_received_ = false;
    bool started_ = false;
    bool trigger_pending_ = false;
    std::uint32_t round_ = 0;  // last executed round, 1-based
    std::int64_t round_start_us_ = 0;

    std::uint64_t qid_seq_ = 0;
    std::unordered_map<std::uint64_t, OpenQuery> open_queries_;
    std::vector<PendingQuery> pending_;
    std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> watchers_;  // cell -> pending idx

    NodeProtocolMetrics metrics_;
};

}  // namespace das
