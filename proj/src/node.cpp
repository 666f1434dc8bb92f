#include "das/node.hpp"

#include <algorithm>
#include <bit>
#include <stdexcept>

namespace das {

namespace {

inline std::uint32_t mask_words(std::uint32_t n) { return (n + 63) / 64; }

}  // namespace

NodeHoldings::NodeHoldings(const GridParams& grid, const Assignment& assignment,
                           std::vector<std::uint32_t> sample_ordinals)
    : grid_(grid), assignment_(&assignment), sample_ordinals_(std::move(sample_ordinals)) {
    const std::uint32_t n = grid_.n();
    held_bits_.assign((static_cast<std::size_t>(n) * n + 63) / 64, 0);
    row_slot_.assign(n, kNoSlot);
    col_slot_.assign(n, kNoSlot);

    auto add_line = [&](LineId line) {
        CustodyLine cl;
        cl.line = line;
        cl.missing = n;
        cl.missing_mask.assign(mask_words(n), ~0ull);
        if (n % 64 != 0) cl.missing_mask.back() = (1ull << (n % 64)) - 1;
        if (line.kind == LineKind::Row) {
            row_slot_[line.index] = static_cast<std::uint32_t>(lines_.size());
        } else {
            col_slot_[line.index] = static_cast<std::uint32_t>(lines_.size());
        }
        lines_.push_back(std::move(cl));
    };
    for (std::uint16_t r : assignment.rows) add_line(LineId{LineKind::Row, r});
    for (std::uint16_t c : assignment.cols) add_line(LineId{LineKind::Column, c});

    custody_size_ = static_cast<std::uint64_t>(assignment.rows.size() + assignment.cols.size()) * n -
                    static_cast<std::uint64_t>(assignment.rows.size()) * assignment.cols.size();
    custody_missing_ = custody_size_;
    std::sort(sample_ordinals_.begin(), sample_ordinals_.end());
    sample_ordinals_.erase(std::unique(sample_ordinals_.begin(), sample_ordinals_.end()),
                           sample_ordinals_.end());
    sample_missing_ = sample_ordinals_.size();
}

void NodeHoldings::mark_line_position(std::uint32_t slot, std::uint32_t pos) {
    CustodyLine& cl = lines_[slot];
    std::uint64_t& w = cl.missing_mask[pos >> 6];
    std::uint64_t m = 1ull << (pos & 63);
    if (w & m) {
        w &= ~m;
        --cl.missing;
    }
}

bool NodeHoldings::set_cell(std::uint32_t ord, std::vector<std::uint32_t>& newly) {
    std::uint64_t& w = held_bits_[ord >> 6];
    std::uint64_t m = 1ull << (ord & 63);
    if (w & m) return false;
    w |= m;
    const std::uint32_t n = grid_.n();
    const std::uint32_t r = ord / n;
    const std::uint32_t c = ord % n;
    const std::uint32_t rs = row_slot_[r];
    const std::uint32_t cs = col_slot_[c];
    if (rs != kNoSlot) {
        mark_line_position(rs, c);
        if (lines_[rs].missing == n - grid_.k) pending_decodable_.push_back(rs);
    }
    if (cs != kNoSlot) {
        mark_line_position(cs, r);
        if (lines_[cs].missing == n - grid_.k) pending_decodable_.push_back(cs);
    }
    if (rs != kNoSlot || cs != kNoSlot) --custody_missing_;
    if (std::binary_search(sample_ordinals_.begin(), sample_ordinals_.end(), ord)) {
        --sample_missing_;
    }
    newly.push_back(ord);
    return true;
}

bool NodeHoldings::mark_held(std::uint32_t ordinal, std::vector<std::uint32_t>& newly) {
    return set_cell(ordinal, newly);
}

void NodeHoldings::close_pending(std::vector<std::uint32_t>& newly) {
    const std::uint32_t n = grid_.n();
    while (!pending_decodable_.empty()) {
        std::uint32_t slot = pending_decodable_.back();
        pending_decodable_.pop_back();
        CustodyLine& cl = lines_[slot];
        if (cl.missing == 0) continue;
        // Snapshot: set_cell mutates the mask while we walk it.
        std::vector<std::uint64_t> snapshot = cl.missing_mask;
        const LineId line = cl.line;
        for (std::uint32_t w = 0; w < snapshot.size(); ++w) {
            std::uint64_t bits = snapshot[w];
            while (bits != 0) {
                const auto pos = static_cast<std::uint32_t>(w * 64 + std::countr_zero(bits));
                bits &= bits - 1;
                CellIndex cell = line_cell_at(line, pos);
                if (set_cell(cell.row * n + cell.col, newly)) ++reconstructed_cells_;
            }
        }
    }
}

bool NodeHoldings::acquire(std::uint32_t ordinal, std::vector<std::uint32_t>& newly) {
    if (held(ordinal)) return false;
    set_cell(ordinal, newly);
    close_pending(newly);
    return true;
}

std::uint32_t NodeHoldings::missing_in_range(std::uint32_t slot, std::uint32_t begin,
                                             std::uint32_t end) const {
    if (end <= begin) return 0;
    const CustodyLine& cl = lines_[slot];
    std::uint32_t count = 0;
    for (std::uint32_t w = begin >> 6; w <= (end - 1) >> 6; ++w) {
        std::uint64_t bits = cl.missing_mask[w];
        const std::uint32_t lo = w * 64;
        if (begin > lo) bits &= ~0ull << (begin - lo);
        if (end < lo + 64) bits &= (1ull << (end - lo)) - 1;
        count += static_cast<std::uint32_t>(std::popcount(bits));
    }
    return count;
}

void NodeHoldings::missing_cells_of_line(std::uint32_t slot,
                                         std::vector<std::uint32_t>& out) const {
    const CustodyLine& cl = lines_[slot];
    const std::uint32_t n = grid_.n();
    for (std::uint32_t w = 0; w < cl.missing_mask.size(); ++w) {
        std::uint64_t bits = cl.missing_mask[w];
        while (bits != 0) {
            const auto pos = static_cast<std::uint32_t>(w * 64 + std::countr_zero(bits));
            bits &= bits - 1;
            CellIndex cell = line_cell_at(cl.line, pos);
            out.push_back(cell.row * n + cell.col);
        }
    }
}

std::int64_t FetchTask::score_candidate(PeerIndex cand, const NodeHoldings& h,
                                        const PeerDirectory& dir) const {
    const std::uint32_t n = h.grid().n();
    std::int64_t score = 0;
    if (kind_ == FetchKind::Sampling) {
        for (std::uint32_t ord : h.sample_ordinals()) {
            if (h.held(ord)) continue;
            if (dir.peer_has_row(cand, ord / n) || dir.peer_has_col(cand, ord % n)) ++score;
        }
        return score;
    }
    const Assignment& ca = dir.assignment(cand);
    const Assignment& mine = h.assignment();
    for (std::uint16_t x : ca.rows) {
        const std::uint32_t slot = h.row_slot(x);
        if (slot != NodeHoldings::kNoSlot) {
            score += h.line_missing_count(slot);
        } else {
            for (std::uint16_t c : mine.cols) {
                if (!h.held(static_cast<std::uint32_t>(x) * n + c)) ++score;
            }
        }
    }
    for (std::uint16_t y : ca.cols) {
        const std::uint32_t slot = h.col_slot(y);
        if (slot != NodeHoldings::kNoSlot) {
            score += h.line_missing_count(slot);
        } else {
            for (std::uint16_t r : mine.rows) {
                if (!h.held(static_cast<std::uint32_t>(r) * n + y)) ++score;
            }
        }
    }
    // Cells in both a candidate row and a candidate column were counted twice
    // whenever they belong to our custody and are missing.
    for (std::uint16_t x : ca.rows) {
        for (std::uint16_t y : ca.cols) {
            if ((h.row_slot(x) != NodeHoldings::kNoSlot ||
                 h.col_slot(y) != NodeHoldings::kNoSlot) &&
                !h.held(static_cast<std::uint32_t>(x) * n + y)) {
                --score;
            }
        }
    }
    return score;
}

void FetchTask::interest_cells(PeerIndex cand, const NodeHoldings& h, const PeerDirectory& dir,
                               std::vector<std::uint32_t>& out) const {
    const std::uint32_t n = h.grid().n();
    out.clear();
    if (kind_ == FetchKind::Sampling) {
        for (std::uint32_t ord : h.sample_ordinals()) {
            if (h.held(ord)) continue;
            if (dir.peer_has_row(cand, ord / n) || dir.peer_has_col(cand, ord % n)) {
                out.push_back(ord);
            }
        }
        return;
    }
    const Assignment& ca = dir.assignment(cand);
    const Assignment& mine = h.assignment();
    for (std::uint16_t x : ca.rows) {
        const std::uint32_t slot = h.row_slot(x);
        if (slot != NodeHoldings::kNoSlot) {
            h.missing_cells_of_line(slot, out);
        } else {
            for (std::uint16_t c : mine.cols) {
                const std::uint32_t ord = static_cast<std::uint32_t>(x) * n + c;
                if (!h.held(ord)) out.push_back(ord);
            }
        }
    }
    for (std::uint16_t y : ca.cols) {
        const std::uint32_t slot = h.col_slot(y);
        if (slot != NodeHoldings::kNoSlot) {
            h.missing_cells_of_line(slot, out);
        } else {
            for (std::uint16_t r : mine.rows) {
                const std::uint32_t ord = static_cast<std::uint32_t>(r) * n + y;
                if (!h.held(ord)) out.push_back(ord);
            }
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
}

std::vector<FetchPlanEntry> FetchTask::plan_round(
    const NodeHoldings& holdings, const PeerDirectory& directory, std::uint32_t round,
    const FetchSchedule& schedule,
    const std::unordered_map<PeerIndex, std::vector<LineRange>>* boost_by_peer) {
    std::vector<FetchPlanEntry> plans;
    const std::uint64_t missing_total = missing(holdings);
    if (missing_total == 0 || candidates_.empty()) return plans;

    const std::uint32_t k_i = schedule.redundancy_k(round);
    const std::uint32_t n = holdings.grid().n();

    // Scoring: interest size, plus cb_boost per missing cell the builder
    // declared seeded to the candidate. Zero-score candidates never become
    // useful again and leave Q for good.
    std::vector<std::pair<std::int64_t, PeerIndex>> scored;
    scored.reserve(candidates_.size());
    for (PeerIndex cand : candidates_) {
        std::int64_t s = score_candidate(cand, holdings, directory);
        if (s == 0) continue;
        if (kind_ == FetchKind::Consolidation && boost_by_peer != nullptr) {
            auto it = boost_by_peer->find(cand);
            if (it != boost_by_peer->end()) {
                std::int64_t boosted = 0;
                for (const LineRange& range : it->second) {
                    const std::uint32_t slot = range.line.kind == LineKind::Row
                                                   ? holdings.row_slot(range.line.index)
                                                   : holdings.col_slot(range.line.index);
                    if (slot == NodeHoldings::kNoSlot) continue;
                    boosted += holdings.missing_in_range(slot, range.begin, range.end);
                }
                s += schedule.cb_boost * boosted;
            }
        }
        scored.emplace_back(s, cand);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    // Greedy plan: walk candidates by descending score, querying each for its
    // cells still under the round's redundancy target. Replies are
    // all-or-nothing at the responder, so a query must be answerable without
    // waiting on unrelated holdings: candidates with boost entries are asked
    // exactly the cells the builder seeded to them, and every query is split
    // per responder line so it completes as soon as that line does.
    std::unordered_map<std::uint32_t, std::uint32_t> planned_count;
    planned_count.reserve(1024);
    std::uint64_t under = missing_total;
    std::vector<PeerIndex> planned_peers;
    std::vector<std::uint32_t> interest;
    std::vector<std::uint32_t> ask;
    for (const auto& [score, cand] : scored) {
        if (under == 0) break;

        ask.clear();
        if (kind_ == FetchKind::Consolidation && boost_by_peer != nullptr) {
            auto it = boost_by_peer->find(cand);
            if (it != boost_by_peer->end()) {
                for (const LineRange& range : it->second) {
                    const std::uint32_t slot = range.line.kind == LineKind::Row
                                                   ? holdings.row_slot(range.line.index)
                                                   : holdings.col_slot(range.line.index);
                    if (slot == NodeHoldings::kNoSlot) continue;
                    for (std::uint32_t pos = range.begin; pos < range.end; ++pos) {
                        CellIndex cell = line_cell_at(range.line, pos);
                        const std::uint32_t ord = cell.row * n + cell.col;
                        if (!holdings.held(ord)) ask.push_back(ord);
                    }
                }
                std::sort(ask.begin(), ask.end());
                ask.erase(std::unique(ask.begin(), ask.end()), ask.end());
            }
        }
        if (ask.empty()) {
            interest_cells(cand, holdings, directory, interest);
            ask = interest;
        }

        // One query per responder line, cells under the redundancy target.
        bool planned_any = false;
        std::map<std::pair<std::uint8_t, std::uint32_t>, std::vector<std::uint32_t>> by_line;
        for (std::uint32_t cell : ask) {
            auto [it, inserted] = planned_count.try_emplace(cell, 0);
            if (it->second >= k_i) continue;
            if (++it->second == k_i) --under;
            const std::uint32_t r = cell / n;
            const std::uint32_t c = cell % n;
            if (directory.peer_has_row(cand, r)) {
                by_line[{0, r}].push_back(cell);
            } else {
                by_line[{1, c}].push_back(cell);
            }
            planned_any = true;
        }
        if (!planned_any) continue;  // enough redundancy planned; stays in Q
        planned_peers.push_back(cand);
        for (auto& [line, cells] : by_line) {
            plans.push_back(FetchPlanEntry{cand, std::move(cells)});
        }
    }

    // Q loses planned peers (queried at most once) and zero-score peers.
    std::sort(planned_peers.begin(), planned_peers.end());
    std::vector<PeerIndex> remaining;
    remaining.reserve(scored.size());
    for (const auto& [score, cand] : scored) {
        if (!std::binary_search(planned_peers.begin(), planned_peers.end(), cand)) {
            remaining.push_back(cand);
        }
    }
    std::sort(remaining.begin(), remaining.end());
    candidates_ = std::move(remaining);
    return plans;
}

NodeMachine::NodeMachine(PeerIndex self, const PeerDirectory& directory,
                         std::vector<PeerIndex> view_members,
                         std::vector<std::uint32_t> sample_ordinals,
                         const FetchSchedule& schedule, std::int64_t trigger_us,
                         std::int64_t slot_deadline_us, std::uint64_t expected_builder_token)
    : self_(self),
      directory_(directory),
      schedule_(schedule),
      trigger_us_(trigger_us),
      deadline_us_(slot_deadline_us),
      expected_token_(expected_builder_token),
      holdings_(directory.grid(), directory.assignment(self), std::move(sample_ordinals)),
      cons_task_(FetchKind::Consolidation, view_members),
      samp_task_(FetchKind::Sampling, std::move(view_members)) {}

void NodeMachine::on_seed(const SeedMessage& msg, std::int64_t now, Outbox& out) {
    if (msg.builder_token != expected_token_) {
        ++metrics_.invalid_seed_messages;
        return;
    }
    if (!seed_received_) {
        seed_received_ = true;
        metrics_.time_to_seeding_us = now;
    }
    if (boost_by_peer_.empty() && !msg.boost.empty()) {
        for (const BoostEntry& e : msg.boost) boost_by_peer_[e.peer].push_back(e.range);
    }
    const std::uint32_t n = directory_.grid().n();
    std::vector<std::uint32_t> cells;
    cells.reserve(msg.cell_count);
    for (const LineRange& parcel : msg.parcels) {
        for (std::uint32_t pos = parcel.begin; pos < parcel.end; ++pos) {
            CellIndex c = line_cell_at(parcel.line, pos);
            cells.push_back(c.row * n + c.col);
        }
    }
    std::uint64_t fresh = 0;
    ingest_cells(cells, now, out, &fresh);
    metrics_.seed_cells += fresh;
    if (!started_) start_fetching(now, out);
}

void NodeMachine::on_query(PeerIndex from, const QueryMessage& msg, std::int64_t now,
                           Outbox& out) {
    if (!started_ && !trigger_pending_) {
        trigger_pending_ = true;
        out.trigger_timer_at = now + trigger_us_;
    }
    bool all_held = true;
    bool any_outside = false;
    for (std::uint32_t ord : msg.cells) {
        if (!holdings_.held(ord)) {
            all_held = false;
            if (!holdings_.in_custody(ord)) any_outside = true;
        }
    }
    if (all_held) {
        out.replies.push_back({from, ReplyMessage{msg.qid, msg.cells}});
        ++metrics_.replies_sent;
        return;
    }
    // There is no negative acknowledgment: a query we cannot serve in full is
    // buffered against our custody and answered when the last cell arrives.
    PendingQuery pq;
    pq.from = from;
    pq.qid = msg.qid;
    std::vector<std::uint32_t> awaited;
    if (any_outside) {
        // Nonconforming request: serve what we hold right away, or buffer the
        // custodial part only.
        std::vector<std::uint32_t> held_now;
        for (std::uint32_t ord : msg.cells) {
            if (holdings_.held(ord)) held_now.push_back(ord);
        }
        if (!held_now.empty()) {
            out.replies.push_back({from, ReplyMessage{msg.qid, std::move(held_now)}});
            ++metrics_.replies_sent;
            return;
        }
        for (std::uint32_t ord : msg.cells) {
            if (holdings_.in_custody(ord)) {
                pq.reply_cells.push_back(ord);
                if (!holdings_.held(ord)) awaited.push_back(ord);
            }
        }
        if (pq.reply_cells.empty()) return;  // nothing we will ever hold
    } else {
        pq.reply_cells = msg.cells;
        for (std::uint32_t ord : msg.cells) {
            if (!holdings_.held(ord)) awaited.push_back(ord);
        }
    }
    pq.awaiting = static_cast<std::uint32_t>(awaited.size());
    const auto idx = static_cast<std::uint32_t>(pending_.size());
    pending_.push_back(std::move(pq));
    for (std::uint32_t ord : awaited) watchers_[ord].push_back(idx);
    ++metrics_.buffered_queries;
}

void NodeMachine::on_reply(const ReplyMessage& msg, std::int64_t now, Outbox& out) {
    auto it = open_queries_.find(msg.qid);
    if (it != open_queries_.end()) {
        NodeRoundStats& rs = round_stats(it->second.round);
        const bool in_round = now <= it->second.round_end_us;
        if (in_round) {
            ++rs.replies_in;
            rs.cells_in += msg.cells.size();
        } else {
            ++rs.replies_after;
            rs.cells_after += msg.cells.size();
        }
        open_queries_.erase(it);
    }
    ingest_cells(msg.cells, now, out, nullptr);
}

void NodeMachine::on_trigger_timer(std::int64_t now, Outbox& out) {
    if (started_) return;  // seed arrived first
    start_fetching(now, out);
}

void NodeMachine::on_round_timer(std::int64_t now, Outbox& out) {
    if (!started_) return;
    snapshot_round_end();
    execute_round(now, out);
}

void NodeMachine::start_fetching(std::int64_t now, Outbox& out) {
    started_ = true;
    trigger_pending_ = false;
    metrics_.f0_cons = holdings_.custody_missing();
    metrics_.f0_samp = holdings_.sample_missing();
    if (holdings_.custody_missing() == 0 && metrics_.time_to_consolidation_us < 0) {
        metrics_.time_to_consolidation_us = now;
    }
    if (holdings_.sample_missing() == 0 && metrics_.time_to_sampling_us < 0) {
        metrics_.time_to_sampling_us = now;
    }
    round_ = 0;
    execute_round(now, out);
}

void NodeMachine::execute_round(std::int64_t now, Outbox& out) {
    ++round_;
    round_start_us_ = now;
    metrics_.rounds_executed = round_;
    run_task(cons_task_, out);
    run_task(samp_task_, out);

    // Rounds keep ticking while anything is missing, even with Q exhausted
    // (late buffered replies may still land), bounded by the round cap and
    // the slot deadline.
    const bool more = holdings_.custody_missing() > 0 || holdings_.sample_missing() > 0;
    const std::int64_t next_at = now + schedule_.timeout_us(round_);
    if (more && round_ + 1 <= schedule_.max_rounds && next_at < deadline_us_) {
        out.round_timer_at = next_at;
    }
}

void NodeMachine::run_task(FetchTask& task, Outbox& out) {
    if (task.missing(holdings_) == 0) return;
    const auto* boost = task.kind() == FetchKind::Consolidation ? &boost_by_peer_ : nullptr;
    std::vector<FetchPlanEntry> plans =
        task.plan_round(holdings_, directory_, round_, schedule_, boost);
    if (plans.empty()) return;
    NodeRoundStats& rs = round_stats(round_);
    const std::int64_t round_end = round_start_us_ + schedule_.timeout_us(round_);
    for (FetchPlanEntry& entry : plans) {
        const std::uint64_t qid = ++qid_seq_;
        open_queries_.emplace(qid, OpenQuery{task.kind(), round_, round_end});
        ++rs.msgs;
        rs.cells_requested += entry.cells.size();
        ++metrics_.queries_sent;
        out.queries.push_back({entry.peer, QueryMessage{qid, std::move(entry.cells)}});
    }
}

void NodeMachine::ingest_cells(const std::vector<std::uint32_t>& cells, std::int64_t now,
                               Outbox& out, std::uint64_t* new_count) {
    // Store the whole batch before reconstructing, so delivered cells are
    // never misattributed to reconstruction.
    std::vector<std::uint32_t> newly;
    for (std::uint32_t ord : cells) {
        if (!holdings_.mark_held(ord, newly)) {
            ++metrics_.duplicate_cells;
        } else if (new_count != nullptr) {
            ++*new_count;
        }
    }
    holdings_.close_pending(newly);
    metrics_.reconstructed_cells = holdings_.reconstructed_cells();
    for (std::uint32_t ord : newly) note_acquired(ord, now, out);
}

void NodeMachine::note_acquired(std::uint32_t ordinal, std::int64_t now, Outbox& out) {
    auto it = watchers_.find(ordinal);
    if (it != watchers_.end()) {
        for (std::uint32_t idx : it->second) {
            PendingQuery& pq = pending_[idx];
            if (pq.done) continue;
            if (--pq.awaiting == 0) {
                pq.done = true;
                out.replies.push_back({pq.from, ReplyMessage{pq.qid, pq.reply_cells}});
                ++metrics_.replies_sent;
            }
        }
        watchers_.erase(it);
    }
    if (holdings_.custody_missing() == 0 && metrics_.time_to_consolidation_us < 0) {
        metrics_.time_to_consolidation_us = now;
    }
    if (holdings_.sample_missing() == 0 && metrics_.time_to_sampling_us < 0) {
        metrics_.time_to_sampling_us = now;
    }
}

void NodeMachine::snapshot_round_end() {
    NodeRoundStats& rs = round_stats(round_);
    if (!rs.closed) {
        rs.cons_missing_end = holdings_.custody_missing();
        rs.samp_missing_end = holdings_.sample_missing();
        rs.closed = true;
    }
}

NodeRoundStats& NodeMachine::round_stats(std::uint32_t round) {
    if (metrics_.rounds.size() < round) metrics_.rounds.resize(round);
    return metrics_.rounds[round - 1];
}

void NodeMachine::finalize() {
    for (std::uint32_t r = 1; r <= metrics_.rounds_executed; ++r) {
        NodeRoundStats& rs = round_stats(r);
        if (!rs.closed) {
            rs.cons_missing_end = holdings_.custody_missing();
            rs.samp_missing_end = holdings_.sample_missing();
            rs.closed = true;
        }
    }
    metrics_.reconstructed_cells = holdings_.reconstructed_cells();
}

}  // namespace das
