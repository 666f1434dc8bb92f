#include "das/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <variant>

#include "das/availability.hpp"

namespace das {

LatencyModel LatencyModel::synthesize(const LatencyParams& params, std::uint32_t vertices,
                                      DetRng& rng) {
    if (vertices == 0) throw std::invalid_argument("latency: need at least one vertex");
    if (!(params.min_rtt_ms <= params.mean_rtt_ms && params.mean_rtt_ms <= params.max_rtt_ms) ||
        params.min_rtt_ms <= 0) {
        throw std::invalid_argument("latency: need 0 < min <= mean <= max");
    }
    const double span = params.max_rtt_ms - params.min_rtt_ms;
    std::vector<std::int32_t> one_way(static_cast<std::size_t>(vertices) * vertices, 0);
    auto at = [&](std::uint32_t a, std::uint32_t b) -> std::int32_t& {
        return one_way[static_cast<std::size_t>(a) * vertices + b];
    };

    if (span <= 0.0) {
        const auto ow = static_cast<std::int32_t>(std::llround(params.min_rtt_ms * 500.0));
        for (std::uint32_t i = 0; i < vertices; ++i) {
            for (std::uint32_t j = 0; j < vertices; ++j) {
                at(i, j) = i == j ? 0 : ow;
            }
        }
        return LatencyModel(vertices, std::move(one_way));
    }

    // RTT = min + span * X with X ~ Beta(1, b); E[X] = 1/(1+b) matches the
    // mean target. Inverse CDF keeps the draw deterministic and cheap.
    const double mean_frac = (params.mean_rtt_ms - params.min_rtt_ms) / span;
    const double beta = 1.0 / mean_frac - 1.0;
    double lo = params.max_rtt_ms, hi = params.min_rtt_ms;
    std::uint32_t lo_a = 0, lo_b = 0, hi_a = 0, hi_b = 0;
    for (std::uint32_t i = 0; i < vertices; ++i) {
        for (std::uint32_t j = i + 1; j < vertices; ++j) {
            const double u = rng.uniform01();
            const double x = 1.0 - std::pow(1.0 - u, 1.0 / beta);
            const double rtt = params.min_rtt_ms + span * x;
            const auto ow = static_cast<std::int32_t>(std::llround(rtt * 500.0));
            at(i, j) = ow;
            at(j, i) = ow;
            if (rtt < lo) {
                lo = rtt;
                lo_a = i;
                lo_b = j;
            }
            if (rtt > hi) {
                hi = rtt;
                hi_a = i;
                hi_b = j;
            }
        }
    }
    if (vertices > 1) {
        // Anchor the extremes so small matrices still attain the targets.
        const auto min_ow = static_cast<std::int32_t>(std::llround(params.min_rtt_ms * 500.0));
        const auto max_ow = static_cast<std::int32_t>(std::llround(params.max_rtt_ms * 500.0));
        at(lo_a, lo_b) = at(lo_b, lo_a) = min_ow;
        at(hi_a, hi_b) = at(hi_b, hi_a) = max_ow;
    }
    return LatencyModel(vertices, std::move(one_way));
}

LatencyModel LatencyModel::from_rtt_csv(const std::string& csv_text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(csv_text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) row.push_back(std::stod(field));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::invalid_argument("latency csv: empty matrix");
    const std::size_t v = rows.size();
    for (const auto& row : rows) {
        if (row.size() != v) throw std::invalid_argument("latency csv: matrix not square");
    }
    std::vector<std::int32_t> one_way(v * v, 0);
    for (std::size_t i = 0; i < v; ++i) {
        for (std::size_t j = 0; j < v; ++j) {
            if (i == j) continue;
            if (rows[i][j] <= 0) throw std::invalid_argument("latency csv: nonpositive RTT");
            one_way[i * v + j] = static_cast<std::int32_t>(std::llround(rows[i][j] * 500.0));
        }
    }
    return LatencyModel(static_cast<std::uint32_t>(v), std::move(one_way));
}

LatencyModel::Stats LatencyModel::stats() const {
    Stats s;
    if (vertices_ < 2) return s;
    double sum = 0;
    double lo = 1e300, hi = 0;
    std::uint64_t count = 0;
    for (std::uint32_t i = 0; i < vertices_; ++i) {
        for (std::uint32_t j = i + 1; j < vertices_; ++j) {
            const double rtt = rtt_ms(i, j);
            sum += rtt;
            lo = std::min(lo, rtt);
            hi = std::max(hi, rtt);
            ++count;
        }
    }
    s.min_rtt_ms = lo;
    s.mean_rtt_ms = sum / static_cast<double>(count);
    s.max_rtt_ms = hi;
    return s;
}

std::vector<double> LatencyModel::per_vertex_mean_rtt() const {
    std::vector<double> means(vertices_, 0.0);
    if (vertices_ < 2) return means;
    for (std::uint32_t i = 0; i < vertices_; ++i) {
        double sum = 0;
        for (std::uint32_t j = 0; j < vertices_; ++j) {
            if (j != i) sum += rtt_ms(i, j);
        }
        means[i] = sum / static_cast<double>(vertices_ - 1);
    }
    return means;
}

std::uint32_t ScenarioConfig::effective_samples() const {
    if (samples != 0) return samples;
    return min_samples_for(sample_target_fp, grid);
}

void ScenarioConfig::validate() const {
    grid.validate();
    if (node_count == 0) throw std::invalid_argument("scenario: need at least one node");
    if (loss_rate < 0.0 || loss_rate > 1.0) throw std::invalid_argument("scenario: loss rate");
    if (dead_fraction < 0.0 || dead_fraction > 1.0) {
        throw std::invalid_argument("scenario: dead fraction");
    }
    if (out_of_view_fraction < 0.0 || out_of_view_fraction >= 1.0) {
        throw std::invalid_argument("scenario: out-of-view fraction");
    }
    if (node_bandwidth_bps == 0 || builder_bandwidth_bps == 0) {
        throw std::invalid_argument("scenario: zero bandwidth");
    }
    if (assignment.rows_per_node > grid.n() || assignment.cols_per_node > grid.n()) {
        throw std::invalid_argument("scenario: per-node lines exceed grid");
    }
    if (schedule.timeouts_us.empty() || schedule.redundancy.empty()) {
        throw std::invalid_argument("scenario: empty schedule");
    }
    if (policy.kind == PolicyKind::Redundant && policy.redundancy_k == 0) {
        throw std::invalid_argument("scenario: zero redundancy");
    }
}

namespace {

enum class EvKind : std::uint8_t { Seed, Query, Reply, TriggerTimer, RoundTimer };

struct Event {
    std::int64_t t = 0;
    std::uint64_t seq = 0;
    EvKind kind = EvKind::Seed;
    PeerIndex from = 0;
    PeerIndex to = 0;
    const SeedMessage* seed = nullptr;
    QueryMessage query;
    ReplyMessage reply;
};

struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
        if (a.t != b.t) return a.t > b.t;
        return a.seq > b.seq;
    }
};

// Min-heap on (t, seq) with move-out pop; reply payloads are worth not
// copying.
class EventQueue {
public:
    bool empty() const { return heap_.empty(); }
    void push(Event&& ev) {
        heap_.push_back(std::move(ev));
        std::push_heap(heap_.begin(), heap_.end(), EventAfter{});
    }
    Event pop() {
        std::pop_heap(heap_.begin(), heap_.end(), EventAfter{});
        Event ev = std::move(heap_.back());
        heap_.pop_back();
        return ev;
    }

private:
    std::vector<Event> heap_;
};

}  // namespace

SlotResult run_slot(const ScenarioConfig& config) {
    config.validate();
    const GridParams& grid = config.grid;
    const std::uint32_t n_nodes = config.node_count;
    const Hash32 root = seed_from_u64(config.seed);
    const std::uint64_t builder_token = hash_to_u64(derive_seed(root, "builder-token"));
    const std::uint32_t samples = config.effective_samples();

    // Population and epoch assignments.
    std::vector<NodeId> ids;
    ids.reserve(n_nodes);
    for (std::uint32_t i = 0; i < n_nodes; ++i) ids.push_back(make_node_id(i));
    const EpochSeed epoch{0, derive_seed(root, "epoch")};
    PeerDirectory directory(grid, epoch, config.assignment, std::move(ids));

    // Dead set: prefix of a seed-fixed permutation, so larger fractions are
    // supersets of smaller ones under the same seed.
    std::vector<std::uint8_t> dead(n_nodes, 0);
    {
        std::vector<PeerIndex> perm(n_nodes);
        for (std::uint32_t i = 0; i < n_nodes; ++i) perm[i] = i;
        DetRng rng(derive_seed(root, "dead"));
        rng.shuffle(perm);
        const auto dead_count =
            static_cast<std::uint32_t>(std::llround(config.dead_fraction * n_nodes));
        for (std::uint32_t i = 0; i < dead_count; ++i) dead[perm[i]] = 1;
    }

    // Latency topology and endpoint placement.
    const std::uint32_t vertices = config.vertices != 0 ? config.vertices : n_nodes + 1;
    LatencyModel latency = [&] {
        if (!config.latency_csv.empty()) return LatencyModel::from_rtt_csv(config.latency_csv);
        DetRng rng(derive_seed(root, "latency"));
        return LatencyModel::synthesize(config.latency, vertices, rng);
    }();
    std::vector<std::uint32_t> vertex_of(n_nodes, 0);
    std::uint32_t builder_vertex = 0;
    {
        DetRng rng(derive_seed(root, "vertex"));
        for (std::uint32_t i = 0; i < n_nodes; ++i) {
            vertex_of[i] = static_cast<std::uint32_t>(rng.uniform_below(latency.vertex_count()));
        }
        // Builder lands on a vertex among the best 20% by mean latency.
        std::vector<double> means = latency.per_vertex_mean_rtt();
        std::vector<std::uint32_t> order(latency.vertex_count());
        for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            if (means[a] != means[b]) return means[a] < means[b];
            return a < b;
        });
        const std::size_t best = std::max<std::size_t>(1, order.size() / 5);
        builder_vertex = order[rng.uniform_below(best)];
    }

    // Withholding attack: the builder drops a maximal unreconstructable
    // pattern from its seeding.
    PresenceGrid withheld(grid);
    bool has_withheld = false;
    if (config.withhold_max_pattern) {
        DetRng rng(derive_seed(root, "withhold"));
        std::vector<std::uint32_t> anchor_rows, anchor_cols;
        for (std::uint64_t v : rng.sample_distinct(grid.k + 1, grid.n())) {
            anchor_rows.push_back(static_cast<std::uint32_t>(v));
        }
        for (std::uint64_t v : rng.sample_distinct(grid.k + 1, grid.n())) {
            anchor_cols.push_back(static_cast<std::uint32_t>(v));
        }
        WithholdingPattern pattern = max_withholding_pattern(anchor_rows, anchor_cols, grid);
        for (CellIndex c : pattern.withheld) withheld.set(c);
        has_withheld = true;
    }

    // Builder view is the full population (dead nodes included; it cannot
    // tell). Seeding plan and boost maps.
    std::vector<PeerIndex> builder_view(n_nodes);
    for (std::uint32_t i = 0; i < n_nodes; ++i) builder_view[i] = i;
    DetRng plan_rng(derive_seed(root, "plan"));
    SeedPlan plan = plan_seeding(config.policy, directory, builder_view, 0, builder_token,
                                 plan_rng, has_withheld ? &withheld : nullptr);
    build_boost_maps(plan, directory);

    // Node machines with per-node views and sample sets.
    std::vector<NodeMachine> machines;
    machines.reserve(n_nodes);
    const SamplingParams sampling{samples, grid};
    for (std::uint32_t i = 0; i < n_nodes; ++i) {
        std::vector<PeerIndex> view;
        if (config.out_of_view_fraction > 0.0) {
            std::vector<PeerIndex> others;
            others.reserve(n_nodes - 1);
            for (std::uint32_t j = 0; j < n_nodes; ++j) {
                if (j != i) others.push_back(j);
            }
            DetRng rng(derive_seed(root, "view", i));
            rng.shuffle(others);
            const auto keep = static_cast<std::size_t>(
                std::llround((1.0 - config.out_of_view_fraction) * (n_nodes - 1)));
            others.resize(keep);
            std::sort(others.begin(), others.end());
            view = std::move(others);
        } else {
            view.reserve(n_nodes - 1);
            for (std::uint32_t j = 0; j < n_nodes; ++j) {
                if (j != i) view.push_back(j);
            }
        }
        std::vector<std::uint32_t> sample_ords;
        for (CellIndex c : random_sample_set(derive_seed(root, "samples", i), sampling)) {
            sample_ords.push_back(cell_ordinal(c, grid));
        }
        machines.emplace_back(i, directory, std::move(view), std::move(sample_ords),
                              config.schedule, config.trigger_us, config.slot_deadline_us,
                              builder_token);
    }

    SlotResult result;
    result.samples_per_node = samples;
    result.nodes.assign(n_nodes, NodeMetrics{});
    for (std::uint32_t i = 0; i < n_nodes; ++i) result.nodes[i].dead = dead[i] != 0;
    result.builder.unseeded_cells = plan.unseeded_cells;

    EventQueue queue;
    std::uint64_t seq = 0;
    DetRng loss_rng(derive_seed(root, "loss"));
    std::vector<TransmitQueue> uplinks(n_nodes);
    TransmitQueue builder_uplink;

    auto roll_loss = [&]() { return loss_rng.uniform01() < config.loss_rate; };

    auto send_from_node = [&](PeerIndex from, PeerIndex to, Event&& ev, std::uint64_t bytes,
                              std::int64_t now) {
        NodeMetrics& m = result.nodes[from];
        ++m.msgs_sent;
        m.bytes_sent += bytes;
        ++result.network.sent;
        const std::int64_t wire_at = uplinks[from].enqueue(now, bytes, config.node_bandwidth_bps);
        if (roll_loss()) {
            ++result.network.dropped;
            return;
        }
        ev.t = wire_at + latency.one_way_us(vertex_of[from], vertex_of[to]);
        ev.seq = ++seq;
        ev.from = from;
        ev.to = to;
        queue.push(std::move(ev));
    };

    // Seeding: the builder pushes every SEED message through its uplink at
    // t=0, in seed-shuffled recipient order.
    {
        std::vector<PeerIndex> order;
        order.reserve(plan.messages.size());
        for (const auto& [peer, msg] : plan.messages) order.push_back(peer);
        DetRng rng(derive_seed(root, "seed-order"));
        rng.shuffle(order);
        for (PeerIndex to : order) {
            const SeedMessage& msg = plan.messages.at(to);
            const std::uint64_t bytes = seed_wire_bytes(msg, grid);
            ++result.builder.msgs_sent;
            result.builder.bytes_sent += bytes;
            result.builder.seed_cells_sent += msg.cell_count;
            ++result.network.sent;
            const std::int64_t wire_at =
                builder_uplink.enqueue(0, bytes, config.builder_bandwidth_bps);
            if (roll_loss()) {
                ++result.network.dropped;
                continue;
            }
            Event ev;
            ev.kind = EvKind::Seed;
            ev.seed = &msg;
            ev.t = wire_at + latency.one_way_us(builder_vertex, vertex_of[to]);
            ev.seq = ++seq;
            ev.to = to;
            queue.push(std::move(ev));
        }
        result.builder.send_complete_us = builder_uplink.busy_until_us;
    }

    NodeMachine::Outbox out;
    auto flush_outbox = [&](PeerIndex node, std::int64_t now) {
        for (auto& q : out.queries) {
            Event ev;
            ev.kind = EvKind::Query;
            const std::uint64_t bytes = query_wire_bytes(q.msg.cells.size());
            ev.query = std::move(q.msg);
            send_from_node(node, q.to, std::move(ev), bytes, now);
        }
        for (auto& r : out.replies) {
            Event ev;
            ev.kind = EvKind::Reply;
            const std::uint64_t bytes = reply_wire_bytes(r.msg.cells.size(), grid);
            ev.reply = std::move(r.msg);
            send_from_node(node, r.to, std::move(ev), bytes, now);
        }
        if (out.trigger_timer_at) {
            Event ev;
            ev.kind = EvKind::TriggerTimer;
            ev.t = *out.trigger_timer_at;
            ev.seq = ++seq;
            ev.to = node;
            queue.push(std::move(ev));
        }
        if (out.round_timer_at) {
            Event ev;
            ev.kind = EvKind::RoundTimer;
            ev.t = *out.round_timer_at;
            ev.seq = ++seq;
            ev.to = node;
            queue.push(std::move(ev));
        }
        out.queries.clear();
        out.replies.clear();
        out.trigger_timer_at.reset();
        out.round_timer_at.reset();
    };

    while (!queue.empty()) {
        Event ev = queue.pop();
        if (ev.t > config.horizon_us) {
            if (ev.kind == EvKind::Seed || ev.kind == EvKind::Query || ev.kind == EvKind::Reply) {
                ++result.network.in_flight_at_end;
            }
            continue;
        }
        NodeMetrics& m = result.nodes[ev.to];
        switch (ev.kind) {
            case EvKind::Seed: {
                ++result.network.delivered;
                ++m.msgs_received;
                m.bytes_received += seed_wire_bytes(*ev.seed, grid);
                if (!m.dead) machines[ev.to].on_seed(*ev.seed, ev.t, out);
                break;
            }
            case EvKind::Query: {
                ++result.network.delivered;
                ++m.msgs_received;
                m.bytes_received += query_wire_bytes(ev.query.cells.size());
                if (!m.dead) machines[ev.to].on_query(ev.from, ev.query, ev.t, out);
                break;
            }
            case EvKind::Reply: {
                ++result.network.delivered;
                ++m.msgs_received;
                m.bytes_received += reply_wire_bytes(ev.reply.cells.size(), grid);
                if (!m.dead) machines[ev.to].on_reply(ev.reply, ev.t, out);
                break;
            }
            case EvKind::TriggerTimer:
                if (!m.dead) machines[ev.to].on_trigger_timer(ev.t, out);
                break;
            case EvKind::RoundTimer:
                if (!m.dead) machines[ev.to].on_round_timer(ev.t, out);
                break;
        }
        flush_outbox(ev.to, ev.t);
    }

    for (std::uint32_t i = 0; i < n_nodes; ++i) {
        machines[i].finalize();
        result.nodes[i].proto = machines[i].metrics();
    }
    return result;
}

}  // namespace das
