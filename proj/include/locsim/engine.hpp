#pragma once

// Event generation and the replay loop. A scenario expands into one
// deterministic time-sorted event stream per (cmr, seed); every scheme is
// replayed against the same stream, so cost differences are attributable to
// the scheme alone. The runner cross-checks each delivery against ground
// truth and aborts on the first inconsistency.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "locsim/mobility.hpp"
#include "locsim/scenario.hpp"
#include "locsim/schemes.hpp"
#include "locsim/topology.hpp"
#include "locsim/traffic.hpp"

namespace locsim {

struct MovePayload {
    UserId user = 0;
    NodeId from, to;
    friend bool operator==(const MovePayload&, const MovePayload&) = default;
};

struct CallPayload {
    UserId caller = 0, callee = 0;
    friend bool operator==(const CallPayload&, const CallPayload&) = default;
};

// Ties on t resolve by seq, which the generator assigns after a stable sort,
// so simultaneous events keep a reproducible order: moves before calls,
// lower user ids first.
struct Event {
    Seconds t = 0.0;
    long seq = 0;
    std::variant<MovePayload, CallPayload> payload;
    friend bool operator==(const Event&, const Event&) = default;
};

struct EventStream {
    std::vector<Event> events;
    std::vector<NodeId> initial;  // starting leaf per user
    Seconds duration = 0.0;       // generation window, seconds
    friend bool operator==(const EventStream&, const EventStream&) = default;
};

namespace detail {

struct MobilityDraw {
    std::vector<std::vector<ZoneEvent>> moves;  // per user, time-ordered
    std::vector<NodeId> initial;
    Seconds window = 0.0;
};

// Synthetic mobility over a fixed window. Matrix walks hold a configured
// per-move rate; entity and group models are sampled in continuous space and
// reduced to zone crossings.
inline MobilityDraw draw_generated_mobility(const Topology& topo, const Scenario& sc,
                                            Seconds window, std::uint64_t seed) {
    MobilityDraw draw;
    draw.window = window;
    const int n = sc.users;
    draw.moves.resize(n);
    draw.initial.resize(n);
    if (sc.mobility == MobilitySource::matrix_walk) {
        const auto leaves = topo.tree.leaves();
        for (UserId u = 0; u < n; ++u) {
            Rng init(seed, "init", static_cast<std::uint64_t>(u));
            draw.initial[u] = leaves[init.uniform_index(leaves.size())];
            Rng walk(seed, "mobility", static_cast<std::uint64_t>(u));
            draw.moves[u] = matrix_walk(topo.grid, u, draw.initial[u], sc.move_rate, window, walk);
        }
        return draw;
    }
    ModelParams mp = sc.params;
    mp.area_width = topo.grid.width();
    mp.area_height = topo.grid.height();
    const MobilityTrace trace = generate_trace(sc.model, mp, n, window, seed);
    for (UserId u = 0; u < n; ++u) {
        const auto& samples = trace.nodes[u];
        draw.initial[u] = zone_of(topo.grid, samples.front().pos.x, samples.front().pos.y);
        draw.moves[u] = emit_zone_crossings(samples, topo.grid, u);
    }
    return draw;
}

// Trace-driven mobility. The file fixes the population and the window; a
// configured user count may only confirm or extend it.
inline MobilityDraw load_trace_mobility(const Topology& topo, const Scenario& sc) {
    MobilityDraw draw;
    if (sc.mobility == MobilitySource::mobility_trace) {
        std::ifstream in(sc.mobility_trace);
        if (!in) throw ScenarioError("cannot open mobility trace '" + sc.mobility_trace + "'");
        const MobilityTrace trace = load_mobility_trace(in);
        const int n = static_cast<int>(trace.nodes.size());
        if (sc.users > 0 && sc.users != n)
            throw ScenarioError("scenario names " + std::to_string(sc.users) +
                                " users but the trace holds " + std::to_string(n));
        draw.moves.resize(n);
        draw.initial.resize(n);
        for (UserId u = 0; u < n; ++u) {
            const auto& samples = trace.nodes[u];
            if (samples.empty())
                throw ScenarioError("trace node " + std::to_string(u) + " has no samples");
            draw.initial[u] = zone_of(topo.grid, samples.front().pos.x, samples.front().pos.y);
            draw.moves[u] = emit_zone_crossings(samples, topo.grid, u);
            draw.window = std::max(draw.window, samples.back().t);
        }
        return draw;
    }
    std::ifstream in(sc.mobility_trace);
    if (!in) throw ScenarioError("cannot open zone trace '" + sc.mobility_trace + "'");
    const std::vector<ZoneEvent> events = load_zone_events(in, topo.tree);
    int n = sc.users;
    for (const ZoneEvent& e : events) n = std::max(n, e.user + 1);
    const NodeId fallback = topo.tree.leaves().front();
    draw.moves.resize(n);
    draw.initial.assign(n, fallback);
    std::vector<bool> seen(n, false);
    for (const ZoneEvent& e : events) {
        if (!seen[e.user]) {
            draw.initial[e.user] = e.from;
            seen[e.user] = true;
        }
        draw.moves[e.user].push_back(e);
        draw.window = std::max(draw.window, e.t);
    }
    return draw;
}

// Per-user call rate under the target call-to-mobility ratio. A configured
// call_rate wins outright; matrix walks scale the configured move rate;
// everything else is calibrated against the moves actually drawn.
inline double call_rate_for(const Scenario& sc, double cmr, const MobilityDraw& draw, UserId u) {
    if (sc.calls.call_rate > 0.0) return sc.calls.call_rate;
    if (sc.mobility == MobilitySource::matrix_walk) return cmr * sc.move_rate;
    if (draw.window <= 0.0) return 0.0;
    return cmr * static_cast<double>(draw.moves[u].size()) / draw.window;
}

// Merge order is pinned: all moves first (user-major, time-ordered), then
// all calls, then one stable sort by time. Ties therefore replay moves
// before calls, lower user ids first. `cutoff` bounds file-fed calls when a
// time horizon is in force; synthetic calls are window-bounded anyway.
inline std::vector<Event> assemble_events(const Scenario& sc, double cmr, std::uint64_t seed,
                                          const MobilityDraw& draw,
                                          std::optional<Seconds> cutoff) {
    std::vector<Event> out;
    const int n = static_cast<int>(draw.initial.size());
    for (UserId u = 0; u < n; ++u)
        for (const ZoneEvent& e : draw.moves[u]) out.push_back({e.t, 0, MovePayload{u, e.from, e.to}});
    if (sc.traffic == TrafficSource::poisson) {
        Rng peers(seed, "peers");
        const CallProcess process(n, sc.calls, peers);
        for (UserId u = 0; u < n; ++u) {
            const double rate = call_rate_for(sc, cmr, draw, u);
            Rng arrivals(seed, "calls", static_cast<std::uint64_t>(u));
            Rng who(seed, "callee", static_cast<std::uint64_t>(u));
            Seconds t = 0.0;
            for (;;) {
                const auto next = next_call_time(t, rate, arrivals);
                if (!next || *next >= draw.window) break;
                t = *next;
                out.push_back({t, 0, CallPayload{u, process.pick_callee(u, who)}});
            }
        }
    } else {
        std::ifstream in(sc.call_trace);
        if (!in) throw ScenarioError("cannot open call trace '" + sc.call_trace + "'");
        for (const CallRecord& c : load_call_trace(in)) {
            if (cutoff && c.t >= *cutoff) continue;
            if (c.caller < 0 || c.caller >= n || c.callee < 0 || c.callee >= n)
                throw ScenarioError("call trace references a user outside the population");
            out.push_back({c.t, 0, CallPayload{c.caller, c.callee}});
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    return out;
}

}  // namespace detail

// Expands a scenario into the event stream for one (cmr, seed) cell. With a
// time horizon the window is fixed; with an event-count horizon the window
// grows geometrically until enough events exist, each attempt redrawn from
// scratch so the result depends only on the final window.
inline EventStream generate_events(const Topology& topo, const Scenario& sc, double cmr,
                                   std::uint64_t seed) {
    const bool timed = sc.horizon_seconds > 0.0;
    const bool generated = sc.mobility == MobilitySource::matrix_walk ||
                           sc.mobility == MobilitySource::model;
    detail::MobilityDraw draw;
    std::vector<Event> events;
    if (timed) {
        draw = generated ? detail::draw_generated_mobility(topo, sc, sc.horizon_seconds, seed)
                         : detail::load_trace_mobility(topo, sc);
        // Clamp moves before calibration so empirical rates see only the
        // moves inside the window they are divided by.
        for (auto& moves : draw.moves)
            std::erase_if(moves,
                          [&](const ZoneEvent& e) { return e.t >= sc.horizon_seconds; });
        draw.window = sc.horizon_seconds;
        events = detail::assemble_events(sc, cmr, seed, draw, sc.horizon_seconds);
    } else if (!generated) {
        draw = detail::load_trace_mobility(topo, sc);
        events = detail::assemble_events(sc, cmr, seed, draw, std::nullopt);
    } else {
        Seconds window = 64.0;
        for (int attempt = 0;; ++attempt) {
            draw = detail::draw_generated_mobility(topo, sc, window, seed);
            events = detail::assemble_events(sc, cmr, seed, draw, std::nullopt);
            if (static_cast<long>(events.size()) >= sc.horizon_events || attempt >= 60) break;
            window *= 1.6;
        }
    }
    EventStream stream;
    stream.duration = timed ? sc.horizon_seconds : draw.window;
    stream.initial = std::move(draw.initial);
    stream.events = std::move(events);
    for (std::size_t i = 0; i < stream.events.size(); ++i)
        stream.events[i].seq = static_cast<long>(i);
    if (!timed && static_cast<long>(stream.events.size()) > sc.horizon_events)
        stream.events.resize(sc.horizon_events);
    return stream;
}

// --------------------------------------------------------------------------
// Replay.

struct ConsistencyError : std::runtime_error {
    long event_index;
    ConsistencyError(long index, const std::string& what)
        : std::runtime_error("event " + std::to_string(index) + ": " + what),
          event_index(index) {}
};

struct RunOptions {
    Seconds ws_activation = 0.0;
    long invariant_check_every = 0;  // 0 disables the periodic audit
};

struct MetricsLedger {
    long long db_reads = 0, db_writes = 0;
    std::array<long long, 6> count{};  // indexed by MessageKind
    std::array<Cost, 6> hops{};
    long long lookups_total = 0, lookups_local = 0;

    void add(const MessageLog& log) {
        for (const LogEntry& e : log.entries) {
            const auto k = static_cast<std::size_t>(e.kind);
            count[k] += 1;
            hops[k] += e.pathHops;
            db_reads += e.dbReads;
            db_writes += e.dbWrites;
        }
        lookups_total += log.lookupsTotal;
        lookups_local += log.lookupsLocal;
    }

    long long count_of(MessageKind k) const { return count[static_cast<std::size_t>(k)]; }
    Cost hops_of(MessageKind k) const { return hops[static_cast<std::size_t>(k)]; }

    Cost hop_cost() const {
        Cost total = 0.0;
        for (Cost h : hops) total += h;
        return total;
    }

    friend bool operator==(const MetricsLedger&, const MetricsLedger&) = default;
};

// Mean hops per lookup and the share answered without leaving the caller's
// zone; absent when the stream carried no calls.
inline std::optional<std::pair<double, double>> lookup_cost_ratio(const MetricsLedger& m) {
    if (m.lookups_total == 0) return std::nullopt;
    return std::pair{m.hops_of(MessageKind::lookup) / static_cast<double>(m.lookups_total),
                     static_cast<double>(m.lookups_local) / static_cast<double>(m.lookups_total)};
}

inline MetricsLedger run(const Topology& topo, const EventStream& stream, SchemeKind kind,
                         const WsConfig& ws = {}, const RunOptions& opts = {}) {
    const auto scheme = make_scheme(kind, topo, stream.initial, ws, opts.ws_activation);
    std::vector<NodeId> truth = stream.initial;
    const int n = static_cast<int>(truth.size());
    MetricsLedger ledger;
    long index = 0;
    for (const Event& ev : stream.events) {
        if (const auto* m = std::get_if<MovePayload>(&ev.payload)) {
            if (m->user < 0 || m->user >= n)
                throw ConsistencyError(index, "move names an unknown user");
            if (truth[m->user] != m->from)
                throw ConsistencyError(index, "move does not chain from the user's zone");
            ledger.add(scheme->on_move(m->user, m->from, m->to, ev.t));
            truth[m->user] = m->to;
        } else {
            const auto& c = std::get<CallPayload>(ev.payload);
            if (c.caller < 0 || c.caller >= n || c.callee < 0 || c.callee >= n)
                throw ConsistencyError(index, "call names an unknown user");
            const MessageLog log = scheme->on_call(c.caller, truth[c.caller], c.callee, ev.t);
            if (log.delivered != truth[c.callee])
                throw ConsistencyError(index, "call delivered to the wrong zone");
            ledger.add(log);
        }
        ++index;
        if (opts.invariant_check_every > 0 && index % opts.invariant_check_every == 0) {
            const auto violations = scheme->invariant_violations();
            if (!violations.empty()) throw ConsistencyError(index - 1, violations.front());
        }
    }
    return ledger;
}

// --------------------------------------------------------------------------
// Sweeps. One stream per cmr, replayed by every scheme, so schemes face
// common random numbers; cells run on a small pool because each replay is
// independent.

struct SweepCell {
    SchemeKind scheme = SchemeKind::hlr;
    double cmr = 0.0;
    std::uint64_t seed = 0;
    MetricsLedger ledger;
};

inline int sweep_thread_count() {
    if (const char* env = std::getenv("LOCSIM_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

inline std::vector<SweepCell> sweep_cmr(const Topology& topo, const Scenario& sc,
                                        const std::vector<double>& cmrs,
                                        const std::vector<SchemeKind>& schemes,
                                        const RunOptions& opts = {}) {
    std::vector<EventStream> streams;
    streams.reserve(cmrs.size());
    for (double cmr : cmrs) streams.push_back(generate_events(topo, sc, cmr, sc.seed));
    std::vector<SweepCell> cells;
    cells.reserve(cmrs.size() * schemes.size());
    for (std::size_t i = 0; i < cmrs.size(); ++i)
        for (SchemeKind kind : schemes) cells.push_back({kind, cmrs[i], sc.seed, {}});
    const int workers =
        std::max(1, std::min<int>(sweep_thread_count(), static_cast<int>(cells.size())));
    std::atomic<std::size_t> cursor{0};
    std::vector<std::exception_ptr> failures(workers);
    auto drain = [&](int slot) {
        try {
            for (;;) {
                const std::size_t k = cursor.fetch_add(1);
                if (k >= cells.size()) return;
                SweepCell& cell = cells[k];
                cell.ledger = run(topo, streams[k / schemes.size()], cell.scheme, sc.ws, opts);
            }
        } catch (...) {
            failures[slot] = std::current_exception();
        }
    };
    if (workers == 1 || cells.size() <= 1) {
        drain(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(drain, w);
        for (std::thread& th : pool) th.join();
    }
    for (const std::exception_ptr& err : failures)
        if (err) std::rethrow_exception(err);
    return cells;
}

// --------------------------------------------------------------------------
// Results CSV: one row per sweep cell. The two ratio columns stay empty when
// a cell saw no lookups.

inline constexpr std::string_view kLedgerCsvHeader =
    "scheme,cmr,seed,db_reads,db_writes,messages_update,messages_dereg,messages_lookup,"
    "messages_replica,messages_invalidate,hop_cost,lookups_total,lookups_local,"
    "mean_lookup_hops,local_ratio";

inline void write_ledger_csv(std::ostream& out, const std::vector<SweepCell>& cells) {
    out.precision(17);
    out << kLedgerCsvHeader << '\n';
    for (const SweepCell& c : cells) {
        out << to_string(c.scheme) << ',' << c.cmr << ',' << c.seed << ',' << c.ledger.db_reads
            << ',' << c.ledger.db_writes << ',' << c.ledger.count_of(MessageKind::update) << ','
            << c.ledger.count_of(MessageKind::deregister) << ','
            << c.ledger.count_of(MessageKind::lookup) << ','
            << c.ledger.count_of(MessageKind::replicaUpdate) << ','
            << c.ledger.count_of(MessageKind::invalidate) << ',' << c.ledger.hop_cost() << ','
            << c.ledger.lookups_total << ',' << c.ledger.lookups_local << ',';
        if (const auto ratio = lookup_cost_ratio(c.ledger))
            out << ratio->first << ',' << ratio->second;
        else
            out << ',';
        out << '\n';
    }
}

}  // namespace locsim
