// Acceptance harness. Each check prints one PASS/FAIL line with its wall
// time; a failing or over-budget check makes the process exit nonzero.
// Thresholds and budgets are pinned here, not configurable.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "locsim/engine.hpp"
#include "oracle_helpers.hpp"

namespace {

using namespace locsim;

NodeId node(const HierarchyTree& t, std::string_view name) {
    const auto id = t.find(name);
    if (!id) throw std::runtime_error("fixture node missing: " + std::string(name));
    return *id;
}

std::string entry_text(const LogEntry& e) {
    std::ostringstream os;
    os << e;
    return os.str();
}

bool same_entries(const std::vector<LogEntry>& got, const std::vector<LogEntry>& want,
                  std::string& why) {
    if (got == want) return true;
    why = "expected " + std::to_string(want.size()) + " entries, got " +
          std::to_string(got.size());
    for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i) {
        if (!(got[i] == want[i])) {
            why = "entry " + std::to_string(i) + ": got [" + entry_text(got[i]) + "] want [" +
                  entry_text(want[i]) + "]";
            break;
        }
    }
    return false;
}

// ---------------------------------------------------------------------------
// 1. The hierarchical scheme walks the pinned fixture paths step for step.

bool check_fixture_paths(std::string& why) {
    const Topology topo = build_canonical_fixture();
    const HierarchyTree& t = topo.tree;
    const NodeId a = node(t, "a"), d = node(t, "d"), e = node(t, "e");
    const NodeId r1 = node(t, "R1"), r4 = node(t, "R4");

    {   // Same-root move a -> d: update climbs d-h-j-R1, deregister descends R1-i-f-a.
        HierScheme s(topo, {a}, false);
        const MessageLog log = s.on_move(0, a, d, 1.0);
        const std::vector<LogEntry> want{{MessageKind::update, d, r1, 3.0, 0, 4},
                                         {MessageKind::deregister, r1, a, 3.0, 0, 3}};
        if (!same_entries(log.entries, want, why)) return false;
    }
    {   // Cross-root move a -> e: update e-l-k-R4, one bus fanout R4-R3-R2-R1,
        // deregister R1-i-f-a.
        HierScheme s(topo, {a}, false);
        const MessageLog log = s.on_move(0, a, e, 1.0);
        const std::vector<LogEntry> want{{MessageKind::update, e, r4, 3.0, 0, 4},
                                         {MessageKind::update, r4, r1, 3.0, 0, 3},
                                         {MessageKind::deregister, r1, a, 3.0, 0, 3}};
        if (!same_entries(log.entries, want, why)) return false;
    }
    {   // Call from a to a user at e: ascent a-f-i-R1, bus handoff R1-R4,
        // descent R4-k-l-e.
        HierScheme s(topo, {a, e}, false);
        const MessageLog log = s.on_call(0, a, 1, 1.0);
        const std::vector<LogEntry> want{{MessageKind::lookup, a, r1, 3.0, 4, 0},
                                         {MessageKind::lookup, r1, r4, 3.0, 1, 0},
                                         {MessageKind::lookup, r4, e, 3.0, 3, 0}};
        if (!same_entries(log.entries, want, why)) return false;
        if (log.delivered != e) {
            why = "call delivered to node " + std::to_string(log.delivered.v);
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// 2. lca, path and cost agree with the BFS oracle on random topologies.

bool check_routing_oracle(std::string& why) {
    Rng rng(20260819, "acceptance-oracle");
    for (int iter = 0; iter < 1000; ++iter) {
        const HierarchyTree t = test::random_tree(rng, 50, iter % 3 == 0);
        const auto adj = test::build_adjacency(t);
        for (std::int32_t x = 0; x < t.node_count(); ++x) {
            for (std::int32_t y = 0; y < t.node_count(); ++y) {
                const NodeId nx{x}, ny{y};
                if (t.path(nx, ny) != test::bfs_path(adj, nx, ny)) {
                    why = "path mismatch on topology " + std::to_string(iter);
                    return false;
                }
                if (std::abs(t.cost(nx, ny) - test::bfs_cost(adj, nx, ny)) > 1e-9) {
                    why = "cost mismatch on topology " + std::to_string(iter);
                    return false;
                }
                if (t.lca(nx, ny) != test::ancestor_lca(t, nx, ny)) {
                    why = "lca mismatch on topology " + std::to_string(iter);
                    return false;
                }
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Shared canonical workload: 20 users on the fixture, matrix-walk mobility,
// preferred-callee traffic (5 peers at weight 0.8), 20000 events per run.

Scenario canonical_scenario(std::uint64_t seed) {
    Scenario sc;
    sc.mobility = MobilitySource::matrix_walk;
    sc.move_rate = 1.0;
    sc.traffic = TrafficSource::poisson;
    sc.calls.preferred_set_size = 5;
    sc.calls.preferred_prob = 0.8;
    sc.users = 20;
    sc.horizon_events = 20000;
    sc.ws.ewma_alpha = 0.25;
    sc.seed = seed;
    sc.seed_set = true;
    return sc;
}

// ---------------------------------------------------------------------------
// 3. Directory consistency under a long mixed stream, audited at every event.

bool check_consistency(std::string& why) {
    const Topology topo = build_canonical_fixture();
    Scenario sc = canonical_scenario(7);
    sc.horizon_events = 100000;
    const EventStream stream = generate_events(topo, sc, 1.0, sc.seed);
    const RunOptions opts{0.0, 1};
    for (SchemeKind kind : {SchemeKind::hlr, SchemeKind::ws_hlr, SchemeKind::hier,
                            SchemeKind::ws_hier}) {
        try {
            run(topo, stream, kind, sc.ws, opts);
        } catch (const ConsistencyError& err) {
            why = std::string(to_string(kind)) + ": " + err.what();
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// 4. With replication disabled the working-set variants equal the baselines.

bool check_forced_empty(std::string& why) {
    const Topology topo = build_canonical_fixture();
    Scenario sc = canonical_scenario(11);
    sc.horizon_events = 10000;
    const EventStream stream = generate_events(topo, sc, 2.0, sc.seed);
    WsConfig off = sc.ws;
    off.force_empty_candidates = true;
    const struct {
        SchemeKind base, ws;
    } pairs[] = {{SchemeKind::hlr, SchemeKind::ws_hlr}, {SchemeKind::hier, SchemeKind::ws_hier}};
    for (const auto& p : pairs) {
        const MetricsLedger base = run(topo, stream, p.base, sc.ws);
        const MetricsLedger ws = run(topo, stream, p.ws, off);
        if (!(base == ws)) {
            why = std::string(to_string(p.ws)) + " diverges from " + std::string(to_string(p.base));
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// 5-7 share one ten-seed sweep over the canonical workload.

const std::vector<double> kSweepCmrs{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
const std::vector<SchemeKind> kAllSchemes{SchemeKind::hlr, SchemeKind::ws_hlr, SchemeKind::hier,
                                          SchemeKind::ws_hier};

const std::vector<std::vector<SweepCell>>& canonical_sweep() {
    static const std::vector<std::vector<SweepCell>> bundles = [] {
        const Topology topo = build_canonical_fixture();
        std::vector<std::vector<SweepCell>> out;
        for (std::uint64_t seed = 1; seed <= 10; ++seed)
            out.push_back(sweep_cmr(topo, canonical_scenario(seed), kSweepCmrs, kAllSchemes));
        return out;
    }();
    return bundles;
}

const MetricsLedger& cell_of(const std::vector<SweepCell>& cells, double cmr, SchemeKind kind) {
    for (const SweepCell& c : cells)
        if (c.cmr == cmr && c.scheme == kind) return c.ledger;
    throw std::logic_error("sweep cell missing");
}

// 5. Total hop cost: ws-hlr must undercut hlr at every ratio >= 2 in at
// least 9 of the 10 seeds.

bool check_total_hops_crossover(std::string& why) {
    int wins = 0;
    std::array<double, 3> gap_sum{};
    const std::array<double, 3> high{2.0, 4.0, 8.0};
    for (const auto& cells : canonical_sweep()) {
        bool win = true;
        for (std::size_t i = 0; i < high.size(); ++i) {
            const double gap = cell_of(cells, high[i], SchemeKind::ws_hlr).hop_cost() -
                               cell_of(cells, high[i], SchemeKind::hlr).hop_cost();
            gap_sum[i] += gap;
            if (gap >= 0.0) win = false;
        }
        wins += win ? 1 : 0;
    }
    if (wins >= 9) return true;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "%d/10 seeds; mean hop-cost gap %+.0f @cmr2 %+.0f @cmr4 %+.0f @cmr8", wins,
                  gap_sum[0] / 10.0, gap_sum[1] / 10.0, gap_sum[2] / 10.0);
    why = buf;
    return false;
}

// 6. Per-lookup cost and locality: the working-set variants must never be
// costlier per lookup nor less local than their baselines, at any ratio.

bool check_lookup_dominance(std::string& why) {
    for (std::size_t s = 0; s < canonical_sweep().size(); ++s) {
        const auto& cells = canonical_sweep()[s];
        for (double cmr : kSweepCmrs) {
            const struct {
                SchemeKind base, ws;
            } pairs[] = {{SchemeKind::hlr, SchemeKind::ws_hlr},
                         {SchemeKind::hier, SchemeKind::ws_hier}};
            for (const auto& p : pairs) {
                const auto base = lookup_cost_ratio(cell_of(cells, cmr, p.base));
                const auto ws = lookup_cost_ratio(cell_of(cells, cmr, p.ws));
                if (!base || !ws) {
                    why = "a sweep cell carried no lookups";
                    return false;
                }
                if (ws->first > base->first || ws->second < base->second) {
                    char buf[160];
                    std::snprintf(buf, sizeof buf,
                                  "%s vs %s at seed %zu cmr %g: hops %.3f vs %.3f, local "
                                  "%.3f vs %.3f",
                                  to_string(p.ws).data(), to_string(p.base).data(), s + 1, cmr,
                                  ws->first, base->first, ws->second, base->second);
                    why = buf;
                    return false;
                }
            }
        }
    }
    return true;
}

// 7. At ratio 4 the working set pays more database writes and gets strictly
// cheaper lookups back, in every seed and for both scheme families.

bool check_write_for_lookup_trade(std::string& why) {
    for (std::size_t s = 0; s < canonical_sweep().size(); ++s) {
        const auto& cells = canonical_sweep()[s];
        const struct {
            SchemeKind base, ws;
        } pairs[] = {{SchemeKind::hlr, SchemeKind::ws_hlr},
                     {SchemeKind::hier, SchemeKind::ws_hier}};
        for (const auto& p : pairs) {
            const MetricsLedger& base = cell_of(cells, 4.0, p.base);
            const MetricsLedger& ws = cell_of(cells, 4.0, p.ws);
            if (ws.db_writes < base.db_writes) {
                why = std::string(to_string(p.ws)) + " wrote less than its baseline at seed " +
                      std::to_string(s + 1);
                return false;
            }
            if (!(lookup_cost_ratio(ws)->first < lookup_cost_ratio(base)->first)) {
                why = std::string(to_string(p.ws)) + " lookups are not cheaper at seed " +
                      std::to_string(s + 1);
                return false;
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// 8. Structural invariants of the mobility models.

std::array<double, 3> stationary_power_iteration(const std::array<std::array<double, 3>, 3>& m) {
    std::array<double, 3> pi{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    for (int k = 0; k < 10000; ++k) {
        std::array<double, 3> next{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) next[j] += pi[i] * m[i][j];
        pi = next;
    }
    return pi;
}

bool check_mobility_invariants(std::string& why) {
    const double pi = std::numbers::pi_v<double>;

    {   // Full velocity memory: speed and heading never drift.
        ModelParams mp;
        mp.gm_alpha = 1.0;
        mp.gm_mean_dir = 0.75;
        mp.gm_mean_speed = 3.0;
        Rng rng(11, "acc-gm1");
        GaussMarkovState s;
        s.init(mp, rng);
        s.pos = {250.0, 200.0};
        const Vec2 start = s.pos;
        for (int k = 0; k < 20; ++k) s.step(mp, 1.0, rng);
        if (s.speed != 3.0 || s.dir != 0.75) {
            why = "full-memory velocity drifted";
            return false;
        }
        if (std::abs(s.pos.x - (start.x + 60.0 * std::cos(0.75))) > 1e-9 ||
            std::abs(s.pos.y - (start.y + 60.0 * std::sin(0.75))) > 1e-9) {
            why = "full-memory track left the straight line";
            return false;
        }
    }
    {   // Zero memory: the next velocity forgets the current one entirely.
        ModelParams mp;
        mp.gm_alpha = 0.0;
        mp.gm_mean_dir = 0.75;
        mp.gm_mean_speed = 3.0;
        GaussMarkovState slow, fast;
        Rng ra(77, "acc-gm0");
        Rng rb = ra;
        slow.pos = fast.pos = {250.0, 200.0};
        slow.mean_dir = fast.mean_dir = mp.gm_mean_dir;
        slow.speed = 0.5;
        slow.dir = 0.1;
        fast.speed = 9.0;
        fast.dir = 5.5;
        for (int k = 0; k < 5; ++k) {
            slow.step(mp, 1.0, ra);
            fast.step(mp, 1.0, rb);
            if (slow.speed != fast.speed ||
                std::abs(std::remainder(slow.dir - fast.dir, 2.0 * pi)) > 1e-9) {
                why = "zero-memory states failed to converge after one step";
                return false;
            }
        }
    }
    {   // Boundless area: a million wrapped steps stay inside the torus.
        ModelParams mp;
        Rng rng(13, "acc-torus");
        BoundlessState s;
        s.init(mp, rng);
        for (int k = 0; k < 1000000; ++k) {
            s.step(mp, 1.0, rng);
            if (s.pos.x < 0.0 || s.pos.x >= mp.area_width || s.pos.y < 0.0 ||
                s.pos.y >= mp.area_height) {
                why = "torus position escaped at step " + std::to_string(k);
                return false;
            }
        }
    }
    {   // Waypoint pause: arrival freezes the node for exactly the pause time.
        ModelParams mp;
        mp.pause_time = 5.0;
        mp.min_speed = mp.max_speed = 7.0;
        Rng rng(3, "acc-wp");
        RandomWaypointState s;
        s.pos = {0.0, 0.0};
        s.waypoint = {10.0, 0.0};
        s.speed = 10.0;
        s.pause_remaining = 0.0;
        s.step(mp, 1.0, rng);
        if (!(s.pos == Vec2{10.0, 0.0}) || s.pause_remaining != 5.0) {
            why = "waypoint arrival did not start the pause";
            return false;
        }
        s.step(mp, 4.0, rng);
        if (!(s.pos == Vec2{10.0, 0.0}) || s.pause_remaining != 1.0) {
            why = "pause clock ran wrong";
            return false;
        }
        s.step(mp, 1.0, rng);
        if (!(s.pos == Vec2{10.0, 0.0}) || s.speed != 7.0) {
            why = "pause did not end on the dot";
            return false;
        }
    }
    {   // Group models: members never leave the configured radius or the area.
        ModelParams mp;
        mp.group_radius = 40.0;
        mp.rpgm_deviation_max = 25.0;
        const struct {
            MobilityModel model;
            double bound;
        } cases[] = {{MobilityModel::Ecr, 40.0},
                     {MobilityModel::Nomadic, 40.0},
                     {MobilityModel::Rpgm, 25.0}};
        for (const auto& c : cases) {
            GroupStepper g(c.model, mp, 5, Rng(31, "acc-grp", static_cast<int>(c.model)));
            for (int k = 0; k < 300; ++k) {
                g.advance(1.0);
                for (int i = 0; i < g.members(); ++i) {
                    const Vec2 p = g.member_position(i);
                    if (norm(p - g.reference()) > c.bound + 1e-9) {
                        why = std::string(to_string(c.model)) + " member left the radius";
                        return false;
                    }
                    if (p.x < 0.0 || p.x >= mp.area_width || p.y < 0.0 || p.y >= mp.area_height) {
                        why = std::string(to_string(c.model)) + " member left the area";
                        return false;
                    }
                }
            }
        }
    }
    {   // Probabilistic walk: state occupancy matches the stationary law to 2%.
        ModelParams mp;
        mp.area_width = 1e7;
        mp.area_height = 1e7;
        const std::array<double, 3> expect = stationary_power_iteration(mp.prob_walk_matrix);
        ProbabilisticWalkState s;
        s.pos = {5e6, 5e6};
        Rng rng(99, "acc-pw");
        std::array<long, 3> tally{};
        const int burn_in = 200, steps = 60000;
        for (int k = 0; k < burn_in + steps; ++k) {
            s.step(mp, 1.0, rng);
            if (k >= burn_in) {
                ++tally[s.state_x];
                ++tally[s.state_y];
            }
        }
        for (int st = 0; st < 3; ++st) {
            const double got = tally[st] / (2.0 * steps);
            if (std::abs(got - expect[st]) > 0.02) {
                char buf[96];
                std::snprintf(buf, sizeof buf, "state %d occupancy %.4f vs %.4f", st, got,
                              expect[st]);
                why = buf;
                return false;
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// 9. Determinism: the same seed yields byte-identical result tables, with
// the worker count varied on top.

bool check_determinism(std::string& why) {
    const Topology topo = build_canonical_fixture();
    const Scenario sc = canonical_scenario(123);
    const std::vector<double> cmrs{1.0, 4.0};
    const char* saved = std::getenv("LOCSIM_THREADS");
    const std::string restore = saved ? saved : "";
    std::array<std::string, 3> outputs;
    const char* caps[] = {"1", "3", "3"};
    for (int i = 0; i < 3; ++i) {
        setenv("LOCSIM_THREADS", caps[i], 1);
        std::ostringstream os;
        write_ledger_csv(os, sweep_cmr(topo, sc, cmrs, kAllSchemes));
        outputs[i] = os.str();
    }
    if (saved)
        setenv("LOCSIM_THREADS", restore.c_str(), 1);
    else
        unsetenv("LOCSIM_THREADS");
    if (outputs[0] != outputs[1] || outputs[1] != outputs[2]) {
        why = "result tables differ across repeat runs";
        return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// 10. Replication gain formulas hit their closed-form fixture values.

bool check_gain_formulas(std::string& why) {
    const Topology topo = build_canonical_fixture();
    const HierarchyTree& t = topo.tree;
    const NodeId a = node(t, "a"), d = node(t, "d"), e = node(t, "e");
    const double flat = ws_delta_hlr(t, a, d, e);
    if (flat != 6.0) {
        why = "flat gain for (a, d, e) came out " + std::to_string(flat);
        return false;
    }
    const double hier = ws_delta_hier(t, a, e);
    if (hier != 7.0) {
        why = "hierarchical gain for (a, e) came out " + std::to_string(hier);
        return false;
    }
    return true;
}

}  // namespace

int main() {
    struct Check {
        int id;
        const char* what;
        double budget;
        bool (*fn)(std::string&);
    };
    const Check checks[] = {
        {1, "hierarchical moves and calls walk the pinned fixture paths", 1.0,
         check_fixture_paths},
        {2, "lca, path and cost agree with the BFS oracle on 1000 random topologies", 10.0,
         check_routing_oracle},
        {3, "all four schemes stay consistent across 100000 audited events", 30.0,
         check_consistency},
        {4, "working-set schemes with replication disabled equal the baselines", 10.0,
         check_forced_empty},
        {5, "ws-hlr undercuts hlr on total hops at cmr >= 2 in 9 of 10 seeds", 120.0,
         check_total_hops_crossover},
        {6, "working-set lookups are never costlier nor less local than baseline", 120.0,
         check_lookup_dominance},
        {7, "at cmr 4 extra database writes buy strictly cheaper lookups", 120.0,
         check_write_for_lookup_trade},
        {8, "mobility models keep their structural invariants", 60.0, check_mobility_invariants},
        {9, "equal seeds give byte-identical result tables across worker counts", 60.0,
         check_determinism},
        {10, "replication gain formulas match their fixture closed forms", 1.0,
         check_gain_formulas},
    };

    int failures = 0;
    for (const Check& c : checks) {
        std::string why;
        bool ok = false;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            ok = c.fn(why);
        } catch (const std::exception& err) {
            why = err.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (ok && secs > c.budget) {
            ok = false;
            why = "wall time exceeds the " + std::to_string(c.budget) + "s budget";
        }
        failures += ok ? 0 : 1;
        std::printf("%s %2d  %s  (%.2fs)\n", ok ? "PASS" : "FAIL", c.id, c.what, secs);
        if (!ok && !why.empty()) std::printf("         %s\n", why.c_str());
    }
    if (failures > 0) std::printf("%d of 10 checks failed\n", failures);
    return failures == 0 ? 0 : 1;
}
