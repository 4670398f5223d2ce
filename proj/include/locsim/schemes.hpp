#pragma once

// The four location-management schemes behind one event interface. A scheme
// owns its directory state, appends one log entry per logical message, and
// reports the zone a call was delivered to so the engine can audit it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "locsim/topology.hpp"
#include "locsim/types.hpp"

namespace locsim {

enum class MessageKind { update, deregister, lookup, replicaUpdate, invalidate, callDelivery };

inline std::string_view to_string(MessageKind k) {
    switch (k) {
        case MessageKind::update: return "update";
        case MessageKind::deregister: return "deregister";
        case MessageKind::lookup: return "lookup";
        case MessageKind::replicaUpdate: return "replicaUpdate";
        case MessageKind::invalidate: return "invalidate";
        case MessageKind::callDelivery: return "callDelivery";
    }
    return "?";
}

// One logical message: pathHops is the full routed cost, reads/writes are the
// database touches it caused across every node it visited.
struct LogEntry {
    MessageKind kind{};
    NodeId from, to;
    Cost pathHops = 0.0;
    int dbReads = 0;
    int dbWrites = 0;
    friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const LogEntry& e) {
    return os << to_string(e.kind) << " " << e.from.v << "->" << e.to.v << " hops=" << e.pathHops
              << " r=" << e.dbReads << " w=" << e.dbWrites;
}

struct MessageLog {
    std::vector<LogEntry> entries;
    int lookupsTotal = 0;  // 1 for call handling, 0 for moves
    int lookupsLocal = 0;  // 1 when the first lookup never left the caller's zone
    NodeId delivered;      // call handling only: zone the call reached

    friend bool operator==(const MessageLog&, const MessageLog&) = default;

    Cost total_hops() const {
        Cost c = 0.0;
        for (const LogEntry& e : entries) c += e.pathHops;
        return c;
    }
    Cost hops_of(MessageKind k) const {
        Cost c = 0.0;
        for (const LogEntry& e : entries)
            if (e.kind == k) c += e.pathHops;
        return c;
    }
    int count_of(MessageKind k) const {
        int n = 0;
        for (const LogEntry& e : entries) n += e.kind == k ? 1 : 0;
        return n;
    }
    int reads() const {
        int n = 0;
        for (const LogEntry& e : entries) n += e.dbReads;
        return n;
    }
    int writes() const {
        int n = 0;
        for (const LogEntry& e : entries) n += e.dbWrites;
        return n;
    }
};

// --------------------------------------------------------------------------
// Working-set machinery.

struct WsConfig {
    enum class UCostMode { symmetric, announce_only };
    double ewma_alpha = 0.0;  // 0: cumulative count/elapsed rates
    UCostMode u_cost_mode = UCostMode::symmetric;
    bool strict_boundary = true;          // replicate only on strict inequality
    bool force_empty_candidates = false;  // disables all replication decisions
};

inline std::optional<WsConfig::UCostMode> parse_u_cost_mode(std::string_view s) {
    if (s == "symmetric") return WsConfig::UCostMode::symmetric;
    if (s == "announce_only") return WsConfig::UCostMode::announce_only;
    return std::nullopt;
}

// Event-rate estimator. With alpha = 0 it is the cumulative count over time
// since activation; with alpha > 0 it is an exponential kernel whose value
// decays between events, unbiased for a constant-rate process.
class RateEstimator {
public:
    explicit RateEstimator(double alpha = 0.0, Seconds activation = 0.0)
        : m_alpha(alpha), m_activation(activation), m_last(activation) {}

    void record(Seconds now) {
        ++m_count;
        if (m_alpha > 0.0) {
            m_value = m_value * std::exp(-m_alpha * std::max(0.0, now - m_last)) + m_alpha;
            m_last = now;
        }
    }

    double rate(Seconds now) const {
        if (m_alpha > 0.0) return m_value * std::exp(-m_alpha * std::max(0.0, now - m_last));
        const Seconds elapsed = now - m_activation;
        return elapsed > 0.0 ? static_cast<double>(m_count) / elapsed : 0.0;
    }

    long events() const { return m_count; }

private:
    double m_alpha;
    Seconds m_activation;
    Seconds m_last;
    double m_value = 0.0;
    long m_count = 0;
};

// Per-callee counters: one move estimator per user, one call estimator per
// (user, source node) pair.
class WorkingSetLedger {
public:
    WorkingSetLedger(int users, double alpha, Seconds activation)
        : m_alpha(alpha), m_activation(activation), m_moves(users, RateEstimator(alpha, activation)),
          m_calls(users) {}

    void record_move(UserId u, Seconds now) { m_moves[u].record(now); }

    void record_lookup(UserId callee, NodeId site, Seconds now) {
        auto [it, fresh] = m_calls[callee].try_emplace(site, RateEstimator(m_alpha, m_activation));
        (void)fresh;
        it->second.record(now);
    }

    // Evaluation is deferred until both processes have been observed at all.
    bool warmed_up(UserId callee, NodeId site, Seconds now) const {
        if (m_moves[callee].events() < 1 || !(now > m_activation)) return false;
        const auto it = m_calls[callee].find(site);
        return it != m_calls[callee].end() && it->second.events() >= 1;
    }

    double call_rate(UserId callee, NodeId site, Seconds now) const {
        const auto it = m_calls[callee].find(site);
        return it == m_calls[callee].end() ? 0.0 : it->second.rate(now);
    }

    double move_rate(UserId callee, Seconds now) const { return m_moves[callee].rate(now); }

    std::vector<NodeId> recorded_sites(UserId callee) const {
        std::vector<NodeId> out;
        out.reserve(m_calls[callee].size());
        for (const auto& [site, est] : m_calls[callee]) out.push_back(site);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    double m_alpha;
    Seconds m_activation;
    std::vector<RateEstimator> m_moves;
    std::vector<std::unordered_map<NodeId, RateEstimator>> m_calls;
};

// Per-call detour saving a replica at s would buy, flat scheme: the home
// round trip replaced by the direct leg.
inline Cost ws_delta_hlr(const HierarchyTree& t, NodeId s, NodeId home, NodeId calleeZone) {
    return t.cost(s, home) + t.cost(home, calleeZone) - t.cost(s, calleeZone);
}

// Hierarchical form: the pointer-chase from s is replaced by two messages.
inline Cost ws_delta_hier(const HierarchyTree& t, NodeId s, NodeId calleeZone) {
    return t.cost(s, calleeZone) - 2.0;
}

// Replicate at s when the routing saving outruns the maintenance cost.
inline bool ws_decide(double f_s, Cost delta_s, double f_update, Cost u_s, bool strict = true) {
    const double gain = f_s * delta_s;
    const double burden = f_update * u_s;
    return strict ? gain > burden : gain >= burden;
}

inline Cost ws_update_cost(const HierarchyTree& t, NodeId currentZone, NodeId s,
                           WsConfig::UCostMode mode) {
    const Cost one_way = t.cost(currentZone, s);
    return mode == WsConfig::UCostMode::symmetric ? 2.0 * one_way : one_way;
}

// --------------------------------------------------------------------------

enum class SchemeKind { hlr, ws_hlr, hier, ws_hier };

inline std::optional<SchemeKind> parse_scheme(std::string_view s) {
    if (s == "hlr") return SchemeKind::hlr;
    if (s == "ws-hlr") return SchemeKind::ws_hlr;
    if (s == "hier") return SchemeKind::hier;
    if (s == "ws-hier") return SchemeKind::ws_hier;
    return std::nullopt;
}

inline std::string_view to_string(SchemeKind k) {
    switch (k) {
        case SchemeKind::hlr: return "hlr";
        case SchemeKind::ws_hlr: return "ws-hlr";
        case SchemeKind::hier: return "hier";
        case SchemeKind::ws_hier: return "ws-hier";
    }
    return "?";
}

class Scheme {
public:
    virtual ~Scheme() = default;
    virtual std::string_view name() const = 0;
    virtual MessageLog on_move(UserId u, NodeId from, NodeId to, Seconds now) = 0;
    virtual MessageLog on_call(UserId caller, NodeId callerZone, UserId callee, Seconds now) = 0;
    virtual std::vector<std::string> invariant_violations() const = 0;

    NodeId location_of(UserId u) const { return m_zone.at(u); }
    int users() const { return static_cast<int>(m_zone.size()); }

protected:
    Scheme(const Topology& topo, std::vector<NodeId> initialZones)
        : m_topo(topo), m_zone(std::move(initialZones)) {
        for (NodeId z : m_zone)
            if (!z.valid() || !m_topo.tree.is_leaf(z))
                throw std::invalid_argument("every user must start in a leaf zone");
    }

    const HierarchyTree& tree() const { return m_topo.tree; }

    void check_move_(UserId u, NodeId from, NodeId to) const {
        if (u < 0 || u >= users()) throw std::out_of_range("unknown user id");
        if (m_zone[u] != from) throw std::logic_error("move event disagrees with tracked zone");
        if (!m_topo.tree.is_leaf(to)) throw std::invalid_argument("move target must be a leaf zone");
    }

    const Topology& m_topo;
    std::vector<NodeId> m_zone;
};

// --------------------------------------------------------------------------
// Flat scheme: one fixed home register per user plus per-zone visitor
// registries; the working-set variant adds exact-location replicas at leaf
// zones chosen by the replication inequality.

class FlatScheme final : public Scheme {
public:
    FlatScheme(const Topology& topo, std::vector<NodeId> initialZones, bool workingSet,
               const WsConfig& cfg = {}, Seconds activation = 0.0)
        : Scheme(topo, std::move(initialZones)), m_ws(workingSet), m_cfg(cfg),
          m_ledger(users(), cfg.ewma_alpha, activation), m_replicas(users()) {
        m_home = m_zone;
        m_hlr = m_zone;
        for (int u = 0; u < users(); ++u) m_vlr[m_zone[u]].insert(u);
    }

    std::string_view name() const override { return m_ws ? "ws-hlr" : "hlr"; }

    MessageLog on_move(UserId u, NodeId from, NodeId to, Seconds now) override {
        check_move_(u, from, to);
        MessageLog log;
        if (from == to) return log;
        const NodeId home = m_home[u];
        // New visitor record plus the home's pointer rewrite ride the update.
        log.entries.push_back(
            {MessageKind::update, to, home, tree().cost(to, home), 0, 2});
        log.entries.push_back(
            {MessageKind::deregister, home, from, tree().cost(home, from), 0, 1});
        m_vlr[from].erase(u);
        m_vlr[to].insert(u);
        m_hlr[u] = to;
        m_zone[u] = to;
        if (m_ws) {
            m_ledger.record_move(u, now);
            if (!m_cfg.force_empty_candidates) reconcile_replicas_(u, to, now, log);
        }
        return log;
    }

    MessageLog on_call(UserId caller, NodeId callerZone, UserId callee, Seconds now) override {
        (void)caller;
        if (callee < 0 || callee >= users()) throw std::out_of_range("unknown callee id");
        MessageLog log;
        log.lookupsTotal = 1;
        // Delivery trusts the directory, so a stale record surfaces as a
        // misdelivered call instead of being silently corrected.
        const auto hit = m_ws ? m_replicas[callee].find(callerZone) : m_replicas[callee].end();
        NodeId believed;
        if (hit != m_replicas[callee].end()) {
            believed = hit->second;
            log.entries.push_back({MessageKind::lookup, callerZone, callerZone, 0.0, 1, 0});
            log.entries.push_back({MessageKind::callDelivery, callerZone, believed,
                                   tree().cost(callerZone, believed), 1, 0});
        } else {
            const NodeId home = m_home[callee];
            believed = m_hlr[callee];
            log.entries.push_back(
                {MessageKind::lookup, callerZone, home, tree().cost(callerZone, home), 2, 0});
            log.entries.push_back(
                {MessageKind::callDelivery, home, believed, tree().cost(home, believed), 1, 0});
        }
        log.lookupsLocal = log.entries.front().from == log.entries.front().to ? 1 : 0;
        log.delivered = believed;
        if (m_ws) {
            m_ledger.record_lookup(callee, callerZone, now);
            if (!m_cfg.force_empty_candidates)
                evaluate_one_(callee, callerZone, believed, now, log);
        }
        return log;
    }

    std::vector<std::string> invariant_violations() const override {
        std::vector<std::string> out;
        std::unordered_map<UserId, int> seen;
        for (const auto& [zone, regs] : m_vlr)
            for (UserId u : regs) {
                ++seen[u];
                if (m_zone[u] != zone)
                    out.push_back("visitor record for user " + std::to_string(u) +
                                  " sits in the wrong zone");
            }
        for (int u = 0; u < users(); ++u) {
            if (seen[u] != 1)
                out.push_back("user " + std::to_string(u) + " has " + std::to_string(seen[u]) +
                              " visitor records");
            if (m_hlr[u] != m_zone[u])
                out.push_back("home register for user " + std::to_string(u) + " is stale");
            for (const auto& [site, stored] : m_replicas[u])
                if (stored != m_zone[u])
                    out.push_back("replica of user " + std::to_string(u) + " at " +
                                  tree().name(site) + " is stale");
        }
        return out;
    }

    const std::unordered_map<NodeId, NodeId>& replica_sites(UserId u) const {
        return m_replicas.at(u);
    }
    const WorkingSetLedger& ledger() const { return m_ledger; }

private:
    // Move-time sweep: refresh every member that still earns its keep, drop
    // the ones that no longer do, admit recorded sources that now qualify.
    void reconcile_replicas_(UserId u, NodeId to, Seconds now, MessageLog& log) {
        for (NodeId s : m_ledger.recorded_sites(u)) {
            if (!m_ledger.warmed_up(u, s, now)) continue;
            const bool member = m_replicas[u].count(s) > 0;
            const bool keep = ws_decide(m_ledger.call_rate(u, s, now),
                                        ws_delta_hlr(tree(), s, m_home[u], to),
                                        m_ledger.move_rate(u, now),
                                        ws_update_cost(tree(), to, s, m_cfg.u_cost_mode),
                                        m_cfg.strict_boundary);
            if (keep) {
                log.entries.push_back(
                    {MessageKind::replicaUpdate, to, s, tree().cost(to, s), 0, 1});
                m_replicas[u][s] = to;
            } else if (member) {
                log.entries.push_back(
                    {MessageKind::invalidate, to, s, tree().cost(to, s), 0, 1});
                m_replicas[u].erase(s);
            }
        }
    }

    // Call-time decision for the one source that just looked the user up. An
    // admission piggybacks on the call flow (no message, one extra write); a
    // drop is the holder discarding its own copy.
    void evaluate_one_(UserId callee, NodeId s, NodeId z, Seconds now, MessageLog& log) {
        if (!m_ledger.warmed_up(callee, s, now)) return;
        const bool member = m_replicas[callee].count(s) > 0;
        const bool keep = ws_decide(m_ledger.call_rate(callee, s, now),
                                    ws_delta_hlr(tree(), s, m_home[callee], z),
                                    m_ledger.move_rate(callee, now),
                                    ws_update_cost(tree(), z, s, m_cfg.u_cost_mode),
                                    m_cfg.strict_boundary);
        if (keep && !member) {
            m_replicas[callee][s] = z;
            log.entries.back().dbWrites += 1;
        } else if (!keep && member) {
            log.entries.push_back({MessageKind::invalidate, s, s, 0.0, 0, 1});
            m_replicas[callee].erase(s);
        }
    }

    bool m_ws;
    WsConfig m_cfg;
    WorkingSetLedger m_ledger;
    std::vector<NodeId> m_home;
    std::vector<NodeId> m_hlr;  // home's pointer to the serving zone
    std::unordered_map<NodeId, std::unordered_set<UserId>> m_vlr;
    std::vector<std::unordered_map<NodeId, NodeId>> m_replicas;  // site -> stored zone
};

// --------------------------------------------------------------------------
// Hierarchical scheme: every node keeps a pointer per user (leaf: "here",
// internal: child subtree, root: child for its own users, owning root for
// everyone else). The working-set variant adds exact-leaf replicas at
// arbitrary nodes, short-circuiting the pointer chase.

class HierScheme final : public Scheme {
public:
    HierScheme(const Topology& topo, std::vector<NodeId> initialZones, bool workingSet,
               const WsConfig& cfg = {}, Seconds activation = 0.0)
        : Scheme(topo, std::move(initialZones)), m_ws(workingSet), m_cfg(cfg),
          m_ledger(users(), cfg.ewma_alpha, activation), m_replicas(users()) {
        for (int u = 0; u < users(); ++u) {
            const NodeId z = m_zone[u];
            m_dir[z][u] = z;
            NodeId child = z, n = tree().parent(z);
            while (n.valid()) {
                m_dir[n][u] = child;
                child = n;
                n = tree().parent(n);
            }
            const NodeId own = tree().root_of(z);
            for (NodeId r : tree().roots())
                if (r != own) m_dir[r][u] = own;
        }
    }

    std::string_view name() const override { return m_ws ? "ws-hier" : "hier"; }

    MessageLog on_move(UserId u, NodeId from, NodeId to, Seconds now) override {
        check_move_(u, from, to);
        MessageLog log;
        if (from == to) return log;
        const auto meet = tree().lca(from, to);
        if (meet) {
            write_up_(u, to, *meet, log);
            erase_down_(u, *meet, from, log);
        } else {
            const NodeId root_to = tree().root_of(to);
            const NodeId root_from = tree().root_of(from);
            write_up_(u, to, root_to, log);
            broadcast_roots_(u, root_to, log);
            erase_down_(u, root_from, from, log);
        }
        m_zone[u] = to;
        if (m_ws) {
            m_ledger.record_move(u, now);
            if (!m_cfg.force_empty_candidates) reconcile_replicas_(u, to, now, log);
        }
        return log;
    }

    MessageLog on_call(UserId caller, NodeId callerZone, UserId callee, Seconds now) override {
        (void)caller;
        if (callee < 0 || callee >= users()) throw std::out_of_range("unknown callee id");
        MessageLog log;
        log.lookupsTotal = 1;
        NodeId believed;
        std::vector<NodeId> faced;  // nodes that answered a lookup for this call
        // Ascend until a replica or a directory pointer appears, then follow
        // the stored pointers all the way down. Delivery trusts the records,
        // so a stale one surfaces as a misdelivered call.
        NodeId n = callerZone;
        int ascent_reads = 0;
        bool replica_stop = false;
        for (;;) {
            faced.push_back(n);
            ++ascent_reads;
            if (m_ws && m_replicas[callee].count(n) > 0) {
                replica_stop = true;
                break;
            }
            if (has_pointer_(n, callee)) break;
            n = tree().parent(n);
            if (!n.valid()) throw std::logic_error("lookup ascent ran past a root");
        }
        log.entries.push_back(
            {MessageKind::lookup, callerZone, n, tree().cost(callerZone, n), ascent_reads, 0});
        if (replica_stop) {
            believed = m_replicas[callee].at(n);
            log.entries.push_back(
                {MessageKind::callDelivery, n, believed, tree().cost(n, believed), 1, 0});
        } else {
            NodeId cur = n;
            if (tree().is_root(cur)) {
                const NodeId over = chase_(cur, callee);
                if (over != cur && tree().is_root(over)) {  // handed off across the bus
                    log.entries.push_back(
                        {MessageKind::lookup, cur, over, tree().cost(cur, over), 1, 0});
                    faced.push_back(over);
                    cur = over;
                }
            }
            NodeId leaf = cur;
            int descent_reads = 0;
            for (int guard = 0; guard < 64; ++guard) {
                const NodeId next = chase_(leaf, callee);
                if (next == leaf) break;
                faced.push_back(next);
                ++descent_reads;
                leaf = next;
            }
            if (leaf != cur)
                log.entries.push_back(
                    {MessageKind::lookup, cur, leaf, tree().cost(cur, leaf), descent_reads, 0});
            believed = leaf;
        }
        log.lookupsLocal = log.entries.front().from == log.entries.front().to ? 1 : 0;
        log.delivered = believed;
        if (m_ws) {
            for (NodeId s : faced) m_ledger.record_lookup(callee, s, now);
            if (!m_cfg.force_empty_candidates) evaluate_faced_(callee, faced, believed, now, log);
        }
        return log;
    }

    std::vector<std::string> invariant_violations() const override {
        std::vector<std::string> out;
        for (int u = 0; u < users(); ++u) {
            const NodeId z = m_zone[u];
            for (NodeId r : tree().roots()) walk_from_(u, r, z, out);
            int here = 0;
            for (const auto& [node, table] : m_dir) {
                const auto it = table.find(u);
                if (it == table.end()) continue;
                if (tree().is_leaf(node) && it->second == node) ++here;
                if (!on_record_path_(node, z))
                    out.push_back("stale directory entry for user " + std::to_string(u) + " at " +
                                  tree().name(node));
                if (node != z && !tree().is_root(node) && node != tree().parent(z) &&
                    it->second == z)
                    out.push_back("exact pointer for user " + std::to_string(u) +
                                  " above the parent level at " + tree().name(node));
            }
            if (here != 1)
                out.push_back("user " + std::to_string(u) + " has " + std::to_string(here) +
                              " leaf records");
            for (const auto& [site, stored] : m_replicas[u])
                if (stored != z)
                    out.push_back("replica of user " + std::to_string(u) + " at " +
                                  tree().name(site) + " is stale");
        }
        return out;
    }

    const std::unordered_map<NodeId, NodeId>& replica_sites(UserId u) const {
        return m_replicas.at(u);
    }
    const WorkingSetLedger& ledger() const { return m_ledger; }

private:
    bool has_pointer_(NodeId n, UserId u) const {
        const auto it = m_dir.find(n);
        return it != m_dir.end() && it->second.count(u) > 0;
    }

    NodeId chase_(NodeId at, UserId u) const {
        const auto table = m_dir.find(at);
        if (table != m_dir.end()) {
            const auto it = table->second.find(u);
            if (it != table->second.end()) return it->second;
        }
        throw std::logic_error("pointer chase hit a node with no record");
    }

    // Update climbs from the new zone to `top`, writing a pointer at every
    // node it visits (the new leaf record included).
    void write_up_(UserId u, NodeId to, NodeId top, MessageLog& log) {
        const auto up = tree().path(to, top);
        m_dir[to][u] = to;
        for (std::size_t i = 1; i < up.size(); ++i) m_dir[up[i]][u] = up[i - 1];
        log.entries.push_back({MessageKind::update, to, top, tree().cost(to, top), 0,
                               static_cast<int>(up.size())});
    }

    // Deregistration descends from `top`, deleting everything strictly below.
    void erase_down_(UserId u, NodeId top, NodeId from, MessageLog& log) {
        const auto down = tree().path(top, from);
        for (std::size_t i = 1; i < down.size(); ++i) m_dir[down[i]].erase(u);
        log.entries.push_back({MessageKind::deregister, top, from, tree().cost(top, from), 0,
                               static_cast<int>(down.size()) - 1});
    }

    // Cross-root move: the new root tells every other root who owns the user
    // now. Two bus messages at most, the higher-index side first.
    void broadcast_roots_(UserId u, NodeId root_to, MessageLog& log) {
        const auto& roots = tree().roots();
        const int at = tree().bus_index(root_to);
        const int last = static_cast<int>(roots.size()) - 1;
        if (at < last)
            log.entries.push_back({MessageKind::update, root_to, roots[last],
                                   tree().cost(root_to, roots[last]), 0, last - at});
        if (at > 0)
            log.entries.push_back({MessageKind::update, root_to, roots[0],
                                   tree().cost(root_to, roots[0]), 0, at});
        for (NodeId r : roots)
            if (r != root_to) m_dir[r][u] = root_to;
    }

    bool barred_(NodeId s, NodeId z) const { return s == z || s == tree().parent(z); }

    void reconcile_replicas_(UserId u, NodeId to, Seconds now, MessageLog& log) {
        for (NodeId s : m_ledger.recorded_sites(u)) {
            if (barred_(s, to)) {
                m_replicas[u].erase(s);  // the zone and its parent are exact already
                continue;
            }
            if (!m_ledger.warmed_up(u, s, now)) continue;
            const bool member = m_replicas[u].count(s) > 0;
            const bool keep = ws_decide(m_ledger.call_rate(u, s, now),
                                        ws_delta_hier(tree(), s, to),
                                        m_ledger.move_rate(u, now),
                                        ws_update_cost(tree(), to, s, m_cfg.u_cost_mode),
                                        m_cfg.strict_boundary);
            if (keep) {
                log.entries.push_back(
                    {MessageKind::replicaUpdate, to, s, tree().cost(to, s), 0, 1});
                m_replicas[u][s] = to;
            } else if (member) {
                log.entries.push_back(
                    {MessageKind::invalidate, to, s, tree().cost(to, s), 0, 1});
                m_replicas[u].erase(s);
            }
        }
    }

    // Call-time sweep over the nodes this lookup visited, in path order.
    void evaluate_faced_(UserId callee, const std::vector<NodeId>& faced, NodeId z, Seconds now,
                         MessageLog& log) {
        const std::size_t serve_end = log.entries.size() - 1;
        int installs = 0;
        for (NodeId s : faced) {
            if (barred_(s, z)) {
                m_replicas[callee].erase(s);
                continue;
            }
            if (!m_ledger.warmed_up(callee, s, now)) continue;
            const bool member = m_replicas[callee].count(s) > 0;
            const bool keep = ws_decide(m_ledger.call_rate(callee, s, now),
                                        ws_delta_hier(tree(), s, z),
                                        m_ledger.move_rate(callee, now),
                                        ws_update_cost(tree(), z, s, m_cfg.u_cost_mode),
                                        m_cfg.strict_boundary);
            if (keep && !member) {
                m_replicas[callee][s] = z;
                ++installs;
            } else if (!keep && member) {
                log.entries.push_back({MessageKind::invalidate, s, s, 0.0, 0, 1});
                m_replicas[callee].erase(s);
            }
        }
        log.entries[serve_end].dbWrites += installs;  // piggybacked on the call flow
    }

    // One audit walk: from `start`, pointers must lead to the true zone.
    void walk_from_(UserId u, NodeId start, NodeId z, std::vector<std::string>& out) const {
        NodeId n = start;
        for (int guard = 0; guard < 64; ++guard) {
            const auto table = m_dir.find(n);
            if (table == m_dir.end() || table->second.count(u) == 0) {
                out.push_back("pointer chain for user " + std::to_string(u) + " breaks at " +
                              tree().name(n));
                return;
            }
            const NodeId next = table->second.at(u);
            if (next == n) {
                if (n != z)
                    out.push_back("pointer chain for user " + std::to_string(u) +
                                  " ends at the wrong leaf " + tree().name(n));
                return;
            }
            n = next;
        }
        out.push_back("pointer chain for user " + std::to_string(u) + " does not terminate");
    }

    // Entries may legally sit on the zone-to-root path or at any root.
    bool on_record_path_(NodeId node, NodeId z) const {
        if (tree().is_root(node)) return true;
        NodeId n = z;
        while (n.valid()) {
            if (n == node) return true;
            n = tree().parent(n);
        }
        return false;
    }

    bool m_ws;
    WsConfig m_cfg;
    WorkingSetLedger m_ledger;
    std::unordered_map<NodeId, std::unordered_map<UserId, NodeId>> m_dir;
    std::vector<std::unordered_map<NodeId, NodeId>> m_replicas;  // site -> stored leaf
};

inline std::unique_ptr<Scheme> make_scheme(SchemeKind kind, const Topology& topo,
                                           std::vector<NodeId> initialZones,
                                           const WsConfig& cfg = {}, Seconds activation = 0.0) {
    switch (kind) {
        case SchemeKind::hlr:
            return std::make_unique<FlatScheme>(topo, std::move(initialZones), false, cfg,
                                                activation);
        case SchemeKind::ws_hlr:
            return std::make_unique<FlatScheme>(topo, std::move(initialZones), true, cfg,
                                                activation);
        case SchemeKind::hier:
            return std::make_unique<HierScheme>(topo, std::move(initialZones), false, cfg,
                                                activation);
        case SchemeKind::ws_hier:
            return std::make_unique<HierScheme>(topo, std::move(initialZones), true, cfg,
                                                activation);
    }
    throw std::invalid_argument("unknown scheme kind");
}

}  // namespace locsim
