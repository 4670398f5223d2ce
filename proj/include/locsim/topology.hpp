#pragma once

// Location-register hierarchy: per-root trees whose roots sit on a linear
// bus, plus the rectangular-cell grid that maps positions to leaf zones.
// The combined routing graph is a tree, so every pair of nodes has exactly
// one simple path; lca/path/cost all lean on that invariant.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "locsim/types.hpp"

namespace locsim {

class HierarchyTree {
public:
    NodeId add_root(std::string name) {
        const NodeId id = add_node_(std::move(name));
        m_parent.back() = kNoNode;
        m_bus_index[id] = static_cast<int>(m_roots.size());
        m_roots.push_back(id);
        if (m_roots.size() > 1) m_bus_costs.push_back(1.0);
        return id;
    }

    NodeId add_child(NodeId parent, std::string name, Cost link_cost = 1.0) {
        if (!valid_(parent)) throw std::runtime_error("add_child: unknown parent");
        if (link_cost <= 0.0) throw std::runtime_error("add_child: link cost must be positive");
        const NodeId id = add_node_(std::move(name));
        m_parent[id.v] = parent;
        m_link_cost[id.v] = link_cost;
        m_depth[id.v] = m_depth[parent.v] + 1;
        m_children[parent.v].push_back(id);
        return id;
    }

    void set_bus_edge_cost(int i, Cost c) {
        if (i < 0 || i >= static_cast<int>(m_bus_costs.size()))
            throw std::runtime_error("set_bus_edge_cost: no such bus edge");
        if (c <= 0.0) throw std::runtime_error("set_bus_edge_cost: cost must be positive");
        m_bus_costs[i] = c;
    }

    std::int32_t node_count() const { return static_cast<std::int32_t>(m_names.size()); }
    bool is_root(NodeId n) const { return !m_parent[check_(n).v].valid(); }
    bool is_leaf(NodeId n) const { return m_children[check_(n).v].empty(); }
    NodeId parent(NodeId n) const { return m_parent[check_(n).v]; }
    const std::vector<NodeId>& children(NodeId n) const { return m_children[check_(n).v]; }
    int depth(NodeId n) const { return m_depth[check_(n).v]; }
    const std::string& name(NodeId n) const { return m_names[check_(n).v]; }
    const std::vector<NodeId>& roots() const { return m_roots; }
    Cost link_cost_to_parent(NodeId n) const {
        if (is_root(n)) throw std::runtime_error("link_cost_to_parent: node is a root");
        return m_link_cost[n.v];
    }
    Cost bus_edge_cost(int i) const {
        if (i < 0 || i >= static_cast<int>(m_bus_costs.size()))
            throw std::runtime_error("bus_edge_cost: no such bus edge");
        return m_bus_costs[i];
    }

    NodeId root_of(NodeId n) const {
        while (!is_root(n)) n = m_parent[n.v];
        return n;
    }

    int bus_index(NodeId root) const {
        const auto it = m_bus_index.find(root);
        if (it == m_bus_index.end()) throw std::runtime_error("bus_index: not a root");
        return it->second;
    }

    std::optional<NodeId> find(std::string_view name) const {
        const auto it = m_by_name.find(std::string(name));
        if (it == m_by_name.end()) return std::nullopt;
        return it->second;
    }

    std::vector<NodeId> leaves() const {
        std::vector<NodeId> out;
        for (std::int32_t i = 0; i < node_count(); ++i)
            if (m_children[i].empty()) out.push_back(NodeId{i});
        return out;
    }

    // Deepest common ancestor; absent when a and b hang under different roots.
    std::optional<NodeId> lca(NodeId a, NodeId b) const {
        check_(a);
        check_(b);
        while (m_depth[a.v] > m_depth[b.v]) a = m_parent[a.v];
        while (m_depth[b.v] > m_depth[a.v]) b = m_parent[b.v];
        while (a != b) {
            if (is_root(a) || is_root(b)) return std::nullopt;
            a = m_parent[a.v];
            b = m_parent[b.v];
        }
        return a;
    }

    // The unique simple path a -> b over tree links and the bus, inclusive.
    std::vector<NodeId> path(NodeId a, NodeId b) const {
        std::vector<NodeId> out;
        const auto l = lca(a, b);
        if (l) {
            for (NodeId n = a; n != *l; n = m_parent[n.v]) out.push_back(n);
            out.push_back(*l);
            const std::size_t down_at = out.size();
            for (NodeId n = b; n != *l; n = m_parent[n.v]) out.push_back(n);
            std::reverse(out.begin() + down_at, out.end());
            return out;
        }
        const NodeId ra = root_of(a), rb = root_of(b);
        for (NodeId n = a; n != ra; n = m_parent[n.v]) out.push_back(n);
        const int ia = bus_index(ra), ib = bus_index(rb);
        const int step = ia < ib ? 1 : -1;
        for (int i = ia; i != ib; i += step) out.push_back(m_roots[i]);
        out.push_back(rb);
        const std::size_t down_at = out.size();
        for (NodeId n = b; n != rb; n = m_parent[n.v]) out.push_back(n);
        std::reverse(out.begin() + down_at, out.end());
        return out;
    }

    // Sum of link costs along path(a, b); allocation-free.
    Cost cost(NodeId a, NodeId b) const {
        check_(a);
        check_(b);
        Cost total = 0;
        NodeId x = a, y = b;
        while (m_depth[x.v] > m_depth[y.v]) {
            total += m_link_cost[x.v];
            x = m_parent[x.v];
        }
        while (m_depth[y.v] > m_depth[x.v]) {
            total += m_link_cost[y.v];
            y = m_parent[y.v];
        }
        while (x != y && !is_root(x) && !is_root(y)) {
            total += m_link_cost[x.v] + m_link_cost[y.v];
            x = m_parent[x.v];
            y = m_parent[y.v];
        }
        if (x == y) return total;
        // Different roots: finish both ascents, then cross the bus.
        while (!is_root(x)) {
            total += m_link_cost[x.v];
            x = m_parent[x.v];
        }
        while (!is_root(y)) {
            total += m_link_cost[y.v];
            y = m_parent[y.v];
        }
        int ia = bus_index(x), ib = bus_index(y);
        if (ia > ib) std::swap(ia, ib);
        for (int i = ia; i < ib; ++i) total += m_bus_costs[i];
        return total;
    }

    // Structural invariants; throws on the first violation.
    void validate() const {
        if (m_roots.empty()) throw std::runtime_error("hierarchy has no roots");
        for (std::int32_t i = 0; i < node_count(); ++i) {
            if (m_children[i].size() == 1)
                throw std::runtime_error("internal node '" + m_names[i] +
                                         "' has fewer than two children");
        }
    }

private:
    NodeId add_node_(std::string name) {
        if (name.empty()) throw std::runtime_error("node name must not be empty");
        if (m_by_name.count(name)) throw std::runtime_error("duplicate node name '" + name + "'");
        const NodeId id{node_count()};
        m_by_name[name] = id;
        m_names.push_back(std::move(name));
        m_parent.push_back(kNoNode);
        m_children.emplace_back();
        m_link_cost.push_back(0.0);
        m_depth.push_back(0);
        return id;
    }

    NodeId check_(NodeId n) const {
        if (!valid_(n)) throw std::runtime_error("invalid node id");
        return n;
    }
    bool valid_(NodeId n) const { return n.v >= 0 && n.v < node_count(); }

    std::vector<std::string> m_names;
    std::vector<NodeId> m_parent;
    std::vector<std::vector<NodeId>> m_children;
    std::vector<Cost> m_link_cost;  // to parent; unused for roots
    std::vector<int> m_depth;
    std::vector<NodeId> m_roots;  // bus order
    std::vector<Cost> m_bus_costs;
    std::unordered_map<NodeId, int> m_bus_index;
    std::unordered_map<std::string, NodeId> m_by_name;
};

// Inclusive cell rectangle owned by one leaf zone.
struct ZoneRect {
    int row0 = 0, col0 = 0, row1 = 0, col1 = 0;
};

struct ZoneGrid {
    double cell_size = 100.0;
    int rows = 0, cols = 0;
    std::vector<NodeId> zone_of_cell;  // row-major, rows*cols entries
    std::unordered_map<NodeId, ZoneRect> rects;
    std::unordered_map<NodeId, std::vector<std::pair<NodeId, double>>> move_matrix;

    double width() const { return cols * cell_size; }
    double height() const { return rows * cell_size; }
};

inline NodeId zone_of(const ZoneGrid& g, double x, double y) {
    if (!(x >= 0.0) || !(y >= 0.0) || !(x < g.width()) || !(y < g.height()))
        throw std::out_of_range("zone_of: position outside the simulated area");
    const int col = static_cast<int>(x / g.cell_size);
    const int row = static_cast<int>(y / g.cell_size);
    const NodeId z = g.zone_of_cell[row * g.cols + col];
    if (!z.valid()) throw std::out_of_range("zone_of: cell has no zone");
    return z;
}

struct Topology {
    HierarchyTree tree;
    ZoneGrid grid;
};

namespace detail {

inline void finish_grid_(Topology& topo) {
    ZoneGrid& g = topo.grid;
    if (g.rects.empty()) return;
    int rows = 0, cols = 0;
    for (const auto& [z, r] : g.rects) {
        rows = std::max(rows, r.row1 + 1);
        cols = std::max(cols, r.col1 + 1);
    }
    g.rows = rows;
    g.cols = cols;
    g.zone_of_cell.assign(static_cast<std::size_t>(rows) * cols, kNoNode);
    for (const auto& [z, r] : g.rects) {
        if (r.row0 < 0 || r.col0 < 0 || r.row0 > r.row1 || r.col0 > r.col1)
            throw std::runtime_error("zone rect for '" + topo.tree.name(z) + "' is malformed");
        for (int row = r.row0; row <= r.row1; ++row) {
            for (int col = r.col0; col <= r.col1; ++col) {
                NodeId& cell = g.zone_of_cell[row * cols + col];
                if (cell.valid())
                    throw std::runtime_error("overlapping zone rects at cell " +
                                             std::to_string(row) + "," + std::to_string(col));
                cell = z;
            }
        }
    }
}

// Uniform crossing probabilities to the zones sharing a cell edge.
inline void derive_move_matrix_(Topology& topo) {
    ZoneGrid& g = topo.grid;
    g.move_matrix.clear();
    for (int row = 0; row < g.rows; ++row) {
        for (int col = 0; col < g.cols; ++col) {
            const NodeId z = g.zone_of_cell[row * g.cols + col];
            auto touch = [&](int r2, int c2) {
                if (r2 < 0 || c2 < 0 || r2 >= g.rows || c2 >= g.cols) return;
                const NodeId n = g.zone_of_cell[r2 * g.cols + c2];
                if (n == z) return;
                auto& row_out = g.move_matrix[z];
                for (auto& [m, p] : row_out)
                    if (m == n) return;
                row_out.push_back({n, 0.0});
            };
            touch(row - 1, col);
            touch(row + 1, col);
            touch(row, col - 1);
            touch(row, col + 1);
        }
    }
    for (auto& [z, row_out] : g.move_matrix) {
        std::sort(row_out.begin(), row_out.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (auto& [n, p] : row_out) p = 1.0 / static_cast<double>(row_out.size());
    }
}

}  // namespace detail

// The worked reference topology: four roots on the bus, the named subtrees
// under R1 and R4, two-level filler subtrees under R2 and R3, unit link
// costs, and the nineteen leaf zones tiled row-major over a 4x5 cell grid
// (the last zone absorbs the spare cell).
inline Topology build_canonical_fixture() {
    Topology topo;
    HierarchyTree& t = topo.tree;
    const NodeId r1 = t.add_root("R1");
    const NodeId r2 = t.add_root("R2");
    const NodeId r3 = t.add_root("R3");
    const NodeId r4 = t.add_root("R4");

    const NodeId i = t.add_child(r1, "i");
    const NodeId j = t.add_child(r1, "j");
    const NodeId f = t.add_child(i, "f");
    const NodeId g = t.add_child(i, "g");
    t.add_child(f, "a");
    t.add_child(f, "b");
    t.add_child(g, "c");
    t.add_child(g, "c2");
    const NodeId h = t.add_child(j, "h");
    t.add_child(j, "h2");
    t.add_child(h, "d");
    t.add_child(h, "d2");

    for (const auto& [root, tag] : {std::pair{r2, "r2"}, std::pair{r3, "r3"}}) {
        const NodeId left = t.add_child(root, std::string(tag) + "a");
        const NodeId right = t.add_child(root, std::string(tag) + "b");
        t.add_child(left, std::string(tag) + "a1");
        t.add_child(left, std::string(tag) + "a2");
        t.add_child(right, std::string(tag) + "b1");
        t.add_child(right, std::string(tag) + "b2");
    }

    const NodeId k = t.add_child(r4, "k");
    t.add_child(r4, "k2");
    const NodeId l = t.add_child(k, "l");
    t.add_child(k, "l2");
    t.add_child(l, "e");
    t.add_child(l, "e2");
    t.validate();

    const std::vector<std::string> tiling = {"a",    "b",    "c",    "c2",   "d",    "d2", "h2",
                                             "r2a1", "r2a2", "r2b1", "r2b2", "r3a1", "r3a2",
                                             "r3b1", "r3b2", "e",    "e2",   "l2",   "k2"};
    ZoneGrid& grid = topo.grid;
    grid.cell_size = 100.0;
    const int cols = 5;
    for (std::size_t idx = 0; idx < tiling.size(); ++idx) {
        const NodeId z = t.find(tiling[idx]).value();
        const int row = static_cast<int>(idx) / cols, col = static_cast<int>(idx) % cols;
        grid.rects[z] = ZoneRect{row, col, row, col};
    }
    grid.rects[t.find("k2").value()].col1 = 4;  // spare cell (3,4) joins k2
    detail::finish_grid_(topo);
    detail::derive_move_matrix_(topo);
    return topo;
}

// ---------------------------------------------------------------------------
// Text format. Line types: `root <id>...`, `edge <parent> <child> [cost]`
// (an edge between two adjacent roots overrides that bus segment's cost),
// `zone <id> <row0> <col0> <row1> <col1>`, `move <zone> <nbr>:<prob>...`,
// `#` comments and blank lines.

inline Topology load_topology(std::istream& in, double cell_size = 100.0) {
    Topology topo;
    HierarchyTree& t = topo.tree;
    topo.grid.cell_size = cell_size;
    std::vector<std::tuple<NodeId, NodeId, double>> move_rows;  // zone, nbr, prob
    std::string line;
    int line_no = 0;
    bool saw_roots = false;
    auto fail = [&line_no](const std::string& what) {
        throw std::runtime_error("topology line " + std::to_string(line_no) + ": " + what);
    };
    auto lookup = [&t, &fail](const std::string& name) {
        const auto id = t.find(name);
        if (!id) fail("unknown node '" + name + "'");
        return *id;
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string kind;
        if (!(ls >> kind)) continue;
        if (kind == "root") {
            std::string name;
            while (ls >> name) t.add_root(name);
            saw_roots = true;
        } else if (kind == "edge") {
            if (!saw_roots) fail("edge before any root line");
            std::string a, b;
            if (!(ls >> a >> b)) fail("edge needs parent and child");
            double cost = 1.0;
            const bool has_cost = static_cast<bool>(ls >> cost);
            const auto ida = t.find(a);
            const auto idb = t.find(b);
            if (ida && idb && t.is_root(*ida) && t.is_root(*idb)) {
                const int lo = std::min(t.bus_index(*ida), t.bus_index(*idb));
                const int hi = std::max(t.bus_index(*ida), t.bus_index(*idb));
                if (hi - lo != 1) fail("bus edge must join adjacent roots");
                if (has_cost) t.set_bus_edge_cost(lo, cost);
            } else {
                if (!ida) fail("unknown node '" + a + "'");
                if (idb) fail("node '" + b + "' already defined");
                t.add_child(*ida, b, cost);
            }
        } else if (kind == "zone") {
            std::string name;
            ZoneRect r;
            if (!(ls >> name >> r.row0 >> r.col0 >> r.row1 >> r.col1))
                fail("zone needs <id> <row0> <col0> <row1> <col1>");
            const NodeId z = lookup(name);
            if (topo.grid.rects.count(z)) fail("duplicate zone rect for '" + name + "'");
            topo.grid.rects[z] = r;
        } else if (kind == "move") {
            std::string name;
            if (!(ls >> name)) fail("move needs a zone");
            const NodeId z = lookup(name);
            std::string pair;
            while (ls >> pair) {
                const auto colon = pair.find(':');
                if (colon == std::string::npos) fail("move entry '" + pair + "' lacks ':'");
                const NodeId nbr = lookup(pair.substr(0, colon));
                double prob = 0.0;
                try {
                    prob = std::stod(pair.substr(colon + 1));
                } catch (const std::exception&) {
                    fail("bad probability in '" + pair + "'");
                }
                move_rows.emplace_back(z, nbr, prob);
            }
        } else {
            fail("unknown directive '" + kind + "'");
        }
    }
    if (t.node_count() == 0 || t.roots().empty())
        throw std::runtime_error("topology defines no roots");
    detail::finish_grid_(topo);
    for (auto& [z, nbr, prob] : move_rows) topo.grid.move_matrix[z].push_back({nbr, prob});
    return topo;
}

inline Topology load_topology_file(const std::string& path, double cell_size = 100.0) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open topology file '" + path + "'");
    return load_topology(in, cell_size);
}

inline void save_topology(const Topology& topo, std::ostream& out) {
    const HierarchyTree& t = topo.tree;
    out.precision(17);  // probabilities and costs must survive the round trip
    out << "root";
    for (NodeId r : t.roots()) out << ' ' << t.name(r);
    out << '\n';
    // Parents precede children: emit each root's subtree depth-first.
    for (NodeId r : t.roots()) {
        std::vector<NodeId> stack{r};
        while (!stack.empty()) {
            const NodeId n = stack.back();
            stack.pop_back();
            for (auto it = t.children(n).rbegin(); it != t.children(n).rend(); ++it)
                stack.push_back(*it);
            if (!t.is_root(n)) {
                out << "edge " << t.name(t.parent(n)) << ' ' << t.name(n);
                if (t.link_cost_to_parent(n) != 1.0) out << ' ' << t.link_cost_to_parent(n);
                out << '\n';
            }
        }
    }
    for (std::size_t i = 0; i + 1 < t.roots().size(); ++i) {
        if (t.bus_edge_cost(static_cast<int>(i)) != 1.0)
            out << "edge " << t.name(t.roots()[i]) << ' ' << t.name(t.roots()[i + 1]) << ' '
                << t.bus_edge_cost(static_cast<int>(i)) << '\n';
    }
    std::vector<NodeId> zones;
    for (const auto& [z, r] : topo.grid.rects) zones.push_back(z);
    std::sort(zones.begin(), zones.end());
    for (NodeId z : zones) {
        const ZoneRect& r = topo.grid.rects.at(z);
        out << "zone " << t.name(z) << ' ' << r.row0 << ' ' << r.col0 << ' ' << r.row1 << ' '
            << r.col1 << '\n';
    }
    std::vector<NodeId> rows;
    for (const auto& [z, row] : topo.grid.move_matrix) rows.push_back(z);
    std::sort(rows.begin(), rows.end());
    for (NodeId z : rows) {
        out << "move " << t.name(z);
        for (const auto& [nbr, p] : topo.grid.move_matrix.at(z)) out << ' ' << t.name(nbr) << ':' << p;
        out << '\n';
    }
}

inline void save_topology_file(const Topology& topo, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write topology file '" + path + "'");
    save_topology(topo, out);
}

// Collected structural problems; empty means the topology is usable for
// simulation. Parse-level errors throw in load_topology instead.
inline std::vector<std::string> topology_problems(const Topology& topo) {
    std::vector<std::string> out;
    const HierarchyTree& t = topo.tree;
    if (t.roots().empty()) out.push_back("no roots defined");
    for (std::int32_t i = 0; i < t.node_count(); ++i) {
        const NodeId n{i};
        if (t.children(n).size() == 1)
            out.push_back("internal node '" + t.name(n) + "' has fewer than two children");
    }
    const ZoneGrid& g = topo.grid;
    if (g.rows > 0) {
        for (int cell = 0; cell < g.rows * g.cols; ++cell) {
            if (!g.zone_of_cell[cell].valid())
                out.push_back("grid cell " + std::to_string(cell / g.cols) + "," +
                              std::to_string(cell % g.cols) + " is not covered by any zone");
        }
        for (const auto& [z, r] : g.rects) {
            if (!t.is_leaf(z)) out.push_back("zone '" + t.name(z) + "' is not a leaf");
        }
        for (NodeId leaf : t.leaves()) {
            if (!g.rects.count(leaf))
                out.push_back("leaf '" + t.name(leaf) + "' owns no grid cells");
        }
    }
    for (const auto& [z, row] : g.move_matrix) {
        double sum = 0.0;
        for (const auto& [nbr, p] : row) {
            if (!t.is_leaf(nbr))
                out.push_back("move row for '" + t.name(z) + "' references non-leaf '" +
                              t.name(nbr) + "'");
            if (p <= 0.0 || p > 1.0)
                out.push_back("move probability " + std::to_string(p) + " for '" + t.name(z) +
                              "' out of range");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            out.push_back("move probabilities for '" + t.name(z) + "' sum to " +
                          std::to_string(sum));
    }
    return out;
}

}  // namespace locsim
