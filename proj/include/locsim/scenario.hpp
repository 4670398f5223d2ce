#pragma once

// Scenario files: line-oriented `key = value` under [topology] [mobility]
// [traffic] [scheme] [run] headers. Every run is fully described by one such
// file plus nothing else; in particular the seed must be spelled out.

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "locsim/mobility.hpp"
#include "locsim/schemes.hpp"
#include "locsim/topology.hpp"
#include "locsim/traffic.hpp"
#include "locsim/types.hpp"

namespace locsim {

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class MobilitySource { model, matrix_walk, mobility_trace, zone_trace };
enum class TrafficSource { poisson, call_trace };

struct Scenario {
    std::string topology_source = "canonical";  // `canonical` or a topology file
    double cell_size = 100.0;

    MobilitySource mobility = MobilitySource::matrix_walk;
    MobilityModel model = MobilityModel::RandomWaypoint;
    ModelParams params;        // area fields are always overwritten from the grid
    double move_rate = 1.0;    // matrix walk holding-time rate
    std::string mobility_trace;

    TrafficSource traffic = TrafficSource::poisson;
    CallParams calls;
    std::string call_trace;

    SchemeKind scheme = SchemeKind::hlr;
    WsConfig ws;

    std::uint64_t seed = 0;
    bool seed_set = false;
    int users = 0;  // 0 lets a trace define the population
    long horizon_events = 100000;
    Seconds horizon_seconds = 0.0;  // > 0 switches the horizon to simulated time
    std::string output;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

[[noreturn]] inline void scn_fail(int line, const std::string& what) {
    throw ScenarioError("scenario line " + std::to_string(line) + ": " + what);
}

inline double scn_number(std::string_view v, int line, std::string_view key) {
    try {
        std::size_t used = 0;
        const double x = std::stod(std::string(v), &used);
        if (used != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        scn_fail(line, "'" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
    }
}

inline long scn_integer(std::string_view v, int line, std::string_view key) {
    const double x = scn_number(v, line, key);
    const long n = static_cast<long>(x);
    if (static_cast<double>(n) != x)
        scn_fail(line, "'" + std::string(key) + "' expects an integer, got '" + std::string(v) + "'");
    return n;
}

inline bool scn_bool(std::string_view v, int line, std::string_view key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    scn_fail(line, "'" + std::string(key) + "' expects true or false, got '" + std::string(v) + "'");
}

}  // namespace detail

inline Scenario parse_scenario(std::istream& in) {
    using detail::scn_bool;
    using detail::scn_fail;
    using detail::scn_integer;
    using detail::scn_number;

    Scenario sc;
    bool horizon_events_set = false, horizon_seconds_set = false;
    std::string section, raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string_view s = detail::trim(raw);
        if (s.empty() || s.front() == '#') continue;
        if (s.front() == '[') {
            if (s.back() != ']') scn_fail(line, "unterminated section header");
            section = std::string(s.substr(1, s.size() - 2));
            if (section != "topology" && section != "mobility" && section != "traffic" &&
                section != "scheme" && section != "run")
                scn_fail(line, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string_view::npos) scn_fail(line, "expected 'key = value'");
        const std::string key(detail::trim(s.substr(0, eq)));
        const std::string_view value = detail::trim(s.substr(eq + 1));
        if (key.empty() || value.empty()) scn_fail(line, "expected 'key = value'");
        if (section.empty()) scn_fail(line, "'" + key + "' appears before any [section]");

        if (section == "topology") {
            if (key == "source") sc.topology_source = std::string(value);
            else if (key == "cell_size") sc.cell_size = scn_number(value, line, key);
            else scn_fail(line, "unknown topology key '" + key + "'");
        } else if (section == "mobility") {
            ModelParams& p = sc.params;
            if (key == "source") {
                if (value == "model") sc.mobility = MobilitySource::model;
                else if (value == "matrix-walk") sc.mobility = MobilitySource::matrix_walk;
                else if (value == "mobility-trace") sc.mobility = MobilitySource::mobility_trace;
                else if (value == "zone-trace") sc.mobility = MobilitySource::zone_trace;
                else scn_fail(line, "unknown mobility source '" + std::string(value) + "'");
            } else if (key == "model") {
                const auto m = parse_mobility_model(value);
                if (!m) scn_fail(line, "unknown mobility model '" + std::string(value) + "'");
                sc.model = *m;
            } else if (key == "trace") sc.mobility_trace = std::string(value);
            else if (key == "move_rate") sc.move_rate = scn_number(value, line, key);
            else if (key == "area_width" || key == "area_height")
                scn_fail(line, "'" + key + "' is derived from the topology grid");
            else if (key == "step_time") p.step_time = scn_number(value, line, key);
            else if (key == "min_speed") p.min_speed = scn_number(value, line, key);
            else if (key == "max_speed") p.max_speed = scn_number(value, line, key);
            else if (key == "pause_time") p.pause_time = scn_number(value, line, key);
            else if (key == "walk_leg_time") p.walk_leg_time = scn_number(value, line, key);
            else if (key == "walk_leg_distance") p.walk_leg_distance = scn_number(value, line, key);
            else if (key == "max_accel") p.max_accel = scn_number(value, line, key);
            else if (key == "max_angular_change")
                p.max_angular_change = scn_number(value, line, key);
            else if (key == "gm_alpha") p.gm_alpha = scn_number(value, line, key);
            else if (key == "gm_mean_speed") p.gm_mean_speed = scn_number(value, line, key);
            else if (key == "gm_speed_std") p.gm_speed_std = scn_number(value, line, key);
            else if (key == "gm_dir_std") p.gm_dir_std = scn_number(value, line, key);
            else if (key == "gm_mean_dir") p.gm_mean_dir = scn_number(value, line, key);
            else if (key == "gm_edge_margin") p.gm_edge_margin = scn_number(value, line, key);
            else if (key == "prob_walk_step") p.prob_walk_step = scn_number(value, line, key);
            else if (key == "street_spacing") p.street_spacing = scn_number(value, line, key);
            else if (key == "city_speed_limit") p.city_speed_limit = scn_number(value, line, key);
            else if (key == "group_count")
                p.group_count = static_cast<int>(scn_integer(value, line, key));
            else if (key == "group_radius") p.group_radius = scn_number(value, line, key);
            else if (key == "ecr_tau") p.ecr_tau = scn_number(value, line, key);
            else if (key == "ecr_sigma") p.ecr_sigma = scn_number(value, line, key);
            else if (key == "column_advance_x") p.column_advance.x = scn_number(value, line, key);
            else if (key == "column_advance_y") p.column_advance.y = scn_number(value, line, key);
            else if (key == "pursuit_gain") p.pursuit_gain = scn_number(value, line, key);
            else if (key == "pursue_noise") p.pursue_noise = scn_number(value, line, key);
            else if (key == "rpgm_deviation_max")
                p.rpgm_deviation_max = scn_number(value, line, key);
            else scn_fail(line, "unknown mobility key '" + key + "'");
        } else if (section == "traffic") {
            if (key == "source") {
                if (value == "poisson") sc.traffic = TrafficSource::poisson;
                else if (value == "call-trace") sc.traffic = TrafficSource::call_trace;
                else scn_fail(line, "unknown traffic source '" + std::string(value) + "'");
            } else if (key == "cmr") sc.calls.cmr = scn_number(value, line, key);
            else if (key == "call_rate") sc.calls.call_rate = scn_number(value, line, key);
            else if (key == "preferred_set_size")
                sc.calls.preferred_set_size = static_cast<int>(scn_integer(value, line, key));
            else if (key == "preferred_prob") sc.calls.preferred_prob = scn_number(value, line, key);
            else if (key == "trace") sc.call_trace = std::string(value);
            else scn_fail(line, "unknown traffic key '" + key + "'");
        } else if (section == "scheme") {
            if (key == "scheme") {
                const auto k = parse_scheme(value);
                if (!k) scn_fail(line, "unknown scheme '" + std::string(value) + "'");
                sc.scheme = *k;
            } else if (key == "ws.ewma_alpha") sc.ws.ewma_alpha = scn_number(value, line, key);
            else if (key == "ws.u_cost_mode") {
                const auto m = parse_u_cost_mode(value);
                if (!m) scn_fail(line, "unknown ws.u_cost_mode '" + std::string(value) + "'");
                sc.ws.u_cost_mode = *m;
            } else if (key == "ws.strict_boundary")
                sc.ws.strict_boundary = scn_bool(value, line, key);
            else scn_fail(line, "unknown scheme key '" + key + "'");
        } else {  // run
            if (key == "seed") {
                const long v = scn_integer(value, line, key);
                if (v < 0) scn_fail(line, "'seed' must be non-negative");
                sc.seed = static_cast<std::uint64_t>(v);
                sc.seed_set = true;
            } else if (key == "users") sc.users = static_cast<int>(scn_integer(value, line, key));
            else if (key == "horizon_events") {
                sc.horizon_events = scn_integer(value, line, key);
                horizon_events_set = true;
            } else if (key == "horizon_seconds") {
                sc.horizon_seconds = scn_number(value, line, key);
                horizon_seconds_set = true;
            } else if (key == "output") sc.output = std::string(value);
            else scn_fail(line, "unknown run key '" + key + "'");
        }
    }
    if (horizon_events_set && horizon_seconds_set)
        throw ScenarioError("scenario: set horizon_events or horizon_seconds, not both");
    return sc;
}

inline Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario '" + path + "'");
    return parse_scenario(in);
}

// Semantic checks that do not need the topology on hand.
inline void validate_scenario(const Scenario& sc) {
    if (!sc.seed_set) throw ScenarioError("scenario: 'seed' is required, none given");
    if (sc.cell_size <= 0.0) throw ScenarioError("scenario: cell_size must be positive");
    const bool trace_mobility = sc.mobility == MobilitySource::mobility_trace ||
                                sc.mobility == MobilitySource::zone_trace;
    if (trace_mobility) {
        if (sc.mobility_trace.empty())
            throw ScenarioError("scenario: trace-driven mobility needs a 'trace' path");
    } else if (sc.users <= 0) {
        throw ScenarioError("scenario: 'users' must be positive");
    }
    if (sc.mobility == MobilitySource::matrix_walk && sc.move_rate <= 0.0)
        throw ScenarioError("scenario: matrix walk needs a positive move_rate");
    if (sc.traffic == TrafficSource::poisson) {
        if (sc.users == 1) throw ScenarioError("scenario: calls need at least two users");
        validate_call_params(sc.calls);
    } else if (sc.call_trace.empty()) {
        throw ScenarioError("scenario: trace-driven traffic needs a 'trace' path");
    }
    if (sc.ws.ewma_alpha < 0.0) throw ScenarioError("scenario: ws.ewma_alpha must be >= 0");
    if (sc.horizon_events < 0 || sc.horizon_seconds < 0.0)
        throw ScenarioError("scenario: the horizon cannot be negative");
}

inline Topology load_scenario_topology(const Scenario& sc) {
    if (sc.topology_source == "canonical") return build_canonical_fixture();
    std::ifstream in(sc.topology_source);
    if (!in) throw ScenarioError("cannot open topology '" + sc.topology_source + "'");
    return load_topology(in, sc.cell_size);
}

}  // namespace locsim
