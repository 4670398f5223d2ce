#pragma once

// Synthetic mobility. Entity models drive one node each; group models drive
// a reference point plus member offsets. All models emit positions inside
// [0, width) x [0, height) at every sample, and every draw comes from the
// stepper's own sub-stream so node trajectories never perturb each other.

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "locsim/rng.hpp"
#include "locsim/topology.hpp"
#include "locsim/types.hpp"

namespace locsim {

struct Vec2 {
    double x = 0.0, y = 0.0;
    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }
};

inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

enum class MobilityModel {
    RandomWalk,
    RandomWaypoint,
    RandomDirection,
    Boundless,
    GaussMarkov,
    ProbabilisticWalk,
    CitySection,
    Ecr,
    Column,
    Nomadic,
    Pursue,
    Rpgm,
};

inline bool is_group_model(MobilityModel m) {
    switch (m) {
        case MobilityModel::Ecr:
        case MobilityModel::Column:
        case MobilityModel::Nomadic:
        case MobilityModel::Pursue:
        case MobilityModel::Rpgm:
            return true;
        default:
            return false;
    }
}

inline std::optional<MobilityModel> parse_mobility_model(std::string_view s) {
    if (s == "random-walk") return MobilityModel::RandomWalk;
    if (s == "random-waypoint") return MobilityModel::RandomWaypoint;
    if (s == "random-direction") return MobilityModel::RandomDirection;
    if (s == "boundless") return MobilityModel::Boundless;
    if (s == "gauss-markov") return MobilityModel::GaussMarkov;
    if (s == "probabilistic-walk") return MobilityModel::ProbabilisticWalk;
    if (s == "city-section") return MobilityModel::CitySection;
    if (s == "ecr") return MobilityModel::Ecr;
    if (s == "column") return MobilityModel::Column;
    if (s == "nomadic") return MobilityModel::Nomadic;
    if (s == "pursue") return MobilityModel::Pursue;
    if (s == "rpgm") return MobilityModel::Rpgm;
    return std::nullopt;
}

inline std::string to_string(MobilityModel m) {
    switch (m) {
        case MobilityModel::RandomWalk: return "random-walk";
        case MobilityModel::RandomWaypoint: return "random-waypoint";
        case MobilityModel::RandomDirection: return "random-direction";
        case MobilityModel::Boundless: return "boundless";
        case MobilityModel::GaussMarkov: return "gauss-markov";
        case MobilityModel::ProbabilisticWalk: return "probabilistic-walk";
        case MobilityModel::CitySection: return "city-section";
        case MobilityModel::Ecr: return "ecr";
        case MobilityModel::Column: return "column";
        case MobilityModel::Nomadic: return "nomadic";
        case MobilityModel::Pursue: return "pursue";
        case MobilityModel::Rpgm: return "rpgm";
    }
    return "?";
}

struct ModelParams {
    double area_width = 500.0;
    double area_height = 400.0;
    double step_time = 1.0;  // sampling interval, seconds
    double min_speed = 1.0;
    double max_speed = 10.0;
    double pause_time = 0.0;

    // random walk: leg length is time-based by default; a positive distance
    // switches to distance-based legs. Zero time means one leg per sample.
    double walk_leg_time = 0.0;
    double walk_leg_distance = 0.0;

    // boundless simulation area (torus)
    double max_accel = 1.0;           // speed change per second
    double max_angular_change = 0.5;  // radians per second

    // gauss-markov
    double gm_alpha = 0.75;
    double gm_mean_speed = 5.0;
    double gm_speed_std = 1.0;
    double gm_dir_std = 0.3;
    double gm_mean_dir = -1.0;      // < 0: drawn uniform per node
    double gm_edge_margin = 100.0;  // one default grid cell

    // probabilistic walk: per-axis 3-state chain over {stay, back, forward}
    double prob_walk_step = 10.0;  // metres per sample
    std::array<std::array<double, 3>, 3> prob_walk_matrix = {
        std::array<double, 3>{0.0, 0.5, 0.5},
        std::array<double, 3>{0.3, 0.7, 0.0},
        std::array<double, 3>{0.3, 0.0, 0.7},
    };

    // city section
    double street_spacing = 100.0;
    double city_speed_limit = 15.0;

    // group models
    int group_count = 1;
    double group_radius = 50.0;
    double ecr_tau = 10.0;
    double ecr_sigma = 20.0;
    Vec2 column_advance{10.0, 0.0};
    double pursuit_gain = 0.2;
    double pursue_noise = 1.0;
    double rpgm_deviation_max = 30.0;
};

// Hard errors throw; soft pathologies come back as warnings.
inline std::vector<std::string> validate_params(const ModelParams& p, MobilityModel m) {
    if (p.area_width <= 0.0 || p.area_height <= 0.0)
        throw std::invalid_argument("area dimensions must be positive");
    if (p.step_time <= 0.0) throw std::invalid_argument("step_time must be positive");
    if (p.min_speed < 0.0 || p.max_speed < p.min_speed)
        throw std::invalid_argument("need 0 <= min_speed <= max_speed");
    if (p.pause_time < 0.0) throw std::invalid_argument("pause_time must be >= 0");
    if (m == MobilityModel::GaussMarkov && (p.gm_alpha < 0.0 || p.gm_alpha > 1.0))
        throw std::invalid_argument("gm_alpha must lie in [0, 1]");
    if (m == MobilityModel::ProbabilisticWalk) {
        for (const auto& row : p.prob_walk_matrix) {
            double sum = 0.0;
            for (double q : row) {
                if (q < 0.0) throw std::invalid_argument("prob_walk_matrix entries must be >= 0");
                sum += q;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw std::invalid_argument("prob_walk_matrix rows must sum to 1");
        }
    }
    if (m == MobilityModel::CitySection && p.street_spacing <= 0.0)
        throw std::invalid_argument("street_spacing must be positive");
    if (is_group_model(m) && p.group_count < 1)
        throw std::invalid_argument("group_count must be >= 1");
    std::vector<std::string> warnings;
    if (p.min_speed == 0.0 &&
        (m == MobilityModel::RandomWaypoint || m == MobilityModel::RandomWalk ||
         m == MobilityModel::RandomDirection))
        warnings.push_back("min_speed = 0 lets node speeds decay toward standstill");
    return warnings;
}

namespace detail {

constexpr double kTwoPi = 2.0 * std::numbers::pi_v<double>;

inline double wrap_angle(double a) {
    a = std::fmod(a, kTwoPi);
    return a < 0.0 ? a + kTwoPi : a;
}

// Keeps positions strictly inside the half-open area.
inline double clamp_coord(double v, double extent) {
    const double hi = extent * (1.0 - 1e-12);
    return v < 0.0 ? 0.0 : (v > hi ? hi : v);
}

inline Vec2 clamp_into_area(Vec2 p, const ModelParams& mp) {
    return {clamp_coord(p.x, mp.area_width), clamp_coord(p.y, mp.area_height)};
}

// Mirror a raw position into the area, reflecting the heading off each wall
// crossed (incidence angle preserved).
inline void reflect(Vec2& pos, double& dir, double w, double h) {
    for (int guard = 0; guard < 64; ++guard) {
        if (pos.x < 0.0) {
            pos.x = -pos.x;
            dir = std::numbers::pi_v<double> - dir;
        } else if (pos.x > w) {
            pos.x = 2.0 * w - pos.x;
            dir = std::numbers::pi_v<double> - dir;
        } else if (pos.y < 0.0) {
            pos.y = -pos.y;
            dir = -dir;
        } else if (pos.y > h) {
            pos.y = 2.0 * h - pos.y;
            dir = -dir;
        } else {
            break;
        }
    }
    dir = wrap_angle(dir);
    pos.x = clamp_coord(pos.x, w);
    pos.y = clamp_coord(pos.y, h);
}

inline Vec2 random_point(const ModelParams& mp, Rng& rng) {
    return {rng.uniform(0.0, mp.area_width), rng.uniform(0.0, mp.area_height)};
}

// Uniform over the disc of radius r (inverse-cdf on the radius).
inline Vec2 random_in_disc(double r, Rng& rng) {
    const double rad = r * std::sqrt(rng.uniform());
    const double ang = rng.uniform(0.0, kTwoPi);
    return {rad * std::cos(ang), rad * std::sin(ang)};
}

}  // namespace detail

// --------------------------------------------------------------------------
// Entity models. Plain structs so tests can stage exact states.

struct RandomWalkState {
    Vec2 pos;
    double speed = 0.0, dir = 0.0;
    double leg_remaining = 0.0;  // seconds of the current leg

    void init(const ModelParams& mp, Rng& rng) { pos = detail::random_point(mp, rng); }

    void step(const ModelParams& mp, double dt, Rng& rng) {
        while (dt > 1e-12) {
            if (leg_remaining <= 1e-12) {
                speed = rng.uniform(mp.min_speed, mp.max_speed);
                dir = rng.uniform(0.0, detail::kTwoPi);
                if (mp.walk_leg_distance > 0.0 && speed > 0.0)
                    leg_remaining = mp.walk_leg_distance / speed;
                else
                    leg_remaining = mp.walk_leg_time > 0.0 ? mp.walk_leg_time : mp.step_time;
            }
            const double seg = std::min(dt, leg_remaining);
            pos.x += speed * std::cos(dir) * seg;
            pos.y += speed * std::sin(dir) * seg;
            detail::reflect(pos, dir, mp.area_width, mp.area_height);
            leg_remaining -= seg;
            dt -= seg;
        }
    }
};

struct RandomWaypointState {
    Vec2 pos, waypoint;
    double speed = 1.0;
    double pause_remaining = 0.0;

    void init(const ModelParams& mp, Rng& rng) {
        pos = detail::random_point(mp, rng);
        waypoint = detail::random_point(mp, rng);
        speed = rng.uniform(mp.min_speed, mp.max_speed);
    }

    void step(const ModelParams& mp, double dt, Rng& rng) {
        while (dt > 1e-12) {
            if (pause_remaining > 0.0) {
                const double wait = std::min(dt, pause_remaining);
                pause_remaining -= wait;
                dt -= wait;
                if (pause_remaining <= 0.0) {
                    waypoint = detail::random_point(mp, rng);
                    speed = rng.uniform(mp.min_speed, mp.max_speed);
                }
                continue;
            }
            const Vec2 delta = waypoint - pos;
            const double dist = norm(delta);
            if (dist < 1e-9 || speed <= 0.0) {
                // Degenerate leg: treat as arrival.
                pause_remaining = mp.pause_time;
                if (mp.pause_time == 0.0) {
                    waypoint = detail::random_point(mp, rng);
                    speed = rng.uniform(mp.min_speed, mp.max_speed);
                    if (speed <= 0.0) return;  // standstill pathology
                }
                continue;
            }
            const double t_arrive = dist / speed;
            if (t_arrive > dt) {
                pos = pos + (speed * dt / dist) * delta;
                dt = 0.0;
            } else {
                pos = waypoint;
                dt -= t_arrive;
                pause_remaining = mp.pause_time;
                if (mp.pause_time == 0.0) {
                    waypoint = detail::random_point(mp, rng);
                    speed = rng.uniform(mp.min_speed, mp.max_speed);
                }
            }
        }
        pos = detail::clamp_into_area(pos, mp);
    }
};

struct RandomDirectionState {
    Vec2 pos;
    double dir = 0.0, speed = 1.0;
    double pause_remaining = 0.0;
    bool at_boundary = false;

    void init(const ModelParams& mp, Rng& rng) {
        pos = detail::random_point(mp, rng);
        dir = rng.uniform(0.0, detail::kTwoPi);
        speed = rng.uniform(mp.min_speed, mp.max_speed);
    }

    void step(const ModelParams& mp, double dt, Rng& rng) {
        while (dt > 1e-12) {
            if (pause_remaining > 0.0) {
                const double wait = std::min(dt, pause_remaining);
                pause_remaining -= wait;
                dt -= wait;
                if (pause_remaining <= 0.0) redraw_inward_(mp, rng);
                continue;
            }
            if (speed <= 0.0) return;
            const double vx = speed * std::cos(dir), vy = speed * std::sin(dir);
            double t_hit = std::numeric_limits<double>::infinity();
            if (vx > 0.0) t_hit = std::min(t_hit, (mp.area_width - pos.x) / vx);
            if (vx < 0.0) t_hit = std::min(t_hit, -pos.x / vx);
            if (vy > 0.0) t_hit = std::min(t_hit, (mp.area_height - pos.y) / vy);
            if (vy < 0.0) t_hit = std::min(t_hit, -pos.y / vy);
            if (t_hit > dt) {
                pos.x += vx * dt;
                pos.y += vy * dt;
                dt = 0.0;
            } else {
                pos.x += vx * t_hit;
                pos.y += vy * t_hit;
                dt -= t_hit;
                at_boundary = true;
                pause_remaining = mp.pause_time;
                if (mp.pause_time == 0.0) redraw_inward_(mp, rng);
            }
            pos = detail::clamp_into_area(pos, mp);
        }
    }

private:
    // New heading pointing back into the interior; rejection keeps the draw
    // uniform over the admissible arc.
    void redraw_inward_(const ModelParams& mp, Rng& rng) {
        speed = rng.uniform(mp.min_speed, mp.max_speed);
        const double eps = 1e-9;
        for (int guard = 0; guard < 1024; ++guard) {
            const double cand = rng.uniform(0.0, detail::kTwoPi);
            const double vx = std::cos(cand), vy = std::sin(cand);
            if (pos.x <= eps && vx <= 0.0) continue;
            if (pos.x >= mp.area_width * (1.0 - 1e-12) - eps && vx >= 0.0) continue;
            if (pos.y <= eps && vy <= 0.0) continue;
            if (pos.y >= mp.area_height * (1.0 - 1e-12) - eps && vy >= 0.0) continue;
            dir = cand;
            at_boundary = false;
            return;
        }
        dir = detail::wrap_angle(dir + std::numbers::pi_v<double>);
    }
};

// Boundless simulation area: velocity evolves by bounded random increments,
// positions wrap on the torus.
struct BoundlessState {
    Vec2 pos;
    double speed = 0.0, dir = 0.0;

    void init(const ModelParams& mp, Rng& rng) {
        pos = detail::random_point(mp, rng);
        dir = rng.uniform(0.0, detail::kTwoPi);
        speed = rng.uniform(mp.min_speed, mp.max_speed);
    }

    void step(const ModelParams& mp, double dt, Rng& rng) {
        const double dv = rng.uniform(-mp.max_accel * dt, mp.max_accel * dt);
        speed = std::clamp(speed + dv, 0.0, mp.max_speed);
        dir = detail::wrap_angle(dir +
                                 rng.uniform(-mp.max_angular_change * dt, mp.max_angular_change * dt));
        pos.x += speed * std::cos(dir) * dt;
        pos.y += speed * std::sin(dir) * dt;
        pos.x = std::fmod(pos.x, mp.area_width);
        if (pos.x < 0.0) pos.x += mp.area_width;
        pos.y = std::fmod(pos.y, mp.area_height);
        if (pos.y < 0.0) pos.y += mp.area_height;
    }
};

struct GaussMarkovState {
    Vec2 pos;
    double speed = 0.0, dir = 0.0;
    double mean_dir = 0.0;

    void init(const ModelParams& mp, Rng& rng) {
        pos = detail::random_point(mp, rng);
        mean_dir = mp.gm_mean_dir >= 0.0 ? mp.gm_mean_dir : rng.uniform(0.0, detail::kTwoPi);
        dir = mean_dir;
        speed = mp.gm_mean_speed;
    }

    void step(const ModelParams& mp, double dt, Rng& rng) {
        const double a = mp.gm_alpha;
        const double noise = std::sqrt(1.0 - a * a);
        const double margin = std::min(mp.gm_edge_margin, 0.4 * std::min(mp.area_width, mp.area_height));
        double dbar = mean_dir;
        if (pos.x < margin || pos.x > mp.area_width - margin || pos.y < margin ||
            pos.y > mp.area_height - margin) {
            dbar = std::atan2(mp.area_height / 2.0 - pos.y, mp.area_width / 2.0 - pos.x);
            dbar = detail::wrap_angle(dbar);
        }
        const double gs = rng.gaussian();
        const double gd = rng.gaussian();
        speed = a * speed + (1.0 - a) * mp.gm_mean_speed + noise * mp.gm_speed_std * gs;
        speed = std::clamp(speed, 0.0, mp.max_speed);
        // Steer via the shortest angular difference so wrap-around never
        // spins the node.
        double diff = dbar - dir;
        diff = std::remainder(diff, detail::kTwoPi);
        dir = detail::wrap_angle(dir + (1.0 - a) * diff + noise * mp.gm_dir_std * gd);
        pos.x += speed * std::cos(dir) * dt;
        pos.y += speed * std::sin(dir) * dt;
        pos = detail::clamp_into_area(pos, mp);
    }
};

// Per-axis 3-state chain: 0 = stay, 1 = back, 2 = forward.
struct ProbabilisticWalkState {
    Vec2 pos;
    int state_x = 0, state_y = 0;

    void init(const ModelParams& mp, Rng& rng) { pos = detail::random_point(mp, rng); }

    static int transition(const std::array<std::array<double, 3>, 3>& m, int s, Rng& rng) {
        const double u = rng.uniform();
        double acc = 0.0;
        for (int next = 0; next < 3; ++next) {
            acc += m[s][next];
            if (u < acc) return next;
        }
        return 2;
    }

    void step(const ModelParams& mp, double /*dt*/, Rng& rng) {
        state_x = transition(mp.prob_walk_matrix, state_x, rng);
        state_y = transition(mp.prob_walk_matrix, state_y, rng);
        auto move_axis = [&](double& coord, int& state, double extent) {
            const double delta = state == 1 ? -mp.prob_walk_step : state == 2 ? mp.prob_walk_step : 0.0;
            double next = coord + delta;
            if (next < 0.0 || next >= extent) {
                state = state == 1 ? 2 : 1;  // bounce: reverse the axis direction
                next = coord - delta;
            }
            coord = detail::clamp_coord(next, extent);
        };
        move_axis(pos.x, state_x, mp.area_width);
        move_axis(pos.y, state_y, mp.area_height);
    }
};

// Streets on a regular grid; trips run along an L-shaped street route to a
// random intersection, capped by the street speed limit.
struct CitySectionState {
    Vec2 pos;
    std::vector<Vec2> route;  // remaining via points, front first
    double speed = 1.0;
    double pause_remaining = 0.0;

    static int intersections(double extent, double spacing) {
        return std::max(2, static_cast<int>(std::floor(extent / spacing)));
    }

    static Vec2 random_intersection(const ModelParams& mp, Rng& rng) {
        const int nx = intersections(mp.area_width, mp.street_spacing);
        const int ny = intersections(mp.area_height, mp.street_spacing);
        return {mp.street_spacing * double(rng.uniform_index(nx)),
                mp.street_spacing * double(rng.uniform_index(ny))};
    }

    void init(const ModelParams& mp, Rng& rng) {
        pos = random_intersection(mp, rng);
        plan_trip_(mp, rng);
    }

    void step(const ModelParams& mp, double dt, Rng& rng) {
        while (dt > 1e-12) {
            if (pause_remaining > 0.0) {
                const double wait = std::min(dt, pause_remaining);
                pause_remaining -= wait;
                dt -= wait;
                if (pause_remaining <= 0.0) plan_trip_(mp, rng);
                continue;
            }
            if (route.empty()) {
                plan_trip_(mp, rng);
                continue;
            }
            const Vec2 target = route.front();
            const Vec2 delta = target - pos;
            const double dist = norm(delta);
            if (dist < 1e-9) {
                route.erase(route.begin());
                if (route.empty()) pause_remaining = std::max(mp.pause_time, 1e-12);
                continue;
            }
            const double t_arrive = dist / speed;
            if (t_arrive > dt) {
                pos = pos + (speed * dt / dist) * delta;
                dt = 0.0;
            } else {
                pos = target;
                dt -= t_arrive;
                route.erase(route.begin());
                if (route.empty()) pause_remaining = std::max(mp.pause_time, 1e-12);
            }
        }
    }

private:
    void plan_trip_(const ModelParams& mp, Rng& rng) {
        Vec2 dest = random_intersection(mp, rng);
        for (int guard = 0; guard < 64 && dest == pos; ++guard)
            dest = random_intersection(mp, rng);
        route = city_route(pos, dest);
        speed = std::min(rng.uniform(mp.min_speed, mp.max_speed), mp.city_speed_limit);
        if (speed <= 0.0) speed = std::max(mp.city_speed_limit, 1e-6);
    }

public:
    // Shortest street route on a full grid: east-west first, then
    // north-south. Length equals the Manhattan distance.
    static std::vector<Vec2> city_route(Vec2 from, Vec2 to) {
        std::vector<Vec2> out;
        if (to.x != from.x) out.push_back({to.x, from.y});
        if (to.y != from.y || out.empty()) out.push_back(to);
        return out;
    }
};

// --------------------------------------------------------------------------

class EntityStepper {
public:
    EntityStepper(MobilityModel model, const ModelParams& mp, Rng rng)
        : m_model(model), m_params(mp), m_rng(std::move(rng)) {
        switch (model) {
            case MobilityModel::RandomWalk: m_state = RandomWalkState{}; break;
            case MobilityModel::RandomWaypoint: m_state = RandomWaypointState{}; break;
            case MobilityModel::RandomDirection: m_state = RandomDirectionState{}; break;
            case MobilityModel::Boundless: m_state = BoundlessState{}; break;
            case MobilityModel::GaussMarkov: m_state = GaussMarkovState{}; break;
            case MobilityModel::ProbabilisticWalk: m_state = ProbabilisticWalkState{}; break;
            case MobilityModel::CitySection: m_state = CitySectionState{}; break;
            default: throw std::invalid_argument("not an entity mobility model");
        }
        std::visit([&](auto& s) { s.init(m_params, m_rng); }, m_state);
    }

    void advance(double dt) {
        std::visit([&](auto& s) { s.step(m_params, dt, m_rng); }, m_state);
    }

    Vec2 position() const {
        return std::visit([](const auto& s) { return s.pos; }, m_state);
    }

private:
    MobilityModel m_model;
    ModelParams m_params;
    Rng m_rng;
    std::variant<RandomWalkState, RandomWaypointState, RandomDirectionState, BoundlessState,
                 GaussMarkovState, ProbabilisticWalkState, CitySectionState>
        m_state;
};

// One correlated group: a reference track plus per-member offsets.
class GroupStepper {
public:
    GroupStepper(MobilityModel model, const ModelParams& mp, int members, Rng rng)
        : m_model(model), m_params(mp), m_rng(std::move(rng)), m_members(members) {
        if (!is_group_model(model)) throw std::invalid_argument("not a group mobility model");
        if (members < 1) throw std::invalid_argument("group needs at least one member");
        m_ref_state.init(m_params, m_rng);
        m_reference = m_ref_state.pos;
        m_offsets.resize(members, Vec2{});
        m_positions.assign(members, m_reference);
        switch (model) {
            case MobilityModel::Ecr:
            case MobilityModel::Nomadic:
                for (auto& off : m_offsets) off = detail::random_in_disc(mp.group_radius, m_rng);
                break;
            case MobilityModel::Column: {
                // Fixed slots along a line perpendicular to the advance vector.
                const double len = std::max(norm(mp.column_advance), 1e-9);
                const Vec2 perp{-mp.column_advance.y / len, mp.column_advance.x / len};
                for (int i = 0; i < members; ++i)
                    m_line_slots.push_back((double(i) - 0.5 * double(members - 1)) *
                                           mp.group_radius * perp);
                m_advance = mp.column_advance;
                break;
            }
            case MobilityModel::Pursue:
                for (auto& p : m_positions) p = detail::random_point(mp, m_rng);
                break;
            case MobilityModel::Rpgm:
                break;  // members sit on the centre until the first step
            default:
                break;
        }
        refresh_positions_();
    }

    void advance(double dt) {
        switch (m_model) {
            case MobilityModel::Ecr: {
                // Per-coordinate recursion about the area centre; dt = 1
                // reproduces the textbook update exactly.
                const double decay = std::exp(-dt / m_params.ecr_tau);
                const double noise = m_params.ecr_sigma * std::sqrt(1.0 - decay * decay);
                const Vec2 centre{m_params.area_width / 2.0, m_params.area_height / 2.0};
                Vec2 rel = m_reference - centre;
                rel.x = rel.x * decay + noise * m_rng.gaussian();
                rel.y = rel.y * decay + noise * m_rng.gaussian();
                m_reference = detail::clamp_into_area(centre + rel, m_params);
                for (auto& off : m_offsets)
                    off = detail::random_in_disc(m_params.group_radius, m_rng);
                break;
            }
            case MobilityModel::Column: {
                Vec2 next = m_anchor() + dt * m_advance;
                // Flip the advance direction when any slot would leave the area.
                for (const Vec2& slot : m_line_slots) {
                    const Vec2 p = next + slot;
                    if (p.x < 0.0 || p.x >= m_params.area_width || p.y < 0.0 ||
                        p.y >= m_params.area_height) {
                        m_advance = -1.0 * m_advance;
                        next = m_anchor() + dt * m_advance;
                        break;
                    }
                }
                m_reference = detail::clamp_into_area(next, m_params);
                walk_offsets_(dt);
                break;
            }
            case MobilityModel::Nomadic:
                m_ref_state.step(m_params, dt, m_rng);
                m_reference = m_ref_state.pos;
                walk_offsets_(dt);
                break;
            case MobilityModel::Pursue: {
                m_ref_state.step(m_params, dt, m_rng);
                m_reference = m_ref_state.pos;
                for (auto& p : m_positions) {
                    const Vec2 noise = m_params.pursue_noise > 0.0
                                           ? detail::random_in_disc(m_params.pursue_noise, m_rng)
                                           : Vec2{};
                    // Convex form: gain 1 with no noise lands on the target exactly.
                    const double g = m_params.pursuit_gain;
                    p = (1.0 - g) * p + g * m_reference + noise;
                    p = detail::clamp_into_area(p, m_params);
                }
                return;  // positions maintained directly
            }
            case MobilityModel::Rpgm:
                m_ref_state.step(m_params, dt, m_rng);
                m_reference = m_ref_state.pos;
                for (auto& off : m_offsets)
                    off = detail::random_in_disc(m_params.rpgm_deviation_max, m_rng);
                break;
            default:
                break;
        }
        refresh_positions_();
    }

    Vec2 reference() const { return m_reference; }
    Vec2 member_position(int i) const { return m_positions.at(i); }
    int members() const { return m_members; }

private:
    Vec2 m_anchor() const { return m_reference; }

    // Bounded random walk of each offset inside the group radius.
    void walk_offsets_(double dt) {
        for (auto& off : m_offsets) {
            const double step = std::min(m_params.max_speed * dt, m_params.group_radius);
            off = off + detail::random_in_disc(step, m_rng);
            const double d = norm(off);
            if (d > m_params.group_radius) off = (m_params.group_radius / d) * off;
        }
    }

    void refresh_positions_() {
        if (m_model == MobilityModel::Column) {
            for (int i = 0; i < m_members; ++i) {
                Vec2 base = m_reference + m_line_slots[i];
                // Offsets ride on the slot; clamp handles slots near walls.
                m_positions[i] =
                    detail::clamp_into_area(base + (i < int(m_offsets.size()) ? m_offsets[i] : Vec2{}),
                                            m_params);
            }
            return;
        }
        if (m_model == MobilityModel::Pursue) return;
        for (int i = 0; i < m_members; ++i)
            m_positions[i] = detail::clamp_into_area(m_reference + m_offsets[i], m_params);
    }

    MobilityModel m_model;
    ModelParams m_params;
    Rng m_rng;
    int m_members;
    RandomWaypointState m_ref_state;  // reference/target track for the models that need one
    Vec2 m_reference;
    Vec2 m_advance;
    std::vector<Vec2> m_offsets;
    std::vector<Vec2> m_line_slots;
    std::vector<Vec2> m_positions;
};

// --------------------------------------------------------------------------
// Traces and zone events.

struct TrackPoint {
    Seconds t = 0.0;
    Vec2 pos;
};

struct MobilityTrace {
    double width = 0.0, height = 0.0;
    std::vector<std::vector<TrackPoint>> nodes;
};

struct ZoneEvent {
    Seconds t = 0.0;
    UserId user = 0;
    NodeId from, to;
    friend bool operator==(const ZoneEvent&, const ZoneEvent&) = default;
};

inline MobilityTrace generate_trace(MobilityModel model, const ModelParams& mp, int n_nodes,
                                    Seconds duration, std::uint64_t seed) {
    validate_params(mp, model);
    MobilityTrace trace;
    trace.width = mp.area_width;
    trace.height = mp.area_height;
    trace.nodes.resize(n_nodes);
    const int samples = duration < 0.0 ? 0 : static_cast<int>(std::floor(duration / mp.step_time)) + 1;
    if (n_nodes == 0) return trace;
    if (is_group_model(model)) {
        const int groups = std::min(mp.group_count, n_nodes);
        std::vector<GroupStepper> steppers;
        std::vector<std::pair<int, int>> spans;  // node range per group
        int next = 0;
        for (int g = 0; g < groups; ++g) {
            const int count = (n_nodes - next) / (groups - g);
            steppers.emplace_back(model, mp, count, Rng(seed, "mobility-group", g));
            spans.push_back({next, next + count});
            next += count;
        }
        for (int s = 0; s < samples; ++s) {
            const Seconds t = s * mp.step_time;
            for (int g = 0; g < groups; ++g) {
                if (s > 0) steppers[g].advance(mp.step_time);
                for (int i = spans[g].first; i < spans[g].second; ++i)
                    trace.nodes[i].push_back({t, steppers[g].member_position(i - spans[g].first)});
            }
        }
        return trace;
    }
    for (int i = 0; i < n_nodes; ++i) {
        EntityStepper stepper(model, mp, Rng(seed, "mobility", i));
        trace.nodes[i].reserve(samples);
        for (int s = 0; s < samples; ++s) {
            if (s > 0) stepper.advance(mp.step_time);
            trace.nodes[i].push_back({s * mp.step_time, stepper.position()});
        }
    }
    return trace;
}

// Crossings attributed to the sample instant at which the new zone is seen.
inline std::vector<ZoneEvent> emit_zone_crossings(const std::vector<TrackPoint>& samples,
                                                  const ZoneGrid& grid, UserId user) {
    std::vector<ZoneEvent> out;
    NodeId prev = kNoNode;
    for (const TrackPoint& p : samples) {
        const NodeId z = zone_of(grid, p.pos.x, p.pos.y);
        if (prev.valid() && z != prev) out.push_back({p.t, user, prev, z});
        prev = z;
    }
    return out;
}

// Zone-level random walk: exponential holding times, next zone drawn from
// the grid's move matrix. Listed self-loops consume a holding time but emit
// no crossing.
inline std::vector<ZoneEvent> matrix_walk(const ZoneGrid& grid, UserId user, NodeId start,
                                          double move_rate, Seconds duration, Rng& rng) {
    if (move_rate <= 0.0) throw std::invalid_argument("matrix_walk: move_rate must be positive");
    std::vector<ZoneEvent> out;
    NodeId cur = start;
    Seconds t = 0.0;
    for (;;) {
        t += rng.exponential(move_rate);
        if (t >= duration) break;
        const auto it = grid.move_matrix.find(cur);
        if (it == grid.move_matrix.end() || it->second.empty()) break;  // absorbing zone
        const double u = rng.uniform();
        double acc = 0.0;
        NodeId next = it->second.back().first;
        for (const auto& [nbr, p] : it->second) {
            acc += p;
            if (u < acc) {
                next = nbr;
                break;
            }
        }
        if (next != cur) {
            out.push_back({t, user, cur, next});
            cur = next;
        }
    }
    return out;
}

// --------------------------------------------------------------------------
// Trace file formats. Position traces: `#mobtrace v1 <width> <height>` then
// `t node_id x y` lines. Zone events: `#zonetrace v1` then
// `t node_id from_zone to_zone` lines (zone names). Calls:
// `#calltrace v1` then `t caller_id callee_id` lines.

inline void save_mobility_trace(const MobilityTrace& trace, std::ostream& out) {
    out.precision(17);
    out << "#mobtrace v1 " << trace.width << ' ' << trace.height << '\n';
    std::size_t longest = 0;
    for (const auto& node : trace.nodes) longest = std::max(longest, node.size());
    for (std::size_t s = 0; s < longest; ++s)
        for (std::size_t i = 0; i < trace.nodes.size(); ++i)
            if (s < trace.nodes[i].size())
                out << trace.nodes[i][s].t << ' ' << i << ' ' << trace.nodes[i][s].pos.x << ' '
                    << trace.nodes[i][s].pos.y << '\n';
}

inline MobilityTrace load_mobility_trace(std::istream& in) {
    std::string header;
    if (!std::getline(in, header) || header.rfind("#mobtrace v1", 0) != 0)
        throw std::runtime_error("not a position trace: missing '#mobtrace v1' header");
    MobilityTrace trace;
    {
        std::istringstream hs(header.substr(12));
        if (!(hs >> trace.width >> trace.height))
            throw std::runtime_error("mobtrace header lacks area dimensions");
    }
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double t, x, y;
        long node;
        if (!(ls >> t >> node >> x >> y))
            throw std::runtime_error("mobtrace line " + std::to_string(line_no) + " malformed");
        if (node < 0) throw std::runtime_error("mobtrace node id must be >= 0");
        if (trace.nodes.size() <= static_cast<std::size_t>(node))
            trace.nodes.resize(node + 1);
        trace.nodes[node].push_back({t, {x, y}});
    }
    return trace;
}

inline void save_zone_events(const std::vector<ZoneEvent>& events, const HierarchyTree& tree,
                             std::ostream& out) {
    out.precision(17);
    out << "#zonetrace v1\n";
    for (const ZoneEvent& e : events)
        out << e.t << ' ' << e.user << ' ' << tree.name(e.from) << ' ' << tree.name(e.to) << '\n';
}

inline std::vector<ZoneEvent> load_zone_events(std::istream& in, const HierarchyTree& tree) {
    std::string header;
    if (!std::getline(in, header) || header.rfind("#zonetrace v1", 0) != 0)
        throw std::runtime_error("not a zone trace: missing '#zonetrace v1' header");
    std::vector<ZoneEvent> out;
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double t;
        long user;
        std::string from, to;
        if (!(ls >> t >> user >> from >> to))
            throw std::runtime_error("zonetrace line " + std::to_string(line_no) + " malformed");
        const auto f = tree.find(from), g = tree.find(to);
        if (!f || !g)
            throw std::runtime_error("zonetrace line " + std::to_string(line_no) +
                                     " references unknown zone");
        out.push_back({t, static_cast<UserId>(user), *f, *g});
    }
    return out;
}

struct CallRecord {
    Seconds t = 0.0;
    UserId caller = 0, callee = 0;
    friend bool operator==(const CallRecord&, const CallRecord&) = default;
};

inline void save_call_trace(const std::vector<CallRecord>& calls, std::ostream& out) {
    out.precision(17);
    out << "#calltrace v1\n";
    for (const CallRecord& c : calls) out << c.t << ' ' << c.caller << ' ' << c.callee << '\n';
}

inline std::vector<CallRecord> load_call_trace(std::istream& in) {
    std::string header;
    if (!std::getline(in, header) || header.rfind("#calltrace v1", 0) != 0)
        throw std::runtime_error("not a call trace: missing '#calltrace v1' header");
    std::vector<CallRecord> out;
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double t;
        long caller, callee;
        if (!(ls >> t >> caller >> callee))
            throw std::runtime_error("calltrace line " + std::to_string(line_no) + " malformed");
        out.push_back({t, static_cast<UserId>(caller), static_cast<UserId>(callee)});
    }
    return out;
}

}  // namespace locsim
