#pragma once

// Synthetic call workload: per-user Poisson arrivals plus a skewed callee
// chooser. Each caller owns a fixed preferred set of k other users drawn
// once per run; a call goes to the preferred set with probability p and to
// a uniform member of the remaining population otherwise.

#include <optional>
#include <stdexcept>
#include <vector>

#include "locsim/rng.hpp"
#include "locsim/types.hpp"

namespace locsim {

struct CallParams {
    double cmr = 1.0;          // target call-to-mobility ratio; <= 0 means use call_rate
    double call_rate = 0.0;    // calls per user per second when cmr is disabled
    int preferred_set_size = 5;
    double preferred_prob = 0.8;
};

inline void validate_call_params(const CallParams& p) {
    if (p.preferred_set_size < 1)
        throw std::invalid_argument("preferred_set_size must be >= 1");
    if (p.preferred_prob < 0.0 || p.preferred_prob > 1.0)
        throw std::invalid_argument("preferred_prob must lie in [0, 1]");
    if (p.cmr <= 0.0 && p.call_rate <= 0.0)
        throw std::invalid_argument("either cmr or call_rate must be positive");
}

// Strictly-after-now exponential arrival; absent when the rate is zero.
inline std::optional<Seconds> next_call_time(Seconds now, double rate, Rng& rng) {
    if (rate <= 0.0) return std::nullopt;
    return now + rng.exponential(rate);
}

// k distinct users other than the caller (k is capped by population - 1).
inline std::vector<UserId> build_preferred_set(UserId caller, int population, int k, Rng& rng) {
    if (population < 2) throw std::invalid_argument("population too small for calls");
    const int want = std::min(k, population - 1);
    std::vector<UserId> pool;
    pool.reserve(population - 1);
    for (UserId u = 0; u < population; ++u)
        if (u != caller) pool.push_back(u);
    // Partial Fisher-Yates keeps the draw order deterministic.
    for (int i = 0; i < want; ++i) {
        const auto j = i + static_cast<int>(rng.uniform_index(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(want);
    return pool;
}

// With probability p, uniform over the caller's preferred set; otherwise
// uniform over the whole population minus the caller. Never the caller.
inline UserId pick_callee(UserId caller, int population, const std::vector<UserId>& preferred,
                          double p, Rng& rng) {
    if (population < 2) throw std::invalid_argument("population too small for calls");
    if (!preferred.empty() && rng.uniform() < p)
        return preferred[rng.uniform_index(preferred.size())];
    UserId u = static_cast<UserId>(rng.uniform_index(population - 1));
    if (u >= caller) ++u;
    return u;
}

// Bundles the per-run fixed preferred sets.
class CallProcess {
public:
    CallProcess(int population, const CallParams& params, Rng& peers_rng)
        : m_population(population), m_params(params) {
        validate_call_params(params);
        if (population < 2) throw std::invalid_argument("population too small for calls");
        m_preferred.reserve(population);
        for (UserId u = 0; u < population; ++u)
            m_preferred.push_back(
                build_preferred_set(u, population, params.preferred_set_size, peers_rng));
    }

    const std::vector<UserId>& preferred(UserId u) const { return m_preferred.at(u); }

    UserId pick_callee(UserId caller, Rng& rng) const {
        return locsim::pick_callee(caller, m_population, m_preferred.at(caller),
                                   m_params.preferred_prob, rng);
    }

    int population() const { return m_population; }
    const CallParams& params() const { return m_params; }

private:
    int m_population;
    CallParams m_params;
    std::vector<std::vector<UserId>> m_preferred;
};

}  // namespace locsim
