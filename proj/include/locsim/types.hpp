#pragma once

#include <compare>
#include <cstdint>
#include <functional>

namespace locsim {

using Seconds = double;
using Cost = double;
using UserId = std::int32_t;

// Dense index of a hierarchy node; the name mapping lives in HierarchyTree.
struct NodeId {
    std::int32_t v = -1;

    constexpr bool valid() const { return v >= 0; }
    friend constexpr auto operator<=>(NodeId, NodeId) = default;
};

inline constexpr NodeId kNoNode{};

}  // namespace locsim

template <>
struct std::hash<locsim::NodeId> {
    std::size_t operator()(locsim::NodeId n) const noexcept {
        return std::hash<std::int32_t>{}(n.v);
    }
};
