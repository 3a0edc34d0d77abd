#pragma once

#include <span>
#include <string>
#include <vector>

#include "fabsched/types.hpp"

namespace fabsched {

struct FabState;

/// Orders the legal lots of a decision point. Implementations must return a
/// permutation of `legal` and must not depend on anything but their inputs, so a
/// single instance can serve many rollouts concurrently.
class Dispatcher {
public:
    virtual ~Dispatcher() = default;
    virtual std::vector<LotId> order(const FabState& st, std::span<const LotId> legal) const = 0;
    virtual std::string name() const = 0;
};

}  // namespace fabsched
