#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "figmn/errors.hpp"
#include "figmn/numerics.hpp"

namespace figmn {

struct EnvSpec {
    std::string name;
    int observation_dim = 0;
    Vector low;   // declared (clamped) observation bounds
    Vector high;
    int action_count = 0;
    int max_steps = 0;
    double solve_threshold = 0.0;
    int solve_window = 100;
};

struct StepResult {
    Vector observation;
    double reward = 0.0;
    bool terminated = false;  // true terminal state
    bool truncated = false;   // step limit only
};

/// Seed-deterministic classic-control task. One instance per thread.
class Environment {
public:
    virtual ~Environment() = default;

    virtual const EnvSpec& spec() const = 0;

    /// Starts a new episode from the task's standard initial distribution.
    virtual Vector reset(std::uint64_t seed) = 0;

    /// Advances one tick. Throws StepAfterEnd on a finished episode.
    virtual StepResult step(int action) = 0;

    /// Starts an episode from an exact internal state (testing seam).
    virtual Vector set_state(std::span<const double> state) = 0;
};

/// Names accepted by make_env: mountain_car_v0, cartpole_v0, cartpole_v1,
/// acrobot_v0, acrobot_v1.
std::unique_ptr<Environment> make_env(const std::string& name);
const std::vector<std::string>& env_names();

/// First index i with mean(returns[i..i+window)) >= solve_threshold.
std::optional<std::size_t> solved(const std::vector<double>& returns, const EnvSpec& spec);

}  // namespace figmn
