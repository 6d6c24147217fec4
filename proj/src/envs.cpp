#include "figmn/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace figmn {

namespace {

constexpr double kPi = std::numbers::pi;

// (-pi, pi]
double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a <= 0.0) a += 2.0 * kPi;
    return a - kPi;
}

class EnvBase : public Environment {
public:
    const EnvSpec& spec() const override { return spec_; }

    Vector reset(std::uint64_t seed) override {
        rng_.seed(seed);
        state_ = initial_state();
        steps_ = 0;
        done_ = false;
        return observation();
    }

    Vector set_state(std::span<const double> state) override {
        if (static_cast<int>(state.size()) != static_cast<int>(state_.size()) && !state_.empty())
            throw std::invalid_argument("set_state: dimension mismatch");
        state_.assign(state.begin(), state.end());
        steps_ = 0;
        done_ = false;
        return observation();
    }

    StepResult step(int action) override {
        if (done_) throw StepAfterEnd(spec_.name + ": step() after episode end");
        if (action < 0 || action >= spec_.action_count)
            throw std::invalid_argument(spec_.name + ": action index out of range");
        StepResult r = advance(action);
        ++steps_;
        if (!r.terminated && steps_ >= spec_.max_steps) r.truncated = true;
        done_ = r.terminated || r.truncated;
        r.observation = observation();
        return r;
    }

protected:
    virtual Vector initial_state() = 0;
    virtual StepResult advance(int action) = 0;

    // emitted observations are clamped into the declared bounds
    Vector observation() const {
        Vector obs = state_;
        for (std::size_t d = 0; d < obs.size(); ++d)
            obs[d] = std::clamp(obs[d], spec_.low[d], spec_.high[d]);
        return obs;
    }

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

    EnvSpec spec_;
    Vector state_;
    std::mt19937_64 rng_;
    int steps_ = 0;
    bool done_ = true;
};

// ---- mountain car ----

class MountainCarEnv final : public EnvBase {
public:
    MountainCarEnv() {
        spec_.name = "mountain_car_v0";
        spec_.observation_dim = 2;
        spec_.low = {kMinPosition, -kMaxSpeed};
        spec_.high = {kMaxPosition, kMaxSpeed};
        spec_.action_count = 3;
        spec_.max_steps = 200;
        spec_.solve_threshold = -110.0;
        state_ = {0.0, 0.0};
    }

private:
    static constexpr double kMinPosition = -1.2;
    static constexpr double kMaxPosition = 0.6;
    static constexpr double kMaxSpeed = 0.07;
    static constexpr double kGoalPosition = 0.5;
    static constexpr double kForce = 0.001;
    static constexpr double kGravity = 0.0025;

    Vector initial_state() override { return {uniform(-0.6, -0.4), 0.0}; }

    StepResult advance(int action) override {
        double position = state_[0];
        double velocity = state_[1];
        velocity += (action - 1) * kForce - std::cos(3.0 * position) * kGravity;
        velocity = std::clamp(velocity, -kMaxSpeed, kMaxSpeed);
        position += velocity;
        position = std::clamp(position, kMinPosition, kMaxPosition);
        if (position <= kMinPosition && velocity < 0.0) velocity = 0.0;
        state_ = {position, velocity};
        StepResult r;
        r.reward = -1.0;
        r.terminated = position >= kGoalPosition;
        return r;
    }
};

// ---- cart-pole ----

class CartPoleEnv final : public EnvBase {
public:
    CartPoleEnv(const std::string& name, int max_steps, double threshold) {
        spec_.name = name;
        spec_.observation_dim = 4;
        spec_.low = {-kXThreshold, -3.0, -kThetaThreshold, -4.0};
        spec_.high = {kXThreshold, 3.0, kThetaThreshold, 4.0};
        spec_.action_count = 2;
        spec_.max_steps = max_steps;
        spec_.solve_threshold = threshold;
        state_ = {0.0, 0.0, 0.0, 0.0};
    }

private:
    static constexpr double kGravity = 9.8;
    static constexpr double kMassCart = 1.0;
    static constexpr double kMassPole = 0.1;
    static constexpr double kTotalMass = kMassCart + kMassPole;
    static constexpr double kLength = 0.5;  // half the pole length
    static constexpr double kPoleMassLength = kMassPole * kLength;
    static constexpr double kForceMag = 10.0;
    static constexpr double kTau = 0.02;
    static constexpr double kXThreshold = 2.4;
    static constexpr double kThetaThreshold = 12.0 * 2.0 * kPi / 360.0;

    Vector initial_state() override {
        Vector s(4);
        for (double& v : s) v = uniform(-0.05, 0.05);
        return s;
    }

    StepResult advance(int action) override {
        double x = state_[0], x_dot = state_[1], theta = state_[2], theta_dot = state_[3];
        const double force = action == 1 ? kForceMag : -kForceMag;
        const double costheta = std::cos(theta);
        const double sintheta = std::sin(theta);
        const double temp = (force + kPoleMassLength * theta_dot * theta_dot * sintheta) / kTotalMass;
        const double theta_acc = (kGravity * sintheta - costheta * temp) /
                                 (kLength * (4.0 / 3.0 - kMassPole * costheta * costheta / kTotalMass));
        const double x_acc = temp - kPoleMassLength * theta_acc * costheta / kTotalMass;
        x += kTau * x_dot;
        x_dot += kTau * x_acc;
        theta += kTau * theta_dot;
        theta_dot += kTau * theta_acc;
        state_ = {x, x_dot, theta, theta_dot};
        StepResult r;
        r.reward = 1.0;
        r.terminated = x < -kXThreshold || x > kXThreshold || theta < -kThetaThreshold ||
                       theta > kThetaThreshold;
        return r;
    }
};

// ---- acrobot ----

// Two-link underactuated arm; the 4-action variant applies one unit of
// torque to a single joint per action, the 3-action variant drives only
// the second joint.
class AcrobotEnv final : public EnvBase {
public:
    AcrobotEnv(const std::string& name, bool four_actions, int max_steps) : four_actions_(four_actions) {
        spec_.name = name;
        spec_.observation_dim = 4;
        spec_.low = {-kPi, -kPi, -kMaxVel1, -kMaxVel2};
        spec_.high = {kPi, kPi, kMaxVel1, kMaxVel2};
        spec_.action_count = four_actions ? 4 : 3;
        spec_.max_steps = max_steps;
        spec_.solve_threshold = -100.0;
        state_ = {0.0, 0.0, 0.0, 0.0};
    }

private:
    static constexpr double kLink1Length = 1.0;
    static constexpr double kLinkMass1 = 1.0;
    static constexpr double kLinkMass2 = 1.0;
    static constexpr double kLinkCom1 = 0.5;
    static constexpr double kLinkCom2 = 0.5;
    static constexpr double kLinkMoi = 1.0;
    static constexpr double kGravity = 9.8;
    static constexpr double kDt = 0.2;
    static constexpr double kMaxVel1 = 4.0 * kPi;
    static constexpr double kMaxVel2 = 9.0 * kPi;

    bool four_actions_;

    Vector initial_state() override {
        Vector s(4);
        for (double& v : s) v = uniform(-0.1, 0.1);
        return s;
    }

    std::pair<double, double> torques(int action) const {
        if (!four_actions_) return {0.0, static_cast<double>(action - 1)};
        switch (action) {
            case 0: return {-1.0, 0.0};
            case 1: return {1.0, 0.0};
            case 2: return {0.0, -1.0};
            default: return {0.0, 1.0};
        }
    }

    // accelerations from the two-link equations of motion
    static std::array<double, 4> derivatives(const std::array<double, 4>& s, double tau1, double tau2) {
        const double theta1 = s[0], theta2 = s[1], dtheta1 = s[2], dtheta2 = s[3];
        const double m1 = kLinkMass1, m2 = kLinkMass2, l1 = kLink1Length;
        const double lc1 = kLinkCom1, lc2 = kLinkCom2, i1 = kLinkMoi, i2 = kLinkMoi, g = kGravity;

        const double d11 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * std::cos(theta2)) +
                           i1 + i2;
        const double d12 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(theta2)) + i2;
        const double d22 = m2 * lc2 * lc2 + i2;
        const double phi2 = m2 * lc2 * g * std::cos(theta1 + theta2 - kPi / 2.0);
        const double phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * std::sin(theta2) -
                            2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * std::sin(theta2) +
                            (m1 * lc1 + m2 * l1) * g * std::cos(theta1 - kPi / 2.0) + phi2;
        const double rhs1 = tau1 - phi1;
        const double rhs2 = tau2 - m2 * l1 * lc2 * dtheta1 * dtheta1 * std::sin(theta2) - phi2;
        const double det = d11 * d22 - d12 * d12;
        const double ddtheta1 = (d22 * rhs1 - d12 * rhs2) / det;
        const double ddtheta2 = (d11 * rhs2 - d12 * rhs1) / det;
        return {dtheta1, dtheta2, ddtheta1, ddtheta2};
    }

    StepResult advance(int action) override {
        const auto [tau1, tau2] = torques(action);
        std::array<double, 4> s{state_[0], state_[1], state_[2], state_[3]};

        // one RK4 step of size dt
        const auto k1 = derivatives(s, tau1, tau2);
        std::array<double, 4> s2;
        for (int i = 0; i < 4; ++i) s2[i] = s[i] + 0.5 * kDt * k1[i];
        const auto k2 = derivatives(s2, tau1, tau2);
        std::array<double, 4> s3;
        for (int i = 0; i < 4; ++i) s3[i] = s[i] + 0.5 * kDt * k2[i];
        const auto k3 = derivatives(s3, tau1, tau2);
        std::array<double, 4> s4;
        for (int i = 0; i < 4; ++i) s4[i] = s[i] + kDt * k3[i];
        const auto k4 = derivatives(s4, tau1, tau2);
        for (int i = 0; i < 4; ++i) s[i] += kDt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

        s[0] = wrap_angle(s[0]);
        s[1] = wrap_angle(s[1]);
        s[2] = std::clamp(s[2], -kMaxVel1, kMaxVel1);
        s[3] = std::clamp(s[3], -kMaxVel2, kMaxVel2);
        state_.assign(s.begin(), s.end());

        StepResult r;
        r.reward = -1.0;
        r.terminated = -std::cos(s[0]) - std::cos(s[1] + s[0]) > 1.0;
        return r;
    }
};

}  // namespace

std::unique_ptr<Environment> make_env(const std::string& name) {
    if (name == "mountain_car_v0") return std::make_unique<MountainCarEnv>();
    if (name == "cartpole_v0") return std::make_unique<CartPoleEnv>(name, 200, 195.0);
    if (name == "cartpole_v1") return std::make_unique<CartPoleEnv>(name, 500, 475.0);
    if (name == "acrobot_v0") return std::make_unique<AcrobotEnv>(name, true, 200);
    if (name == "acrobot_v1") return std::make_unique<AcrobotEnv>(name, false, 500);
    throw std::invalid_argument("make_env: unknown environment '" + name + "'");
}

const std::vector<std::string>& env_names() {
    static const std::vector<std::string> names{"mountain_car_v0", "cartpole_v0", "cartpole_v1",
                                                "acrobot_v0", "acrobot_v1"};
    return names;
}

std::optional<std::size_t> solved(const std::vector<double>& returns, const EnvSpec& spec) {
    const std::size_t window = static_cast<std::size_t>(spec.solve_window);
    if (returns.size() < window || window == 0) return std::nullopt;
    double sum = 0.0;
    for (std::size_t i = 0; i < window; ++i) sum += returns[i];
    if (sum >= spec.solve_threshold * static_cast<double>(window)) return 0;
    for (std::size_t i = window; i < returns.size(); ++i) {
        sum += returns[i] - returns[i - window];
        if (sum >= spec.solve_threshold * static_cast<double>(window)) return i - window + 1;
    }
    return std::nullopt;
}

}  // namespace figmn
