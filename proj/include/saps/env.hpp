#pragma once

// GridDrive: a deterministic five-lane driving toy.
//
// The agent sits in the first row of a 5x5 window (lanes x cells ahead) over
// a procedurally generated track. Action ids for the canonical action space:
//     0 steer left, 1 steer right, 2 accelerate, 3 brake, 4 idle
// Task variations:
//     standard   reward = speed on track, -2 off track
//     slow       reward = min(speed,1) - max(speed-1,0) on track, -2 off track
//     scrambled  standard, but action a means canonical kScrambledActions[a]
//     no_idle    standard with four actions (idle removed)
// Visual variations recolor the background only. Track and agent colors are
// channel-symmetric, so changing the visual is a global channel permutation.

#include "saps/error.hpp"
#include "saps/json_util.hpp"
#include "saps/rng.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace saps {

enum class Visual { green, red, blue };
enum class Task { standard, slow, scrambled, no_idle };

inline constexpr int kLanes = 5;
inline constexpr int kWindow = 5;
inline constexpr int kChannels = 3;
inline constexpr int kFrames = 2;
inline constexpr int kMaxSpeed = 3;
inline constexpr std::size_t kFrameSize = static_cast<std::size_t>(kLanes * kWindow * kChannels);
inline constexpr std::size_t kObsDim = kFrameSize * kFrames;
inline constexpr int kCanonicalActions = 5;

/// Scrambled action a is interpreted as canonical action kScrambledActions[a].
inline constexpr std::array<int, 5> kScrambledActions = {2, 0, 4, 1, 3};

inline std::string_view to_string(Visual v) {
    switch (v) {
    case Visual::green: return "green";
    case Visual::red: return "red";
    case Visual::blue: return "blue";
    }
    return "?";
}

inline std::string_view to_string(Task t) {
    switch (t) {
    case Task::standard: return "standard";
    case Task::slow: return "slow";
    case Task::scrambled: return "scrambled";
    case Task::no_idle: return "no_idle";
    }
    return "?";
}

inline Visual parse_visual(std::string_view s) {
    if (s == "green") return Visual::green;
    if (s == "red") return Visual::red;
    if (s == "blue") return Visual::blue;
    throw FormatError("unknown visual variation '" + std::string(s) + "' (expected green, red or blue)");
}

inline Task parse_task(std::string_view s) {
    if (s == "standard") return Task::standard;
    if (s == "slow") return Task::slow;
    if (s == "scrambled") return Task::scrambled;
    if (s == "no_idle") return Task::no_idle;
    throw FormatError("unknown task variation '" + std::string(s) + "' (expected standard, slow, scrambled or no_idle)");
}

inline int action_count(Task t) { return t == Task::no_idle ? 4 : kCanonicalActions; }

/// Maps a task-specific action id onto the canonical action space.
inline int canonical_action(Task t, int action) {
    if (action < 0 || action >= action_count(t)) {
        throw PreconditionError("action " + std::to_string(action) + " is out of range for task '" + std::string(to_string(t)) + "' (" +
                                std::to_string(action_count(t)) + " actions)");
    }
    return t == Task::scrambled ? kScrambledActions[static_cast<std::size_t>(action)] : action;
}

struct GridDriveConfig {
    std::int64_t track_seed = 0;
    Visual visual = Visual::green;
    Task task = Task::standard;
    std::size_t horizon = 200;
    std::size_t track_length = 400;

    void validate() const {
        detail::require(horizon >= 1, "GridDriveConfig: horizon must be >= 1");
        detail::require(track_length >= static_cast<std::size_t>(kWindow),
                        "GridDriveConfig: track_length must be >= window depth " + std::to_string(kWindow));
    }

    friend bool operator==(const GridDriveConfig&, const GridDriveConfig&) = default;
};

inline Json to_json(const GridDriveConfig& c) {
    return Json{{"track_seed", c.track_seed},
                {"visual", std::string(to_string(c.visual))},
                {"task", std::string(to_string(c.task))},
                {"horizon", c.horizon},
                {"track_length", c.track_length}};
}

/// horizon and track_length may be omitted; unknown keys are rejected.
inline GridDriveConfig env_config_from_json(const Json& j, std::string_view ctx = "env") {
    using namespace json_util;
    only_keys(j, ctx, {"track_seed", "visual", "task", "horizon", "track_length"});
    GridDriveConfig c;
    c.track_seed = get_int(j, ctx, "track_seed");
    c.visual = parse_visual(get_string(j, ctx, "visual"));
    c.task = parse_task(get_string(j, ctx, "task"));
    if (j.contains("horizon")) {
        c.horizon = get_count(j, ctx, "horizon");
    }
    if (j.contains("track_length")) {
        c.track_length = get_count(j, ctx, "track_length");
    }
    try {
        c.validate();
    } catch (const PreconditionError& e) {
        throw FormatError(std::string(ctx) + ": " + e.what());
    }
    return c;
}

using Track = std::vector<int>;
using Observation = std::vector<double>;

/// Lane centers: c[0] = 2, then a clamped ±1/0 random walk.
inline Track generate_track(std::int64_t seed, std::size_t length) {
    detail::require(length >= 1, "generate_track: length must be >= 1");
    Rng rng(derive_seed({0x747261636BULL, static_cast<std::uint64_t>(seed)}));
    Track c(length);
    c[0] = 2;
    for (std::size_t i = 1; i < length; ++i) {
        const int delta = static_cast<int>(rng.below(3)) - 1;
        c[i] = std::clamp(c[i - 1] + delta, 0, kLanes - 1);
    }
    return c;
}

struct EnvState {
    std::size_t pos = 0;
    int lane = 2;
    int speed = 0;
    std::size_t t = 0;
    std::shared_ptr<const Track> track;

    [[nodiscard]] int center_at(std::size_t offset) const { return (*track)[(pos + offset) % track->size()]; }
    [[nodiscard]] bool on_track() const { return std::abs(lane - center_at(0)) <= 1; }

    friend bool operator==(const EnvState& a, const EnvState& b) {
        return a.pos == b.pos && a.lane == b.lane && a.speed == b.speed && a.t == b.t && (a.track == b.track || (a.track && b.track && *a.track == *b.track));
    }
};

// ---------------------------------------------------------------------------
// Rendering

struct Rgb {
    double r, g, b;
};

inline constexpr Rgb kTrackColor{0.5, 0.5, 0.5};
inline constexpr Rgb kAgentColor{1.0, 1.0, 1.0};

inline constexpr Rgb background_color(Visual v) {
    switch (v) {
    case Visual::green: return {0.1, 0.8, 0.1};
    case Visual::red: return {0.8, 0.1, 0.1};
    case Visual::blue: return {0.1, 0.1, 0.8};
    }
    return {0.0, 0.0, 0.0};
}

inline constexpr double agent_brightness(int speed) { return 0.4 + 0.2 * speed; }

/// Channel c of a `v` frame equals channel channel_permutation(v)[c] of the green frame.
inline constexpr std::array<int, 3> channel_permutation(Visual v) {
    switch (v) {
    case Visual::green: return {0, 1, 2};
    case Visual::red: return {1, 0, 2};
    case Visual::blue: return {0, 2, 1};
    }
    return {0, 1, 2};
}

/// Permutation taking a `from` frame to a `to` frame: out[c] = in[p[c]].
inline constexpr std::array<int, 3> transfer_permutation(Visual from, Visual to) {
    const auto pf = channel_permutation(from);
    const auto pt = channel_permutation(to);
    std::array<int, 3> inv_from{};
    for (int c = 0; c < 3; ++c) {
        inv_from[static_cast<std::size_t>(pf[static_cast<std::size_t>(c)])] = c;
    }
    std::array<int, 3> out{};
    for (std::size_t c = 0; c < 3; ++c) {
        out[c] = inv_from[static_cast<std::size_t>(pt[c])];
    }
    return out;
}

/// Index of (frame, cell ahead, lane, channel) inside an observation.
inline constexpr std::size_t obs_index(int frame, int ahead, int lane, int channel) {
    return static_cast<std::size_t>(((frame * kWindow + ahead) * kLanes + lane) * kChannels + channel);
}

/// Renders one 5x5x3 frame into `out` (length kFrameSize).
inline void render_frame(std::span<double> out, const EnvState& s, Visual visual) {
    const Rgb bg = background_color(visual);
    for (int k = 0; k < kWindow; ++k) {
        const int center = s.center_at(static_cast<std::size_t>(k));
        for (int l = 0; l < kLanes; ++l) {
            Rgb c = std::abs(l - center) <= 1 ? kTrackColor : bg;
            if (k == 0 && l == s.lane) {
                const double f = agent_brightness(s.speed);
                c = {kAgentColor.r * f, kAgentColor.g * f, kAgentColor.b * f};
            }
            const std::size_t base = obs_index(0, k, l, 0);
            out[base] = c.r;
            out[base + 1] = c.g;
            out[base + 2] = c.b;
        }
    }
}

/// Two stacked frames: current state first, previous state second.
inline Observation render(const EnvState& state, const EnvState& prev, Visual visual) {
    Observation obs(kObsDim);
    render_frame(std::span<double>(obs).first(kFrameSize), state, visual);
    render_frame(std::span<double>(obs).subspan(kFrameSize), prev, visual);
    return obs;
}

/// Recolors an observation rendered under `from` as if rendered under `to`.
inline Observation pixel_transform(std::span<const double> obs, Visual from, Visual to) {
    detail::require(obs.size() == kObsDim, "pixel_transform: observation has length " + std::to_string(obs.size()) + ", expected " + std::to_string(kObsDim));
    const auto p = transfer_permutation(from, to);
    Observation out(kObsDim);
    for (std::size_t px = 0; px < kObsDim; px += kChannels) {
        for (std::size_t c = 0; c < kChannels; ++c) {
            out[px + c] = obs[px + static_cast<std::size_t>(p[c])];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dynamics

inline double step_reward(const EnvState& s, Task task) {
    if (!s.on_track()) {
        return -2.0;
    }
    if (task == Task::slow) {
        return std::min(s.speed, 1) - std::max(s.speed - 1, 0);
    }
    return s.speed;
}

/// Applies a canonical action in place and returns the reward.
inline double advance(EnvState& s, int canonical, Task task) {
    switch (canonical) {
    case 0: s.lane = std::max(s.lane - 1, 0); break;
    case 1: s.lane = std::min(s.lane + 1, kLanes - 1); break;
    case 2: s.speed = std::min(s.speed + 1, kMaxSpeed); break;
    case 3: s.speed = std::max(s.speed - 1, 0); break;
    default: break;
    }
    s.pos = (s.pos + static_cast<std::size_t>(s.speed)) % s.track->size();
    s.t += 1;
    return step_reward(s, task);
}

struct ResetResult {
    EnvState state;
    Observation obs;
};

inline ResetResult reset(const GridDriveConfig& config) {
    config.validate();
    EnvState s;
    s.track = std::make_shared<const Track>(generate_track(config.track_seed, config.track_length));
    Observation obs = render(s, s, config.visual);
    return {std::move(s), std::move(obs)};
}

struct StepResult {
    EnvState state;
    Observation obs;
    double reward = 0.0;
    bool done = false;
};

inline StepResult step(const EnvState& state, int action, const GridDriveConfig& config) {
    detail::require(state.track != nullptr, "step: state has no track");
    detail::require(state.t < config.horizon, "step: episode already finished at t=" + std::to_string(state.t));
    const int canonical = canonical_action(config.task, action);
    StepResult r{state, {}, 0.0, false};
    r.reward = advance(r.state, canonical, config.task);
    r.obs = render(r.state, state, config.visual);
    r.done = r.state.t >= config.horizon;
    return r;
}

/// Stateful single-episode wrapper that reuses its observation buffer.
class GridDrive {
public:
    explicit GridDrive(GridDriveConfig config) : config_(config), obs_(kObsDim) {
        config_.validate();
        track_ = std::make_shared<const Track>(generate_track(config_.track_seed, config_.track_length));
        reset();
    }

    const Observation& reset() {
        state_ = EnvState{};
        state_.track = track_;
        prev_ = state_;
        rerender();
        return obs_;
    }

    /// Returns the reward; throws on invalid actions or a finished episode.
    double step(int action) {
        detail::require(!done(), "GridDrive::step: episode already finished");
        const int canonical = canonical_action(config_.task, action);
        prev_ = state_;
        const double reward = advance(state_, canonical, config_.task);
        rerender();
        return reward;
    }

    [[nodiscard]] bool done() const noexcept { return state_.t >= config_.horizon; }
    [[nodiscard]] const Observation& observation() const noexcept { return obs_; }
    [[nodiscard]] const EnvState& state() const noexcept { return state_; }
    [[nodiscard]] const EnvState& previous_state() const noexcept { return prev_; }
    [[nodiscard]] const GridDriveConfig& config() const noexcept { return config_; }

private:
    void rerender() {
        render_frame(std::span<double>(obs_).first(kFrameSize), state_, config_.visual);
        render_frame(std::span<double>(obs_).subspan(kFrameSize), prev_, config_.visual);
    }

    GridDriveConfig config_;
    std::shared_ptr<const Track> track_;
    EnvState state_;
    EnvState prev_;
    Observation obs_;
};

/// Observations after each action of a deterministic rollout from reset.
inline std::vector<Observation> replay(const GridDriveConfig& config, std::span<const int> actions) {
    GridDrive env(config);
    std::vector<Observation> out;
    out.reserve(actions.size());
    for (std::size_t i = 0; i < actions.size(); ++i) {
        try {
            env.step(actions[i]);
        } catch (const PreconditionError& e) {
            throw PreconditionError("replay: action index " + std::to_string(i) + ": " + e.what());
        }
        out.push_back(env.observation());
    }
    return out;
}

} // namespace saps
