#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "r3/rng.hpp"

namespace r3 {

using Observation = std::vector<double>;

enum class EnvKind { Crossing, DoorKey, CartPole };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(std::string_view name);

struct EnvSpec {
    int action_count = 0;
    int max_steps = 0;
    double max_total_reward = 0.0;  // R-bar, the theoretical episode maximum
    int obs_length = 0;
    /// Side length of the grid image inside the observation (0 for non-grid envs).
    int grid_side = 0;
    /// Leading observation features that are not part of the grid image.
    int prefix_length = 0;
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
    bool success = false;
};

class Env {
public:
    virtual ~Env() = default;

    virtual const EnvSpec& spec() const = 0;
    virtual Observation reset() = 0;
    /// Throws std::out_of_range for a bad action and std::logic_error after done.
    virtual StepResult step(int action) = 0;
    virtual bool done() const = 0;
    virtual std::string render() const = 0;
};

// ---------------------------------------------------------------------------
// Gridworlds

enum class Cell : std::uint8_t { Empty, Wall, Lava, Goal, Key, DoorLocked, DoorOpen };

/// Headings follow the usual gridworld convention: 0 right, 1 down, 2 left, 3 up.
enum class Heading : std::uint8_t { Right = 0, Down = 1, Left = 2, Up = 3 };

struct GridPos {
    int row = 0;
    int col = 0;
    friend bool operator==(const GridPos&, const GridPos&) = default;
};

enum class GridAction : int { TurnLeft = 0, TurnRight = 1, Forward = 2, Pickup = 3, Toggle = 4 };

struct GridState {
    int side = 0;
    std::vector<Cell> cells;  // row-major, side * side
    GridPos agent;
    Heading heading = Heading::Right;
    bool carrying_key = false;
    int steps_taken = 0;

    Cell at(GridPos p) const { return cells[static_cast<std::size_t>(p.row * side + p.col)]; }
    Cell& at(GridPos p) { return cells[static_cast<std::size_t>(p.row * side + p.col)]; }
    bool inside(GridPos p) const { return p.row >= 0 && p.col >= 0 && p.row < side && p.col < side; }
    GridPos front() const;
    int count(Cell kind) const;

    friend bool operator==(const GridState&, const GridState&) = default;
};

struct GridOptions {
    /// Draw a fresh layout on every reset instead of keeping the per-seed one.
    bool rerandomize_layout = false;

    friend bool operator==(const GridOptions&, const GridOptions&) = default;
};

class GridWorld final : public Env {
public:
    GridWorld(EnvKind kind, int side, std::uint64_t seed, GridOptions options = {});

    const EnvSpec& spec() const override { return spec_; }
    Observation reset() override;
    StepResult step(int action) override;
    bool done() const override { return done_; }
    std::string render() const override;

    EnvKind kind() const { return kind_; }
    const GridState& state() const { return state_; }
    /// Replaces the live state; used by tests and planners.
    void set_state(const GridState& state);

private:
    GridState generate();

    EnvKind kind_;
    EnvSpec spec_;
    GridOptions options_;
    Rng rng_;
    GridState layout_;
    GridState state_;
    bool done_ = true;
};

/// Flat observation: one-hot heading (4) then side*side*3 grid image in
/// (row, col, channel) order with channels (object, color, state) scaled to [0, 1].
Observation encode_observation(const GridState& state);

// ---------------------------------------------------------------------------
// CartPole

struct CartPoleState {
    double cart_position = 0.0;
    double cart_velocity = 0.0;
    double pole_angle = 0.0;
    double pole_tip_velocity = 0.0;
    int steps_taken = 0;

    friend bool operator==(const CartPoleState&, const CartPoleState&) = default;
};

struct CartPoleParams {
    double gravity = 9.8;
    double cart_mass = 1.0;
    double pole_mass = 0.1;
    double pole_half_length = 0.5;
    double force = 10.0;
    double dt = 0.02;
    double angle_bound = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
    double position_bound = 2.4;
    double init_range = 0.05;
};

/// One Euler step of the cart-pole equations of motion. action 0 pushes left, 1 right.
CartPoleState cartpole_dynamics(const CartPoleState& s, int action, const CartPoleParams& p);
bool cartpole_out_of_bounds(const CartPoleState& s, const CartPoleParams& p);

class CartPole final : public Env {
public:
    CartPole(std::uint64_t seed, int max_steps = 3000, CartPoleParams params = {});

    const EnvSpec& spec() const override { return spec_; }
    Observation reset() override;
    StepResult step(int action) override;
    bool done() const override { return done_; }
    std::string render() const override;

    const CartPoleState& state() const { return state_; }
    void set_state(const CartPoleState& state);
    const CartPoleParams& params() const { return params_; }

private:
    EnvSpec spec_;
    CartPoleParams params_;
    Rng rng_;
    CartPoleState state_;
    bool done_ = true;
};

Observation encode_observation(const CartPoleState& state);

// ---------------------------------------------------------------------------

struct EnvOptions {
    GridOptions grid;
    int cartpole_max_steps = 3000;

    friend bool operator==(const EnvOptions&, const EnvOptions&) = default;
};

/// size is the grid side (5..9) for gridworlds and ignored for CartPole.
std::unique_ptr<Env> make_env(EnvKind kind, std::optional<int> size, std::uint64_t seed,
                              const EnvOptions& options = {});

}  // namespace r3
