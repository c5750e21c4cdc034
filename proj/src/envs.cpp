#include "r3/envs.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace r3 {

std::string to_string(EnvKind kind) {
    switch (kind) {
        case EnvKind::Crossing: return "crossing";
        case EnvKind::DoorKey: return "doorkey";
        case EnvKind::CartPole: return "cartpole";
    }
    return "unknown";
}

EnvKind env_kind_from_string(std::string_view name) {
    if (name == "crossing") return EnvKind::Crossing;
    if (name == "doorkey") return EnvKind::DoorKey;
    if (name == "cartpole") return EnvKind::CartPole;
    throw std::invalid_argument("unknown environment kind: " + std::string(name));
}

namespace {

constexpr int kMinSide = 5;
constexpr int kMaxSide = 9;

GridPos offset(Heading h) {
    switch (h) {
        case Heading::Right: return {0, 1};
        case Heading::Down: return {1, 0};
        case Heading::Left: return {0, -1};
        case Heading::Up: return {-1, 0};
    }
    return {0, 0};
}

// Object / color / state indices of the standard gridworld image encoding.
struct CellCode {
    int object;
    int color;
    int state;
};

constexpr int kObjectEmpty = 1;
constexpr int kObjectWall = 2;
constexpr int kObjectDoor = 4;
constexpr int kObjectKey = 5;
constexpr int kObjectGoal = 8;
constexpr int kObjectLava = 9;
constexpr int kObjectAgent = 10;
constexpr int kColorRed = 0;
constexpr int kColorGreen = 1;
constexpr int kColorYellow = 4;
constexpr int kColorGrey = 5;
constexpr int kDoorOpen = 0;
constexpr int kDoorLocked = 2;

CellCode code_of(Cell c) {
    switch (c) {
        case Cell::Empty: return {kObjectEmpty, 0, 0};
        case Cell::Wall: return {kObjectWall, kColorGrey, 0};
        case Cell::Lava: return {kObjectLava, kColorRed, 0};
        case Cell::Goal: return {kObjectGoal, kColorGreen, 0};
        case Cell::Key: return {kObjectKey, kColorYellow, 0};
        case Cell::DoorLocked: return {kObjectDoor, kColorYellow, kDoorLocked};
        case Cell::DoorOpen: return {kObjectDoor, kColorYellow, kDoorOpen};
    }
    return {0, 0, 0};
}

char glyph(Cell c) {
    switch (c) {
        case Cell::Empty: return '.';
        case Cell::Wall: return '#';
        case Cell::Lava: return '~';
        case Cell::Goal: return 'G';
        case Cell::Key: return 'K';
        case Cell::DoorLocked: return 'D';
        case Cell::DoorOpen: return '/';
    }
    return '?';
}

GridState walled_grid(int side) {
    GridState s;
    s.side = side;
    s.cells.assign(static_cast<std::size_t>(side * side), Cell::Empty);
    for (int i = 0; i < side; ++i) {
        s.at({0, i}) = Cell::Wall;
        s.at({side - 1, i}) = Cell::Wall;
        s.at({i, 0}) = Cell::Wall;
        s.at({i, side - 1}) = Cell::Wall;
    }
    return s;
}

GridState generate_crossing(int side, Rng& rng) {
    GridState s = walled_grid(side);
    const bool horizontal = rng.coin();
    // The stream avoids the start row/col and the goal row/col.
    const int line = rng.between(2, side - 3);
    const int opening = rng.between(1, side - 2);
    for (int i = 1; i <= side - 2; ++i) {
        if (i == opening) continue;
        if (horizontal) {
            s.at({line, i}) = Cell::Lava;
        } else {
            s.at({i, line}) = Cell::Lava;
        }
    }
    s.at({side - 2, side - 2}) = Cell::Goal;
    s.agent = {1, 1};
    s.heading = Heading::Right;
    return s;
}

GridState generate_doorkey(int side, Rng& rng) {
    GridState s = walled_grid(side);
    s.at({side - 2, side - 2}) = Cell::Goal;
    const int split = rng.between(2, side - 3);
    for (int r = 0; r < side; ++r) s.at({r, split}) = Cell::Wall;
    const int door_row = rng.between(1, side - 3);
    s.at({door_row, split}) = Cell::DoorLocked;

    // Agent and key share the room left of the wall.
    const int left_cells = (split - 1) * (side - 2);
    auto cell_of = [&](int idx) { return GridPos{1 + idx / (split - 1), 1 + idx % (split - 1)}; };
    const int agent_idx = static_cast<int>(rng.below(static_cast<std::size_t>(left_cells)));
    int key_idx = static_cast<int>(rng.below(static_cast<std::size_t>(left_cells - 1)));
    if (key_idx >= agent_idx) ++key_idx;
    s.agent = cell_of(agent_idx);
    s.at(cell_of(key_idx)) = Cell::Key;
    s.heading = static_cast<Heading>(rng.below(4));
    return s;
}

}  // namespace

GridPos GridState::front() const {
    const GridPos d = offset(heading);
    return {agent.row + d.row, agent.col + d.col};
}

int GridState::count(Cell kind) const {
    int n = 0;
    for (Cell c : cells) n += (c == kind) ? 1 : 0;
    return n;
}

GridWorld::GridWorld(EnvKind kind, int side, std::uint64_t seed, GridOptions options)
    : kind_(kind), options_(options), rng_(seed, 0x677269645f656e76ULL) {
    if (kind == EnvKind::CartPole) throw std::invalid_argument("GridWorld: CartPole is not a gridworld");
    if (side < kMinSide || side > kMaxSide) {
        throw std::invalid_argument("GridWorld: size must be in [5, 9], got " + std::to_string(side));
    }
    spec_.action_count = kind == EnvKind::Crossing ? 3 : 5;
    spec_.max_steps = 4 * side * side;
    spec_.max_total_reward = 1.0;
    spec_.grid_side = side;
    spec_.prefix_length = 4;
    spec_.obs_length = 4 + side * side * 3;
    layout_ = generate();
    state_ = layout_;
}

GridState GridWorld::generate() {
    return kind_ == EnvKind::Crossing ? generate_crossing(spec_.grid_side, rng_)
                                      : generate_doorkey(spec_.grid_side, rng_);
}

Observation GridWorld::reset() {
    if (options_.rerandomize_layout) layout_ = generate();
    state_ = layout_;
    state_.steps_taken = 0;
    done_ = false;
    return encode_observation(state_);
}

void GridWorld::set_state(const GridState& state) {
    if (state.side != spec_.grid_side) throw std::invalid_argument("GridWorld::set_state: side mismatch");
    state_ = state;
    done_ = false;
}

StepResult GridWorld::step(int action) {
    if (action < 0 || action >= spec_.action_count) {
        throw std::out_of_range("GridWorld::step: action " + std::to_string(action) + " out of range");
    }
    if (done_) throw std::logic_error("GridWorld::step: episode already done");

    StepResult result;
    const GridPos ahead = state_.front();
    switch (static_cast<GridAction>(action)) {
        case GridAction::TurnLeft:
            state_.heading = static_cast<Heading>((static_cast<int>(state_.heading) + 3) % 4);
            break;
        case GridAction::TurnRight:
            state_.heading = static_cast<Heading>((static_cast<int>(state_.heading) + 1) % 4);
            break;
        case GridAction::Forward: {
            const Cell c = state_.at(ahead);
            if (c == Cell::Wall || c == Cell::DoorLocked || c == Cell::Key) break;
            state_.agent = ahead;
            if (c == Cell::Lava) {
                result.done = true;
            } else if (c == Cell::Goal) {
                result.done = true;
                result.success = true;
                result.reward = 1.0;
            }
            break;
        }
        case GridAction::Pickup:
            if (state_.at(ahead) == Cell::Key && !state_.carrying_key) {
                state_.carrying_key = true;
                state_.at(ahead) = Cell::Empty;
            }
            break;
        case GridAction::Toggle:
            if (state_.at(ahead) == Cell::DoorLocked && state_.carrying_key) {
                state_.at(ahead) = Cell::DoorOpen;
            }
            break;
    }
    ++state_.steps_taken;
    if (state_.steps_taken >= spec_.max_steps) result.done = true;
    done_ = result.done;
    result.observation = encode_observation(state_);
    return result;
}

std::string GridWorld::render() const {
    static constexpr char arrows[] = {'>', 'v', '<', '^'};
    std::ostringstream out;
    for (int r = 0; r < state_.side; ++r) {
        for (int c = 0; c < state_.side; ++c) {
            if (state_.agent == GridPos{r, c}) {
                out << arrows[static_cast<int>(state_.heading)];
            } else {
                out << glyph(state_.at({r, c}));
            }
        }
        out << '\n';
    }
    return out.str();
}

Observation encode_observation(const GridState& state) {
    const int side = state.side;
    Observation obs(static_cast<std::size_t>(4 + side * side * 3), 0.0);
    obs[static_cast<std::size_t>(state.heading)] = 1.0;
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            CellCode code = code_of(state.at({r, c}));
            if (state.agent == GridPos{r, c}) code = {kObjectAgent, kColorRed, 0};
            const std::size_t base = static_cast<std::size_t>(4 + (r * side + c) * 3);
            obs[base] = code.object / 10.0;
            obs[base + 1] = code.color / 5.0;
            obs[base + 2] = code.state / 2.0;
        }
    }
    return obs;
}

// ---------------------------------------------------------------------------

CartPoleState cartpole_dynamics(const CartPoleState& s, int action, const CartPoleParams& p) {
    const double force = action == 1 ? p.force : -p.force;
    const double total_mass = p.cart_mass + p.pole_mass;
    const double polemass_length = p.pole_mass * p.pole_half_length;
    const double cos_t = std::cos(s.pole_angle);
    const double sin_t = std::sin(s.pole_angle);
    const double temp = (force + polemass_length * s.pole_tip_velocity * s.pole_tip_velocity * sin_t) / total_mass;
    const double theta_acc = (p.gravity * sin_t - cos_t * temp) /
                             (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
    const double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;

    CartPoleState next = s;
    next.cart_position = s.cart_position + p.dt * s.cart_velocity;
    next.cart_velocity = s.cart_velocity + p.dt * x_acc;
    next.pole_angle = s.pole_angle + p.dt * s.pole_tip_velocity;
    next.pole_tip_velocity = s.pole_tip_velocity + p.dt * theta_acc;
    next.steps_taken = s.steps_taken + 1;
    return next;
}

bool cartpole_out_of_bounds(const CartPoleState& s, const CartPoleParams& p) {
    return s.cart_position < -p.position_bound || s.cart_position > p.position_bound ||
           s.pole_angle < -p.angle_bound || s.pole_angle > p.angle_bound;
}

CartPole::CartPole(std::uint64_t seed, int max_steps, CartPoleParams params)
    : params_(params), rng_(seed, 0x63617274706f6c65ULL) {
    if (max_steps <= 0) throw std::invalid_argument("CartPole: max_steps must be positive");
    spec_.action_count = 2;
    spec_.max_steps = max_steps;
    spec_.max_total_reward = static_cast<double>(max_steps);
    spec_.obs_length = 4;
}

Observation CartPole::reset() {
    const double r = params_.init_range;
    state_.cart_position = rng_.uniform(-r, r);
    state_.cart_velocity = rng_.uniform(-r, r);
    state_.pole_angle = rng_.uniform(-r, r);
    state_.pole_tip_velocity = rng_.uniform(-r, r);
    state_.steps_taken = 0;
    done_ = false;
    return encode_observation(state_);
}

void CartPole::set_state(const CartPoleState& state) {
    state_ = state;
    done_ = false;
}

StepResult CartPole::step(int action) {
    if (action < 0 || action >= spec_.action_count) {
        throw std::out_of_range("CartPole::step: action " + std::to_string(action) + " out of range");
    }
    if (done_) throw std::logic_error("CartPole::step: episode already done");
    state_ = cartpole_dynamics(state_, action, params_);
    StepResult result;
    result.reward = 1.0;
    result.done = cartpole_out_of_bounds(state_, params_) || state_.steps_taken >= spec_.max_steps;
    done_ = result.done;
    result.observation = encode_observation(state_);
    return result;
}

std::string CartPole::render() const {
    std::ostringstream out;
    out << "x=" << state_.cart_position << " v=" << state_.cart_velocity << " theta=" << state_.pole_angle
        << " omega=" << state_.pole_tip_velocity << " t=" << state_.steps_taken << '\n';
    return out.str();
}

Observation encode_observation(const CartPoleState& state) {
    return {state.cart_position, state.cart_velocity, state.pole_angle, state.pole_tip_velocity};
}

std::unique_ptr<Env> make_env(EnvKind kind, std::optional<int> size, std::uint64_t seed,
                              const EnvOptions& options) {
    if (kind == EnvKind::CartPole) return std::make_unique<CartPole>(seed, options.cartpole_max_steps);
    if (!size) throw std::invalid_argument("make_env: gridworlds need a size");
    return std::make_unique<GridWorld>(kind, *size, seed, options.grid);
}

}  // namespace r3
