#pragma once

#include <iosfwd>
#include <vector>

#include "json.hpp"
#include "r3/ppo.hpp"

namespace r3 {

/// {"obs": [...], "action": a, "prob": p, "reward": r, "done": d}
nlohmann::json transition_to_json(const Transition& t);
Transition transition_from_json(const nlohmann::json& j);

/// Trajectory metadata plus its transitions under "transitions".
nlohmann::json trajectory_to_json(const Trajectory& traj);

/// Step dump: one JSON line per transition.
void write_steps_jsonl(const Trajectory& traj, std::ostream& out);
/// Reads a step dump back; totals and success are recomputed from the rewards.
Trajectory read_steps_jsonl(std::istream& in);

}  // namespace r3
