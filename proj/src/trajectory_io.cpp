#include "r3/trajectory_io.hpp"

#include <istream>
#include <ostream>
#include <string>

namespace r3 {

nlohmann::json transition_to_json(const Transition& t) {
    return {{"obs", t.obs}, {"action", t.action}, {"prob", t.behavior_prob}, {"reward", t.reward}, {"done", t.done}};
}

Transition transition_from_json(const nlohmann::json& j) {
    Transition t;
    t.obs = j.at("obs").get<Observation>();
    t.action = j.at("action").get<int>();
    t.behavior_prob = j.at("prob").get<double>();
    t.reward = j.at("reward").get<double>();
    t.done = j.at("done").get<bool>();
    return t;
}

nlohmann::json trajectory_to_json(const Trajectory& traj) {
    nlohmann::json steps = nlohmann::json::array();
    for (const Transition& t : traj.transitions) steps.push_back(transition_to_json(t));
    return {{"total_reward", traj.total_reward},
            {"success", traj.success},
            {"source_agent", traj.source_agent},
            {"episode_index", traj.episode_index},
            {"length", traj.size()},
            {"transitions", std::move(steps)}};
}

void write_steps_jsonl(const Trajectory& traj, std::ostream& out) {
    for (const Transition& t : traj.transitions) out << transition_to_json(t).dump() << '\n';
}

Trajectory read_steps_jsonl(std::istream& in) {
    Trajectory traj;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        traj.transitions.push_back(transition_from_json(nlohmann::json::parse(line)));
        traj.total_reward += traj.transitions.back().reward;
    }
    return traj;
}

}  // namespace r3
