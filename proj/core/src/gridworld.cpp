#include "cirl/gridworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cirl {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

constexpr int kRowStep[kDirections] = {-1, 1, 0, 0};
constexpr int kColStep[kDirections] = {0, 0, -1, 1};

std::vector<CellKind> classify(const GridworldSpec& spec) {
    spec.validate();
    std::vector<CellKind> kinds(spec.width * spec.height + 1, CellKind::ground);
    for (const Cell& c : spec.cliff_cells) kinds[c.row * spec.width + c.col] = CellKind::cliff;
    kinds[spec.goal_cell.row * spec.width + spec.goal_cell.col] = CellKind::goal;
    kinds.back() = CellKind::sink;
    return kinds;
}

std::vector<int> states_of_kind(const std::vector<CellKind>& kinds, CellKind kind) {
    std::vector<int> out;
    for (int s = 0; s < static_cast<int>(kinds.size()); ++s)
        if (kinds[s] == kind) out.push_back(s);
    return out;
}

RewardDecomposition true_reward_of(const GridworldSpec& spec, const std::vector<CellKind>& kinds) {
    const int levels = spec.carefulness_levels;
    RewardDecomposition r{Vector(kDirections * levels), Vector::Zero(kinds.size())};
    for (int a = 0; a < kDirections * levels; ++a)
        r.r_action(a) = -action_cost(a / kDirections + 1, levels, spec.cost_per_care_level);
    for (std::size_t s = 0; s < kinds.size(); ++s) {
        if (kinds[s] == CellKind::cliff) r.r_state(s) = spec.cliff_reward;
        if (kinds[s] == CellKind::goal) r.r_state(s) = spec.goal_reward;
    }
    return r;
}

Cell cell_from_json(const nlohmann::json& j) {
    require(j.is_array() && j.size() == 2 && j[0].is_number_integer() && j[1].is_number_integer(),
            "cells are [row, col] integer pairs");
    return {j[0].get<int>(), j[1].get<int>()};
}

}  // namespace

std::string to_string(Direction d) {
    switch (d) {
        case Direction::up: return "up";
        case Direction::down: return "down";
        case Direction::left: return "left";
        case Direction::right: return "right";
    }
    return "up";
}

Direction direction_from_string(const std::string& text) {
    if (text == "up") return Direction::up;
    if (text == "down") return Direction::down;
    if (text == "left") return Direction::left;
    if (text == "right") return Direction::right;
    throw std::invalid_argument("unknown direction '" + text + "'");
}

GridworldSpec GridworldSpec::carefulness(int levels) {
    GridworldSpec spec;
    spec.carefulness_levels = levels;
    return spec;
}

GridworldSpec GridworldSpec::simple() { return carefulness(1); }

GridworldSpec GridworldSpec::benchmark() {
    GridworldSpec spec = carefulness(1);
    spec.deterministic = true;
    return spec;
}

void GridworldSpec::validate() const {
    require(width >= 2 && height >= 2, "grid must be at least 2 x 2");
    require(!cliff_cells.empty(), "at least one cliff cell is required");
    auto in_bounds = [&](Cell c) { return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width; };
    std::set<std::pair<int, int>> seen;
    for (const Cell& c : cliff_cells) {
        require(in_bounds(c), "cliff cell out of bounds");
        require(seen.insert({c.row, c.col}).second, "duplicate cliff cell");
    }
    require(in_bounds(goal_cell), "goal cell out of bounds");
    require(seen.count({goal_cell.row, goal_cell.col}) == 0, "goal overlaps the cliff");

    // Cliff plus goal must form one contiguous run along a grid edge with the
    // goal at one end.
    std::vector<Cell> run = cliff_cells;
    run.push_back(goal_cell);
    const bool same_row = std::all_of(run.begin(), run.end(), [&](Cell c) { return c.row == goal_cell.row; });
    const bool same_col = std::all_of(run.begin(), run.end(), [&](Cell c) { return c.col == goal_cell.col; });
    require(same_row || same_col, "cliff and goal must lie on one line");
    if (same_row) {
        require(goal_cell.row == 0 || goal_cell.row == height - 1, "cliff must lie along an edge");
    } else {
        require(goal_cell.col == 0 || goal_cell.col == width - 1, "cliff must lie along an edge");
    }
    std::vector<int> pos;
    for (const Cell& c : cliff_cells) pos.push_back(same_row ? c.col : c.row);
    std::sort(pos.begin(), pos.end());
    require(pos.back() - pos.front() + 1 == static_cast<int>(pos.size()), "cliff must be contiguous");
    const int g = same_row ? goal_cell.col : goal_cell.row;
    require(g == pos.front() - 1 || g == pos.back() + 1, "goal must sit at the end of the cliff");
    require(static_cast<int>(run.size()) < width * height, "grid needs at least one ground cell");

    require(carefulness_levels >= 1, "carefulness_levels must be >= 1");
    require(std::isfinite(cliff_reward) && std::isfinite(goal_reward), "rewards must be finite");
    require(cliff_reward < 0.0 && goal_reward > 0.0, "need cliff_reward < 0 < goal_reward");
    require(std::abs(cliff_reward) > std::abs(goal_reward), "need |cliff_reward| > |goal_reward|");
    require(std::isfinite(cost_per_care_level) && cost_per_care_level > 0.0,
            "cost_per_care_level must be positive");
    require(discount >= 0.0 && discount < 1.0, "discount must lie in [0, 1)");
    if (simple_success_prob) {
        require(carefulness_levels == 1, "simple_success_prob only applies when C = 1");
        require(*simple_success_prob > 0.0 && *simple_success_prob <= 1.0,
                "simple_success_prob must lie in (0, 1]");
    }
    require(max_episode_steps >= 1, "max_episode_steps must be >= 1");
}

nlohmann::json to_json(const GridworldSpec& spec) {
    nlohmann::json j;
    j["width"] = spec.width;
    j["height"] = spec.height;
    auto cliffs = nlohmann::json::array();
    for (const Cell& c : spec.cliff_cells) cliffs.push_back({c.row, c.col});
    j["cliff_cells"] = cliffs;
    j["goal_cell"] = {spec.goal_cell.row, spec.goal_cell.col};
    j["carefulness_levels"] = spec.carefulness_levels;
    j["cliff_reward"] = spec.cliff_reward;
    j["goal_reward"] = spec.goal_reward;
    j["cost_per_care_level"] = spec.cost_per_care_level;
    j["discount"] = spec.discount;
    j["slip_model"] = "uniform_random_direction";
    j["deterministic"] = spec.deterministic;
    j["simple_success_prob"] =
        spec.simple_success_prob ? nlohmann::json(*spec.simple_success_prob) : nlohmann::json();
    j["max_episode_steps"] = spec.max_episode_steps;
    return j;
}

GridworldSpec gridworld_spec_from_json(const nlohmann::json& j) {
    require(j.is_object(), "environment config must be a JSON object");
    GridworldSpec spec;
    auto number = [&](const char* key, double& out) {
        if (!j.contains(key)) return;
        require(j.at(key).is_number(), std::string(key) + " must be a number");
        out = j.at(key).get<double>();
    };
    auto integer = [&](const char* key, int& out) {
        if (!j.contains(key)) return;
        require(j.at(key).is_number_integer(), std::string(key) + " must be an integer");
        out = j.at(key).get<int>();
    };
    for (const auto& [key, _] : j.items()) {
        static const std::set<std::string> kKeys = {
            "width",        "height",       "cliff_cells",   "goal_cell",
            "carefulness_levels", "cliff_reward", "goal_reward", "cost_per_care_level",
            "discount",     "slip_model",   "deterministic", "simple_success_prob",
            "max_episode_steps"};
        require(kKeys.count(key) == 1, "unknown environment key '" + key + "'");
    }
    integer("width", spec.width);
    integer("height", spec.height);
    if (j.contains("cliff_cells")) {
        require(j.at("cliff_cells").is_array(), "cliff_cells must be an array");
        spec.cliff_cells.clear();
        for (const auto& c : j.at("cliff_cells")) spec.cliff_cells.push_back(cell_from_json(c));
    }
    if (j.contains("goal_cell")) spec.goal_cell = cell_from_json(j.at("goal_cell"));
    integer("carefulness_levels", spec.carefulness_levels);
    number("cliff_reward", spec.cliff_reward);
    number("goal_reward", spec.goal_reward);
    number("cost_per_care_level", spec.cost_per_care_level);
    number("discount", spec.discount);
    if (j.contains("slip_model")) {
        require(j.at("slip_model") == "uniform_random_direction",
                "slip_model must be \"uniform_random_direction\"");
    }
    if (j.contains("deterministic")) {
        require(j.at("deterministic").is_boolean(), "deterministic must be a boolean");
        spec.deterministic = j.at("deterministic").get<bool>();
    }
    if (j.contains("simple_success_prob") && !j.at("simple_success_prob").is_null()) {
        require(j.at("simple_success_prob").is_number(), "simple_success_prob must be a number");
        spec.simple_success_prob = j.at("simple_success_prob").get<double>();
    }
    integer("max_episode_steps", spec.max_episode_steps);
    spec.validate();
    return spec;
}

GridworldSpec load_gridworld_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open environment config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("environment config '" + path + "' is not valid JSON: " + e.what());
    }
    return gridworld_spec_from_json(j);
}

std::string fingerprint(const GridworldSpec& spec) {
    const std::string text = to_json(spec).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

double success_probability(int care, int levels) {
    if (care < 1 || care > levels) throw std::out_of_range("care level out of range");
    return 1.0 - std::ldexp(1.0, -care);
}

double action_cost(int care, int levels, double cost_per_care_level) {
    if (care < 1 || care > levels) throw std::out_of_range("care level out of range");
    return cost_per_care_level * care;
}

Gridworld::Gridworld(GridworldSpec spec)
    : spec_(std::move(spec)),
      kinds_(classify(spec_)),
      ground_(states_of_kind(kinds_, CellKind::ground)),
      cliff_(states_of_kind(kinds_, CellKind::cliff)),
      true_reward_(true_reward_of(spec_, kinds_)),
      mdp_(build_mdp(spec_, kinds_, true_reward_)),
      fingerprint_(cirl::fingerprint(spec_)) {}

Mdp Gridworld::build_mdp(const GridworldSpec& spec, const std::vector<CellKind>& kinds,
                         const RewardDecomposition& reward) {
    const int ns = spec.width * spec.height + 1;
    const int sink = ns - 1;
    const int na = kDirections * spec.carefulness_levels;
    std::vector<Matrix> t(na, Matrix::Zero(ns, ns));
    auto neighbour = [&](int row, int col, int d) {
        const int r2 = row + kRowStep[d];
        const int c2 = col + kColStep[d];
        if (r2 < 0 || r2 >= spec.height || c2 < 0 || c2 >= spec.width) return row * spec.width + col;
        return r2 * spec.width + c2;
    };
    for (int a = 0; a < na; ++a) {
        const int dir = a % kDirections;
        const int care = a / kDirections + 1;
        double p = cirl::success_probability(care, spec.carefulness_levels);
        if (spec.simple_success_prob) p = *spec.simple_success_prob;
        if (spec.deterministic) p = 1.0;
        t[a](sink, sink) = 1.0;
        for (int s = 0; s < sink; ++s) {
            if (kinds[s] != CellKind::ground) {
                t[a](s, sink) = 1.0;
                continue;
            }
            const int row = s / spec.width;
            const int col = s % spec.width;
            t[a](s, neighbour(row, col, dir)) += p;
            if (p < 1.0)
                for (int d = 0; d < kDirections; ++d) t[a](s, neighbour(row, col, d)) += (1.0 - p) / kDirections;
        }
    }
    std::vector<bool> mask(ns, false);
    mask[sink] = true;
    return Mdp(std::move(t), reward.table(mask), spec.discount, {sink});
}

int Gridworld::state_of(Cell cell) const {
    if (cell.row < 0 || cell.row >= spec_.height || cell.col < 0 || cell.col >= spec_.width)
        throw std::out_of_range("cell out of bounds");
    return cell.row * spec_.width + cell.col;
}

Cell Gridworld::cell_of(int state) const {
    if (state < 0 || state >= sink()) throw std::out_of_range("state has no grid cell");
    return {state / spec_.width, state % spec_.width};
}

CellKind Gridworld::kind(int state) const {
    if (state < 0 || state >= n_states()) throw std::out_of_range("state out of range");
    return kinds_[state];
}

bool Gridworld::is_exit(int state) const {
    const CellKind k = kind(state);
    return k == CellKind::cliff || k == CellKind::goal;
}

int Gridworld::action_index(CareAction action) const {
    if (action.care < 1 || action.care > levels()) throw std::out_of_range("care level out of range");
    return (action.care - 1) * kDirections + static_cast<int>(action.direction);
}

CareAction Gridworld::care_action(int action) const {
    if (action < 0 || action >= n_actions()) throw std::out_of_range("action out of range");
    return {static_cast<Direction>(action % kDirections), action / kDirections + 1};
}

double Gridworld::success_probability(int care) const {
    const double p = cirl::success_probability(care, levels());
    if (spec_.deterministic) return 1.0;
    if (spec_.simple_success_prob) return *spec_.simple_success_prob;
    return p;
}

double Gridworld::action_cost(int care) const {
    return cirl::action_cost(care, levels(), spec_.cost_per_care_level);
}

Vector Gridworld::canonicalize(const Vector& r_state) const {
    if (r_state.size() != n_states()) throw std::invalid_argument("R_S length does not match N_S");
    double mean = 0.0;
    for (int s : ground_) mean += r_state(s);
    mean /= static_cast<double>(ground_.size());
    Vector out = r_state;
    const double exit_shift = mean / (1.0 - spec_.discount);
    for (int s = 0; s < sink(); ++s) out(s) -= is_exit(s) ? exit_shift : mean;
    out(sink()) = 0.0;
    return out;
}

double Gridworld::severity_ratio(const Vector& r_state) const {
    double cliff = 0.0;
    for (int s : cliff_) cliff += r_state(s);
    cliff /= static_cast<double>(cliff_.size());
    return std::abs(cliff) / std::abs(r_state(goal_state()));
}

}  // namespace cirl
