#pragma once

#include "cirl/gridworld.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace cirl {

/// Shortest round-trip decimal form of `value`.
std::string format_number(double value);

/// height rows x width columns, row 0 at the top, comma separated. The
/// sink has no cell and is omitted.
std::string grid_csv(const Gridworld& world, const Vector& per_state);

/// Action index per cell; '.' on cliff and goal cells, whose action is
/// irrelevant.
std::string policy_grid_csv(const Gridworld& world, const DeterministicPolicy& policy);

/// One row per state: state,row,col then Q for every action.
std::string q_table_csv(const Gridworld& world, const Matrix& q);

/// "# env_fingerprint=<fp> seed=<seed>" line prepended to written CSV artefacts.
std::string provenance_comment(const std::string& env_fingerprint, std::optional<std::uint64_t> seed);

/// Parses a grid CSV back into a per-state vector ('.' becomes 0). Lines
/// starting with '#' are skipped.
Vector parse_grid_csv(const Gridworld& world, const std::string& text);

std::string ascii_grid(const Gridworld& world, const Vector& per_state);
/// Direction glyph plus care level per ground cell, C for cliff, G for goal.
std::string ascii_policy(const Gridworld& world, const DeterministicPolicy& policy);

/// Diverging heatmap (blue negative, white zero, red positive), scaled by
/// the largest magnitude.
std::string svg_heatmap(const Gridworld& world, const Vector& per_state, const std::string& title);

/// One arrow per ground cell; arrow length is proportional to care / C.
std::string svg_policy(const Gridworld& world, const DeterministicPolicy& policy,
                       const std::string& title);

}  // namespace cirl
