#pragma once

#include <span>
#include <string>

#include "dc/measures.hpp"

namespace dc::cli {

// Line chart: one series per measure (V, N, S, DC), groups on the x-axis in
// the order given.
std::string trajectory_svg(std::span<const GroupMeans> groups, const std::string& title);

// Grouped bars of the same means, one cluster per group.
std::string group_means_svg(std::span<const GroupMeans> groups, const std::string& title);

} // namespace dc::cli
