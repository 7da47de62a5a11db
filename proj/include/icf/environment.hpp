#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "icf/tensor.hpp"

namespace icf {

using Rng = std::mt19937_64;

namespace env {

enum class Variant { basic, extended };

/// How reset() draws the square's position: anywhere, or only touching a wall.
enum class StartMode { uniform, wall };

const char* to_string(Variant v);
Variant parse_variant(const std::string& text);
const char* to_string(StartMode m);
StartMode parse_start_mode(const std::string& text);

struct EnvConfig {
    std::size_t grid_height = 10;
    std::size_t grid_width = 10;
    std::size_t square_size = 2;
    Variant variant = Variant::basic;
    double color_step = 0.125;
    double color_min = 0.25;
    double color_max = 1.0;
    std::uint64_t seed = 0;
    StartMode start = StartMode::uniform;

    /// Throws std::invalid_argument naming the violated constraint.
    void validate() const;
    bool operator==(const EnvConfig&) const = default;
};

struct GridState {
    int row = 0;
    int col = 0;
    double color = 1.0;
    Tensor observation;  // [1 x H x W]
};

/// Action labels in index order.
const std::vector<std::string>& action_labels(Variant v);
std::size_t num_actions(Variant v);

/// The movable-square gridworld. Transitions are deterministic; moves that
/// would leave the grid are clamped, so blocked actions leave the state
/// unchanged.
class GridWorld {
public:
    explicit GridWorld(EnvConfig config);

    const EnvConfig& config() const { return config_; }
    Variant variant() const { return config_.variant; }
    std::size_t num_actions() const { return env::num_actions(config_.variant); }
    Shape observation_shape() const { return {1, config_.grid_height, config_.grid_width}; }
    int max_row() const { return static_cast<int>(config_.grid_height - config_.square_size); }
    int max_col() const { return static_cast<int>(config_.grid_width - config_.square_size); }

    /// Discrete brightness levels min, min+step, ..., max (just {1.0} for basic).
    const std::vector<double>& color_levels() const { return colors_; }

    GridState reset(Rng& rng) const;
    GridState step(const GridState& state, std::size_t action) const;

    /// Builds a rendered state; throws std::out_of_range on invalid position.
    GridState make_state(int row, int col, double color) const;
    Tensor render(int row, int col, double color) const;

    /// (row, col) for basic, (row, col, color) for extended.
    std::vector<double> ground_truth_factors(const GridState& state) const;
    std::size_t num_factors() const { return config_.variant == Variant::basic ? 2 : 3; }

    /// Every reachable (row, col, color) state.
    std::vector<GridState> all_states() const;

private:
    EnvConfig config_;
    std::vector<double> colors_;
};

/// Replay-log serialization: "variant,row,col,color".
std::string to_csv_row(const GridState& state, Variant variant);
GridState from_csv_row(const GridWorld& world, const std::string& line);

}  // namespace env
}  // namespace icf
