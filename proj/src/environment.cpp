#include "icf/environment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "icf/io.hpp"

namespace icf::env {

const char* to_string(Variant v) { return v == Variant::basic ? "basic" : "extended"; }

Variant parse_variant(const std::string& text) {
    if (text == "basic") return Variant::basic;
    if (text == "extended") return Variant::extended;
    throw std::invalid_argument("unknown environment variant '" + text + "' (expected basic|extended)");
}

const char* to_string(StartMode m) { return m == StartMode::uniform ? "uniform" : "wall"; }

StartMode parse_start_mode(const std::string& text) {
    if (text == "uniform") return StartMode::uniform;
    if (text == "wall") return StartMode::wall;
    throw std::invalid_argument("unknown start mode '" + text + "' (expected uniform|wall)");
}

void EnvConfig::validate() const {
    if (grid_height == 0 || grid_width == 0 || square_size == 0)
        throw std::invalid_argument("grid_height, grid_width and square_size must be positive");
    if (square_size > std::min(grid_height, grid_width))
        throw std::invalid_argument("square_size must not exceed the grid extents");
    if (!(0.0 <= color_min && color_min < color_max && color_max <= 1.0))
        throw std::invalid_argument("colors must satisfy 0 <= color_min < color_max <= 1");
    if (variant == Variant::extended && !(color_step > 0.0))
        throw std::invalid_argument("color_step must be positive for the extended variant");
}

namespace {

enum class Effect { up, down, left, right, down_right, color_inc, color_dec };

const std::vector<std::string> basic_labels{"up", "down", "left", "right"};
const std::vector<std::string> extended_labels{"down",  "down_dup",  "up",        "left",
                                               "right", "down_right", "color_inc", "color_dec"};

const Effect basic_effects[] = {Effect::up, Effect::down, Effect::left, Effect::right};
const Effect extended_effects[] = {Effect::down,       Effect::down,      Effect::up,       Effect::left,
                                   Effect::right,      Effect::down_right, Effect::color_inc, Effect::color_dec};

}  // namespace

const std::vector<std::string>& action_labels(Variant v) {
    return v == Variant::basic ? basic_labels : extended_labels;
}

std::size_t num_actions(Variant v) { return action_labels(v).size(); }

GridWorld::GridWorld(EnvConfig config) : config_(config) {
    config_.validate();
    if (config_.variant == Variant::basic) {
        colors_ = {1.0};
    } else {
        const auto levels =
            static_cast<std::size_t>(std::floor((config_.color_max - config_.color_min) / config_.color_step + 1e-9));
        for (std::size_t i = 0; i <= levels; ++i)
            colors_.push_back(std::min(config_.color_max, config_.color_min + static_cast<double>(i) * config_.color_step));
        if (colors_.back() < config_.color_max) colors_.push_back(config_.color_max);
    }
}

Tensor GridWorld::render(int row, int col, double color) const {
    Tensor obs(observation_shape(), 0.0);
    const auto w = config_.grid_width;
    const auto n = static_cast<int>(config_.square_size);
    for (int r = row; r < row + n; ++r)
        for (int c = col; c < col + n; ++c) obs[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] = color;
    return obs;
}

GridState GridWorld::make_state(int row, int col, double color) const {
    if (row < 0 || row > max_row() || col < 0 || col > max_col())
        throw std::out_of_range("square position (" + std::to_string(row) + "," + std::to_string(col) +
                                ") outside the grid");
    return GridState{row, col, color, render(row, col, color)};
}

GridState GridWorld::reset(Rng& rng) const {
    int row = 0, col = 0;
    if (config_.start == StartMode::uniform) {
        std::uniform_int_distribution<int> rows(0, max_row()), cols(0, max_col());
        row = rows(rng);
        col = cols(rng);
    } else {
        std::vector<std::pair<int, int>> border;
        for (int r = 0; r <= max_row(); ++r)
            for (int c = 0; c <= max_col(); ++c)
                if (r == 0 || c == 0 || r == max_row() || c == max_col()) border.emplace_back(r, c);
        std::uniform_int_distribution<std::size_t> pick(0, border.size() - 1);
        std::tie(row, col) = border[pick(rng)];
    }
    double color = 1.0;
    if (config_.variant == Variant::extended) {
        std::uniform_int_distribution<std::size_t> pick(0, colors_.size() - 1);
        color = colors_[pick(rng)];
    }
    return make_state(row, col, color);
}

GridState GridWorld::step(const GridState& state, std::size_t action) const {
    if (action >= num_actions())
        throw std::out_of_range("action " + std::to_string(action) + " out of range for " +
                                std::to_string(num_actions()) + " actions");
    const Effect effect = config_.variant == Variant::basic ? basic_effects[action] : extended_effects[action];
    int row = state.row, col = state.col;
    double color = state.color;
    switch (effect) {
    case Effect::up: --row; break;
    case Effect::down: ++row; break;
    case Effect::left: --col; break;
    case Effect::right: ++col; break;
    case Effect::down_right: ++row, ++col; break;
    case Effect::color_inc: color = std::min(config_.color_max, color + config_.color_step); break;
    case Effect::color_dec: color = std::max(config_.color_min, color - config_.color_step); break;
    }
    row = std::clamp(row, 0, max_row());
    col = std::clamp(col, 0, max_col());
    return make_state(row, col, color);
}

std::vector<double> GridWorld::ground_truth_factors(const GridState& state) const {
    if (config_.variant == Variant::basic) return {double(state.row), double(state.col)};
    return {double(state.row), double(state.col), state.color};
}

std::vector<GridState> GridWorld::all_states() const {
    std::vector<GridState> out;
    for (double color : colors_)
        for (int r = 0; r <= max_row(); ++r)
            for (int c = 0; c <= max_col(); ++c) out.push_back(make_state(r, c, color));
    return out;
}

std::string to_csv_row(const GridState& state, Variant variant) {
    return std::string(to_string(variant)) + "," + std::to_string(state.row) + "," + std::to_string(state.col) + "," +
           format_double(state.color);
}

GridState from_csv_row(const GridWorld& world, const std::string& line) {
    const auto fields = split(trim(line), ',');
    if (fields.size() != 4) throw std::invalid_argument("state row needs 4 fields: '" + line + "'");
    if (parse_variant(fields[0]) != world.variant())
        throw std::invalid_argument("state row variant '" + fields[0] + "' does not match the environment");
    return world.make_state(static_cast<int>(parse_integer(fields[1])), static_cast<int>(parse_integer(fields[2])),
                            parse_double(fields[3]));
}

}  // namespace icf::env
