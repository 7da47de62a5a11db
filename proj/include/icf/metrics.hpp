#pragma once
// Read-only diagnostics of a trained model over a probe set of states.
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "icf/environment.hpp"
#include "icf/model.hpp"
#include "icf/selectivity.hpp"
#include "icf/tensor.hpp"

namespace icf::metrics {

/// Dense row-major matrix with optional row/column labels.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;
    std::vector<std::string> row_labels, col_labels;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct MetricsBundle {
    Matrix slope;          // feature x factor, standardized (Pearson correlation)
    Matrix raw_slope;      // feature x factor, least-squares slope of factor on feature
    Matrix policy;         // policy x action, mean pi_k(a|s)
    Matrix selectivity;    // policy x action, mean sel(s, a, k)
    Matrix objective;      // policy x action, mean -pi_k(a|s) reward(sel(s, a, k))
    double recon_mse = 0.0;  // per pixel
    std::size_t probe_set_size = 0;
};

/// `count` states drawn by reset() from an rng seeded with `seed`.
std::vector<env::GridState> probe_states(const env::GridWorld& world, std::size_t count, std::uint64_t seed);

/// Least-squares slopes of each factor column on each feature column.
/// features: one row per sample, factors: one row per sample.
/// Zero-variance features or factors give slope 0.
void regress(const std::vector<std::vector<double>>& features, const std::vector<std::vector<double>>& factors,
             Matrix& standardized, Matrix& raw);

Matrix slope_matrix(const model::Model& m, const env::GridWorld& world, const std::vector<env::GridState>& probes);
Matrix policy_matrix(const model::Model& m, const env::GridWorld& world, const std::vector<env::GridState>& probes);

struct SelectivityMatrices {
    Matrix selectivity;
    Matrix objective;
};
SelectivityMatrices selectivity_and_objective_matrices(const model::Model& m, const env::GridWorld& world,
                                                       const std::vector<env::GridState>& probes,
                                                       const objective::SelectivityConfig& config);

struct ReconstructionReport {
    double mse = 0.0;
    std::vector<Tensor> originals;
    std::vector<Tensor> reconstructions;
};
/// Per-pixel MSE over the probe set; keeps the first `samples` pairs.
ReconstructionReport reconstruction_report(const model::Model& m, const std::vector<env::GridState>& probes,
                                           std::size_t samples);

MetricsBundle evaluate(const model::Model& m, const env::GridWorld& world, const std::vector<env::GridState>& probes,
                       const objective::SelectivityConfig& config);

/// Two distinct features k1 != k2 with |slope(k1, 0)| > threshold and
/// |slope(k2, 1)| > threshold.
bool disjoint_factor_cover(const Matrix& slope, double threshold);

/// Every row's max exceeds `min_peak` and the row argmaxes cover all columns.
bool policies_cover_actions(const Matrix& policy, double min_peak);

std::size_t argmax_row(const Matrix& m, std::size_t r);

}  // namespace icf::metrics
