#include "icf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace icf::metrics {

namespace {

std::vector<std::string> feature_labels(std::size_t n, const char* prefix) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

std::vector<std::string> factor_labels(const env::GridWorld& world) {
    std::vector<std::string> out{"row", "col"};
    if (world.num_factors() == 3) out.push_back("color");
    return out;
}

void require_probes(const std::vector<env::GridState>& probes) {
    if (probes.empty()) throw std::invalid_argument("probe set is empty");
}

}  // namespace

std::vector<env::GridState> probe_states(const env::GridWorld& world, std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<env::GridState> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(world.reset(rng));
    return out;
}

void regress(const std::vector<std::vector<double>>& features, const std::vector<std::vector<double>>& factors,
             Matrix& standardized, Matrix& raw) {
    if (features.empty() || features.size() != factors.size())
        throw std::invalid_argument("regress: need matching, non-empty sample sets");
    const std::size_t N = features.size(), n = features[0].size(), F = factors[0].size();
    std::vector<double> mean_h(n, 0.0), mean_y(F, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t k = 0; k < n; ++k) mean_h[k] += features[i][k];
        for (std::size_t j = 0; j < F; ++j) mean_y[j] += factors[i][j];
    }
    for (auto& v : mean_h) v /= double(N);
    for (auto& v : mean_y) v /= double(N);

    std::vector<double> var_h(n, 0.0), var_y(F, 0.0);
    Matrix cov(n, F);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const double dh = features[i][k] - mean_h[k];
            var_h[k] += dh * dh;
            for (std::size_t j = 0; j < F; ++j) cov(k, j) += dh * (factors[i][j] - mean_y[j]);
        }
        for (std::size_t j = 0; j < F; ++j) var_y[j] += (factors[i][j] - mean_y[j]) * (factors[i][j] - mean_y[j]);
    }

    standardized = Matrix(n, F);
    raw = Matrix(n, F);
    // Variances below this are treated as exactly constant columns.
    constexpr double tiny = 1e-24;
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < F; ++j) {
            if (var_h[k] <= tiny * double(N)) continue;
            raw(k, j) = cov(k, j) / var_h[k];
            if (var_y[j] <= tiny * double(N)) continue;
            standardized(k, j) = cov(k, j) / std::sqrt(var_h[k] * var_y[j]);
        }
}

Matrix slope_matrix(const model::Model& m, const env::GridWorld& world, const std::vector<env::GridState>& probes) {
    require_probes(probes);
    std::vector<std::vector<double>> h, y;
    for (const auto& s : probes) {
        h.push_back(model::encode(m, s.observation).values());
        y.push_back(world.ground_truth_factors(s));
    }
    Matrix standardized, raw;
    regress(h, y, standardized, raw);
    standardized.row_labels = feature_labels(m.num_features(), "h");
    standardized.col_labels = factor_labels(world);
    return standardized;
}

Matrix policy_matrix(const model::Model& m, const env::GridWorld& world, const std::vector<env::GridState>& probes) {
    require_probes(probes);
    Matrix out(m.num_policies(), m.num_actions());
    for (const auto& s : probes)
        for (std::size_t k = 0; k < m.num_policies(); ++k) {
            const auto p = model::policy_probs(m, s.observation, k);
            for (std::size_t a = 0; a < p.size(); ++a) out(k, a) += p[a];
        }
    for (double& v : out.data) v /= double(probes.size());
    out.row_labels = feature_labels(m.num_policies(), "pi");
    out.col_labels = env::action_labels(world.variant());
    return out;
}

SelectivityMatrices selectivity_and_objective_matrices(const model::Model& m, const env::GridWorld& world,
                                                       const std::vector<env::GridState>& probes,
                                                       const objective::SelectivityConfig& config) {
    require_probes(probes);
    const std::size_t K = m.num_policies(), A = m.num_actions();
    SelectivityMatrices out{Matrix(K, A), Matrix(K, A)};
    for (const auto& s : probes) {
        const Tensor h = model::encode(m, s.observation);
        std::vector<Tensor> h_next;
        for (std::size_t a = 0; a < A; ++a) h_next.push_back(model::encode(m, world.step(s, a).observation));
        for (std::size_t k = 0; k < K; ++k) {
            const auto p = model::policy_probs(m, s.observation, k);
            for (std::size_t a = 0; a < A; ++a) {
                const double sel = objective::selectivity(h, h_next[a], k, config);
                out.selectivity(k, a) += sel;
                out.objective(k, a) -= p[a] * objective::disentanglement_reward(sel, config);
            }
        }
    }
    for (Matrix* mat : {&out.selectivity, &out.objective}) {
        for (double& v : mat->data) v /= double(probes.size());
        mat->row_labels = feature_labels(K, "pi");
        mat->col_labels = env::action_labels(world.variant());
    }
    return out;
}

ReconstructionReport reconstruction_report(const model::Model& m, const std::vector<env::GridState>& probes,
                                           std::size_t samples) {
    require_probes(probes);
    ReconstructionReport out;
    double total = 0.0;
    std::size_t pixels = 0;
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const Tensor& s = probes[i].observation;
        Tensor r = model::reconstruct(m, s);
        for (std::size_t p = 0; p < s.size(); ++p) total += (s[p] - r[p]) * (s[p] - r[p]);
        pixels += s.size();
        if (i < samples) {
            out.originals.push_back(s);
            out.reconstructions.push_back(std::move(r));
        }
    }
    out.mse = total / double(pixels);
    return out;
}

MetricsBundle evaluate(const model::Model& m, const env::GridWorld& world, const std::vector<env::GridState>& probes,
                       const objective::SelectivityConfig& config) {
    require_probes(probes);
    MetricsBundle b;
    std::vector<std::vector<double>> h, y;
    for (const auto& s : probes) {
        h.push_back(model::encode(m, s.observation).values());
        y.push_back(world.ground_truth_factors(s));
    }
    regress(h, y, b.slope, b.raw_slope);
    for (Matrix* mat : {&b.slope, &b.raw_slope}) {
        mat->row_labels = feature_labels(m.num_features(), "h");
        mat->col_labels = factor_labels(world);
    }
    b.policy = policy_matrix(m, world, probes);
    auto so = selectivity_and_objective_matrices(m, world, probes, config);
    b.selectivity = std::move(so.selectivity);
    b.objective = std::move(so.objective);
    b.recon_mse = reconstruction_report(m, probes, 0).mse;
    b.probe_set_size = probes.size();
    return b;
}

std::size_t argmax_row(const Matrix& m, std::size_t r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < m.cols; ++c)
        if (m(r, c) > m(r, best)) best = c;
    return best;
}

bool disjoint_factor_cover(const Matrix& slope, double threshold) {
    if (slope.cols < 2) return false;
    for (std::size_t k1 = 0; k1 < slope.rows; ++k1) {
        if (!(std::fabs(slope(k1, 0)) > threshold)) continue;
        for (std::size_t k2 = 0; k2 < slope.rows; ++k2)
            if (k2 != k1 && std::fabs(slope(k2, 1)) > threshold) return true;
    }
    return false;
}

bool policies_cover_actions(const Matrix& policy, double min_peak) {
    std::vector<bool> covered(policy.cols, false);
    for (std::size_t k = 0; k < policy.rows; ++k) {
        const std::size_t a = argmax_row(policy, k);
        if (!(policy(k, a) > min_peak)) return false;
        covered[a] = true;
    }
    return std::all_of(covered.begin(), covered.end(), [](bool c) { return c; });
}

}  // namespace icf::metrics
