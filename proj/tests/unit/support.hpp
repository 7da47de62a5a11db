#pragma once

#include <cstddef>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "icf/tensor.hpp"

namespace icf::test {

// ((i*a + b) mod m - m/2) / d; matches pattern() in oracles/generate.py.
inline std::vector<double> pattern(std::size_t n, std::size_t a, std::size_t b, std::size_t m, double d) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = (static_cast<double>((i * a + b) % m) - static_cast<double>(m / 2)) / d;
    return v;
}

inline Tensor pattern_tensor(Shape shape, std::size_t a, std::size_t b, std::size_t m, double d) {
    const auto n = element_count(shape);
    return Tensor(std::move(shape), pattern(n, a, b, m, d));
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (auto& x : t.data()) x = u(rng);
    return t;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("icf_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace icf::test
