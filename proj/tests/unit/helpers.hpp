#pragma once

#include <filesystem>
#include <string>

#include "faultline/dram/chip.hpp"

namespace testutil {

inline faultline::dram::ChipGeometry small_geometry() {
    return {1, 32, 256};
}

/// Shrunk refresh window and hammer ceiling so full-budget sweeps stay cheap
/// in unit tests; the acceptance suite exercises the real defaults.
inline faultline::dram::TimingParams small_timing() {
    faultline::dram::TimingParams t;
    t.t_refw_ms = 2.0;
    t.max_hc_per_window = 50'000;
    return t;
}

inline faultline::dram::VulnerabilityConfig small_vuln(uint64_t seed) {
    faultline::dram::VulnerabilityConfig v;
    v.hc_threshold_distribution = {2'000, 50'000};
    v.press_threshold_distribution = {100'000, 3'000'000};
    v.seed = seed;
    return v;
}

inline faultline::dram::ChipState small_chip(uint64_t seed = 7) {
    return faultline::dram::generate_chip(small_geometry(), small_timing(), small_vuln(seed));
}

/// Unique scratch directory under the build tree, wiped on construction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) {
        path = std::filesystem::temp_directory_path() / ("faultline_test_" + name);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testutil
