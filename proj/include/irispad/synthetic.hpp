#pragma once

#include <cstdint>
#include <filesystem>

namespace irispad {

struct SyntheticSummary {
    int images = 0;
    std::filesystem::path manifest_path;
};

/// Writes `count_per_class` bona fide surrogates (band-limited smooth noise)
/// and `count_per_class` attack surrogates (the same base with a quasi-periodic
/// dot-matrix overlay imitating printed lens pigment) as 640x480 PGM files,
/// plus a manifest. Deterministic for a fixed seed.
SyntheticSummary gen_synthetic(const std::filesystem::path& out_dir, int count_per_class,
                               std::uint64_t seed);

} // namespace irispad
