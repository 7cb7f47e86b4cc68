#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "irispad/image.hpp"

namespace irispad {

enum class Resolution { Full, Half };

/// Identifies one of the 16 feature sets: a native filter size plus the
/// resolution it was computed at. Half resolution doubles the effective
/// filter support, so the tag carries the effective size (s06..s34).
struct ScaleId {
    int filter_size = 0; // native odd size, 3..17
    Resolution res = Resolution::Full;

    int effective_size() const { return res == Resolution::Half ? 2 * filter_size : filter_size; }
    std::string tag() const; // "s03_full", "s06_half", ...
    static ScaleId parse_tag(const std::string& tag);

    friend auto operator<=>(const ScaleId&, const ScaleId&) = default;
};

/// n zero-mean s x s filters defining one BSIF scale. Coefficients are stored
/// filter-major, each filter row-major.
struct FilterBank {
    int size = 0; // s
    int bits = 0; // n
    std::vector<double> coeffs;

    std::span<const double> filter(int i) const {
        const std::size_t len = static_cast<std::size_t>(size) * size;
        return {coeffs.data() + static_cast<std::size_t>(i) * len, len};
    }
};

/// Valid (s, n) combinations: s odd in 3..17, n in 5..12, minus n >= 9 with
/// s = 3 (nine orthonormal zero-mean filters cannot fit in a 3x3 patch).
bool is_valid_combination(int size, int bits);

/// All eight native filter sizes, ascending.
std::span<const int> native_scales();

/// Reads a filter asset file: first line "<n> <s>", then n*s*s reals.
FilterBank load_filter_bank(const std::filesystem::path& path);

/// Checks shape, the (s, n) combination, the zero-mean invariant and that no
/// filter is the zero vector. Throws ValidationError.
void validate_filter_bank(const FilterBank& bank);

/// Deterministic stand-in for statistically learned filters: seeded uniform
/// draws, constant component projected out, then orthonormalized in order.
FilterBank synthesize_filter_bank(int size, int bits, std::uint64_t seed);

void save_filter_bank(const FilterBank& bank, const std::filesystem::path& path);

/// Per-pixel n-bit BSIF codes, same dimensions as the source image.
struct CodeMap {
    int width = 0;
    int height = 0;
    int bits = 0;
    std::vector<std::uint16_t> codes;
};

/// Correlates every filter with the s x s neighborhood of each pixel using
/// circular wrap at the borders; bit i (1-based) is set iff the response of
/// filter i is strictly positive and contributes 2^(i-1) to the code.
CodeMap compute_code_map(const GrayImage& img, const FilterBank& bank);

/// Normalized 2^n-bin histogram tagged with its scale.
struct FeatureVector {
    std::vector<double> bins;
    ScaleId scale;
    int bits = 0;
};

/// Raw per-code pixel counts, length 2^n.
std::vector<std::uint64_t> histogram_counts(const CodeMap& map);

/// L1-normalized histogram: counts divided by width*height.
FeatureVector histogram(const CodeMap& map, const ScaleId& scale);

/// Runs every bank over the image and its half-resolution copy. Returns
/// 2*|banks| feature vectors: full resolution in ascending filter size, then
/// half resolution in ascending filter size. Banks must share one bit depth
/// and be sorted by ascending size; the image must have even dimensions.
std::vector<FeatureVector> extract_all(const GrayImage& img, std::span<const FilterBank> banks);

/// Conventional asset file name, e.g. "ICAtextureFilters_7x7_8bit.txt".
std::string filter_asset_name(int size, int bits);

} // namespace irispad
