#include "irispad/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

#include "irispad/errors.hpp"
#include "irispad/image.hpp"
#include "irispad/pipeline.hpp"
#include "irispad/rng.hpp"

namespace irispad {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 480;
constexpr int kCell = 40; // coarse noise cell size in pixels

// Band-limited smooth texture: coarse seeded noise, bilinearly upsampled,
// plus a little fine noise so histograms are not degenerate.
std::vector<double> smooth_base(Rng& rng) {
    const int gw = kWidth / kCell + 2;
    const int gh = kHeight / kCell + 2;
    std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
    for (double& v : grid) v = rng.uniform(60.0, 190.0);

    std::vector<double> base(static_cast<std::size_t>(kWidth) * kHeight);
    for (int y = 0; y < kHeight; ++y) {
        const double gy = static_cast<double>(y) / kCell;
        const int y0 = static_cast<int>(gy);
        const double fy = gy - y0;
        for (int x = 0; x < kWidth; ++x) {
            const double gx = static_cast<double>(x) / kCell;
            const int x0 = static_cast<int>(gx);
            const double fx = gx - x0;
            const double top = grid[y0 * gw + x0] * (1 - fx) + grid[y0 * gw + x0 + 1] * fx;
            const double bottom =
                grid[(y0 + 1) * gw + x0] * (1 - fx) + grid[(y0 + 1) * gw + x0 + 1] * fx;
            base[static_cast<std::size_t>(y) * kWidth + x] = top * (1 - fy) + bottom * fy;
        }
    }
    for (double& v : base) v += rng.uniform(-6.0, 6.0);
    return base;
}

// Quasi-periodic dark dot lattice, the printed-pigment surrogate.
void overlay_dots(std::vector<double>& base, Rng& rng) {
    const double period_x = rng.uniform(5.5, 7.5);
    const double period_y = rng.uniform(5.5, 7.5);
    const double phase_x = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double phase_y = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amplitude = rng.uniform(30.0, 50.0);

    for (int y = 0; y < kHeight; ++y) {
        const double cy = std::cos(2.0 * std::numbers::pi * y / period_y + phase_y);
        for (int x = 0; x < kWidth; ++x) {
            const double cx = std::cos(2.0 * std::numbers::pi * x / period_x + phase_x);
            const double dot = cx * cy;
            if (dot > 0.25)
                base[static_cast<std::size_t>(y) * kWidth + x] -= amplitude * (dot - 0.25) / 0.75;
        }
    }
}

GrayImage to_image(const std::vector<double>& values) {
    std::vector<std::uint8_t> data(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        data[i] = static_cast<std::uint8_t>(std::clamp(std::round(values[i]), 0.0, 255.0));
    return GrayImage(kWidth, kHeight, std::move(data));
}

} // namespace

SyntheticSummary gen_synthetic(const std::filesystem::path& out_dir, int count_per_class,
                               std::uint64_t seed) {
    if (count_per_class < 1) throw ValidationError("count per class must be at least 1");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (!std::filesystem::is_directory(out_dir))
        throw IoError("cannot create output directory: " + out_dir.string());

    Rng rng(seed);
    Manifest manifest;
    char name[64];
    for (int i = 0; i < count_per_class; ++i) {
        std::snprintf(name, sizeof(name), "bonafide_%04d.pgm", i);
        save_pgm(to_image(smooth_base(rng)), out_dir / name);
        manifest.entries.push_back({name, kBonafideLabel, "", ""});
    }
    for (int i = 0; i < count_per_class; ++i) {
        std::snprintf(name, sizeof(name), "attack_%04d.pgm", i);
        auto values = smooth_base(rng);
        overlay_dots(values, rng);
        save_pgm(to_image(values), out_dir / name);
        manifest.entries.push_back({name, kAttackLabel, "", ""});
    }

    SyntheticSummary summary;
    summary.images = 2 * count_per_class;
    summary.manifest_path = out_dir / "manifest.csv";
    save_manifest(manifest, summary.manifest_path);
    return summary;
}

} // namespace irispad
