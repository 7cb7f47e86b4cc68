#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace irispad {

/// 8-bit single-channel raster, row-major. Immutable once constructed, so it
/// is safe to share across worker threads.
class GrayImage {
public:
    GrayImage(int width, int height, std::vector<std::uint8_t> data);

    static GrayImage filled(int width, int height, std::uint8_t value);

    int width() const { return width_; }
    int height() const { return height_; }

    std::uint8_t at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    const std::uint8_t* row(int y) const { return data_.data() + static_cast<std::size_t>(y) * width_; }
    std::span<const std::uint8_t> pixels() const { return data_; }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Loads PGM (P5) directly and PNG/BMP/TIFF via OpenCV. Multi-channel inputs
/// are reduced with round(0.299*R + 0.587*G + 0.114*B), saturated to [0,255].
GrayImage load_image(const std::filesystem::path& path);

/// Writes binary PGM (P5, maxval 255); load_image(save_pgm(img)) is identity.
void save_pgm(const GrayImage& img, const std::filesystem::path& path);

/// Halves resolution with a 2x2 box mean, rounding half up. Both dimensions
/// must be even.
GrayImage downsample_half(const GrayImage& img);

} // namespace irispad
