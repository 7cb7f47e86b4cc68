#include "irispad/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "irispad/errors.hpp"
#include "textio.hpp"

namespace irispad {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

// Reads one whitespace-delimited PGM header token, skipping '#' comments.
std::string next_pgm_token(std::istream& in) {
    std::string token;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        token.push_back(static_cast<char>(c));
        c = in.get();
    }
    return token;
}

GrayImage load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path.string());

    const std::string magic = next_pgm_token(in);
    if (magic != "P5") throw FormatError("unsupported PGM magic '" + magic + "' in " + path.string());

    const auto width = textio::parse_int(next_pgm_token(in), "PGM width");
    const auto height = textio::parse_int(next_pgm_token(in), "PGM height");
    const auto maxval = textio::parse_int(next_pgm_token(in), "PGM maxval");
    if (width < 1 || height < 1)
        throw ValidationError("zero-dimension image: " + path.string());
    if (maxval < 1 || maxval > 255)
        throw FormatError("unsupported PGM maxval " + std::to_string(maxval) + " in " + path.string());

    std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (in.gcount() != static_cast<std::streamsize>(data.size()))
        throw IoError("truncated PGM data in " + path.string());
    return GrayImage(static_cast<int>(width), static_cast<int>(height), std::move(data));
}

GrayImage load_via_opencv(const std::filesystem::path& path) {
    const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) {
        if (!std::filesystem::exists(path)) throw IoError("no such image: " + path.string());
        throw FormatError("unreadable or unsupported image: " + path.string());
    }
    if (raw.depth() != CV_8U)
        throw FormatError("only 8-bit images are supported: " + path.string());
    if (raw.cols < 1 || raw.rows < 1)
        throw ValidationError("zero-dimension image: " + path.string());

    std::vector<std::uint8_t> data(static_cast<std::size_t>(raw.cols) * raw.rows);
    if (raw.channels() == 1) {
        for (int y = 0; y < raw.rows; ++y)
            std::copy_n(raw.ptr<std::uint8_t>(y), raw.cols, data.data() + static_cast<std::size_t>(y) * raw.cols);
    } else if (raw.channels() == 3 || raw.channels() == 4) {
        // OpenCV decodes as BGR(A); alpha, when present, is ignored.
        const int ch = raw.channels();
        for (int y = 0; y < raw.rows; ++y) {
            const std::uint8_t* src = raw.ptr<std::uint8_t>(y);
            std::uint8_t* dst = data.data() + static_cast<std::size_t>(y) * raw.cols;
            for (int x = 0; x < raw.cols; ++x) {
                const double b = src[x * ch + 0];
                const double g = src[x * ch + 1];
                const double r = src[x * ch + 2];
                const double luma = std::round(0.299 * r + 0.587 * g + 0.114 * b);
                dst[x] = static_cast<std::uint8_t>(std::clamp(luma, 0.0, 255.0));
            }
        }
    } else {
        throw FormatError("unsupported channel count in " + path.string());
    }
    return GrayImage(raw.cols, raw.rows, std::move(data));
}

} // namespace

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
    if (width_ < 1 || height_ < 1)
        throw ValidationError("image dimensions must be at least 1x1");
    if (data_.size() != static_cast<std::size_t>(width_) * height_)
        throw ValidationError("image data length does not match width*height");
}

GrayImage GrayImage::filled(int width, int height, std::uint8_t value) {
    return GrayImage(width, height,
                     std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, value));
}

GrayImage load_image(const std::filesystem::path& path) {
    const std::string ext = lower_extension(path);
    if (ext == ".pgm") return load_pgm(path);
    if (ext == ".png" || ext == ".bmp" || ext == ".tif" || ext == ".tiff")
        return load_via_opencv(path);
    throw FormatError("unsupported image format: " + path.string());
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels().data()),
              static_cast<std::streamsize>(img.pixels().size()));
    textio::atomic_write_file(path, out.str());
}

GrayImage downsample_half(const GrayImage& img) {
    if (img.width() % 2 != 0 || img.height() % 2 != 0)
        throw ValidationError("downsample_half requires even dimensions, got " +
                              std::to_string(img.width()) + "x" + std::to_string(img.height()));

    const int w = img.width() / 2;
    const int h = img.height() / 2;
    std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* top = img.row(2 * y);
        const std::uint8_t* bottom = img.row(2 * y + 1);
        for (int x = 0; x < w; ++x) {
            const unsigned sum = top[2 * x] + top[2 * x + 1] + bottom[2 * x] + bottom[2 * x + 1];
            // mean of the 2x2 block, rounded half up: floor((sum + 2) / 4)
            data[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>((sum + 2) / 4);
        }
    }
    return GrayImage(w, h, std::move(data));
}

} // namespace irispad
