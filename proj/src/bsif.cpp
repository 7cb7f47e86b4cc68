#include "irispad/bsif.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "irispad/errors.hpp"
#include "irispad/rng.hpp"
#include "textio.hpp"

namespace irispad {

namespace {

constexpr std::array<int, 8> kNativeScales = {3, 5, 7, 9, 11, 13, 15, 17};

// Coefficient quantum for synthesized banks. With |w| <= 1 and coefficients
// on a 2^-39 grid, every product with an 8-bit pixel and every partial sum of
// a window stays below 53 significant bits, so responses to integer images
// are computed exactly and a zero-sum filter yields a response of exactly 0
// on constant input, independent of summation order or FMA contraction.
constexpr double kQuantum = 0x1.0p-39;

double fp_sum(std::span<const double> values) {
    double s = 0.0;
    for (const double v : values) s += v;
    return s;
}

// Blocked correlation kernel. Eight output pixels are accumulated together so
// the lane dimension vectorizes; every pixel's per-filter sum still runs over
// the window cells in row-major order, identical to a plain per-pixel loop.
template <int N>
void code_rows(const GrayImage& img, int s, const std::vector<double>& ext, int ext_w,
               const std::vector<double>& coeff_by_pos, std::uint16_t* codes) {
    constexpr int kBlock = 8;
    const int w = img.width();
    const int h = img.height();
    const int c = s / 2;
    const double* wt = coeff_by_pos.data();
    std::array<const double*, 17> base{};

    for (int y = 0; y < h; ++y) {
        for (int u = 0; u < s; ++u) {
            int yy = y + u - c;
            if (yy < 0) yy += h;
            if (yy >= h) yy -= h;
            base[u] = ext.data() + static_cast<std::size_t>(yy) * ext_w;
        }
        std::uint16_t* out = codes + static_cast<std::size_t>(y) * w;

        int x = 0;
#if defined(__AVX512F__)
        for (; x + kBlock <= w; x += kBlock) {
            __m512d acc[N];
            for (int i = 0; i < N; ++i) acc[i] = _mm512_setzero_pd();
            for (int u = 0; u < s; ++u) {
                const double* src = base[u] + x;
                const double* wrow = wt + static_cast<std::size_t>(u) * s * N;
                for (int v = 0; v < s; ++v) {
                    const __m512d px = _mm512_loadu_pd(src + v);
                    const double* ww = wrow + static_cast<std::size_t>(v) * N;
                    for (int i = 0; i < N; ++i)
                        acc[i] = _mm512_fmadd_pd(_mm512_set1_pd(ww[i]), px, acc[i]);
                }
            }
            double lanes[N][kBlock];
            for (int i = 0; i < N; ++i) _mm512_storeu_pd(lanes[i], acc[i]);
            for (int lane = 0; lane < kBlock; ++lane) {
                std::uint16_t code = 0;
                for (int i = 0; i < N; ++i)
                    if (lanes[i][lane] > 0.0) code |= static_cast<std::uint16_t>(1u << i);
                out[x + lane] = code;
            }
        }
#else
        for (; x + kBlock <= w; x += kBlock) {
            double acc[N][kBlock] = {};
            for (int u = 0; u < s; ++u) {
                const double* src = base[u] + x;
                const double* wrow = wt + static_cast<std::size_t>(u) * s * N;
                for (int v = 0; v < s; ++v) {
                    const double* px = src + v;
                    const double* ww = wrow + static_cast<std::size_t>(v) * N;
                    for (int i = 0; i < N; ++i)
                        for (int lane = 0; lane < kBlock; ++lane) acc[i][lane] += ww[i] * px[lane];
                }
            }
            for (int lane = 0; lane < kBlock; ++lane) {
                std::uint16_t code = 0;
                for (int i = 0; i < N; ++i)
                    if (acc[i][lane] > 0.0) code |= static_cast<std::uint16_t>(1u << i);
                out[x + lane] = code;
            }
        }
#endif
        for (; x < w; ++x) {
            std::array<double, N> acc{};
            for (int u = 0; u < s; ++u) {
                const double* src = base[u] + x;
                const double* wrow = wt + static_cast<std::size_t>(u) * s * N;
                for (int v = 0; v < s; ++v) {
                    const double px = src[v];
                    const double* ww = wrow + static_cast<std::size_t>(v) * N;
                    for (int i = 0; i < N; ++i) acc[i] += ww[i] * px;
                }
            }
            std::uint16_t code = 0;
            for (int i = 0; i < N; ++i)
                if (acc[i] > 0.0) code |= static_cast<std::uint16_t>(1u << i);
            out[x] = code;
        }
    }
}

} // namespace

std::string ScaleId::tag() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%02d_%s", effective_size(),
                  res == Resolution::Half ? "half" : "full");
    return buf;
}

ScaleId ScaleId::parse_tag(const std::string& tag) {
    const auto sep = tag.find('_');
    if (tag.size() < 4 || tag[0] != 's' || sep == std::string::npos)
        throw FormatError("malformed scale tag: '" + tag + "'");
    const auto effective = textio::parse_int(tag.substr(1, sep - 1), "scale tag size");
    const std::string res = tag.substr(sep + 1);

    ScaleId id;
    if (res == "full") {
        id = {static_cast<int>(effective), Resolution::Full};
    } else if (res == "half") {
        if (effective % 2 != 0) throw FormatError("half-resolution tag must be even: '" + tag + "'");
        id = {static_cast<int>(effective) / 2, Resolution::Half};
    } else {
        throw FormatError("malformed scale tag: '" + tag + "'");
    }
    if (id.filter_size < 3 || id.filter_size > 17 || id.filter_size % 2 == 0)
        throw FormatError("scale tag outside the supported filter sizes: '" + tag + "'");
    return id;
}

bool is_valid_combination(int size, int bits) {
    const bool size_ok = size >= 3 && size <= 17 && size % 2 == 1;
    const bool bits_ok = bits >= 5 && bits <= 12;
    if (!size_ok || !bits_ok) return false;
    return !(size == 3 && bits >= 9); // nine zero-mean filters do not fit a 3x3 patch
}

std::span<const int> native_scales() { return kNativeScales; }

std::string filter_asset_name(int size, int bits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "ICAtextureFilters_%dx%d_%dbit.txt", size, size, bits);
    return buf;
}

FilterBank load_filter_bank(const std::filesystem::path& path) {
    const std::string content = textio::read_file(path);
    std::istringstream in(content);

    long long bits = 0, size = 0;
    if (!(in >> bits >> size))
        throw FormatError("malformed filter file header in " + path.string());
    if (!is_valid_combination(static_cast<int>(size), static_cast<int>(bits)))
        throw ValidationError("invalid (s, n) combination " + std::to_string(size) + "/" +
                              std::to_string(bits) + " in " + path.string());

    FilterBank bank;
    bank.size = static_cast<int>(size);
    bank.bits = static_cast<int>(bits);
    const std::size_t expected = static_cast<std::size_t>(bits) * size * size;
    bank.coeffs.reserve(expected);
    double value = 0.0;
    while (in >> value) bank.coeffs.push_back(value);
    if (!in.eof()) throw FormatError("non-numeric filter coefficient in " + path.string());
    if (bank.coeffs.size() != expected)
        throw FormatError("expected " + std::to_string(expected) + " coefficients, got " +
                          std::to_string(bank.coeffs.size()) + " in " + path.string());

    validate_filter_bank(bank);
    return bank;
}

void validate_filter_bank(const FilterBank& bank) {
    if (!is_valid_combination(bank.size, bank.bits))
        throw ValidationError("invalid (s, n) combination " + std::to_string(bank.size) + "/" +
                              std::to_string(bank.bits));
    const std::size_t len = static_cast<std::size_t>(bank.size) * bank.size;
    if (bank.coeffs.size() != static_cast<std::size_t>(bank.bits) * len)
        throw ValidationError("filter bank coefficient count does not match n*s*s");

    for (int i = 0; i < bank.bits; ++i) {
        const auto filter = bank.filter(i);
        const double mean = fp_sum(filter) / static_cast<double>(len);
        if (std::abs(mean) > 1e-9)
            throw ValidationError("filter " + std::to_string(i + 1) + " is not zero-mean (mean " +
                                  textio::format_double(mean, 6) + ")");
        bool any_nonzero = false;
        for (const double v : filter) any_nonzero |= (v != 0.0);
        if (!any_nonzero)
            throw ValidationError("filter " + std::to_string(i + 1) + " is the zero vector");
    }
}

FilterBank synthesize_filter_bank(int size, int bits, std::uint64_t seed) {
    if (!is_valid_combination(size, bits))
        throw ValidationError("invalid (s, n) combination " + std::to_string(size) + "/" +
                              std::to_string(bits));

    const std::size_t dim = static_cast<std::size_t>(size) * size;
    Rng rng(seed);
    std::vector<std::vector<double>> filters;
    filters.reserve(static_cast<std::size_t>(bits));

    int retries = 0;
    constexpr int kMaxRetries = 1000;
    while (filters.size() < static_cast<std::size_t>(bits)) {
        std::vector<double> v(dim);
        for (double& x : v) x = rng.uniform(-1.0, 1.0);

        // Project out the constant component, then orthogonalize against the
        // accepted filters (two MGS passes for stability).
        for (int pass = 0; pass < 2; ++pass) {
            const double mean = fp_sum(v) / static_cast<double>(dim);
            for (double& x : v) x -= mean;
            for (const auto& u : filters) {
                const double dot = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
                for (std::size_t k = 0; k < dim; ++k) v[k] -= dot * u[k];
            }
        }

        const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (norm < 1e-6) {
            if (++retries > kMaxRetries)
                throw Error("filter synthesis degenerated for s=" + std::to_string(size) +
                            " n=" + std::to_string(bits));
            continue;
        }
        for (double& x : v) x /= norm;
        filters.push_back(std::move(v));
    }

    FilterBank bank;
    bank.size = size;
    bank.bits = bits;
    bank.coeffs.reserve(static_cast<std::size_t>(bits) * dim);
    for (auto& filter : filters) {
        // Quantize onto the 2^-39 grid and move the (exact) residual into the
        // largest coefficient so the sum is exactly zero.
        for (double& x : filter) x = std::round(x / kQuantum) * kQuantum;
        std::size_t largest = 0;
        for (std::size_t k = 1; k < dim; ++k)
            if (std::abs(filter[k]) > std::abs(filter[largest])) largest = k;
        filter[largest] -= fp_sum(filter);
        bank.coeffs.insert(bank.coeffs.end(), filter.begin(), filter.end());
    }

    validate_filter_bank(bank);
    return bank;
}

void save_filter_bank(const FilterBank& bank, const std::filesystem::path& path) {
    std::ostringstream out;
    out << bank.bits << " " << bank.size << "\n";
    const std::size_t len = static_cast<std::size_t>(bank.size) * bank.size;
    for (int i = 0; i < bank.bits; ++i) {
        const auto filter = bank.filter(i);
        for (std::size_t k = 0; k < len; ++k) {
            out << textio::format_double(filter[k]);
            out << ((k + 1) % bank.size == 0 ? '\n' : ' ');
        }
    }
    textio::atomic_write_file(path, out.str());
}

CodeMap compute_code_map(const GrayImage& img, const FilterBank& bank) {
    if (img.width() < bank.size || img.height() < bank.size)
        throw ValidationError("image " + std::to_string(img.width()) + "x" +
                              std::to_string(img.height()) + " is smaller than the " +
                              std::to_string(bank.size) + "x" + std::to_string(bank.size) +
                              " filter");

    const int w = img.width();
    const int h = img.height();
    const int s = bank.size;
    const int n = bank.bits;
    const int c = s / 2;
    const int ext_w = w + s - 1;

    // Extended double copy of the image with wrapped columns; window reads
    // then become contiguous.
    std::vector<double> ext(static_cast<std::size_t>(ext_w) * h);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* row = img.row(y);
        double* e = ext.data() + static_cast<std::size_t>(y) * ext_w;
        for (int j = 0; j < ext_w; ++j) {
            int col = j - c;
            if (col < 0) col += w;
            if (col >= w) col -= w;
            e[j] = row[col];
        }
    }

    // Position-major coefficients: all n filter weights for one window cell
    // are adjacent, which keeps the per-pixel accumulators vectorizable.
    const std::size_t cells = static_cast<std::size_t>(s) * s;
    std::vector<double> coeff_by_pos(cells * n);
    for (int i = 0; i < n; ++i)
        for (std::size_t k = 0; k < cells; ++k)
            coeff_by_pos[k * n + i] = bank.coeffs[i * cells + k];

    CodeMap map;
    map.width = w;
    map.height = h;
    map.bits = n;
    map.codes.resize(static_cast<std::size_t>(w) * h);

    switch (n) {
    case 5: code_rows<5>(img, s, ext, ext_w, coeff_by_pos, map.codes.data()); break;
    case 6: code_rows<6>(img, s, ext, ext_w, coeff_by_pos, map.codes.data()); break;
    case 7: code_rows<7>(img, s, ext, ext_w, coeff_by_pos, map.codes.data()); break;
    case 8: code_rows<8>(img, s, ext, ext_w, coeff_by_pos, map.codes.data()); break;
    case 9: code_rows<9>(img, s, ext, ext_w, coeff_by_pos, map.codes.data()); break;
    case 10: code_rows<10>(img, s, ext, ext_w, coeff_by_pos, map.codes.data()); break;
    case 11: code_rows<11>(img, s, ext, ext_w, coeff_by_pos, map.codes.data()); break;
    case 12: code_rows<12>(img, s, ext, ext_w, coeff_by_pos, map.codes.data()); break;
    default:
        throw ValidationError("unsupported bit depth " + std::to_string(n));
    }
    return map;
}

std::vector<std::uint64_t> histogram_counts(const CodeMap& map) {
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(1) << map.bits, 0);
    for (const std::uint16_t code : map.codes) ++counts[code];
    return counts;
}

FeatureVector histogram(const CodeMap& map, const ScaleId& scale) {
    const auto counts = histogram_counts(map);
    const double total = static_cast<double>(map.codes.size());

    FeatureVector fv;
    fv.scale = scale;
    fv.bits = map.bits;
    fv.bins.resize(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k)
        fv.bins[k] = static_cast<double>(counts[k]) / total;
    return fv;
}

std::vector<FeatureVector> extract_all(const GrayImage& img, std::span<const FilterBank> banks) {
    if (banks.empty()) throw ValidationError("no filter banks configured");
    for (std::size_t i = 0; i < banks.size(); ++i) {
        if (banks[i].bits != banks[0].bits)
            throw ValidationError("filter banks must share one bit depth");
        if (i > 0 && banks[i].size <= banks[i - 1].size)
            throw ValidationError("filter banks must be sorted by ascending size");
    }
    if (img.width() % 2 != 0 || img.height() % 2 != 0)
        throw ValidationError("extraction requires even image dimensions, got " +
                              std::to_string(img.width()) + "x" + std::to_string(img.height()));

    std::vector<FeatureVector> features;
    features.reserve(2 * banks.size());
    for (const auto& bank : banks)
        features.push_back(histogram(compute_code_map(img, bank), {bank.size, Resolution::Full}));

    const GrayImage half = downsample_half(img);
    for (const auto& bank : banks)
        features.push_back(histogram(compute_code_map(half, bank), {bank.size, Resolution::Half}));
    return features;
}

} // namespace irispad
