#include "textio.hpp"

#include <atomic>
#include <fstream>
#include <sstream>

namespace irispad::textio {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (!in.good() && !in.eof()) throw IoError("failed reading file: " + path.string());
    return buffer.str();
}

void atomic_write_file(const std::filesystem::path& path, std::string_view content) {
    static std::atomic<std::uint64_t> counter{0};
    const auto id = counter.fetch_add(1);
    std::filesystem::path tmp = path;
    tmp += ".tmp" + std::to_string(id);

    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot create file: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out.good()) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("failed writing file: " + tmp.string());
        }
    }

    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("failed to move " + tmp.string() + " to " + path.string());
    }
}

} // namespace irispad::textio
