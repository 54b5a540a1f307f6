#pragma once
// Small file helpers. All writers go through write_file_atomic so an
// interrupted run never leaves a truncated artifact behind.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#if !defined(_WIN32)
#include <unistd.h>
#endif

#include "dedukt/error.hpp"

namespace dedukt::detail {

inline std::string read_file(const std::filesystem::path& path, const char* module) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, module, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw Error(Errc::IoError, module, "read failed for " + path.string());
    return ss.str();
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view content,
                              const char* module) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
    }
    // unique temp name so concurrent writers of the same target never
    // interleave; the final rename decides the winner
    static std::atomic<unsigned long> counter{0};
#if defined(_WIN32)
    unsigned long pid = 0;
#else
    unsigned long pid = static_cast<unsigned long>(::getpid());
#endif
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(pid) + "-" + std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::IoError, module, "cannot create " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error(Errc::IoError, module, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(Errc::IoError, module, "cannot move " + tmp.string() + " into place");
    }
}

} // namespace dedukt::detail
