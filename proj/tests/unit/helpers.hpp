#ifndef SSIN_TEST_HELPERS_HPP
#define SSIN_TEST_HELPERS_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "ssin/geom.hpp"
#include "ssin/rng.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("ssin_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream(path) << text;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline ssin::geom::StationSet random_stations(std::size_t n, std::uint64_t seed, double lat0 = 22.15,
                                              double lat1 = 22.55, double lon0 = 113.85, double lon1 = 114.4) {
    ssin::Rng rng(seed);
    std::vector<ssin::geom::Station> s;
    for (std::size_t i = 0; i < n; ++i) {
        s.push_back({"s" + std::to_string(i), rng.uniform(lat0, lat1), rng.uniform(lon0, lon1)});
    }
    return ssin::geom::StationSet(std::move(s));
}

}  // namespace testing

#endif
