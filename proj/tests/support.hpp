#pragma once

// Shared helpers for the test binaries: scratch directories, random image
// fixtures and a smooth periodic texture for registration tests.

#include <atomic>
#include <unistd.h>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "hycd/raster.hpp"

namespace testsupport {

class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        const auto base = std::filesystem::temp_directory_path();
        path_ = base / ("hycd_test_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter.fetch_add(1)));
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

inline std::vector<unsigned char> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(static_cast<bool>(f));
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(f)),
                                      std::istreambuf_iterator<char>());
}

inline hycd::RasterImage random_image(std::uint32_t w, std::uint32_t h, std::uint32_t bands,
                                      std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
    hycd::RasterImage img(w, h, bands);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(lo, hi);
    for (auto& v : img.data) v = dist(rng);
    return img;
}

// Band of smooth sinusoids with integer frequencies: exactly periodic over
// the image, so any (fractional) translation can be evaluated analytically.
struct SmoothTexture {
    std::uint32_t w, h;
    std::vector<double> amp, fx, fy, phase;

    SmoothTexture(std::uint32_t w_, std::uint32_t h_, std::uint64_t seed, int waves = 8)
        : w(w_), h(h_) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> a(0.3, 1.0), p(0.0, 6.28318530717958647692);
        std::uniform_int_distribution<int> f(1, 6);
        for (int i = 0; i < waves; ++i) {
            amp.push_back(a(rng));
            fx.push_back(f(rng));
            fy.push_back(f(rng));
            phase.push_back(p(rng));
        }
    }

    double value(double x, double y) const {
        double s = 0.0;
        for (std::size_t i = 0; i < amp.size(); ++i)
            s += amp[i] * std::sin(6.28318530717958647692 * (fx[i] * x / w + fy[i] * y / h) +
                                   phase[i]);
        return s;
    }

    hycd::RasterImage render(double dx = 0.0, double dy = 0.0) const {
        hycd::RasterImage img(w, h, 1);
        for (std::uint32_t y = 0; y < h; ++y)
            for (std::uint32_t x = 0; x < w; ++x)
                img.at(x, y, 0) = static_cast<float>(value(x - dx, y - dy));
        return img;
    }
};

} // namespace testsupport
