#include "hycd/raster.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "binary_io.hpp"

namespace hycd {

namespace detail {

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(f.tellg());
    f.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(size);
    if (size > 0) f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!f) throw IoError("failed reading file: " + path);
    return bytes;
}

static void ensure_parent_dir(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
    }
}

void write_file_bytes(const std::string& path, const unsigned char* data, std::size_t size) {
    ensure_parent_dir(path);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open file for writing: " + path);
    if (size > 0) f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
    f.flush();
    if (!f) throw IoError("failed writing file: " + path);
}

void write_text_file(const std::string& path, const std::string& text) {
    write_file_bytes(path, reinterpret_cast<const unsigned char*>(text.data()), text.size());
}

} // namespace detail

std::uint64_t RasterImage::valid_count() const {
    if (nodata.empty()) return plane_size();
    std::uint64_t n = 0;
    for (auto flag : nodata) n += flag == 0;
    return n;
}

void RasterImage::validate() const {
    if (width == 0 || height == 0 || bands == 0)
        throw ValidationError("raster dimensions must be positive");
    const std::size_t expected = plane_size() * bands;
    if (data.size() != expected)
        throw ValidationError("raster data length " + std::to_string(data.size()) +
                              " does not match width*height*bands = " + std::to_string(expected));
    if (wavelengths_nm) {
        if (wavelengths_nm->size() != bands)
            throw ValidationError("wavelengths_nm length does not match band count");
        for (std::size_t i = 0; i < wavelengths_nm->size(); ++i) {
            if (!std::isfinite((*wavelengths_nm)[i]))
                throw ValidationError("wavelengths_nm contains a non-finite value");
            if (i > 0 && (*wavelengths_nm)[i] <= (*wavelengths_nm)[i - 1])
                throw ValidationError("wavelengths_nm must be strictly increasing");
        }
    }
    if (!nodata.empty() && nodata.size() != plane_size())
        throw ValidationError("nodata mask size does not match pixel count");
    const std::size_t plane = plane_size();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!nodata.empty() && nodata[i % plane]) continue;
        if (!std::isfinite(data[i]))
            throw ValidationError("non-finite value at index " + std::to_string(i));
    }
}

std::uint64_t ScalarMap::valid_count() const {
    if (nodata.empty()) return pixel_count();
    std::uint64_t n = 0;
    for (auto flag : nodata) n += flag == 0;
    return n;
}

std::uint64_t ChangeMap::changed_count() const {
    std::uint64_t n = 0;
    for (auto m : mask) n += m != 0;
    return n;
}

double ChangeMap::changed_percent() const {
    if (valid_pixels == 0) return 0.0;
    return 100.0 * static_cast<double>(changed_count()) / static_cast<double>(valid_pixels);
}

// ---- raster file I/O ---------------------------------------------------

namespace {

constexpr std::uint32_t kCanonicalNanBits = 0x7FC00000u;

float canonical_nan() {
    float f;
    std::memcpy(&f, &kCanonicalNanBits, 4);
    return f;
}

std::uint32_t require_dim(const nlohmann::json& j, const char* key, const std::string& path) {
    if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<std::int64_t>() <= 0)
        throw FormatError("raster header " + path + ": missing or invalid '" + key + "'");
    const auto v = j[key].get<std::int64_t>();
    if (v > 0xFFFFFFFFll)
        throw FormatError("raster header " + path + ": '" + std::string(key) + "' out of range");
    return static_cast<std::uint32_t>(v);
}

} // namespace

RasterImage read_raster(const std::string& path) {
    const std::string header_path = path + ".json";
    std::ifstream hf(header_path);
    if (!hf) throw FormatError("missing raster header: " + header_path);
    nlohmann::json j;
    try {
        hf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("unparseable raster header " + header_path + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError("raster header " + header_path + " is not a JSON object");

    RasterImage img;
    img.width = require_dim(j, "width", header_path);
    img.height = require_dim(j, "height", header_path);
    img.bands = require_dim(j, "bands", header_path);
    if (j.value("dtype", "") != "f32")
        throw FormatError("raster header " + header_path + ": dtype must be \"f32\"");
    if (j.value("byte_order", "") != "little")
        throw FormatError("raster header " + header_path + ": byte_order must be \"little\"");
    if (j.contains("wavelengths_nm")) {
        if (!j["wavelengths_nm"].is_array())
            throw FormatError("raster header " + header_path + ": wavelengths_nm must be an array");
        img.wavelengths_nm = j["wavelengths_nm"].get<std::vector<float>>();
    }
    const bool nan_nodata = j.value("nodata", "") == "nan";

    const auto bytes = detail::read_file_bytes(path);
    const std::size_t expected = img.plane_size() * img.bands * 4;
    if (bytes.size() != expected)
        throw SizeError("raster " + path + ": expected " + std::to_string(expected) +
                        " bytes, found " + std::to_string(bytes.size()));

    img.data.resize(img.plane_size() * img.bands);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = detail::load_f32_le(bytes.data() + i * 4);

    if (nan_nodata) {
        const std::size_t plane = img.plane_size();
        img.nodata.assign(plane, 0);
        for (std::size_t p = 0; p < plane; ++p) {
            for (std::uint32_t k = 0; k < img.bands; ++k) {
                if (std::isnan(img.data[k * plane + p])) {
                    img.nodata[p] = 1;
                    break;
                }
            }
            if (img.nodata[p])
                for (std::uint32_t k = 0; k < img.bands; ++k) img.data[k * plane + p] = 0.0f;
        }
        if (std::all_of(img.nodata.begin(), img.nodata.end(),
                        [](std::uint8_t f) { return f == 0; }))
            img.nodata.clear();
    }

    img.validate();
    return img;
}

void write_raster(const RasterImage& img, const std::string& path) {
    img.validate();

    nlohmann::ordered_json j;
    j["width"] = img.width;
    j["height"] = img.height;
    j["bands"] = img.bands;
    j["dtype"] = "f32";
    j["byte_order"] = "little";
    if (img.wavelengths_nm) j["wavelengths_nm"] = *img.wavelengths_nm;
    const bool any_nodata =
        img.has_nodata_mask() &&
        std::any_of(img.nodata.begin(), img.nodata.end(), [](std::uint8_t f) { return f != 0; });
    if (any_nodata) j["nodata"] = "nan";

    std::vector<unsigned char> bytes(img.data.size() * 4);
    const std::size_t plane = img.plane_size();
    const float nan = canonical_nan();
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const bool masked = any_nodata && img.nodata[i % plane];
        detail::store_f32_le(masked ? nan : img.data[i], bytes.data() + i * 4);
    }

    detail::write_file_bytes(path, bytes.data(), bytes.size());
    detail::write_text_file(path + ".json", j.dump(2) + "\n");
}

void write_mask_pgm(const ChangeMap& map, const std::string& path) {
    if (map.mask.size() != static_cast<std::size_t>(map.width) * map.height)
        throw ValidationError("change map mask size does not match dimensions");
    char header[64];
    std::snprintf(header, sizeof header, "P5\n%u %u\n255\n", map.width, map.height);
    std::vector<unsigned char> bytes;
    bytes.reserve(std::strlen(header) + map.mask.size());
    bytes.insert(bytes.end(), header, header + std::strlen(header));
    for (auto m : map.mask) bytes.push_back(m ? 255 : 0);
    detail::write_file_bytes(path, bytes.data(), bytes.size());
}

ChangeMap read_mask_pgm(const std::string& path) {
    const auto bytes = detail::read_file_bytes(path);
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') { // comment to end of line
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        std::string tok;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
        return tok;
    };

    if (next_token() != "P5") throw FormatError("not a binary PGM (P5): " + path);
    const std::string ws = next_token(), hs = next_token(), ms = next_token();
    std::uint32_t w = 0, h = 0;
    unsigned long maxval = 0;
    try {
        w = static_cast<std::uint32_t>(std::stoul(ws));
        h = static_cast<std::uint32_t>(std::stoul(hs));
        maxval = std::stoul(ms);
    } catch (...) {
        throw FormatError("garbled PGM header: " + path);
    }
    if (w == 0 || h == 0 || maxval == 0 || maxval > 255)
        throw FormatError("unsupported PGM header in " + path);
    ++pos; // single whitespace after maxval
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (bytes.size() - pos != n)
        throw SizeError("PGM " + path + ": expected " + std::to_string(n) + " payload bytes, found " +
                        std::to_string(bytes.size() - pos));

    ChangeMap map(w, h);
    map.method_tag = "pgm";
    for (std::size_t i = 0; i < n; ++i) map.mask[i] = bytes[pos + i] > maxval / 2 ? 1 : 0;
    return map;
}

RasterImage extract_patch(const RasterImage& img, std::uint32_t x0, std::uint32_t y0,
                          std::uint32_t size) {
    img.validate();
    if (size == 0) throw BoundsError("patch size must be positive");
    if (static_cast<std::uint64_t>(x0) + size > img.width ||
        static_cast<std::uint64_t>(y0) + size > img.height)
        throw BoundsError("patch window [" + std::to_string(x0) + "," + std::to_string(y0) + "]+" +
                          std::to_string(size) + " exceeds image " + std::to_string(img.width) +
                          "x" + std::to_string(img.height));

    RasterImage out(size, size, img.bands);
    out.wavelengths_nm = img.wavelengths_nm;
    for (std::uint32_t k = 0; k < img.bands; ++k) {
        const float* src = img.plane(k);
        float* dst = out.plane(k);
        for (std::uint32_t y = 0; y < size; ++y)
            std::copy_n(src + static_cast<std::size_t>(y0 + y) * img.width + x0, size,
                        dst + static_cast<std::size_t>(y) * size);
    }
    if (img.has_nodata_mask()) {
        out.nodata.assign(out.plane_size(), 0);
        for (std::uint32_t y = 0; y < size; ++y)
            std::copy_n(img.nodata.data() + static_cast<std::size_t>(y0 + y) * img.width + x0, size,
                        out.nodata.data() + static_cast<std::size_t>(y) * size);
    }
    return out;
}

RasterImage select_bands(const RasterImage& img, const std::vector<std::uint32_t>& band_indices) {
    img.validate();
    if (band_indices.empty()) throw BoundsError("band selection must not be empty");
    for (auto b : band_indices)
        if (b >= img.bands)
            throw BoundsError("band index " + std::to_string(b) + " out of range (bands = " +
                              std::to_string(img.bands) + ")");

    RasterImage out(img.width, img.height, static_cast<std::uint32_t>(band_indices.size()));
    for (std::size_t i = 0; i < band_indices.size(); ++i)
        std::copy_n(img.plane(band_indices[i]), img.plane_size(), out.plane(static_cast<std::uint32_t>(i)));
    out.nodata = img.nodata;
    if (img.wavelengths_nm) {
        std::vector<float> wl;
        wl.reserve(band_indices.size());
        for (auto b : band_indices) wl.push_back((*img.wavelengths_nm)[b]);
        if (std::is_sorted(wl.begin(), wl.end()) &&
            std::adjacent_find(wl.begin(), wl.end()) == wl.end())
            out.wavelengths_nm = std::move(wl);
    }
    return out;
}

RasterImage scalar_to_raster(const ScalarMap& map) {
    RasterImage img(map.width, map.height, 1);
    img.data = map.values;
    img.nodata = map.nodata;
    // zero out masked values so the raster invariant (finite at valid
    // pixels, zeros under the mask) holds regardless of the map contents
    if (!img.nodata.empty())
        for (std::size_t i = 0; i < img.data.size(); ++i)
            if (img.nodata[i]) img.data[i] = 0.0f;
    return img;
}

} // namespace hycd
