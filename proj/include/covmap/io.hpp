#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "covmap/grid.hpp"

namespace covmap::io {

namespace fs = std::filesystem;

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

nlohmann::json read_json(const fs::path& path);
void write_json(const fs::path& path, const nlohmann::json& doc);

struct GrayImage {
    int width = 0;
    int height = 0;
    int maxval = 255;
    std::vector<std::uint8_t> pixels; ///< row-major, height rows of width
};

/// Binary (P5) PGM with 8-bit samples.
void write_pgm(const fs::path& path, const GrayImage& image);
GrayImage read_pgm(const fs::path& path);

/// BS image as a 64x64 P5 PGM with maxval 1; PGM row r is pixel index i = r.
void write_bs_image(const fs::path& path, const BsImage& image);
BsImage read_bs_image(const fs::path& path);

/// 32 rows of 32 comma-separated values, row i = RoE row i.
std::string manifold_to_csv(const Manifold& manifold);
void write_manifold_csv(const fs::path& path, const Manifold& manifold);

/// Parses a 32x32 CSV grid; throws ConfigError on malformed input.
std::array<double, kRoePixels> parse_grid_csv(const std::string& text);
Manifold read_manifold_csv(const fs::path& path, ManifoldKind kind);

} // namespace covmap::io
