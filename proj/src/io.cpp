#include "covmap/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace covmap::io {

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) throw IoError("cannot format number");
    return std::string(buf, end);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

void write_pgm(const fs::path& path, const GrayImage& image) {
    if (image.pixels.size() != static_cast<std::size_t>(image.width * image.height))
        throw ShapeError("PGM pixel count does not match its dimensions");
    std::string text = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n" +
                       std::to_string(image.maxval) + "\n";
    text.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
    write_text(path, text);
}

namespace {

int next_header_int(const std::string& data, std::size_t& pos) {
    for (;;) {
        while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
        if (pos < data.size() && data[pos] == '#') {
            while (pos < data.size() && data[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    int value = 0;
    auto [end, ec] = std::from_chars(data.data() + pos, data.data() + data.size(), value);
    if (ec != std::errc{}) throw ConfigError("malformed PGM header");
    pos = static_cast<std::size_t>(end - data.data());
    return value;
}

} // namespace

GrayImage read_pgm(const fs::path& path) {
    const std::string data = read_text(path);
    if (data.size() < 2 || data[0] != 'P' || data[1] != '5')
        throw ConfigError("'" + path.string() + "' is not a binary PGM");
    std::size_t pos = 2;
    GrayImage image;
    image.width = next_header_int(data, pos);
    image.height = next_header_int(data, pos);
    image.maxval = next_header_int(data, pos);
    if (image.width <= 0 || image.height <= 0 || image.maxval <= 0 || image.maxval > 255)
        throw ConfigError("unsupported PGM dimensions in '" + path.string() + "'");
    ++pos; // single whitespace before the raster
    const auto count = static_cast<std::size_t>(image.width * image.height);
    if (data.size() < pos + count) throw ConfigError("truncated PGM raster in '" + path.string() + "'");
    image.pixels.assign(data.begin() + static_cast<std::ptrdiff_t>(pos),
                        data.begin() + static_cast<std::ptrdiff_t>(pos + count));
    return image;
}

void write_bs_image(const fs::path& path, const BsImage& image) {
    GrayImage gray{kRoiGrid, kRoiGrid, 1, {image.raw().begin(), image.raw().end()}};
    write_pgm(path, gray);
}

BsImage read_bs_image(const fs::path& path) {
    const GrayImage gray = read_pgm(path);
    if (gray.width != kRoiGrid || gray.height != kRoiGrid)
        throw ShapeError("BS image '" + path.string() + "' is not 64x64");
    BsImage image;
    for (int id = 0; id < kRoiPixels; ++id) {
        const auto v = gray.pixels[static_cast<std::size_t>(id)];
        if (v > 1) throw ConfigError("BS image '" + path.string() + "' is not binary");
        image.set_id(id, v == 1);
    }
    return image;
}

std::string manifold_to_csv(const Manifold& manifold) {
    std::string text;
    for (int i = 0; i < kRoeGrid; ++i) {
        for (int j = 0; j < kRoeGrid; ++j) {
            if (j) text += ',';
            text += format_double(manifold.at(i, j));
        }
        text += '\n';
    }
    return text;
}

void write_manifold_csv(const fs::path& path, const Manifold& manifold) {
    write_text(path, manifold_to_csv(manifold));
}

std::array<double, kRoePixels> parse_grid_csv(const std::string& text) {
    std::array<double, kRoePixels> grid{};
    std::istringstream in(text);
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (row >= kRoeGrid) throw ConfigError("grid CSV has more than 32 rows");
        int col = 0;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            const std::size_t comma = std::min(line.find(',', pos), line.size());
            if (col >= kRoeGrid) throw ConfigError("grid CSV row " + std::to_string(row) + " has more than 32 values");
            const char* first = line.data() + pos;
            const char* last = line.data() + comma;
            while (first < last && *first == ' ') ++first;
            double value = 0.0;
            auto [end, ec] = std::from_chars(first, last, value);
            if (ec != std::errc{} || end != last)
                throw ConfigError("grid CSV row " + std::to_string(row) + " has a malformed value");
            grid[static_cast<std::size_t>(row * kRoeGrid + col)] = value;
            ++col;
            pos = comma + 1;
        }
        if (col != kRoeGrid) throw ConfigError("grid CSV row " + std::to_string(row) + " has " +
                                               std::to_string(col) + " values, expected 32");
        ++row;
    }
    if (row != kRoeGrid) throw ConfigError("grid CSV has " + std::to_string(row) + " rows, expected 32");
    return grid;
}

Manifold read_manifold_csv(const fs::path& path, ManifoldKind kind) {
    Manifold manifold(kind);
    manifold.values() = parse_grid_csv(read_text(path));
    return manifold;
}

} // namespace covmap::io
