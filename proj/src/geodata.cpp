#include "covmap/geodata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>

#include "covmap/io.hpp"

namespace covmap::geodata {

namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return std::string(s);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t comma = line.find(',', pos);
        fields.push_back(trim(std::string_view(line).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return fields;
}

bool parse_number(const std::string& text, double& out) {
    if (text.empty()) return false;
    const char* first = text.data();
    if (*first == '+') ++first;
    auto [end, ec] = std::from_chars(first, text.data() + text.size(), out);
    return ec == std::errc{} && end == text.data() + text.size() && std::isfinite(out);
}

// Fractional position of `lon`/`lat` inside a cell, in [0, 1).
double clamp_unit(double t) {
    if (t < 0.0) return 0.0;
    if (t >= 1.0) return std::nextafter(1.0, 0.0);
    return t;
}

} // namespace

ParseResult parse_bs_records(std::istream& in, const ColumnMap& columns) {
    std::string line;
    if (!std::getline(in, line)) {
        if (in.bad()) throw IoError("tower stream is unreadable");
        throw ConfigError("tower stream has no header row");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv(line);
    const auto find = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ConfigError("tower header lacks column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t lat_col = find(columns.lat);
    const std::size_t lon_col = find(columns.lon);

    ParseResult result;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        BsRecord rec;
        if (fields.size() <= std::max(lat_col, lon_col) || !parse_number(fields[lat_col], rec.lat) ||
            !parse_number(fields[lon_col], rec.lon) || std::abs(rec.lat) > 90.0 || std::abs(rec.lon) > 180.0) {
            ++result.skipped;
            continue;
        }
        result.records.push_back(rec);
    }
    if (in.bad()) throw IoError("read error in tower stream");
    return result;
}

GeoBounds parse_bounds(const std::string& text) {
    std::istringstream in(text);
    std::array<double, 4> v{};
    std::string field;
    std::size_t n = 0;
    while (std::getline(in, field, ',')) {
        if (n == 4 || !parse_number(trim(field), v[n])) throw ConfigError("bounds must be 'S,W,N,E'");
        ++n;
    }
    if (n != 4) throw ConfigError("bounds must be 'S,W,N,E'");
    return {v[0], v[1], v[2], v[3]};
}

std::string RoiSpec::id() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "r%04d_c%04d", row, col);
    return buf;
}

RoiSpec make_roi_spec(double origin_lat, double origin_lon, double side_km) {
    if (!(side_km > 0.0)) throw ConfigError("side_km must be positive");
    const double cos_lat = std::cos(origin_lat / kDegPerRad);
    if (!(cos_lat > 1e-3)) throw ConfigError("RoI too close to a pole for the planar approximation");
    RoiSpec spec;
    spec.origin_lat = origin_lat;
    spec.origin_lon = origin_lon;
    spec.side_km = side_km;
    spec.delta_theta_deg = side_km / kEarthRadiusKm * kDegPerRad;
    spec.delta_phi_deg = side_km / (kEarthRadiusKm * cos_lat) * kDegPerRad;
    return spec;
}

std::vector<RoiSpec> build_grid(const GeoBounds& b, double side_km) {
    if (!(side_km > 0.0) || side_km > 0.01 * kEarthRadiusKm)
        throw ConfigError("side_km must be positive and small against the Earth radius");
    for (double lat : {b.south, b.north})
        if (!std::isfinite(lat) || std::abs(lat) > 90.0) throw ConfigError("latitude bound out of range");
    for (double lon : {b.west, b.east})
        if (!std::isfinite(lon) || std::abs(lon) > 180.0) throw ConfigError("longitude bound out of range");
    if (b.west > b.east) throw ConfigError("unsupported region: bounds cross the antimeridian");
    if (!(b.south < b.north) || !(b.west < b.east)) throw ConfigError("bounds enclose zero area");

    const double dtheta = side_km / kEarthRadiusKm * kDegPerRad;
    const int rows = static_cast<int>(std::ceil((b.north - b.south) / dtheta));
    std::vector<RoiSpec> grid;
    for (int r = 0; r < rows; ++r) {
        const double lat0 = b.south + r * dtheta;
        RoiSpec proto = make_roi_spec(lat0, b.west, side_km);
        const int cols = static_cast<int>(std::ceil((b.east - b.west) / proto.delta_phi_deg));
        for (int c = 0; c < cols; ++c) {
            RoiSpec cell = proto;
            cell.origin_lon = b.west + c * proto.delta_phi_deg;
            cell.row = r;
            cell.col = c;
            grid.push_back(cell);
        }
    }
    return grid;
}

Point local_position(const RoiSpec& spec, const BsRecord& record) {
    return {(record.lon - spec.origin_lon) / spec.delta_phi_deg * spec.side_km,
            (record.lat - spec.origin_lat) / spec.delta_theta_deg * spec.side_km};
}

BsRecord geographic_position(const RoiSpec& spec, const Point& local) {
    return {spec.origin_lat + local.y_km / spec.side_km * spec.delta_theta_deg,
            spec.origin_lon + local.x_km / spec.side_km * spec.delta_phi_deg};
}

Point pixel_center(int i, int j, double side_km) {
    if (i < 0 || j < 0 || i >= kRoiGrid || j >= kRoiGrid) throw DomainError("pixel index out of range");
    const double w = side_km / kRoiGrid;
    return {(i + 0.5) * w, (j + 0.5) * w};
}

Raster rasterize(std::span<const Point> bs_local, double side_km) {
    Raster out;
    for (const Point& p : bs_local) {
        if (!(p.x_km >= 0.0 && p.y_km >= 0.0 && p.x_km < side_km && p.y_km < side_km))
            throw DomainError("BS at (" + io::format_double(p.x_km) + ", " + io::format_double(p.y_km) +
                              ") km lies outside the RoI");
        const int i = std::min(static_cast<int>(std::floor(kRoiGrid * p.x_km / side_km)), kRoiGrid - 1);
        const int j = std::min(static_cast<int>(std::floor(kRoiGrid * p.y_km / side_km)), kRoiGrid - 1);
        if (out.image.at(i, j))
            ++out.collapsed;
        else
            out.image.set(i, j);
    }
    return out;
}

BsImage rasterize(const Roi& roi) { return rasterize(roi.bs_local, roi.spec.side_km).image; }

void check_occupancy(const BsImage& image) {
    const int n = image.occupied_count();
    if (n < kMinOccupied || n > kMaxOccupied)
        throw DomainError("RoI has " + std::to_string(n) + " occupied pixels, outside [21, 399]");
}

AssignResult assign_and_filter(std::span<const BsRecord> records, std::span<const RoiSpec> grid) {
    AssignResult result;
    if (grid.empty()) {
        result.stats.unassigned_records = records.size();
        return result;
    }

    struct Row {
        double origin_lat = 0.0;
        double west = 0.0;
        double dphi = 0.0;
        std::map<int, std::size_t> cells;
    };
    std::map<int, Row> rows;
    double south = 0.0;
    double dtheta = grid.front().delta_theta_deg;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const RoiSpec& s = grid[k];
        Row& row = rows[s.row];
        if (row.cells.empty() || s.col == 0) {
            row.origin_lat = s.origin_lat;
            row.dphi = s.delta_phi_deg;
            row.west = s.origin_lon - s.col * s.delta_phi_deg;
        }
        row.cells[s.col] = k;
        if (s.row == 0) south = s.origin_lat;
    }
    if (!rows.count(0)) south = rows.begin()->second.origin_lat - rows.begin()->first * dtheta;

    std::map<std::size_t, std::vector<Point>> buckets;
    for (const BsRecord& rec : records) {
        const double t_lat = (rec.lat - south) / dtheta;
        const auto r = static_cast<int>(std::floor(t_lat));
        const auto row_it = rows.find(r);
        if (row_it == rows.end()) {
            ++result.stats.unassigned_records;
            continue;
        }
        const Row& row = row_it->second;
        const double t_lon = (rec.lon - row.west) / row.dphi;
        const auto c = static_cast<int>(std::floor(t_lon));
        const auto cell_it = row.cells.find(c);
        if (cell_it == row.cells.end()) {
            ++result.stats.unassigned_records;
            continue;
        }
        const RoiSpec& spec = grid[cell_it->second];
        Point local = local_position(spec, rec);
        local.x_km = clamp_unit(local.x_km / spec.side_km) * spec.side_km;
        local.y_km = clamp_unit(local.y_km / spec.side_km) * spec.side_km;
        if (local.x_km >= spec.side_km) local.x_km = std::nextafter(spec.side_km, 0.0);
        if (local.y_km >= spec.side_km) local.y_km = std::nextafter(spec.side_km, 0.0);
        buckets[cell_it->second].push_back(local);
    }

    for (auto& [index, points] : buckets) {
        Roi roi;
        roi.spec = grid[index];
        roi.raw_count = points.size();
        Raster raster = rasterize(points, roi.spec.side_km);
        roi.bs_local = std::move(points);
        roi.image = raster.image;
        roi.collapsed = raster.collapsed;
        const int n = roi.image.occupied_count();
        if (n < kMinOccupied) {
            ++result.stats.dropped_low;
        } else if (n > kMaxOccupied) {
            ++result.stats.dropped_high;
        } else {
            check_occupancy(roi.image);
            result.rois.push_back(std::move(roi));
            ++result.stats.kept;
        }
    }
    return result;
}

nlohmann::json to_json(const RoiSpec& spec) {
    return {{"origin_lat", spec.origin_lat},
            {"origin_lon", spec.origin_lon},
            {"side_km", spec.side_km},
            {"delta_theta_deg", spec.delta_theta_deg},
            {"delta_phi_deg", spec.delta_phi_deg},
            {"grid_n", spec.grid_n},
            {"row", spec.row},
            {"col", spec.col}};
}

RoiSpec roi_spec_from_json(const nlohmann::json& doc) {
    try {
        RoiSpec spec;
        spec.origin_lat = doc.at("origin_lat").get<double>();
        spec.origin_lon = doc.at("origin_lon").get<double>();
        spec.side_km = doc.at("side_km").get<double>();
        spec.delta_theta_deg = doc.at("delta_theta_deg").get<double>();
        spec.delta_phi_deg = doc.at("delta_phi_deg").get<double>();
        spec.grid_n = doc.at("grid_n").get<int>();
        spec.row = doc.value("row", 0);
        spec.col = doc.value("col", 0);
        if (spec.grid_n != kRoiGrid) throw ConfigError("RoI grid_n must be 64");
        if (!(spec.side_km > 0.0)) throw ConfigError("RoI side_km must be positive");
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed RoI spec: ") + e.what());
    }
}

void write_roi_dir(const std::filesystem::path& dir, const Roi& roi) {
    std::filesystem::create_directories(dir);
    io::write_bs_image(dir / "image.pgm", roi.image);
    nlohmann::json points = nlohmann::json::array();
    for (const Point& p : roi.bs_local) points.push_back({p.x_km, p.y_km});
    nlohmann::json doc = {
        {"id", roi.spec.id()},
        {"spec", to_json(roi.spec)},
        {"synthetic", roi.synthetic},
        {"counts", {{"raw", roi.raw_count}, {"occupied", roi.occupied()}, {"collapsed", roi.collapsed}}},
        {"provenance", roi.provenance},
        {"bs_local", points},
    };
    io::write_json(dir / "roi.json", doc);
}

Roi read_roi_dir(const std::filesystem::path& dir) {
    const auto doc = io::read_json(dir / "roi.json");
    Roi roi;
    try {
        roi.spec = roi_spec_from_json(doc.at("spec"));
        roi.synthetic = doc.value("synthetic", false);
        roi.provenance = doc.value("provenance", nlohmann::json::object());
        for (const auto& p : doc.at("bs_local")) roi.bs_local.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        roi.raw_count = doc.at("counts").value("raw", roi.bs_local.size());
        roi.collapsed = doc.at("counts").value("collapsed", std::size_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed roi.json in '" + dir.string() + "': " + e.what());
    }
    roi.image = io::read_bs_image(dir / "image.pgm");
    return roi;
}

std::vector<std::filesystem::path> list_roi_dirs(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) throw IoError("'" + root.string() + "' is not a directory");
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(root))
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "roi.json")) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

} // namespace covmap::geodata
