#pragma once

// Tower records -> spherical-corrected RoI grid -> filtered, rasterized RoIs.

#include <cstddef>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "covmap/grid.hpp"

namespace covmap::geodata {

/// RoIs with an occupied-pixel count outside [kMinOccupied, kMaxOccupied] are dropped.
inline constexpr int kMinOccupied = 21;
inline constexpr int kMaxOccupied = 399;

struct BsRecord {
    double lat = 0.0; ///< degrees, [-90, 90]
    double lon = 0.0; ///< degrees, [-180, 180]
};

struct ColumnMap {
    std::string lat = "lat";
    std::string lon = "lon";
};

struct ParseResult {
    std::vector<BsRecord> records;
    std::size_t skipped = 0;
};

/// Reads a comma-separated tower file with a header row. Rows with missing,
/// unparsable or out-of-range coordinates are skipped and counted.
ParseResult parse_bs_records(std::istream& in, const ColumnMap& columns = {});

struct GeoBounds {
    double south = 0.0;
    double west = 0.0;
    double north = 0.0;
    double east = 0.0;
};

/// Parses "S,W,N,E".
GeoBounds parse_bounds(const std::string& text);

struct RoiSpec {
    double origin_lat = 0.0; ///< south-west corner, degrees
    double origin_lon = 0.0;
    double side_km = 10.0;
    double delta_theta_deg = 0.0;
    double delta_phi_deg = 0.0;
    int grid_n = kRoiGrid;
    int row = 0; ///< latitude row, counted from the southern edge
    int col = 0;

    std::string id() const;
};

/// Angular extents of an L x L square whose southern edge sits at `origin_lat`.
RoiSpec make_roi_spec(double origin_lat, double origin_lon, double side_km);

std::vector<RoiSpec> build_grid(const GeoBounds& bounds, double side_km);

struct Roi {
    RoiSpec spec;
    std::vector<Point> bs_local; ///< every record in the cell, km from the SW corner
    BsImage image;
    std::size_t raw_count = 0;
    std::size_t collapsed = 0; ///< records that landed on an already-occupied pixel
    bool synthetic = false;
    nlohmann::json provenance = nlohmann::json::object();

    int occupied() const { return image.occupied_count(); }
};

struct FilterStats {
    std::size_t kept = 0;
    std::size_t dropped_low = 0;
    std::size_t dropped_high = 0;
    std::size_t unassigned_records = 0;
};

struct AssignResult {
    std::vector<Roi> rois;
    FilterStats stats;
};

/// Buckets records into grid cells, rasterizes each populated cell and keeps
/// those with 21..399 occupied pixels.
AssignResult assign_and_filter(std::span<const BsRecord> records, std::span<const RoiSpec> grid);

struct Raster {
    BsImage image;
    std::size_t collapsed = 0;
};

Raster rasterize(std::span<const Point> bs_local, double side_km);
BsImage rasterize(const Roi& roi);

Point pixel_center(int i, int j, double side_km);
Point local_position(const RoiSpec& spec, const BsRecord& record);
BsRecord geographic_position(const RoiSpec& spec, const Point& local);

/// Throws DomainError unless the occupied count is within the filter range.
void check_occupancy(const BsImage& image);

nlohmann::json to_json(const RoiSpec& spec);
RoiSpec roi_spec_from_json(const nlohmann::json& doc);

/// Writes `image.pgm` and `roi.json` into `dir`.
void write_roi_dir(const std::filesystem::path& dir, const Roi& roi);
Roi read_roi_dir(const std::filesystem::path& dir);

/// Subdirectories of `root` that contain a roi.json, sorted by name.
std::vector<std::filesystem::path> list_roi_dirs(const std::filesystem::path& root);

} // namespace covmap::geodata
