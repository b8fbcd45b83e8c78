#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "covmap/errors.hpp"

namespace covmap {

/// Pixels per side of a region of interest (RoI) image.
inline constexpr int kRoiGrid = 64;
/// Pixels per side of the region of evaluation (RoE), the concentric half-size square.
inline constexpr int kRoeGrid = 32;
/// RoI pixel index of RoE pixel (0, 0) along each axis.
inline constexpr int kRoeOffset = (kRoiGrid - kRoeGrid) / 2;
inline constexpr int kRoiPixels = kRoiGrid * kRoiGrid;
inline constexpr int kRoePixels = kRoeGrid * kRoeGrid;

inline constexpr double kEarthRadiusKm = 6371.0;

/// Planar position in km, local to an RoI's south-west corner.
struct Point {
    double x_km = 0.0;
    double y_km = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

/// Row-major pixel id used across the library: id = i * 64 + j.
constexpr int pixel_id(int i, int j) { return i * kRoiGrid + j; }

/// 64x64 binary occupancy grid of base stations. Pixel (i, j) covers
/// x in [i, i+1) * L/64 and y in [j, j+1) * L/64.
class BsImage {
public:
    BsImage() { pixels_.fill(0); }

    bool at(int i, int j) const { return pixels_[check(i, j)] != 0; }
    bool at_id(int id) const { return pixels_[static_cast<std::size_t>(id)] != 0; }

    void set(int i, int j, bool value = true) { pixels_[check(i, j)] = value ? 1 : 0; }
    void set_id(int id, bool value = true) { pixels_[static_cast<std::size_t>(id)] = value ? 1 : 0; }

    int occupied_count() const;

    /// Occupied pixel ids in increasing order.
    std::vector<int> occupied_ids() const;

    const std::array<std::uint8_t, kRoiPixels>& raw() const { return pixels_; }

    /// FNV-1a over the packed bits; stable across runs and platforms.
    std::uint64_t hash() const;

    friend bool operator==(const BsImage&, const BsImage&) = default;

private:
    static std::size_t check(int i, int j) {
        if (i < 0 || j < 0 || i >= kRoiGrid || j >= kRoiGrid)
            throw DomainError("pixel index (" + std::to_string(i) + ", " + std::to_string(j) +
                              ") outside the 64x64 grid");
        return static_cast<std::size_t>(pixel_id(i, j));
    }

    std::array<std::uint8_t, kRoiPixels> pixels_;
};

struct BsImageHash {
    std::size_t operator()(const BsImage& image) const noexcept {
        return static_cast<std::size_t>(image.hash());
    }
};

enum class ManifoldKind { coverage, rate_raw, rate_scaled };

std::string to_string(ManifoldKind kind);
ManifoldKind parse_manifold_kind(const std::string& text);

/// 32x32 performance surface over the RoE. Row i of the manifold is RoI
/// pixel row i + 16.
class Manifold {
public:
    Manifold() : Manifold(ManifoldKind::coverage) {}
    explicit Manifold(ManifoldKind kind, double fill = 0.0) : kind_(kind) { values_.fill(fill); }

    ManifoldKind kind() const { return kind_; }
    void set_kind(ManifoldKind kind) { kind_ = kind; }

    double at(int i, int j) const { return values_[index(i, j)]; }
    double& at(int i, int j) { return values_[index(i, j)]; }

    double operator[](std::size_t k) const { return values_[k]; }
    double& operator[](std::size_t k) { return values_[k]; }

    const std::array<double, kRoePixels>& values() const { return values_; }
    std::array<double, kRoePixels>& values() { return values_; }

    /// Throws DomainError when a value is non-finite or outside the kind's range.
    void validate() const;

    friend bool operator==(const Manifold&, const Manifold&) = default;

private:
    static std::size_t index(int i, int j) {
        if (i < 0 || j < 0 || i >= kRoeGrid || j >= kRoeGrid)
            throw DomainError("manifold index out of range");
        return static_cast<std::size_t>(i * kRoeGrid + j);
    }

    ManifoldKind kind_;
    std::array<double, kRoePixels> values_;
};

} // namespace covmap
