#include "covmap/grid.hpp"

#include <cmath>

namespace covmap {

int BsImage::occupied_count() const {
    int count = 0;
    for (auto p : pixels_) count += p;
    return count;
}

std::vector<int> BsImage::occupied_ids() const {
    std::vector<int> ids;
    for (int id = 0; id < kRoiPixels; ++id)
        if (pixels_[static_cast<std::size_t>(id)]) ids.push_back(id);
    return ids;
}

std::uint64_t BsImage::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t base = 0; base < pixels_.size(); base += 8) {
        std::uint8_t packed = 0;
        for (std::size_t b = 0; b < 8; ++b) packed |= static_cast<std::uint8_t>(pixels_[base + b] << b);
        h ^= packed;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_string(ManifoldKind kind) {
    switch (kind) {
    case ManifoldKind::coverage: return "coverage";
    case ManifoldKind::rate_raw: return "rate_raw";
    case ManifoldKind::rate_scaled: return "rate_scaled";
    }
    return "unknown";
}

ManifoldKind parse_manifold_kind(const std::string& text) {
    if (text == "coverage") return ManifoldKind::coverage;
    if (text == "rate_raw") return ManifoldKind::rate_raw;
    if (text == "rate_scaled") return ManifoldKind::rate_scaled;
    throw ConfigError("unknown manifold kind '" + text + "'");
}

void Manifold::validate() const {
    for (double v : values_) {
        if (!std::isfinite(v)) throw DomainError("manifold holds a non-finite value");
        if (v < 0.0) throw DomainError("manifold holds a negative value");
        if (kind_ != ManifoldKind::rate_raw && v > 1.0)
            throw DomainError(to_string(kind_) + " manifold value exceeds 1");
    }
}

} // namespace covmap
