#ifndef SSIN_SYNTH_HPP
#define SSIN_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssin/geom.hpp"
#include "ssin/pipeline.hpp"

namespace ssin::synth {

struct BBox {
    double lat_min = 22.15;
    double lat_max = 22.55;
    double lon_min = 113.85;
    double lon_max = 114.40;

    bool contains(double lat, double lon) const {
        return lat >= lat_min && lat <= lat_max && lon >= lon_min && lon <= lon_max;
    }
};

struct FieldSpec {
    std::uint64_t seed = 1;
    BBox bbox;
    int n_stations = 100;
    int n_snapshots = 2000;
    int cells_min = 1;
    int cells_max = 4;
    double amplitude_min = 2.0;   // mm
    double amplitude_max = 20.0;
    double scale_min_km = 4.0;    // Gaussian length scale
    double scale_max_km = 20.0;
    bool anisotropic = true;
    double noise_std = 0.0;       // mm, additive at stations only
    double missing_rate = 0.0;    // chance a station reading is absent
    std::string start = "2020-01-01T00:00:00Z";  // hourly from here
    int grid_size = 20;           // truth grid is grid_size x grid_size
    int grid_snapshots = 5;       // snapshots written to the truth grid

    // Throws ConfigError on an unusable specification.
    void validate() const;
};

void to_json(nlohmann::json& j, const FieldSpec& s);
void from_json(const nlohmann::json& j, FieldSpec& s);
FieldSpec load_spec(const std::string& path);

// A Gaussian rain cell in the local km frame of the bbox centre.
struct Cell {
    double x = 0.0;  // east km
    double y = 0.0;  // north km
    double amplitude = 0.0;
    double sx = 1.0;  // length scale along the rotated axes
    double sy = 1.0;
    double theta = 0.0;  // radians

    double operator()(double px, double py) const;
};

class Field {
public:
    Field() = default;
    Field(const BBox& bbox, std::vector<std::vector<Cell>> cells);

    // Noise-free rainfall in mm at (lat, lon) for snapshot t.
    double truth(double lat, double lon, std::size_t t) const;
    Eigen::Vector2d to_local(double lat, double lon) const;
    std::size_t snapshots() const { return cells_.size(); }
    const std::vector<Cell>& cells(std::size_t t) const { return cells_[t]; }

private:
    double lat0_ = 0.0;
    double lon0_ = 0.0;
    double cos_lat0_ = 1.0;
    std::vector<std::vector<Cell>> cells_;
};

struct SynthDataset {
    FieldSpec spec;
    geom::StationSet stations;
    std::vector<pipeline::Snapshot> snapshots;
    Field field;
};

inline double quantize(double mm) { return std::round(mm * 10.0) / 10.0; }

SynthDataset generate(const FieldSpec& spec);

// Writes roster.csv, records.csv, truth_grid.csv, manifest.json and
// spec.json into `dir` (created if missing).
void write_dataset(const SynthDataset& ds, const std::string& dir);

}  // namespace ssin::synth

#endif  // SSIN_SYNTH_HPP
