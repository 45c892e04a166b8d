#include "ssin/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ssin/error.hpp"
#include "ssin/rng.hpp"

namespace ssin::synth {

void FieldSpec::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("synthetic spec: " + m); };
    if (!(bbox.lat_min < bbox.lat_max) || !(bbox.lon_min < bbox.lon_max)) fail("bbox must be non-empty");
    if (!geom::valid_coordinates(bbox.lat_min, bbox.lon_min) || !geom::valid_coordinates(bbox.lat_max, bbox.lon_max)) {
        fail("bbox outside valid coordinates");
    }
    if (n_stations < 1) fail("n_stations must be at least 1");
    if (n_snapshots < 1) fail("n_snapshots must be at least 1");
    if (cells_min < 1 || cells_max < cells_min) fail("need 1 <= cells_min <= cells_max");
    if (!(amplitude_min > 0.0) || amplitude_max < amplitude_min) fail("need 0 < amplitude_min <= amplitude_max");
    if (!(scale_min_km > 0.0) || scale_max_km < scale_min_km) fail("need 0 < scale_min_km <= scale_max_km");
    if (noise_std < 0.0) fail("noise_std must be >= 0");
    if (missing_rate < 0.0 || missing_rate >= 1.0) fail("missing_rate must lie in [0, 1)");
    if (grid_size < 1 || grid_snapshots < 0) fail("grid_size >= 1 and grid_snapshots >= 0 required");
    pipeline::parse_timestamp(start);
}

void to_json(nlohmann::json& j, const FieldSpec& s) {
    j = {{"seed", s.seed},
         {"bbox", {{"lat_min", s.bbox.lat_min}, {"lat_max", s.bbox.lat_max}, {"lon_min", s.bbox.lon_min}, {"lon_max", s.bbox.lon_max}}},
         {"n_stations", s.n_stations},
         {"n_snapshots", s.n_snapshots},
         {"cells_min", s.cells_min},
         {"cells_max", s.cells_max},
         {"amplitude_min", s.amplitude_min},
         {"amplitude_max", s.amplitude_max},
         {"scale_min_km", s.scale_min_km},
         {"scale_max_km", s.scale_max_km},
         {"anisotropic", s.anisotropic},
         {"noise_std", s.noise_std},
         {"missing_rate", s.missing_rate},
         {"start", s.start},
         {"grid_size", s.grid_size},
         {"grid_snapshots", s.grid_snapshots}};
}

void from_json(const nlohmann::json& j, FieldSpec& s) {
    const FieldSpec d;
    s.seed = j.value("seed", d.seed);
    if (j.contains("bbox")) {
        const auto& b = j.at("bbox");
        s.bbox.lat_min = b.value("lat_min", d.bbox.lat_min);
        s.bbox.lat_max = b.value("lat_max", d.bbox.lat_max);
        s.bbox.lon_min = b.value("lon_min", d.bbox.lon_min);
        s.bbox.lon_max = b.value("lon_max", d.bbox.lon_max);
    }
    s.n_stations = j.value("n_stations", d.n_stations);
    s.n_snapshots = j.value("n_snapshots", d.n_snapshots);
    s.cells_min = j.value("cells_min", d.cells_min);
    s.cells_max = j.value("cells_max", d.cells_max);
    s.amplitude_min = j.value("amplitude_min", d.amplitude_min);
    s.amplitude_max = j.value("amplitude_max", d.amplitude_max);
    s.scale_min_km = j.value("scale_min_km", d.scale_min_km);
    s.scale_max_km = j.value("scale_max_km", d.scale_max_km);
    s.anisotropic = j.value("anisotropic", d.anisotropic);
    s.noise_std = j.value("noise_std", d.noise_std);
    s.missing_rate = j.value("missing_rate", d.missing_rate);
    s.start = j.value("start", d.start);
    s.grid_size = j.value("grid_size", d.grid_size);
    s.grid_snapshots = j.value("grid_snapshots", d.grid_snapshots);
}

FieldSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open synthetic spec " + path);
    try {
        auto spec = nlohmann::json::parse(in).get<FieldSpec>();
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("synthetic spec " + path + ": " + e.what());
    }
}

double Cell::operator()(double px, double py) const {
    const double dx = px - x, dy = py - y;
    const double c = std::cos(theta), s = std::sin(theta);
    const double u = (c * dx + s * dy) / sx;
    const double v = (-s * dx + c * dy) / sy;
    return amplitude * std::exp(-0.5 * (u * u + v * v));
}

Field::Field(const BBox& bbox, std::vector<std::vector<Cell>> cells)
    : lat0_((bbox.lat_min + bbox.lat_max) / 2),
      lon0_((bbox.lon_min + bbox.lon_max) / 2),
      cos_lat0_(std::cos(geom::deg2rad(lat0_))),
      cells_(std::move(cells)) {}

Eigen::Vector2d Field::to_local(double lat, double lon) const {
    return {geom::kEarthRadiusKm * geom::deg2rad(lon - lon0_) * cos_lat0_, geom::kEarthRadiusKm * geom::deg2rad(lat - lat0_)};
}

double Field::truth(double lat, double lon, std::size_t t) const {
    const auto p = to_local(lat, lon);
    double v = 0.0;
    for (const auto& c : cells_.at(t)) v += c(p.x(), p.y());
    return v;
}

SynthDataset generate(const FieldSpec& spec) {
    spec.validate();
    SynthDataset ds;
    ds.spec = spec;

    Rng srng(derive_seed(spec.seed, {1}));
    std::vector<geom::Station> stations;
    char id[32];
    for (int i = 0; i < spec.n_stations; ++i) {
        std::snprintf(id, sizeof id, "S%04d", i);
        stations.push_back({id, srng.uniform(spec.bbox.lat_min, spec.bbox.lat_max), srng.uniform(spec.bbox.lon_min, spec.bbox.lon_max)});
    }
    ds.stations = geom::StationSet(std::move(stations));

    // Cells are centred anywhere in the bbox, so the frame helper comes first.
    const Field frame(spec.bbox, {});
    const auto lo = frame.to_local(spec.bbox.lat_min, spec.bbox.lon_min);
    const auto hi = frame.to_local(spec.bbox.lat_max, spec.bbox.lon_max);

    std::vector<std::vector<Cell>> cells(static_cast<std::size_t>(spec.n_snapshots));
    for (int t = 0; t < spec.n_snapshots; ++t) {
        Rng rng(derive_seed(spec.seed, {2, static_cast<std::uint64_t>(t)}));
        const auto k = spec.cells_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.cells_max - spec.cells_min + 1)));
        for (int c = 0; c < k; ++c) {
            Cell cell;
            cell.x = rng.uniform(lo.x(), hi.x());
            cell.y = rng.uniform(lo.y(), hi.y());
            cell.amplitude = rng.uniform(spec.amplitude_min, spec.amplitude_max);
            // Log-uniform scales.
            const double a = std::log(spec.scale_min_km), b = std::log(spec.scale_max_km);
            cell.sx = std::exp(rng.uniform(a, b));
            cell.sy = spec.anisotropic ? std::exp(rng.uniform(a, b)) : cell.sx;
            cell.theta = spec.anisotropic ? rng.uniform(0.0, M_PI) : 0.0;
            cells[static_cast<std::size_t>(t)].push_back(cell);
        }
    }
    ds.field = Field(spec.bbox, std::move(cells));

    const auto t0 = pipeline::parse_timestamp(spec.start);
    const auto n = static_cast<Eigen::Index>(ds.stations.size());
    ds.snapshots.reserve(static_cast<std::size_t>(spec.n_snapshots));
    for (int t = 0; t < spec.n_snapshots; ++t) {
        Rng rng(derive_seed(spec.seed, {3, static_cast<std::uint64_t>(t)}));
        pipeline::Snapshot s;
        s.epoch_seconds = t0 + 3600LL * t;
        s.timestamp = pipeline::format_timestamp(s.epoch_seconds);
        s.values = Eigen::VectorXd::Zero(n);
        s.observed.assign(ds.stations.size(), true);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& st = ds.stations[static_cast<std::size_t>(i)];
            double v = ds.field.truth(st.lat, st.lon, static_cast<std::size_t>(t));
            if (spec.noise_std > 0.0) v = std::max(0.0, v + spec.noise_std * rng.normal());
            s.values[i] = quantize(v);
            if (spec.missing_rate > 0.0 && rng.uniform() < spec.missing_rate) {
                s.observed[static_cast<std::size_t>(i)] = false;
                s.values[i] = 0.0;
            }
        }
        ds.snapshots.push_back(std::move(s));
    }
    return ds;
}

void write_dataset(const SynthDataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const fs::path root(dir);
    geom::write_roster_csv((root / "roster.csv").string(), ds.stations);
    pipeline::write_records_csv((root / "records.csv").string(), ds.stations, ds.snapshots);

    {
        std::ofstream out(root / "truth_grid.csv");
        if (!out) throw Error("cannot write " + (root / "truth_grid.csv").string());
        out << "timestamp,lat,lon,value_mm\n";
        const auto& b = ds.spec.bbox;
        const int g = ds.spec.grid_size;
        const auto snaps = std::min<std::size_t>(static_cast<std::size_t>(ds.spec.grid_snapshots), ds.snapshots.size());
        char buf[128];
        for (std::size_t t = 0; t < snaps; ++t) {
            for (int r = 0; r < g; ++r) {
                for (int c = 0; c < g; ++c) {
                    const double lat = g == 1 ? (b.lat_min + b.lat_max) / 2 : b.lat_min + (b.lat_max - b.lat_min) * r / (g - 1);
                    const double lon = g == 1 ? (b.lon_min + b.lon_max) / 2 : b.lon_min + (b.lon_max - b.lon_min) * c / (g - 1);
                    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.4f", lat, lon, ds.field.truth(lat, lon, t));
                    out << ds.snapshots[t].timestamp << ',' << buf << '\n';
                }
            }
        }
    }

    const nlohmann::json manifest = {{"name", "synthetic-" + std::to_string(ds.spec.seed)},
                                     {"roster", "roster.csv"},
                                     {"records", "records.csv"},
                                     {"rain_threshold", 0.1},
                                     {"split_seed", ds.spec.seed},
                                     {"test_fraction", 0.2}};
    std::ofstream(root / "manifest.json") << manifest.dump(2) << '\n';
    std::ofstream(root / "spec.json") << nlohmann::json(ds.spec).dump(2) << '\n';
}

}  // namespace ssin::synth
