#ifndef SSIN_PIPELINE_HPP
#define SSIN_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssin/checkpoint.hpp"
#include "ssin/geom.hpp"
#include "ssin/rng.hpp"
#include "ssin/spaformer.hpp"

namespace ssin::pipeline {

using num::Index;
using num::Vector;

// One timestamp over a fixed roster. `values` is meaningful only where
// `observed` is set.
struct Snapshot {
    std::string timestamp;  // normalized YYYY-MM-DDTHH:MM:SSZ
    std::int64_t epoch_seconds = 0;
    Vector values;
    std::vector<bool> observed;

    std::size_t observed_count() const;
};

// Seconds since 1970-01-01T00:00:00Z. Accepts YYYY-MM-DD[T ]HH:MM[:SS] with
// an optional Z or +hh:mm / -hh:mm suffix; throws IngestError otherwise.
std::int64_t parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t epoch_seconds);

struct IngestResult {
    std::vector<Snapshot> snapshots;  // ascending time
    std::vector<std::string> warnings;
};

// Records CSV: header `station_id,timestamp,value_mm`.
IngestResult ingest(const geom::StationSet& roster, const std::string& records_csv);
void write_records_csv(const std::string& path, const geom::StationSet& roster, const std::vector<Snapshot>& snapshots);

// Keeps snapshots where at least one observed value reaches `threshold_mm`.
std::vector<Snapshot> select_rainy_hours(const std::vector<Snapshot>& snapshots, double threshold_mm);

// Restricts a snapshot to a subset of its roster (indices into the roster).
Snapshot restrict(const Snapshot& s, const std::vector<std::size_t>& indices);

struct DatasetManifest {
    std::string name;
    std::string roster;   // resolved against the manifest directory on load
    std::string records;
    double rain_threshold = 0.1;
    std::uint64_t split_seed = 0;
    double test_fraction = 0.2;
    std::optional<std::string> start;  // inclusive time-span bounds
    std::optional<std::string> end;

    static DatasetManifest load(const std::string& path);
    nlohmann::json to_json() const;
};

struct StationSplit {
    std::vector<std::size_t> train;  // ascending roster indices
    std::vector<std::size_t> test;
};

// round(test_fraction * n) stations drawn uniformly as the test set.
StationSplit split_stations(std::size_t n, double test_fraction, std::uint64_t seed);

struct Dataset {
    DatasetManifest manifest;
    geom::StationSet roster;
    std::vector<Snapshot> snapshots;  // rainy hours within the span
    StationSplit split;
    std::vector<std::string> warnings;
    nlohmann::json checksums;  // FNV-1a of the input files

    geom::StationSet train_stations() const { return roster.subset(split.train); }
    std::vector<Snapshot> train_snapshots() const;
};

Dataset load_dataset(const DatasetManifest& manifest);
std::string file_checksum(const std::string& path);

struct InstanceStats {
    double mean = 0.0;
    double std = 0.0;  // population
};

// z = (x - mean) / max(std, 1e-8) with the moments of `known`.
struct Standardized {
    Vector z;
    InstanceStats stats;
};
Standardized standardize_instance(const Vector& known);

// Training instance: nodes are the known stations of a snapshot, in roster
// order; masked nodes are hidden and their inputs mean-filled.
struct MaskedSequence {
    std::size_t snapshot = 0;
    std::size_t replica = 0;
    std::vector<Index> nodes;  // roster indices
    Vector x_std;
    std::vector<Index> mask;   // sequence positions, ascending
    Vector targets_std;        // aligned with mask
    InstanceStats stats;       // moments of the unmasked known values
};

struct MaskOptions {
    double ratio = 0.2;
    bool zero_fill = false;  // masked raw inputs set to 0 mm instead of the mean
};

// floor(ratio * known) nodes masked (at least 1, at most known - 1). Returns
// nothing when fewer than two nodes are known.
std::optional<MaskedSequence> dynamic_mask(const Snapshot& s, const MaskOptions& options, Rng& rng);

struct StreamOptions {
    std::size_t remask = 10;
    MaskOptions mask;
    bool static_masking = false;
    std::uint64_t seed = 0;
};

// Produces the masked sequences of each epoch. Every (snapshot, replica)
// draws from its own seeded stream, so output is independent of evaluation
// order; the static variant reuses the epoch-0 masks forever.
class EpochStream {
public:
    EpochStream(std::vector<Snapshot> snapshots, StreamOptions options);

    std::vector<MaskedSequence> epoch(std::size_t index) const;
    std::size_t skipped() const { return skipped_; }
    const std::vector<Snapshot>& snapshots() const { return snapshots_; }

private:
    std::vector<Snapshot> snapshots_;
    StreamOptions options_;
    std::size_t skipped_ = 0;
};

std::uint64_t sequence_hash(const std::vector<MaskedSequence>& sequences);

// Model input for a training sequence over the roster table.
model::ModelInput training_input(const MaskedSequence& seq, const model::RelPosTableInput& table,
                                 const geom::StationSet& roster, const geom::CoordStats& coords);

// Observed stations followed by appended query locations, all standardized
// with the snapshot's observed moments.
struct InferenceSequence {
    std::vector<geom::Station> nodes;
    Vector x_std;
    Index observed = 0;
    InstanceStats stats;
    model::ModelInput input;

    Index queries() const { return static_cast<Index>(nodes.size()) - observed; }
};

struct InferenceOptions {
    bool zero_fill = false;
};

InferenceSequence fill_for_inference(const geom::StationSet& roster, const Snapshot& snapshot,
                                     const std::vector<geom::Station>& queries,
                                     const model::StandardizationStats& stats,
                                     const geom::DistanceProvider& metric = geom::default_distance(),
                                     const InferenceOptions& options = {});

// y = pred * std + mean, optionally clamped at 0. A field whose std is below
// the floor was standardized to all zeros, so the prediction carries no
// information and the field mean is returned.
template <typename Derived>
Vector destandardize(const Eigen::MatrixBase<Derived>& pred, const InstanceStats& stats, bool clamp_nonneg) {
    const double scale = stats.std < geom::kStdFloor ? 0.0 : stats.std;
    Vector y = (pred.array() * scale + stats.mean).matrix();
    if (clamp_nonneg) y = y.cwiseMax(0.0);
    return y;
}

Eigen::Vector2d standardized_coords(const geom::Station& s, const geom::CoordStats& coords);

}  // namespace ssin::pipeline

#endif  // SSIN_PIPELINE_HPP
