#ifndef SSIN_TRAINING_HPP
#define SSIN_TRAINING_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssin/checkpoint.hpp"
#include "ssin/geom.hpp"
#include "ssin/pipeline.hpp"
#include "ssin/spaformer.hpp"

namespace ssin::train {

using num::Index;
using num::Var;

struct TrainConfig {
    int epochs = 100;
    int batch = 64;
    int remask = 10;
    double mask_ratio = 0.2;
    int warmup = 1200;
    double lr_scale = 1.0;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    bool static_masking = false;
    bool zero_fill = false;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
    int epoch = 0;            // 1-based
    double loss = 0.0;        // masked MSE pooled over the epoch's masked nodes
    std::size_t sequences = 0;
    std::int64_t step = 0;    // optimizer steps so far
    double lr = 0.0;          // learning rate of the last step
    double seconds = 0.0;
};

struct TrainResult {
    model::Checkpoint checkpoint;
    std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Standardization moments of a training roster.
model::StandardizationStats roster_stats(const geom::StationSet& stations,
                                         const geom::DistanceProvider& metric = geom::default_distance());

// Mask-and-recover training over `snapshots`, which must be expressed over
// `stations` (use Dataset::train_snapshots). Single-threaded and fully
// determined by the seeds.
TrainResult train(const geom::StationSet& stations, const std::vector<pipeline::Snapshot>& snapshots,
                  const model::ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

}  // namespace ssin::train

#endif  // SSIN_TRAINING_HPP
