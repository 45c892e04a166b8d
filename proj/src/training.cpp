#include "ssin/training.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include "ssin/error.hpp"
#include "ssin/numcore/optim.hpp"

namespace ssin::train {

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("training config: " + m); };
    if (epochs < 1) fail("epochs must be >= 1");
    if (batch < 1) fail("batch must be >= 1");
    if (remask < 1) fail("remask must be >= 1");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) fail("mask_ratio must lie in (0, 1)");
    if (warmup < 1) fail("warmup must be >= 1");
    if (!(lr_scale > 0.0)) fail("lr_scale must be positive");
    if (weight_decay < 0.0) fail("weight_decay must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"epochs", c.epochs},         {"batch", c.batch},
         {"remask", c.remask},         {"mask_ratio", c.mask_ratio},
         {"warmup", c.warmup},         {"lr_scale", c.lr_scale},
         {"weight_decay", c.weight_decay}, {"seed", c.seed},
         {"static_masking", c.static_masking}, {"zero_fill", c.zero_fill}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    const TrainConfig d;
    c.epochs = j.value("epochs", d.epochs);
    c.batch = j.value("batch", d.batch);
    c.remask = j.value("remask", d.remask);
    c.mask_ratio = j.value("mask_ratio", d.mask_ratio);
    c.warmup = j.value("warmup", d.warmup);
    c.lr_scale = j.value("lr_scale", d.lr_scale);
    c.weight_decay = j.value("weight_decay", d.weight_decay);
    c.seed = j.value("seed", d.seed);
    c.static_masking = j.value("static_masking", d.static_masking);
    c.zero_fill = j.value("zero_fill", d.zero_fill);
}

model::StandardizationStats roster_stats(const geom::StationSet& stations, const geom::DistanceProvider& metric) {
    return {geom::build_relpos_table(stations, metric).stats(), geom::coordinate_stats(stations)};
}

TrainResult train(const geom::StationSet& stations, const std::vector<pipeline::Snapshot>& snapshots,
                  const model::ModelConfig& model_config, const TrainConfig& config, const EpochCallback& on_epoch) {
    model_config.validate();
    config.validate();
    for (const auto& s : snapshots) {
        SSIN_EXPECTS(s.observed.size() == stations.size(), "training snapshots must cover the training roster");
    }

    const auto relpos = geom::build_relpos_table(stations);
    model::RelPosTableInput table;
    table.standardized = std::make_shared<const num::Matrix>(geom::standardize_relpos(relpos));
    table.roster_size = static_cast<Index>(stations.size());
    const auto coords = geom::coordinate_stats(stations);

    TrainResult result;
    auto& ckpt = result.checkpoint;
    ckpt.config = model_config;
    ckpt.stats = {relpos.stats(), coords};
    ckpt.params = model::ModelParams::initialize(model_config, derive_seed(config.seed, {0x1417}));

    pipeline::StreamOptions so;
    so.remask = static_cast<std::size_t>(config.remask);
    so.mask = {config.mask_ratio, config.zero_fill};
    so.static_masking = config.static_masking;
    so.seed = derive_seed(config.seed, {0x57e4});
    const pipeline::EpochStream stream(snapshots, so);

    num::AdamOptions ao;
    ao.weight_decay = config.weight_decay;
    num::AdamState adam(ckpt.params.tensors(), ao);
    Rng dropout_rng(derive_seed(config.seed, {0xd409}));

    for (int e = 0; e < config.epochs; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto seqs = stream.epoch(static_cast<std::size_t>(e));
        if (seqs.empty()) throw ContractViolation("training: no usable sequences (every snapshot has < 2 known nodes)");
        double sse = 0.0;
        std::size_t masked = 0;
        double lr = 0.0;

        for (std::size_t b0 = 0; b0 < seqs.size(); b0 += static_cast<std::size_t>(config.batch)) {
            const auto b1 = std::min(seqs.size(), b0 + static_cast<std::size_t>(config.batch));
            std::size_t n_masked = 0;
            for (auto s = b0; s < b1; ++s) n_masked += seqs[s].mask.size();

            num::Tape tape;
            const model::BoundParams p(tape, ckpt.params);
            std::vector<Var> srpe;
            if (model_config.position == model::Position::srpe) srpe = model::srpe_for_table(model_config, p, table);
            model::ForwardOptions fo;
            fo.srpe_table = srpe.empty() ? nullptr : &srpe;
            fo.dropout_rng = model_config.dropout > 0.0 ? &dropout_rng : nullptr;

            // Batch loss pools the squared errors of every masked node.
            std::optional<Var> loss;
            for (auto s = b0; s < b1; ++s) {
                const auto& seq = seqs[s];
                const auto input = pipeline::training_input(seq, table, stations, coords);
                const auto pred = model::forward(model_config, p, input, fo);
                const auto term = num::scale(model::masked_mse_loss(pred, seq.mask, seq.targets_std),
                                             static_cast<double>(seq.mask.size()) / static_cast<double>(n_masked));
                loss = loss ? num::add(*loss, term) : term;
            }
            tape.backward(*loss);
            sse += loss->value()(0, 0) * static_cast<double>(n_masked);
            masked += n_masked;

            const auto grads = p.gradients();
            lr = num::warmup_lr(adam.step() + 1, model_config.d_e, config.warmup, config.lr_scale);
            num::adam_step(ckpt.params.tensors(), grads, adam, lr);
        }

        EpochRecord rec;
        rec.epoch = e + 1;
        rec.loss = sse / static_cast<double>(masked);
        rec.sequences = seqs.size();
        rec.step = adam.step();
        rec.lr = lr;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }

    ckpt.metadata["train_config"] = config;
    ckpt.metadata["train_stations"] = stations.size();
    ckpt.metadata["final_loss"] = result.history.back().loss;
    return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "epoch,loss,sequences,step,lr,seconds\n";
    char buf[160];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%zu,%lld,%.17g,%.3f", r.epoch, r.loss, r.sequences,
                      static_cast<long long>(r.step), r.lr, r.seconds);
        out << buf << '\n';
    }
    if (!out) throw Error("short write to " + path);
}

}  // namespace ssin::train
