#include "ssin/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssin/attnkernel.hpp"
#include "ssin/csv.hpp"
#include "ssin/error.hpp"
#include "ssin/evaluate.hpp"
#include "ssin/synth.hpp"
#include "ssin/training.hpp"

namespace ssin::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kDataDirEnv = "SSIN_DATA_DIR";

// Relative input paths that do not exist here are looked up under
// $SSIN_DATA_DIR.
std::string resolve_input(const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute() || fs::exists(path)) return path;
    if (const char* dir = std::getenv(kDataDirEnv)) {
        const auto candidate = fs::path(dir) / path;
        if (fs::exists(candidate)) return candidate.string();
    }
    return path;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw Error("short write to " + path);
}

// CSV outputs cannot carry provenance inline, so each gets a sidecar.
void write_sidecar(const std::string& csv_path, const json& provenance) {
    write_json_file(csv_path + ".meta.json", provenance);
}

template <typename Enum>
Enum parse_enum(const std::string& text, const char* what) {
    // The enum mapping silently falls back to the first value, so round-trip.
    const auto value = json(text).get<Enum>();
    if (json(value).get<std::string>() == text) return value;
    throw ConfigError(std::string("unknown ") + what + " '" + text + "'");
}

struct Globals {
    std::uint64_t seed = 0;
    bool seed_set = false;
    unsigned threads = 1;
};

// Model and training fields settable from the command line; unset options
// leave the config file (or the defaults) alone.
struct RunOverrides {
    std::optional<int> epochs, batch, remask, warmup, layers, heads, d_e, d_f;
    std::optional<double> mask_ratio, lr_scale;
    std::string emb_input, emb_pos, position;
    bool no_shield = false;
    bool static_masking = false;
    bool zero_fill = false;

    void add_to(CLI::App& app) {
        app.add_option("--epochs", epochs, "Training epochs (default 100)");
        app.add_option("--batch", batch, "Sequences per optimizer step (default 64)");
        app.add_option("--remask", remask, "Masked copies of each snapshot per epoch (default 10)");
        app.add_option("--mask-ratio", mask_ratio, "Fraction of known nodes masked (default 0.2)");
        app.add_option("--warmup", warmup, "Warmup steps of the learning-rate schedule (default 1200)");
        app.add_option("--lr-scale", lr_scale, "Multiplier on the learning-rate schedule (default 1)");
        app.add_option("--layers", layers, "Encoder layers T (default 3)");
        app.add_option("--heads", heads, "Attention heads H (default 2)");
        app.add_option("--d-e", d_e, "Embedding width, also the per-head width (default 16)");
        app.add_option("--d-f", d_f, "Feed-forward hidden width (default 256)");
        app.add_option("--emb-input", emb_input, "Input embedding: fcn | linear_nobias");
        app.add_option("--emb-pos", emb_pos, "Position embedding: fcn | linear_nobias");
        app.add_option("--position", position, "Position encoding: srpe | sape");
        app.add_flag("--no-shield", no_shield, "Plain attention over all nodes");
        app.add_flag("--static-masking", static_masking, "Draw masks once and replay them every epoch");
        app.add_flag("--zero-fill", zero_fill, "Fill masked inputs with 0 mm instead of the mean");
    }

    void apply(model::ModelConfig& m, train::TrainConfig& t) const {
        if (epochs) t.epochs = *epochs;
        if (batch) t.batch = *batch;
        if (remask) t.remask = *remask;
        if (warmup) t.warmup = *warmup;
        if (mask_ratio) t.mask_ratio = *mask_ratio;
        if (lr_scale) t.lr_scale = *lr_scale;
        if (static_masking) t.static_masking = true;
        if (zero_fill) t.zero_fill = true;
        if (layers) m.layers = *layers;
        if (heads) m.heads = *heads;
        if (d_e) m.d_e = m.d_k = *d_e;
        if (d_f) m.d_f = *d_f;
        if (!emb_input.empty()) m.emb_input = parse_enum<model::Embedding>(emb_input, "input embedding");
        if (!emb_pos.empty()) m.emb_pos = parse_enum<model::Embedding>(emb_pos, "position embedding");
        if (!position.empty()) m.position = parse_enum<model::Position>(position, "position encoding");
        if (no_shield) m.shield = false;
    }
};

// --- synth-gen -------------------------------------------------------------

struct SynthArgs {
    std::string spec;
    std::string out;
};

void cmd_synth(const SynthArgs& a, const Globals& g, std::ostream& out) {
    auto spec = synth::load_spec(resolve_input(a.spec));
    if (g.seed_set) spec.seed = g.seed;
    const auto ds = synth::generate(spec);
    synth::write_dataset(ds, a.out);
    out << "wrote " << ds.stations.size() << " stations and " << ds.snapshots.size() << " snapshots to " << a.out
        << '\n';
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
    std::string manifest;
    std::string config;
    std::string out;
    std::string loss_csv;
    RunOverrides overrides;
};

json run_provenance(const pipeline::Dataset& ds, const model::ModelConfig& m, const json& extra) {
    json j = {{"dataset", ds.manifest.name},
              {"manifest", ds.manifest.to_json()},
              {"input_checksums", ds.checksums},
              {"model_config", m}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

void cmd_train(const TrainArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
    model::ModelConfig mc;
    train::TrainConfig tc;
    if (!a.config.empty()) {
        const auto cfg = read_json_file(resolve_input(a.config));
        try {
            if (cfg.contains("model")) mc = cfg.at("model").get<model::ModelConfig>();
            if (cfg.contains("train")) tc = cfg.at("train").get<train::TrainConfig>();
        } catch (const json::exception& e) {
            throw ConfigError(a.config + ": " + e.what());
        }
    }
    a.overrides.apply(mc, tc);
    if (g.seed_set) tc.seed = g.seed;
    mc.validate();
    tc.validate();

    const auto ds = pipeline::load_dataset(pipeline::DatasetManifest::load(resolve_input(a.manifest)));
    for (const auto& w : ds.warnings) err << "warning: " << w << '\n';
    out << "dataset " << ds.manifest.name << ": " << ds.snapshots.size() << " rainy snapshots, "
        << ds.split.train.size() << " training / " << ds.split.test.size() << " test stations\n";

    auto result = train::train(ds.train_stations(), ds.train_snapshots(), mc, tc, [&](const train::EpochRecord& r) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "epoch %3d  loss %.6f  lr %.3g  %.1fs", r.epoch, r.loss, r.lr, r.seconds);
        out << buf << std::endl;
    });

    const json provenance = run_provenance(ds, mc, {{"train_config", tc}, {"threads", g.threads}});
    auto& meta = result.checkpoint.metadata;
    for (auto it = provenance.begin(); it != provenance.end(); ++it) meta[it.key()] = it.value();
    meta["train_station_ids"] = json::array();
    for (auto i : ds.split.train) meta["train_station_ids"].push_back(ds.roster[i].id);
    model::save_checkpoint(a.out, result.checkpoint);

    const auto loss_path = a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv;
    train::write_history_csv(loss_path, result.history);
    write_sidecar(loss_path, provenance);
    out << "saved " << a.out << " (" << result.checkpoint.params.parameter_count() << " parameters) and " << loss_path
        << '\n';
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string ckpt;
    std::string manifest;
    std::string baselines;
    std::string out;
    bool clamp = false;
    bool per_timestamp = false;
    int ok_neighbors = 0;
    bool no_tin_fallback = false;
};

void cmd_eval(const EvalArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
    if (a.ckpt.empty() && a.baselines.empty()) throw ConfigError("eval needs --ckpt, --baselines or both");
    const auto ds = pipeline::load_dataset(pipeline::DatasetManifest::load(resolve_input(a.manifest)));
    for (const auto& w : ds.warnings) err << "warning: " << w << '\n';

    eval::KrigingOptions ko;
    ko.neighbors = a.ok_neighbors;
    auto methods = eval::baseline_methods(a.baselines, ko, !a.no_tin_fallback);
    std::optional<model::Checkpoint> ckpt;
    if (!a.ckpt.empty()) {
        ckpt = model::load_checkpoint(resolve_input(a.ckpt));
        methods.insert(methods.begin(), eval::spaformer_method(*ckpt, a.clamp));
    }

    eval::EvalOptions eo;
    eo.per_timestamp = a.per_timestamp;
    eo.threads = g.threads;
    auto report = eval::evaluate(ds, methods, eo);
    if (ckpt && ckpt->metadata.contains("dataset")) report.source = ckpt->metadata["dataset"].get<std::string>();

    auto j = report.to_json();
    j["run_config"] = {{"manifest", ds.manifest.to_json()},
                       {"input_checksums", ds.checksums},
                       {"checkpoint", a.ckpt.empty() ? json(nullptr) : json(a.ckpt)},
                       {"checkpoint_metadata", ckpt ? ckpt->metadata : json(nullptr)},
                       {"pooling", a.per_timestamp ? "per_timestamp" : "pooled"},
                       {"threads", g.threads}};
    if (a.out.empty()) {
        out << j.dump(2) << '\n';
    } else {
        write_json_file(a.out, j);
        for (const auto& m : report.methods) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%-5s RMSE %.4f  MAE %.4f  NSE %s  (%lld pairs)", m.name.c_str(),
                          m.report.rmse, m.report.mae,
                          m.report.nse ? std::to_string(*m.report.nse).c_str() : "n/a",
                          static_cast<long long>(m.report.n));
            out << buf << '\n';
        }
        out << "report written to " << a.out << '\n';
    }
}

// --- interp ----------------------------------------------------------------

struct InterpArgs {
    std::string ckpt;
    std::string manifest;
    std::string timestamp;
    std::string queries;
    std::string grid;
    std::string out;
    bool no_clamp = false;
};

struct GridSpec {
    double lat_min, lat_max, lon_min, lon_max;
    int n;
};

GridSpec parse_grid(const std::string& text) {
    const auto parts = csv::split(text);
    if (parts.size() != 5) throw ConfigError("--grid expects lat_min,lat_max,lon_min,lon_max,n");
    GridSpec g{};
    g.lat_min = csv::parse_double(parts[0], "--grid");
    g.lat_max = csv::parse_double(parts[1], "--grid");
    g.lon_min = csv::parse_double(parts[2], "--grid");
    g.lon_max = csv::parse_double(parts[3], "--grid");
    const double n = csv::parse_double(parts[4], "--grid");
    if (n < 1 || n != std::floor(n)) throw ConfigError("--grid: n must be a positive integer");
    g.n = static_cast<int>(n);
    if (!(g.lat_min <= g.lat_max) || !(g.lon_min <= g.lon_max)) throw ConfigError("--grid: empty box");
    return g;
}

std::vector<geom::Station> grid_queries(const GridSpec& g) {
    std::vector<geom::Station> q;
    for (int r = 0; r < g.n; ++r) {
        for (int c = 0; c < g.n; ++c) {
            const double lat = g.n == 1 ? (g.lat_min + g.lat_max) / 2 : g.lat_min + (g.lat_max - g.lat_min) * r / (g.n - 1);
            const double lon = g.n == 1 ? (g.lon_min + g.lon_max) / 2 : g.lon_min + (g.lon_max - g.lon_min) * c / (g.n - 1);
            q.push_back({"g" + std::to_string(r) + "_" + std::to_string(c), lat, lon});
        }
    }
    return q;
}

std::vector<geom::Station> read_queries(const std::string& path) {
    const auto t = csv::read(path);
    if (t.header.size() < 2 || t.header[0] != "lat" || t.header[1] != "lon") {
        throw IngestError(path + ": expected header starting with lat,lon");
    }
    std::vector<geom::Station> q;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto where = path + ":" + std::to_string(t.line_numbers[r]);
        geom::Station s{"q" + std::to_string(r), csv::parse_double(t.rows[r][0], where),
                        csv::parse_double(t.rows[r][1], where)};
        if (!geom::valid_coordinates(s.lat, s.lon)) throw IngestError(where + ": invalid coordinates");
        q.push_back(std::move(s));
    }
    return q;
}

void cmd_interp(const InterpArgs& a, const Globals&, std::ostream& out, std::ostream& err) {
    if (a.queries.empty() == a.grid.empty()) throw ConfigError("interp needs exactly one of --queries or --grid");
    const auto ckpt = model::load_checkpoint(resolve_input(a.ckpt));
    const auto manifest = pipeline::DatasetManifest::load(resolve_input(a.manifest));
    const auto roster = geom::read_roster_csv(manifest.roster);
    auto ingested = pipeline::ingest(roster, manifest.records);
    for (const auto& w : ingested.warnings) err << "warning: " << w << '\n';
    if (ingested.snapshots.empty()) throw IngestError(manifest.records + ": no readings");

    const pipeline::Snapshot* snap = &ingested.snapshots.front();
    if (!a.timestamp.empty()) {
        const auto t = pipeline::parse_timestamp(a.timestamp);
        snap = nullptr;
        for (const auto& s : ingested.snapshots) {
            if (s.epoch_seconds == t) snap = &s;
        }
        if (!snap) throw IngestError("no readings at " + pipeline::format_timestamp(t));
    }

    std::optional<GridSpec> grid;
    std::vector<geom::Station> queries;
    if (!a.grid.empty()) {
        grid = parse_grid(a.grid);
        queries = grid_queries(*grid);
    } else {
        queries = read_queries(resolve_input(a.queries));
        if (queries.empty()) err << "warning: " << a.queries << " lists no query locations\n";
    }

    // All queries in one pass: observed stations first, queries appended.
    const auto seq = pipeline::fill_for_inference(roster, *snap, queries, ckpt.stats);
    const auto pred = model::predict(ckpt.config, ckpt.params, seq.input);
    const auto values = pipeline::destandardize(pred.tail(seq.queries()), seq.stats, !a.no_clamp);

    const json provenance = {{"checkpoint", a.ckpt},
                             {"checkpoint_metadata", ckpt.metadata},
                             {"manifest", manifest.to_json()},
                             {"input_checksums",
                              {{"roster", pipeline::file_checksum(manifest.roster)},
                               {"records", pipeline::file_checksum(manifest.records)}}},
                             {"timestamp", snap->timestamp},
                             {"observed_stations", seq.observed},
                             {"clamp_nonneg", !a.no_clamp}};

    const bool as_json = fs::path(a.out).extension() == ".json";
    if (as_json) {
        json j = provenance;
        if (grid) {
            j["grid"] = {{"lat_min", grid->lat_min}, {"lat_max", grid->lat_max}, {"lon_min", grid->lon_min},
                         {"lon_max", grid->lon_max}, {"n", grid->n}};
            json rows = json::array();
            for (int r = 0; r < grid->n; ++r) {
                json row = json::array();
                for (int c = 0; c < grid->n; ++c) row.push_back(values[r * grid->n + c]);
                rows.push_back(row);
            }
            j["values_mm"] = rows;  // values_mm[r][c]: latitude index r, longitude index c
        } else {
            json pts = json::array();
            for (std::size_t k = 0; k < queries.size(); ++k) {
                pts.push_back({{"lat", queries[k].lat}, {"lon", queries[k].lon}, {"value_mm", values[static_cast<Eigen::Index>(k)]}});
            }
            j["points"] = pts;
        }
        write_json_file(a.out, j);
    } else {
        std::ofstream f(a.out);
        if (!f) throw Error("cannot write " + a.out);
        f << "lat,lon,value_mm\n";
        char buf[96];
        for (std::size_t k = 0; k < queries.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.4f", queries[k].lat, queries[k].lon,
                          values[static_cast<Eigen::Index>(k)]);
            f << buf << '\n';
        }
        if (!f) throw Error("short write to " + a.out);
        write_sidecar(a.out, provenance);
    }
    out << "interpolated " << queries.size() << " locations at " << snap->timestamp << " from " << seq.observed
        << " stations into " << a.out << '\n';
}

// --- bench-attn ------------------------------------------------------------

struct BenchArgs {
    int m = 123;
    std::vector<int> lengths{500, 1000, 2000, 4000};
    int reps = 5;
    std::string out;
};

void cmd_bench(const BenchArgs& a, const Globals& g, std::ostream& out) {
    std::vector<std::pair<attn::Index, attn::Index>> sizes;
    for (int L : a.lengths) {
        if (L < a.m || a.m < 1) throw ConfigError("bench-attn: every length must be >= m >= 1");
        sizes.emplace_back(L, a.m);
    }
    attn::BenchOptions bo;
    bo.reps = a.reps;
    if (g.seed_set) bo.seed = g.seed;
    const auto rows = attn::bench(sizes, bo);
    if (a.out.empty()) {
        attn::write_bench_csv(out, rows);
        return;
    }
    std::ofstream f(a.out);
    if (!f) throw Error("cannot write " + a.out);
    attn::write_bench_csv(f, rows);
    write_sidecar(a.out, {{"m", a.m}, {"lengths", a.lengths}, {"reps", a.reps}, {"seed", bo.seed}, {"d_k", bo.d_k}});
    attn::write_bench_csv(out, rows);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"SSIN spatial interpolation toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random draw")->each([&](const std::string&) { g.seed_set = true; });
    app.add_option("--threads", g.threads, "Worker threads for evaluation")->check(CLI::PositiveNumber);

    SynthArgs sa;
    auto* synth_cmd = app.add_subcommand("synth-gen", "Generate a synthetic Gaussian-cell rainfall dataset");
    synth_cmd->add_option("--spec", sa.spec, "Field specification JSON")->required();
    synth_cmd->add_option("--out", sa.out, "Output directory")->required();

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train a model by mask-and-recover");
    train_cmd->add_option("--manifest", ta.manifest, "Dataset manifest JSON")->required();
    train_cmd->add_option("--config", ta.config, "Run configuration JSON with optional model/train sections");
    train_cmd->add_option("--out", ta.out, "Checkpoint path")->required();
    train_cmd->add_option("--loss-csv", ta.loss_csv, "Per-epoch loss CSV (default <out>.loss.csv)");
    ta.overrides.add_to(*train_cmd);

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate on the held-out stations of a dataset");
    eval_cmd->add_option("--ckpt", ea.ckpt, "Checkpoint; any checkpoint may be paired with any manifest");
    eval_cmd->add_option("--manifest", ea.manifest, "Dataset manifest JSON")->required();
    eval_cmd->add_option("--baselines", ea.baselines, "Comma list of idw, ok, tin");
    eval_cmd->add_option("--out", ea.out, "Report JSON (stdout when omitted)");
    eval_cmd->add_flag("--clamp", ea.clamp, "Clamp model predictions at 0 mm");
    eval_cmd->add_flag("--per-timestamp", ea.per_timestamp, "Average per-timestamp metrics instead of pooling");
    eval_cmd->add_option("--ok-neighbors", ea.ok_neighbors, "Kriging search neighbourhood (0 = all stations)");
    eval_cmd->add_flag("--no-tin-fallback", ea.no_tin_fallback, "Leave queries outside the hull unanswered");

    InterpArgs ia;
    auto* interp_cmd = app.add_subcommand("interp", "Interpolate one timestamp at arbitrary locations");
    interp_cmd->add_option("--ckpt", ia.ckpt, "Checkpoint")->required();
    interp_cmd->add_option("--manifest", ia.manifest, "Manifest providing the station readings")->required();
    interp_cmd->add_option("--timestamp", ia.timestamp, "Timestamp to interpolate (default: the first one)");
    interp_cmd->add_option("--queries", ia.queries, "CSV with header lat,lon");
    interp_cmd->add_option("--grid", ia.grid, "lat_min,lat_max,lon_min,lon_max,n for an n x n grid");
    interp_cmd->add_option("--out", ia.out, "Output .csv (lat,lon,value_mm) or .json")->required();
    interp_cmd->add_flag("--no-clamp", ia.no_clamp, "Keep negative predictions");

    BenchArgs ba;
    auto* bench_cmd = app.add_subcommand("bench-attn", "Time the sparse shielded attention kernel");
    bench_cmd->add_option("--m", ba.m, "Observed nodes");
    bench_cmd->add_option("--lengths", ba.lengths, "Sequence lengths")->delimiter(',');
    bench_cmd->add_option("--reps", ba.reps, "Repetitions per size (fastest is reported)")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--out", ba.out, "CSV report path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth_cmd) cmd_synth(sa, g, out);
        else if (*train_cmd) cmd_train(ta, g, out, err);
        else if (*eval_cmd) cmd_eval(ea, g, out, err);
        else if (*interp_cmd) cmd_interp(ia, g, out, err);
        else if (*bench_cmd) cmd_bench(ba, g, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace ssin::cli
