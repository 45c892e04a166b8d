#include "ssin/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "ssin/csv.hpp"
#include "ssin/error.hpp"

namespace ssin::pipeline {

namespace fs = std::filesystem;

std::size_t Snapshot::observed_count() const {
    return static_cast<std::size_t>(std::count(observed.begin(), observed.end(), true));
}

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && leap(y) ? 29 : kDays[m - 1];
}

bool read_int(const std::string& s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
    }
    std::from_chars(s.data() + pos, s.data() + pos + len, out);
    return true;
}

}  // namespace

std::int64_t parse_timestamp(const std::string& text) {
    auto bad = [&](const char* why) { return IngestError("bad timestamp '" + text + "': " + why); };
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    if (!read_int(text, 0, 4, y) || text.size() < 16 || text[4] != '-' || !read_int(text, 5, 2, mo) ||
        text[7] != '-' || !read_int(text, 8, 2, d) || (text[10] != 'T' && text[10] != ' ') ||
        !read_int(text, 11, 2, h) || text[13] != ':' || !read_int(text, 14, 2, mi)) {
        throw bad("expected YYYY-MM-DDTHH:MM[:SS][Z|+hh:mm]");
    }
    std::size_t pos = 16;
    if (pos < text.size() && text[pos] == ':') {
        if (!read_int(text, pos + 1, 2, sec)) throw bad("malformed seconds");
        pos += 3;
    }
    int offset_min = 0;
    if (pos < text.size()) {
        const char c = text[pos];
        if (c == 'Z' && pos + 1 == text.size()) {
            pos += 1;
        } else if ((c == '+' || c == '-') && text.size() == pos + 6 && text[pos + 3] == ':') {
            int oh = 0, om = 0;
            if (!read_int(text, pos + 1, 2, oh) || !read_int(text, pos + 4, 2, om) || oh > 23 || om > 59) {
                throw bad("malformed UTC offset");
            }
            offset_min = (c == '+' ? 1 : -1) * (oh * 60 + om);
            pos += 6;
        } else {
            throw bad("unexpected trailing characters");
        }
    }
    if (mo < 1 || mo > 12 || d < 1 || d > days_in_month(y, mo) || h > 23 || mi > 59 || sec > 59) {
        throw bad("field out of range");
    }
    return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 + h * 3600 + mi * 60 +
           sec - offset_min * 60;
}

std::string format_timestamp(std::int64_t t) {
    std::int64_t days = t >= 0 ? t / 86400 : (t - 86399) / 86400;
    std::int64_t rem = t - days * 86400;
    // Inverse of days_from_civil.
    days += 719468;
    const std::int64_t era = (days >= 0 ? days : days - 146096) / 146097;
    const auto doe = static_cast<unsigned>(days - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                  static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                  static_cast<long long>(rem % 60));
    return buf;
}

IngestResult ingest(const geom::StationSet& roster, const std::string& records_csv) {
    const auto table = csv::read(records_csv);
    csv::expect_header(table, {"station_id", "timestamp", "value_mm"}, records_csv);
    const auto n = static_cast<Index>(roster.size());

    struct Cell {
        double value;
        std::size_t line;
    };
    std::map<std::int64_t, std::map<std::size_t, Cell>> by_time;
    IngestResult result;

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto line = table.line_numbers[r];
        const auto where = records_csv + ":" + std::to_string(line);
        const auto station = roster.find(row[0]);
        if (station == roster.size()) throw IngestError(where + ": unknown station id '" + row[0] + "'");
        const auto t = parse_timestamp(row[1]);
        const double v = csv::parse_double(row[2], where);
        if (!std::isfinite(v) || v < 0.0) {
            result.warnings.push_back(where + ": rejected rainfall value " + row[2]);
            continue;
        }
        auto [it, inserted] = by_time[t].try_emplace(station, Cell{v, line});
        if (!inserted) {
            throw IngestError(records_csv + ": duplicate reading for station '" + row[0] + "' at " +
                              format_timestamp(t) + " on lines " + std::to_string(it->second.line) + " and " +
                              std::to_string(line));
        }
    }

    result.snapshots.reserve(by_time.size());
    for (const auto& [t, cells] : by_time) {
        Snapshot s;
        s.epoch_seconds = t;
        s.timestamp = format_timestamp(t);
        s.values = Vector::Zero(n);
        s.observed.assign(roster.size(), false);
        for (const auto& [station, cell] : cells) {
            s.values[static_cast<Index>(station)] = cell.value;
            s.observed[station] = true;
        }
        result.snapshots.push_back(std::move(s));
    }
    return result;
}

void write_records_csv(const std::string& path, const geom::StationSet& roster,
                       const std::vector<Snapshot>& snapshots) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "station_id,timestamp,value_mm\n";
    char buf[64];
    for (const auto& s : snapshots) {
        for (std::size_t i = 0; i < roster.size(); ++i) {
            if (!s.observed[i]) continue;
            std::snprintf(buf, sizeof buf, "%.1f", s.values[static_cast<Index>(i)]);
            out << roster[i].id << ',' << s.timestamp << ',' << buf << '\n';
        }
    }
    if (!out) throw Error("short write to " + path);
}

std::vector<Snapshot> select_rainy_hours(const std::vector<Snapshot>& snapshots, double threshold_mm) {
    SSIN_EXPECTS(threshold_mm >= 0.0, "rain threshold must be non-negative");
    std::vector<Snapshot> kept;
    for (const auto& s : snapshots) {
        bool rainy = false;
        for (std::size_t i = 0; i < s.observed.size() && !rainy; ++i) {
            rainy = s.observed[i] && s.values[static_cast<Index>(i)] >= threshold_mm;
        }
        if (rainy) kept.push_back(s);
    }
    return kept;
}

Snapshot restrict(const Snapshot& s, const std::vector<std::size_t>& indices) {
    Snapshot out;
    out.timestamp = s.timestamp;
    out.epoch_seconds = s.epoch_seconds;
    out.values.resize(static_cast<Index>(indices.size()));
    out.observed.resize(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        SSIN_EXPECTS(indices[k] < s.observed.size(), "restrict: index outside the roster");
        out.values[static_cast<Index>(k)] = s.values[static_cast<Index>(indices[k])];
        out.observed[k] = s.observed[indices[k]];
    }
    return out;
}

DatasetManifest DatasetManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("manifest " + path + ": " + e.what());
    }
    DatasetManifest m;
    const auto base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        const fs::path fp(p);
        return (fp.is_absolute() ? fp : base / fp).lexically_normal().string();
    };
    try {
        m.name = j.value("name", fs::path(path).stem().string());
        m.roster = resolve(j.at("roster").get<std::string>());
        m.records = resolve(j.at("records").get<std::string>());
        m.rain_threshold = j.value("rain_threshold", 0.1);
        m.split_seed = j.value("split_seed", std::uint64_t{0});
        m.test_fraction = j.value("test_fraction", 0.2);
        if (j.contains("time_span")) {
            const auto& span = j.at("time_span");
            if (span.contains("start")) m.start = span.at("start").get<std::string>();
            if (span.contains("end")) m.end = span.at("end").get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("manifest " + path + ": " + e.what());
    }
    if (m.rain_threshold < 0.0) throw ConfigError("manifest " + path + ": rain_threshold must be >= 0");
    if (!(m.test_fraction > 0.0 && m.test_fraction < 1.0)) {
        throw ConfigError("manifest " + path + ": test_fraction must lie in (0, 1)");
    }
    return m;
}

nlohmann::json DatasetManifest::to_json() const {
    nlohmann::json j = {{"name", name},
                        {"roster", roster},
                        {"records", records},
                        {"rain_threshold", rain_threshold},
                        {"split_seed", split_seed},
                        {"test_fraction", test_fraction}};
    if (start || end) {
        j["time_span"] = nlohmann::json::object();
        if (start) j["time_span"]["start"] = *start;
        if (end) j["time_span"]["end"] = *end;
    }
    return j;
}

StationSplit split_stations(std::size_t n, double test_fraction, std::uint64_t seed) {
    SSIN_EXPECTS(test_fraction > 0.0 && test_fraction < 1.0, "test fraction must lie in (0, 1)");
    SSIN_EXPECTS(n >= 3, "a split needs at least three stations");
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 2);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, {0x5e11}));
    rng.shuffle(order);
    StationSplit split;
    split.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(split.test.begin(), split.test.end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

std::vector<Snapshot> Dataset::train_snapshots() const {
    std::vector<Snapshot> out;
    out.reserve(snapshots.size());
    for (const auto& s : snapshots) out.push_back(restrict(s, split.train));
    return out;
}

std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(model::fnv1a64(bytes)));
    return buf;
}

Dataset load_dataset(const DatasetManifest& manifest) {
    Dataset ds;
    ds.manifest = manifest;
    ds.roster = geom::read_roster_csv(manifest.roster);
    auto ingested = ingest(ds.roster, manifest.records);
    ds.warnings = std::move(ingested.warnings);

    const auto lo = manifest.start ? parse_timestamp(*manifest.start) : INT64_MIN;
    const auto hi = manifest.end ? parse_timestamp(*manifest.end) : INT64_MAX;
    std::vector<Snapshot> in_span;
    for (auto& s : ingested.snapshots) {
        if (s.epoch_seconds >= lo && s.epoch_seconds <= hi) in_span.push_back(std::move(s));
    }
    ds.snapshots = select_rainy_hours(in_span, manifest.rain_threshold);
    ds.split = split_stations(ds.roster.size(), manifest.test_fraction, manifest.split_seed);
    ds.checksums = {{"roster", file_checksum(manifest.roster)}, {"records", file_checksum(manifest.records)}};
    return ds;
}

Standardized standardize_instance(const Vector& known) {
    SSIN_EXPECTS(known.size() > 0, "standardize_instance needs at least one known value");
    const auto m = geom::population_moments(known);
    Standardized out;
    out.stats = {m.mean, m.std};
    out.z = ((known.array() - m.mean) / std::max(m.std, geom::kStdFloor)).matrix();
    return out;
}

std::optional<MaskedSequence> dynamic_mask(const Snapshot& s, const MaskOptions& options, Rng& rng) {
    SSIN_EXPECTS(options.ratio > 0.0 && options.ratio < 1.0, "mask ratio must lie in (0, 1)");
    MaskedSequence seq;
    for (std::size_t i = 0; i < s.observed.size(); ++i) {
        if (s.observed[i]) seq.nodes.push_back(static_cast<Index>(i));
    }
    const auto known = static_cast<Index>(seq.nodes.size());
    if (known < 2) return std::nullopt;

    // The small tolerance keeps e.g. 0.2 * 10 from landing just below 2.
    auto n_mask = static_cast<Index>(std::floor(options.ratio * static_cast<double>(known) + 1e-9));
    n_mask = std::clamp<Index>(n_mask, 1, known - 1);

    // Partial Fisher-Yates over sequence positions.
    std::vector<Index> pos(static_cast<std::size_t>(known));
    for (Index i = 0; i < known; ++i) pos[static_cast<std::size_t>(i)] = i;
    for (Index i = 0; i < n_mask; ++i) {
        const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(known - i)));
        std::swap(pos[static_cast<std::size_t>(i)], pos[static_cast<std::size_t>(j)]);
    }
    seq.mask.assign(pos.begin(), pos.begin() + n_mask);
    std::sort(seq.mask.begin(), seq.mask.end());

    Vector raw(known);
    for (Index i = 0; i < known; ++i) raw[i] = s.values[seq.nodes[static_cast<std::size_t>(i)]];
    std::vector<bool> hidden(static_cast<std::size_t>(known), false);
    for (auto p : seq.mask) hidden[static_cast<std::size_t>(p)] = true;

    Vector remaining(known - n_mask);
    for (Index i = 0, k = 0; i < known; ++i) {
        if (!hidden[static_cast<std::size_t>(i)]) remaining[k++] = raw[i];
    }
    const auto m = geom::population_moments(remaining);
    seq.stats = {m.mean, m.std};
    const geom::Moments gm{m.mean, m.std};

    seq.x_std.resize(known);
    for (Index i = 0; i < known; ++i) {
        if (!hidden[static_cast<std::size_t>(i)]) {
            seq.x_std[i] = geom::standardize(raw[i], gm);
        } else {
            // Filling with the mean standardizes to exactly 0.
            seq.x_std[i] = options.zero_fill ? geom::standardize(0.0, gm) : 0.0;
        }
    }
    seq.targets_std.resize(n_mask);
    for (Index k = 0; k < n_mask; ++k) seq.targets_std[k] = geom::standardize(raw[seq.mask[static_cast<std::size_t>(k)]], gm);
    return seq;
}

EpochStream::EpochStream(std::vector<Snapshot> snapshots, StreamOptions options)
    : snapshots_(std::move(snapshots)), options_(options) {
    SSIN_EXPECTS(options_.remask >= 1, "remask count must be at least 1");
    for (const auto& s : snapshots_) {
        if (s.observed_count() < 2) ++skipped_;
    }
}

std::vector<MaskedSequence> EpochStream::epoch(std::size_t index) const {
    const std::uint64_t mask_epoch = options_.static_masking ? 0 : static_cast<std::uint64_t>(index);
    std::vector<MaskedSequence> out;
    out.reserve(snapshots_.size() * options_.remask);
    for (std::size_t s = 0; s < snapshots_.size(); ++s) {
        for (std::size_t r = 0; r < options_.remask; ++r) {
            Rng rng(derive_seed(options_.seed, {0x3a5c, mask_epoch, s, r}));
            auto seq = dynamic_mask(snapshots_[s], options_.mask, rng);
            if (!seq) break;
            seq->snapshot = s;
            seq->replica = r;
            out.push_back(std::move(*seq));
        }
    }
    Rng order(derive_seed(options_.seed, {0x0de7, static_cast<std::uint64_t>(index)}));
    order.shuffle(out);
    return out;
}

std::uint64_t sequence_hash(const std::vector<MaskedSequence>& sequences) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&](std::uint64_t v) {
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        h = model::fnv1a64(b, h);
    };
    for (const auto& seq : sequences) {
        mix(seq.snapshot);
        mix(seq.replica);
        for (auto n : seq.nodes) mix(static_cast<std::uint64_t>(n));
        for (auto m : seq.mask) mix(static_cast<std::uint64_t>(m));
        for (Index i = 0; i < seq.x_std.size(); ++i) mix(std::bit_cast<std::uint64_t>(seq.x_std[i]));
        for (Index i = 0; i < seq.targets_std.size(); ++i) mix(std::bit_cast<std::uint64_t>(seq.targets_std[i]));
    }
    return h;
}

Eigen::Vector2d standardized_coords(const geom::Station& s, const geom::CoordStats& coords) {
    return {geom::standardize(s.lat, coords.lat), geom::standardize(s.lon, coords.lon)};
}

model::ModelInput training_input(const MaskedSequence& seq, const model::RelPosTableInput& table,
                                 const geom::StationSet& roster, const geom::CoordStats& coords) {
    const auto L = static_cast<Index>(seq.nodes.size());
    model::ModelInput in;
    in.x = seq.x_std;
    std::vector<bool> observed(seq.nodes.size(), true);
    for (auto p : seq.mask) observed[static_cast<std::size_t>(p)] = false;
    in.plan = attn::AttentionPlan::from_flags(observed);
    in.table = model::RelPosTableInput{table.standardized, table.roster_size, seq.nodes};
    in.abs_pos.resize(L, 2);
    for (Index i = 0; i < L; ++i) {
        in.abs_pos.row(i) = standardized_coords(roster[static_cast<std::size_t>(seq.nodes[static_cast<std::size_t>(i)])], coords).transpose();
    }
    return in;
}

InferenceSequence fill_for_inference(const geom::StationSet& roster, const Snapshot& snapshot,
                                     const std::vector<geom::Station>& queries,
                                     const model::StandardizationStats& stats,
                                     const geom::DistanceProvider& metric, const InferenceOptions& options) {
    SSIN_EXPECTS(snapshot.observed.size() == roster.size(), "snapshot does not match the roster");
    InferenceSequence seq;
    std::vector<double> raw;
    for (std::size_t i = 0; i < roster.size(); ++i) {
        if (!snapshot.observed[i]) continue;
        seq.nodes.push_back(roster[i]);
        raw.push_back(snapshot.values[static_cast<Index>(i)]);
    }
    if (seq.nodes.empty()) throw ContractViolation("inference needs at least one observed station at " + snapshot.timestamp);
    seq.observed = static_cast<Index>(seq.nodes.size());
    for (const auto& q : queries) {
        if (!geom::valid_coordinates(q.lat, q.lon)) {
            throw ContractViolation("query '" + q.id + "' has invalid coordinates");
        }
        seq.nodes.push_back(q);
    }
    const auto L = static_cast<Index>(seq.nodes.size());

    const Eigen::Map<const Vector> known(raw.data(), static_cast<Index>(raw.size()));
    const auto m = geom::population_moments(known);
    seq.stats = {m.mean, m.std};
    const geom::Moments gm{m.mean, m.std};
    seq.x_std = Vector::Zero(L);
    for (Index i = 0; i < seq.observed; ++i) seq.x_std[i] = geom::standardize(known[i], gm);
    if (options.zero_fill) seq.x_std.tail(L - seq.observed).setConstant(geom::standardize(0.0, gm));

    auto& in = seq.input;
    in.x = seq.x_std;
    std::vector<bool> flags(static_cast<std::size_t>(L), false);
    std::fill(flags.begin(), flags.begin() + seq.observed, true);
    in.plan = attn::AttentionPlan::from_flags(flags);
    // Relative positions are computed on demand so queries need no L x L table.
    auto nodes = std::make_shared<const std::vector<geom::Station>>(seq.nodes);
    const auto relstats = stats.relpos;
    const auto* metric_ptr = &metric;
    in.relpos = [nodes, relstats, metric_ptr](Index i, Index j) {
        const auto r = geom::relative_position((*nodes)[static_cast<std::size_t>(i)],
                                               (*nodes)[static_cast<std::size_t>(j)], *metric_ptr);
        return geom::standardize(r, relstats);
    };
    in.abs_pos.resize(L, 2);
    for (Index i = 0; i < L; ++i) {
        in.abs_pos.row(i) = standardized_coords(seq.nodes[static_cast<std::size_t>(i)], stats.coords).transpose();
    }
    return seq;
}

}  // namespace ssin::pipeline
