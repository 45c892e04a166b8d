#include "ssin/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "ssin/baselines/idw.hpp"
#include "ssin/baselines/kriging.hpp"
#include "ssin/baselines/tin.hpp"
#include "ssin/error.hpp"

namespace ssin::eval {

namespace bl = ssin::baselines;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bl::Samples samples_of(const QueryContext& ctx) { return bl::from_stations(ctx.known, ctx.known_values); }

Vector nearest_values(const bl::Samples& known, const bl::Points& queries) {
    Vector out(queries.rows());
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        Eigen::Index best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < known.size(); ++i) {
            const double d = bl::point_distance(known.metric, known.xy.row(i), queries.row(q));
            if (d < best_d) best_d = d, best = i;
        }
        out[q] = known.v[best];
    }
    return out;
}

}  // namespace

Method idw_method(double power) {
    return {"idw", {{"power", power}}, [power](const QueryContext& ctx) {
                return bl::idw(samples_of(ctx), bl::to_points(ctx.queries), power);
            }};
}

Method kriging_method(const KrigingOptions& options) {
    nlohmann::json cfg = {{"variogram", "spherical"},
                          {"bins", options.bins},
                          {"range_steps", options.range_steps},
                          {"neighbors", options.neighbors},
                          {"refit", "per_timestamp"}};
    return {"ok", cfg, [options](const QueryContext& ctx) {
                const auto known = samples_of(ctx);
                const auto queries = bl::to_points(ctx.queries);
                if (known.size() < 3) return bl::idw(known, queries, 2.0);
                bl::Variogram vg;
                try {
                    vg = bl::fit_variogram(known, {options.bins, options.range_steps});
                } catch (const ContractViolation&) {
                    return bl::idw(known, queries, 2.0);
                }
                if (options.neighbors <= 0 || options.neighbors >= known.size()) {
                    return bl::OrdinaryKriging(known, vg).predict(queries);
                }
                Vector out(queries.rows());
                std::vector<Eigen::Index> order(static_cast<std::size_t>(known.size()));
                for (Eigen::Index q = 0; q < queries.rows(); ++q) {
                    const bl::Point p = queries.row(q).transpose();
                    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
                    std::vector<double> d(order.size());
                    for (std::size_t i = 0; i < order.size(); ++i) d[i] = bl::point_distance(known.metric, known.xy.row(static_cast<Eigen::Index>(i)).transpose(), p);
                    std::partial_sort(order.begin(), order.begin() + options.neighbors, order.end(),
                                      [&](Eigen::Index a, Eigen::Index b) { return d[static_cast<std::size_t>(a)] < d[static_cast<std::size_t>(b)]; });
                    bl::Samples local;
                    local.metric = known.metric;
                    local.xy.resize(options.neighbors, 2);
                    local.v.resize(options.neighbors);
                    for (int k = 0; k < options.neighbors; ++k) {
                        local.xy.row(k) = known.xy.row(order[static_cast<std::size_t>(k)]);
                        local.v[k] = known.v[order[static_cast<std::size_t>(k)]];
                    }
                    out[q] = bl::ordinary_kriging(local, p, vg).value;
                }
                return out;
            }};
}

Method tin_method(bool nearest_fallback) {
    return {"tin", {{"function", "linear"}, {"nearest_fallback", nearest_fallback}},
            [nearest_fallback](const QueryContext& ctx) {
                const auto known = samples_of(ctx);
                const auto queries = bl::to_points(ctx.queries);
                Vector out = Vector::Constant(queries.rows(), kNaN);
                std::optional<bl::Tin> tin;
                try {
                    tin.emplace(known);
                } catch (const ContractViolation&) {
                    // Fewer than three distinct or collinear inputs.
                    if (nearest_fallback) return nearest_values(known, queries);
                    return out;
                }
                for (Eigen::Index q = 0; q < queries.rows(); ++q) {
                    if (auto v = tin->interpolate(queries.row(q).transpose(), nearest_fallback)) out[q] = *v;
                }
                return out;
            }};
}

Method spaformer_method(const model::Checkpoint& ckpt, bool clamp_nonneg) {
    nlohmann::json cfg = {{"model", ckpt.config}, {"clamp_nonneg", clamp_nonneg}};
    if (ckpt.metadata.contains("train_config")) cfg["train_config"] = ckpt.metadata["train_config"];
    auto shared = std::make_shared<const model::Checkpoint>(ckpt);
    return {"ssin", cfg, [shared, clamp_nonneg](const QueryContext& ctx) {
                pipeline::Snapshot s;
                s.timestamp = ctx.timestamp;
                s.values = ctx.known_values;
                s.observed.assign(ctx.known.size(), true);
                const geom::StationSet roster(ctx.known);
                const auto seq = pipeline::fill_for_inference(roster, s, ctx.queries, shared->stats);
                const auto pred = model::predict(shared->config, shared->params, seq.input);
                return pipeline::destandardize(pred.tail(seq.queries()), seq.stats, clamp_nonneg);
            }};
}

std::vector<Method> baseline_methods(const std::string& list, const KrigingOptions& kriging,
                                     bool tin_nearest_fallback) {
    std::vector<Method> out;
    std::stringstream ss(list);
    std::string name;
    while (std::getline(ss, name, ',')) {
        if (name.empty()) continue;
        if (name == "idw") out.push_back(idw_method());
        else if (name == "ok" || name == "kriging") out.push_back(kriging_method(kriging));
        else if (name == "tin") out.push_back(tin_method(tin_nearest_fallback));
        else throw ConfigError("unknown baseline '" + name + "' (expected idw, ok or tin)");
    }
    return out;
}

const MethodResult& EvalReport::at(const std::string& name) const {
    for (const auto& m : methods) {
        if (m.name == name) return m;
    }
    throw ContractViolation("no evaluation result for method '" + name + "'");
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["target"] = target;
    j["source"] = source ? nlohmann::json(*source) : nlohmann::json(nullptr);
    j["transfer"] = source.has_value() && *source != target;
    j["snapshots"] = snapshots;
    j["skipped_snapshots"] = skipped_snapshots;
    j["methods"] = nlohmann::json::object();
    for (const auto& m : methods) {
        auto r = m.report.to_json();
        r["config"] = m.config;
        r["unanswered"] = m.unanswered;
        j["methods"][m.name] = r;
    }
    return j;
}

std::vector<QueryContext> query_contexts(const pipeline::Dataset& ds, std::size_t* skipped) {
    std::vector<QueryContext> out;
    std::size_t skip = 0;
    for (std::size_t t = 0; t < ds.snapshots.size(); ++t) {
        const auto& s = ds.snapshots[t];
        QueryContext ctx;
        ctx.snapshot = t;
        ctx.timestamp = s.timestamp;
        std::vector<double> kv;
        for (auto i : ds.split.train) {
            if (!s.observed[i]) continue;
            ctx.known.push_back(ds.roster[i]);
            kv.push_back(s.values[static_cast<Eigen::Index>(i)]);
        }
        for (auto i : ds.split.test) {
            if (s.observed[i]) ctx.queries.push_back(ds.roster[i]);
        }
        if (ctx.known.empty() || ctx.queries.empty()) {
            ++skip;
            continue;
        }
        ctx.known_values = Eigen::Map<const Vector>(kv.data(), static_cast<Eigen::Index>(kv.size()));
        out.push_back(std::move(ctx));
    }
    if (skipped) *skipped = skip;
    return out;
}

EvalReport evaluate(const pipeline::Dataset& ds, const std::vector<Method>& methods, const EvalOptions& options) {
    EvalReport report;
    report.target = ds.manifest.name;
    const auto contexts = query_contexts(ds, &report.skipped_snapshots);
    report.snapshots = ds.snapshots.size();
    if (contexts.empty()) throw ContractViolation("evaluation: no snapshot has both known inputs and observed test stations");

    // Truth per context, aligned with the query order.
    std::vector<Vector> truth(contexts.size());
    for (std::size_t c = 0; c < contexts.size(); ++c) {
        const auto& s = ds.snapshots[contexts[c].snapshot];
        std::vector<double> v;
        for (auto i : ds.split.test) {
            if (s.observed[i]) v.push_back(s.values[static_cast<Eigen::Index>(i)]);
        }
        truth[c] = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }

    const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(contexts.size())));
    for (const auto& method : methods) {
        std::vector<Vector> pred(contexts.size());
        std::vector<std::exception_ptr> errors(threads);
        auto work = [&](unsigned w) {
            try {
                for (std::size_t c = w; c < contexts.size(); c += threads) pred[c] = method.predict(contexts[c]);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        };
        if (threads == 1) {
            work(0);
        } else {
            std::vector<std::thread> pool;
            for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
            for (auto& t : pool) t.join();
        }
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }

        MethodResult result;
        result.name = method.name;
        result.config = method.config;
        baselines::MetricAccumulator acc;
        for (std::size_t c = 0; c < contexts.size(); ++c) {
            SSIN_EXPECTS(pred[c].size() == truth[c].size(), "evaluation: method returned the wrong number of values");
            for (Eigen::Index q = 0; q < truth[c].size(); ++q) {
                if (std::isnan(pred[c][q])) {
                    ++result.unanswered;
                    continue;
                }
                acc.add(pred[c][q], truth[c][q], c);
            }
        }
        result.report = options.per_timestamp ? acc.per_group() : acc.pooled();
        report.methods.push_back(std::move(result));
    }
    return report;
}

}  // namespace ssin::eval
