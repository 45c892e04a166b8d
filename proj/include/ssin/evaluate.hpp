#ifndef SSIN_EVALUATE_HPP
#define SSIN_EVALUATE_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssin/baselines/metrics.hpp"
#include "ssin/checkpoint.hpp"
#include "ssin/pipeline.hpp"

namespace ssin::eval {

using num::Vector;

// One timestamp of held-out evaluation: the observed training stations are
// the inputs, the observed test stations are the queries.
struct QueryContext {
    std::size_t snapshot = 0;
    std::string timestamp;
    std::vector<geom::Station> known;
    Vector known_values;
    std::vector<geom::Station> queries;
};

// Returns one value per query; NaN marks a query the method cannot answer
// (such pairs are excluded and counted).
using Predictor = std::function<Vector(const QueryContext&)>;

struct Method {
    std::string name;
    nlohmann::json config;
    Predictor predict;
};

Method idw_method(double power = 2.0);

struct KrigingOptions {
    Eigen::Index bins = 10;
    Eigen::Index range_steps = 200;
    int neighbors = 0;  // 0 = every known station; otherwise the k nearest
};
// Variogram refit per timestamp; falls back to IDW when it cannot be fitted.
Method kriging_method(const KrigingOptions& options = {});
Method tin_method(bool nearest_fallback = true);
Method spaformer_method(const model::Checkpoint& ckpt, bool clamp_nonneg);

// Parses a comma list such as "idw,ok,tin".
std::vector<Method> baseline_methods(const std::string& list, const KrigingOptions& kriging = {},
                                     bool tin_nearest_fallback = true);

struct EvalOptions {
    bool per_timestamp = false;  // average per-timestamp metrics instead of pooling
    unsigned threads = 1;
};

struct MethodResult {
    std::string name;
    baselines::MetricReport report;
    nlohmann::json config;
    std::size_t unanswered = 0;
};

struct EvalReport {
    std::string target;
    std::optional<std::string> source;  // dataset the checkpoint was trained on
    std::size_t snapshots = 0;
    std::size_t skipped_snapshots = 0;  // no known inputs or no observed queries
    std::vector<MethodResult> methods;

    const MethodResult& at(const std::string& name) const;
    nlohmann::json to_json() const;
};

std::vector<QueryContext> query_contexts(const pipeline::Dataset& ds, std::size_t* skipped = nullptr);

EvalReport evaluate(const pipeline::Dataset& ds, const std::vector<Method>& methods, const EvalOptions& options = {});

}  // namespace ssin::eval

#endif  // SSIN_EVALUATE_HPP
