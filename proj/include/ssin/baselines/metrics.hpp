#ifndef SSIN_BASELINES_METRICS_HPP
#define SSIN_BASELINES_METRICS_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "ssin/error.hpp"

namespace ssin::baselines {

struct MetricReport {
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> nse;  // undefined when every observation is equal
    Eigen::Index n = 0;
    std::string note;

    nlohmann::json to_json() const;
};

// Pooled RMSE, MAE and Nash-Sutcliffe efficiency.
template <typename P, typename O>
MetricReport metrics(const Eigen::DenseBase<P>& pred, const Eigen::DenseBase<O>& obs) {
    if (pred.size() != obs.size()) {
        throw ContractViolation("metrics: " + std::to_string(pred.size()) + " predictions vs " +
                                std::to_string(obs.size()) + " observations");
    }
    SSIN_EXPECTS(obs.size() >= 2, "metrics need at least two pairs");
    const auto e = (pred.derived().array() - obs.derived().array()).eval();
    MetricReport r;
    r.n = obs.size();
    const double n = static_cast<double>(r.n);
    r.rmse = std::sqrt(e.square().sum() / n);
    r.mae = e.abs().sum() / n;
    const double mean = obs.derived().array().sum() / n;
    const double ss_tot = (obs.derived().array() - mean).square().sum();
    if (ss_tot > 0.0) {
        r.nse = 1.0 - e.square().sum() / ss_tot;
    } else {
        r.note = "NSE undefined: all observations are equal";
    }
    return r;
}

// Collects (pred, obs) pairs, optionally grouped (for example by timestamp).
class MetricAccumulator {
public:
    void add(double pred, double obs, std::size_t group = 0);

    std::size_t size() const { return pred_.size(); }
    MetricReport pooled() const;
    // Mean of per-group RMSE/MAE/NSE; groups with undefined NSE are skipped
    // for that metric.
    MetricReport per_group() const;

private:
    std::vector<double> pred_;
    std::vector<double> obs_;
    std::vector<std::size_t> group_;
};

}  // namespace ssin::baselines

#endif  // SSIN_BASELINES_METRICS_HPP
