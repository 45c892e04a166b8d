#include "ssin/baselines/metrics.hpp"

#include <map>

namespace ssin::baselines {

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j = {{"rmse", rmse}, {"mae", mae}, {"n_pairs", n}};
    j["nse"] = nse ? nlohmann::json(*nse) : nlohmann::json(nullptr);
    if (!note.empty()) j["note"] = note;
    return j;
}

void MetricAccumulator::add(double pred, double obs, std::size_t group) {
    pred_.push_back(pred);
    obs_.push_back(obs);
    group_.push_back(group);
}

MetricReport MetricAccumulator::pooled() const {
    const Eigen::Map<const Eigen::VectorXd> p(pred_.data(), static_cast<Eigen::Index>(pred_.size()));
    const Eigen::Map<const Eigen::VectorXd> o(obs_.data(), static_cast<Eigen::Index>(obs_.size()));
    return metrics(p, o);
}

MetricReport MetricAccumulator::per_group() const {
    std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (std::size_t k = 0; k < pred_.size(); ++k) {
        groups[group_[k]].first.push_back(pred_[k]);
        groups[group_[k]].second.push_back(obs_[k]);
    }
    MetricReport out;
    double nse_sum = 0.0;
    int nse_groups = 0;
    int used = 0;
    for (const auto& [g, po] : groups) {
        if (po.first.size() < 2) continue;
        const Eigen::Map<const Eigen::VectorXd> p(po.first.data(), static_cast<Eigen::Index>(po.first.size()));
        const Eigen::Map<const Eigen::VectorXd> o(po.second.data(), static_cast<Eigen::Index>(po.second.size()));
        const auto r = metrics(p, o);
        out.rmse += r.rmse;
        out.mae += r.mae;
        out.n += r.n;
        ++used;
        if (r.nse) {
            nse_sum += *r.nse;
            ++nse_groups;
        }
    }
    SSIN_EXPECTS(used > 0, "per-group metrics need a group with at least two pairs");
    out.rmse /= used;
    out.mae /= used;
    if (nse_groups > 0) {
        out.nse = nse_sum / nse_groups;
    } else {
        out.note = "NSE undefined in every group";
    }
    return out;
}

}  // namespace ssin::baselines
