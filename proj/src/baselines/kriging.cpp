#include "ssin/baselines/kriging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ssin/baselines/idw.hpp"
#include "ssin/error.hpp"

namespace ssin::baselines {

double Variogram::operator()(double h) const {
    if (h <= 0.0) return 0.0;
    if (h >= range) return sill;
    const double r = h / range;
    return nugget + partial_sill() * (1.5 * r - 0.5 * r * r * r);
}

EmpiricalVariogram empirical_variogram(const Samples& known, Index bins) {
    SSIN_EXPECTS(known.size() >= 3, "variogram fitting needs at least three points");
    SSIN_EXPECTS(bins >= 1, "at least one lag bin required");
    const Index n = known.size();
    std::vector<double> d;
    std::vector<double> sq;
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    double dmax = 0.0;
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            d.push_back(point_distance(known.metric, known.xy.row(i), known.xy.row(j)));
            const double diff = known.v[i] - known.v[j];
            sq.push_back(diff * diff);
            dmax = std::max(dmax, d.back());
        }
    }
    if (dmax < kCoincidentKm) throw ContractViolation("variogram: all sample locations coincide");

    Vector lag = Vector::Zero(bins), gamma = Vector::Zero(bins), count = Vector::Zero(bins);
    for (std::size_t k = 0; k < d.size(); ++k) {
        const auto b = std::min<Index>(bins - 1, static_cast<Index>(d[k] / dmax * static_cast<double>(bins)));
        lag[b] += d[k];
        gamma[b] += sq[k];
        count[b] += 1.0;
    }
    EmpiricalVariogram ev;
    const Index used = (count.array() > 0).count();
    ev.lag.resize(used);
    ev.gamma.resize(used);
    ev.count.resize(used);
    for (Index b = 0, k = 0; b < bins; ++b) {
        if (count[b] == 0) continue;
        ev.lag[k] = lag[b] / count[b];
        ev.gamma[k] = 0.5 * gamma[b] / count[b];
        ev.count[k] = count[b];
        ++k;
    }
    return ev;
}

Variogram fit_variogram(const Samples& known, const VariogramFitOptions& options) {
    SSIN_EXPECTS(options.range_steps >= 1, "at least one candidate range required");
    const auto ev = empirical_variogram(known, options.bins);
    const auto& w = ev.count.array();
    const auto& g = ev.gamma.array();
    const double max_lag = ev.lag.maxCoeff();

    Variogram best;
    double best_sse = std::numeric_limits<double>::infinity();
    for (Index k = 1; k <= options.range_steps; ++k) {
        const double a = 1.5 * max_lag * static_cast<double>(k) / static_cast<double>(options.range_steps);
        const Eigen::ArrayXd f = (ev.lag.array() / a).min(1.0).unaryExpr([](double r) { return 1.5 * r - 0.5 * r * r * r; });

        const double s11 = w.sum(), s1f = (w * f).sum(), sff = (w * f * f).sum();
        const double s1g = (w * g).sum(), sfg = (w * f * g).sum();
        auto sse = [&](double c0, double c1) { return (w * (g - c0 - c1 * f).square()).sum(); };

        // Closed-form non-negative least squares in two variables: the
        // interior solution if feasible, else the better of the two faces.
        double c0 = 0.0, c1 = 0.0, e = std::numeric_limits<double>::infinity();
        const double det = s11 * sff - s1f * s1f;
        if (det > 1e-12 * s11 * sff) {
            const double u0 = (sff * s1g - s1f * sfg) / det;
            const double u1 = (s11 * sfg - s1f * s1g) / det;
            if (u0 >= 0.0 && u1 >= 0.0) c0 = u0, c1 = u1, e = sse(u0, u1);
        }
        if (!std::isfinite(e)) {
            const double p = sff > 0.0 ? std::max(0.0, sfg / sff) : 0.0;
            const double q = std::max(0.0, s1g / s11);
            const double ep = sse(0.0, p), eq = sse(q, 0.0);
            if (ep < eq) c0 = 0.0, c1 = p, e = ep;
            else c0 = q, c1 = 0.0, e = eq;
        }
        // Relative margin so that rescaled data select the same range.
        if (e < best_sse * (1.0 - 1e-12)) {
            best_sse = e;
            best = {c0, c0 + c1, a};
        }
    }
    return best;
}

OrdinaryKriging::OrdinaryKriging(const Samples& known, const Variogram& variogram, std::vector<std::string>* log)
    : samples_(deduplicate(known)), variogram_(variogram) {
    SSIN_EXPECTS(samples_.size() >= 1, "kriging needs at least one known point");
    const Index n = samples_.size();
    Eigen::MatrixXd a(n + 1, n + 1);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            a(i, j) = i == j ? 0.0 : variogram_(point_distance(samples_.metric, samples_.xy.row(i), samples_.xy.row(j)));
        }
        a(i, n) = 1.0;
        a(n, i) = 1.0;
    }
    a(n, n) = 0.0;
    lu_.compute(a);
    if (!lu_.isInvertible() || lu_.rcond() < 1e-13) {
        fallback_ = true;
        if (log) log->push_back("kriging system is singular; using IDW (power 2) instead");
    }
}

KrigingEstimate OrdinaryKriging::operator()(const Point& query) const {
    const Index n = samples_.size();
    KrigingEstimate est;
    if (fallback_) {
        est.fallback = true;
        est.value = idw(samples_, query, 2.0);
        return est;
    }
    Eigen::VectorXd b(n + 1);
    for (Index i = 0; i < n; ++i) b[i] = variogram_(point_distance(samples_.metric, samples_.xy.row(i).transpose(), query));
    b[n] = 1.0;
    const Eigen::VectorXd x = lu_.solve(b);
    est.weights = x.head(n);
    est.value = est.weights.dot(samples_.v);
    est.variance = est.weights.dot(b.head(n)) + x[n];
    return est;
}

Vector OrdinaryKriging::predict(const Points& queries) const {
    Vector out(queries.rows());
    for (Index q = 0; q < queries.rows(); ++q) out[q] = (*this)(queries.row(q).transpose()).value;
    return out;
}

KrigingEstimate ordinary_kriging(const Samples& known, const Point& query, const Variogram& variogram,
                                 std::vector<std::string>* log) {
    return OrdinaryKriging(known, variogram, log)(query);
}

}  // namespace ssin::baselines
