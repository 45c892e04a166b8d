#ifndef SSIN_BASELINES_KRIGING_HPP
#define SSIN_BASELINES_KRIGING_HPP

#include <optional>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "ssin/baselines/spatial.hpp"

namespace ssin::baselines {

// Spherical model. gamma(0) = 0; nugget jump for h > 0; flat at the sill
// beyond the range.
struct Variogram {
    double nugget = 0.0;
    double sill = 1.0;
    double range = 1.0;

    double partial_sill() const { return sill - nugget; }
    double operator()(double h) const;

    template <typename Derived>
    Vector operator()(const Eigen::ArrayBase<Derived>& h) const {
        return h.unaryExpr([this](double x) { return (*this)(x); }).matrix();
    }
};

struct EmpiricalVariogram {
    Vector lag;    // mean pair distance per non-empty bin
    Vector gamma;  // half mean squared difference
    Vector count;  // pairs per bin
};

// Equal-width bins from 0 to the largest pair distance; empty bins dropped.
EmpiricalVariogram empirical_variogram(const Samples& known, Index bins = 10);

struct VariogramFitOptions {
    Index bins = 10;
    Index range_steps = 200;  // candidate ranges on (0, 1.5 * max lag]
};

// Pair-count weighted least squares. For each candidate range the
// non-negative (nugget, partial sill) pair is solved in closed form; the
// candidate with the smallest residual wins.
Variogram fit_variogram(const Samples& known, const VariogramFitOptions& options = {});

struct KrigingEstimate {
    double value = 0.0;
    double variance = 0.0;
    Vector weights;  // over the deduplicated samples
    bool fallback = false;
};

// Global-neighbourhood ordinary kriging. The system is factorized once and
// reused for every query; a singular system switches to IDW (power 2).
class OrdinaryKriging {
public:
    OrdinaryKriging(const Samples& known, const Variogram& variogram, std::vector<std::string>* log = nullptr);

    KrigingEstimate operator()(const Point& query) const;
    Vector predict(const Points& queries) const;

    bool fallback() const { return fallback_; }
    const Samples& samples() const { return samples_; }

private:
    Samples samples_;
    Variogram variogram_;
    Eigen::FullPivLU<Eigen::MatrixXd> lu_;
    bool fallback_ = false;
};

KrigingEstimate ordinary_kriging(const Samples& known, const Point& query, const Variogram& variogram,
                                 std::vector<std::string>* log = nullptr);

}  // namespace ssin::baselines

#endif  // SSIN_BASELINES_KRIGING_HPP
