#include "ssin/baselines/idw.hpp"

#include <cmath>

#include "ssin/error.hpp"

namespace ssin::baselines {

double idw(const Samples& known, const Point& query, double power) {
    SSIN_EXPECTS(known.size() >= 1, "IDW needs at least one known point");
    SSIN_EXPECTS(power > 0.0, "IDW power must be positive");
    double num = 0.0;
    double den = 0.0;
    for (Index i = 0; i < known.size(); ++i) {
        const double d = point_distance(known.metric, known.xy.row(i).transpose(), query);
        if (d < kCoincidentKm) return known.v[i];
        const double w = std::pow(d, -power);
        num += w * known.v[i];
        den += w;
    }
    return num / den;
}

Vector idw(const Samples& known, const Points& queries, double power) {
    Vector out(queries.rows());
    for (Index q = 0; q < queries.rows(); ++q) out[q] = idw(known, Point(queries.row(q).transpose()), power);
    return out;
}

}  // namespace ssin::baselines
