#ifndef SSIN_BASELINES_IDW_HPP
#define SSIN_BASELINES_IDW_HPP

#include "ssin/baselines/spatial.hpp"

namespace ssin::baselines {

// Inverse distance weighting with w_i = d_i^-power. A query within
// kCoincidentKm of a sample returns that sample's value.
double idw(const Samples& known, const Point& query, double power = 2.0);
Vector idw(const Samples& known, const Points& queries, double power = 2.0);

}  // namespace ssin::baselines

#endif  // SSIN_BASELINES_IDW_HPP
