#include "ssin/baselines/tin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "ssin/error.hpp"

namespace ssin::baselines {

namespace {

using P2 = Eigen::Vector2d;

double cross(const P2& o, const P2& a, const P2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

struct Tri {
    std::array<Index, 3> v;
    P2 centre;
    double r2;
};

Tri make_tri(const std::vector<P2>& p, Index a, Index b, Index c) {
    if (cross(p[static_cast<std::size_t>(a)], p[static_cast<std::size_t>(b)], p[static_cast<std::size_t>(c)]) < 0) {
        std::swap(b, c);
    }
    const P2& A = p[static_cast<std::size_t>(a)];
    const P2& B = p[static_cast<std::size_t>(b)];
    const P2& C = p[static_cast<std::size_t>(c)];
    // Circumcentre relative to A for better conditioning.
    const P2 b1 = B - A, c1 = C - A;
    const double d = 2.0 * (b1.x() * c1.y() - b1.y() * c1.x());
    const double bb = b1.squaredNorm(), cc = c1.squaredNorm();
    const P2 u((c1.y() * bb - b1.y() * cc) / d, (b1.x() * cc - c1.x() * bb) / d);
    return {{a, b, c}, A + u, u.squaredNorm()};
}

// Andrew's monotone chain; counter-clockwise, no repeated endpoint.
std::vector<P2> convex_hull(std::vector<P2> p) {
    std::sort(p.begin(), p.end(), [](const P2& a, const P2& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); });
    std::vector<P2> h(2 * p.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
        h[k++] = p[i];
    }
    for (std::size_t i = p.size() - 1, t = k + 1; i > 0; --i) {
        while (k >= t && cross(h[k - 2], h[k - 1], p[i - 1]) <= 0) --k;
        h[k++] = p[i - 1];
    }
    h.resize(k - 1);
    return h;
}

}  // namespace

Tin::Tin(const Samples& known) : samples_(deduplicate(known)) {
    const Index n = samples_.size();
    SSIN_EXPECTS(n >= 3, "TIN needs at least three distinct points");
    if (samples_.metric == Metric::haversine) {
        origin_ = samples_.xy.colwise().mean().transpose();
        cos_lat0_ = std::cos(geom::deg2rad(origin_(0)));
    }
    pts_.reserve(static_cast<std::size_t>(n) + 3);
    for (Index i = 0; i < n; ++i) pts_.push_back(project(samples_.at(i)));

    P2 lo = pts_[0], hi = pts_[0];
    for (const auto& p : pts_) lo = lo.cwiseMin(p), hi = hi.cwiseMax(p);
    const double extent = std::max((hi - lo).maxCoeff(), std::numeric_limits<double>::min());
    double max_cross = 0.0;
    for (std::size_t i = 1; i < pts_.size(); ++i) {
        for (std::size_t j = i + 1; j < pts_.size(); ++j) max_cross = std::max(max_cross, std::abs(cross(pts_[0], pts_[i], pts_[j])));
    }
    if (max_cross <= 1e-12 * extent * extent) throw ContractViolation("TIN: sample locations are collinear");

    // Bowyer-Watson with an enclosing super triangle.
    const P2 mid = (lo + hi) / 2;
    const double s = 100.0 * extent;
    pts_.emplace_back(mid.x() - s, mid.y() - s);
    pts_.emplace_back(mid.x() + s, mid.y() - s);
    pts_.emplace_back(mid.x(), mid.y() + s);
    std::vector<Tri> tris{make_tri(pts_, n, n + 1, n + 2)};

    for (Index i = 0; i < n; ++i) {
        const P2& p = pts_[static_cast<std::size_t>(i)];
        std::map<std::pair<Index, Index>, int> edges;
        std::vector<Tri> keep;
        keep.reserve(tris.size());
        for (const auto& t : tris) {
            if ((p - t.centre).squaredNorm() < t.r2) {
                for (int e = 0; e < 3; ++e) {
                    Index a = t.v[static_cast<std::size_t>(e)], b = t.v[static_cast<std::size_t>((e + 1) % 3)];
                    if (a > b) std::swap(a, b);
                    ++edges[{a, b}];
                }
            } else {
                keep.push_back(t);
            }
        }
        for (const auto& [e, count] : edges) {
            if (count == 1) keep.push_back(make_tri(pts_, e.first, e.second, i));
        }
        tris = std::move(keep);
    }
    for (const auto& t : tris) {
        if (t.v[0] < n && t.v[1] < n && t.v[2] < n) tris_.push_back(t.v);
    }
    pts_.resize(static_cast<std::size_t>(n));
    hull_ = convex_hull(pts_);
}

Eigen::Vector2d Tin::project(const Point& p) const {
    if (samples_.metric == Metric::planar) return p;
    double dlon = p(1) - origin_(1);
    if (dlon > 180) dlon -= 360;
    if (dlon < -180) dlon += 360;
    return {geom::kEarthRadiusKm * geom::deg2rad(dlon) * cos_lat0_, geom::kEarthRadiusKm * geom::deg2rad(p(0) - origin_(0))};
}

bool Tin::inside_hull(const Eigen::Vector2d& p) const {
    double scale = 0.0;
    for (const auto& h : hull_) scale = std::max(scale, h.cwiseAbs().maxCoeff());
    const double tol = 1e-12 * std::max(scale * scale, 1.0);
    for (std::size_t i = 0; i < hull_.size(); ++i) {
        if (cross(hull_[i], hull_[(i + 1) % hull_.size()], p) < -tol) return false;
    }
    return true;
}

double Tin::nearest(const Eigen::Vector2d& p) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts_.size(); ++i) {
        if ((pts_[i] - p).squaredNorm() < (pts_[best] - p).squaredNorm()) best = i;
    }
    return samples_.v[static_cast<Index>(best)];
}

std::optional<double> Tin::operator()(const Point& query) const { return interpolate(query, false); }

std::optional<double> Tin::interpolate(const Point& query, bool nearest_fallback) const {
    const P2 p = project(query);
    if (!inside_hull(p)) {
        if (nearest_fallback) return nearest(p);
        return std::nullopt;
    }
    // Containing triangle, or the closest one if p falls in a sliver left
    // uncovered near the hull.
    double best_min = -std::numeric_limits<double>::infinity();
    Eigen::Vector3d best_l = Eigen::Vector3d::Zero();
    std::size_t best_t = 0;
    for (std::size_t t = 0; t < tris_.size(); ++t) {
        const auto& v = tris_[t];
        const P2& a = pts_[static_cast<std::size_t>(v[0])];
        const P2& b = pts_[static_cast<std::size_t>(v[1])];
        const P2& c = pts_[static_cast<std::size_t>(v[2])];
        const double area = cross(a, b, c);
        const Eigen::Vector3d l(cross(p, b, c) / area, cross(a, p, c) / area, cross(a, b, p) / area);
        const double m = l.minCoeff();
        if (m > best_min) {
            best_min = m;
            best_l = l;
            best_t = t;
        }
        if (m >= 0.0) break;
    }
    const auto& v = tris_[best_t];
    return best_l(0) * samples_.v[v[0]] + best_l(1) * samples_.v[v[1]] + best_l(2) * samples_.v[v[2]];
}

std::optional<double> tin_interpolate(const Samples& known, const Point& query) { return Tin(known)(query); }

}  // namespace ssin::baselines
