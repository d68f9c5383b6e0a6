#pragma once

// Polyline / trajectory geometry kernel. Everything here is a pure function
// over plain point sequences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace lanerep::geom {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

using Polyline = std::vector<Point>;

inline double dist(const Point& a, const Point& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

inline double arc_length(const Polyline& p) {
    double L = 0.0;
    for (size_t i = 1; i < p.size(); ++i) L += dist(p[i - 1], p[i]);
    return L;
}

// Arc-length resampling via linear interpolation. First/last output points
// equal the input endpoints. A zero-total-length polyline yields K copies of
// the single location; the caller can detect this through `degenerate`.
inline Eigen::MatrixX2d resample_arclength(const Polyline& p, int K,
                                           bool* degenerate = nullptr) {
    if (K < 2) throw std::invalid_argument("resample_arclength: K must be >= 2");
    if (p.size() < 2) throw std::invalid_argument("resample_arclength: need >= 2 points");
    if (degenerate) *degenerate = false;

    std::vector<double> cum(p.size(), 0.0);
    for (size_t i = 1; i < p.size(); ++i) cum[i] = cum[i - 1] + dist(p[i - 1], p[i]);
    const double total = cum.back();

    Eigen::MatrixX2d out(K, 2);
    if (total <= 0.0) {
        if (degenerate) *degenerate = true;
        for (int k = 0; k < K; ++k) out.row(k) << p[0].x, p[0].y;
        return out;
    }

    size_t seg = 0;
    for (int k = 0; k < K; ++k) {
        double target = total * static_cast<double>(k) / static_cast<double>(K - 1);
        while (seg + 2 < p.size() && cum[seg + 1] < target) ++seg;
        double seg_len = cum[seg + 1] - cum[seg];
        double t = seg_len > 0.0 ? (target - cum[seg]) / seg_len : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        out(k, 0) = p[seg].x + t * (p[seg + 1].x - p[seg].x);
        out(k, 1) = p[seg].y + t * (p[seg + 1].y - p[seg].y);
    }
    // pin endpoints exactly
    out(0, 0) = p.front().x;
    out(0, 1) = p.front().y;
    out(K - 1, 0) = p.back().x;
    out(K - 1, 1) = p.back().y;
    return out;
}

inline Polyline to_polyline(const Eigen::MatrixX2d& m) {
    Polyline p(static_cast<size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) p[static_cast<size_t>(i)] = {m(i, 0), m(i, 1)};
    return p;
}

inline double point_to_segment_distance(const Point& q, const Point& a, const Point& b) {
    double vx = b.x - a.x, vy = b.y - a.y;
    double wx = q.x - a.x, wy = q.y - a.y;
    double vv = vx * vx + vy * vy;
    double t = vv > 0.0 ? std::clamp((wx * vx + wy * vy) / vv, 0.0, 1.0) : 0.0;
    double px = a.x + t * vx, py = a.y + t * vy;
    return std::hypot(q.x - px, q.y - py);
}

inline double point_to_polyline_distance(const Point& q, const Polyline& p) {
    if (p.empty()) throw std::invalid_argument("point_to_polyline_distance: empty polyline");
    if (p.size() == 1) return dist(q, p[0]);
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 1; i < p.size(); ++i)
        best = std::min(best, point_to_segment_distance(q, p[i - 1], p[i]));
    return best;
}

inline double mean_tracklet_distance(const Polyline& tracklet, const Polyline& p) {
    if (tracklet.empty()) throw std::invalid_argument("mean_tracklet_distance: empty tracklet");
    double s = 0.0;
    for (const auto& q : tracklet) s += point_to_polyline_distance(q, p);
    return s / static_cast<double>(tracklet.size());
}

// Signed perpendicular offset of q relative to the centerline: positive on
// the left of the local travel direction (cross product sign of tangent with
// the offset vector).
inline double signed_point_offset(const Point& q, const Polyline& c) {
    if (c.size() < 2) throw std::invalid_argument("signed_point_offset: need >= 2 points");
    double best = std::numeric_limits<double>::infinity();
    double sign = 1.0;
    for (size_t i = 1; i < c.size(); ++i) {
        double d = point_to_segment_distance(q, c[i - 1], c[i]);
        if (d < best) {
            best = d;
            double tx = c[i].x - c[i - 1].x, ty = c[i].y - c[i - 1].y;
            double ox = q.x - c[i - 1].x, oy = q.y - c[i - 1].y;
            double cross = tx * oy - ty * ox;
            sign = cross >= 0.0 ? 1.0 : -1.0;
        }
    }
    return sign * best;
}

inline double signed_lateral_offset(const Polyline& tracklet, const Polyline& centerline) {
    if (tracklet.empty()) throw std::invalid_argument("signed_lateral_offset: empty tracklet");
    double s = 0.0;
    for (const auto& q : tracklet) s += signed_point_offset(q, centerline);
    return s / static_cast<double>(tracklet.size());
}

// Discrete curvature proxy: mean over interior vertices of
// |turn angle| / mean adjacent segment length.
inline double mean_curvature(const Polyline& p, bool* degenerate = nullptr) {
    if (degenerate) *degenerate = false;
    if (p.size() < 3) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    double sum = 0.0;
    int count = 0;
    for (size_t i = 1; i + 1 < p.size(); ++i) {
        double ax = p[i].x - p[i - 1].x, ay = p[i].y - p[i - 1].y;
        double bx = p[i + 1].x - p[i].x, by = p[i + 1].y - p[i].y;
        double la = std::hypot(ax, ay), lb = std::hypot(bx, by);
        if (la <= 0.0 || lb <= 0.0) continue;
        double angle = std::atan2(ax * by - ay * bx, ax * bx + ay * by);
        double mean_len = 0.5 * (la + lb);
        sum += std::abs(angle) / mean_len;
        ++count;
    }
    if (count == 0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return sum / static_cast<double>(count);
}

// Population variance of signed heading-change angles at interior vertices.
inline double curvature_smoothness(const Polyline& p) {
    if (p.size() < 3) return 0.0;
    std::vector<double> angles;
    angles.reserve(p.size() - 2);
    for (size_t i = 1; i + 1 < p.size(); ++i) {
        double ax = p[i].x - p[i - 1].x, ay = p[i].y - p[i - 1].y;
        double bx = p[i + 1].x - p[i].x, by = p[i + 1].y - p[i].y;
        if (std::hypot(ax, ay) <= 0.0 || std::hypot(bx, by) <= 0.0) continue;
        angles.push_back(std::atan2(ax * by - ay * bx, ax * bx + ay * by));
    }
    if (angles.empty()) return 0.0;
    double mean = 0.0;
    for (double a : angles) mean += a;
    mean /= static_cast<double>(angles.size());
    double var = 0.0;
    for (double a : angles) var += (a - mean) * (a - mean);
    return var / static_cast<double>(angles.size());
}

inline double chamfer_distance(const std::vector<Point>& A, const std::vector<Point>& B) {
    if (A.empty() || B.empty()) throw std::invalid_argument("chamfer_distance: empty set");
    auto one_way = [](const std::vector<Point>& X, const std::vector<Point>& Y) {
        double s = 0.0;
        for (const auto& x : X) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& y : Y) best = std::min(best, dist(x, y));
            s += best;
        }
        return s / static_cast<double>(X.size());
    };
    return 0.5 * (one_way(A, B) + one_way(B, A));
}

inline double chamfer_distance(const Eigen::MatrixX2d& A, const Eigen::MatrixX2d& B) {
    return chamfer_distance(to_polyline(A), to_polyline(B));
}

// FID-style distance between Gaussians fitted (with diagonal covariance) to
// flattened geometry vectors: ||mu1-mu2||^2 + sum(v1 + v2 - 2*sqrt(v1*v2)).
inline double frechet_geometry_distance(const std::vector<Eigen::VectorXd>& gen,
                                        const std::vector<Eigen::VectorXd>& ref) {
    if (gen.size() < 2 || ref.size() < 2)
        throw std::invalid_argument("frechet_geometry_distance: need >= 2 items per set");
    const Eigen::Index d = gen[0].size();
    auto fit = [d](const std::vector<Eigen::VectorXd>& xs) {
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
        for (const auto& x : xs) mu += x;
        mu /= static_cast<double>(xs.size());
        Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
        for (const auto& x : xs) var += (x - mu).cwiseAbs2();
        var /= static_cast<double>(xs.size());
        return std::make_pair(mu, var);
    };
    auto [mu1, v1] = fit(gen);
    auto [mu2, v2] = fit(ref);
    double out = (mu1 - mu2).squaredNorm();
    for (Eigen::Index i = 0; i < d; ++i)
        out += v1[i] + v2[i] - 2.0 * std::sqrt(std::max(0.0, v1[i] * v2[i]));
    return out;
}

inline Eigen::VectorXd flatten_geometry(const Eigen::MatrixX2d& g) {
    Eigen::VectorXd v(g.rows() * 2);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        v[2 * i] = g(i, 0);
        v[2 * i + 1] = g(i, 1);
    }
    return v;
}

}  // namespace lanerep::geom
