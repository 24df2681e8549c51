#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "multipass/errors.hpp"

namespace multipass {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Element of SO(3), stored as a unit quaternion (w,x,y,z) to avoid the
/// orthogonality drift of 9-parameter matrices. Conversion to a matrix is
/// done on demand.
class Rotation {
public:
    Rotation() : q_(1.0, 0.0, 0.0, 0.0) {}

    Rotation(double w, double x, double y, double z) : q_(w, x, y, z) { renormalize(); }

    static Rotation identity() { return Rotation(); }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    static Rotation axis_angle(const Vec3& axis, double angle) {
        double n = axis.norm();
        if (n == 0.0)
            return Rotation();
        Vec3 u = axis / n;
        double h = 0.5 * angle;
        double s = std::sin(h);
        return Rotation(std::cos(h), s * u.x(), s * u.y(), s * u.z());
    }

    /// Group exponential: exp of the skew matrix of omega.
    static Rotation exp(const Vec3& omega) { return axis_angle(omega, omega.norm()); }

    /// Builds from an orthogonal matrix with det +1; tol guards the check.
    static Rotation from_matrix(const Mat3& R, double tol = 1e-10) {
        if ((R * R.transpose() - Mat3::Identity()).norm() > tol * 10.0 + 1e-9 ||
            std::abs(R.determinant() - 1.0) > tol * 10.0 + 1e-9)
            throw invalid_rotation_error("matrix is not a rotation (orthogonality/det check failed)");
        Eigen::Quaterniond q(R);
        return Rotation(q.w(), q.x(), q.y(), q.z());
    }

    /// Minimal rotation taking unit vector a to unit vector b.
    static Rotation between(const Vec3& a, const Vec3& b) {
        Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(a, b);
        return Rotation(q.w(), q.x(), q.y(), q.z());
    }

    double w() const { return q_.w(); }
    double x() const { return q_.x(); }
    double y() const { return q_.y(); }
    double z() const { return q_.z(); }

    Mat3 matrix() const { return q_.toRotationMatrix(); }

    Vec3 operator*(const Vec3& v) const { return q_ * v; }

    Rotation operator*(const Rotation& o) const {
        Eigen::Quaterniond r = q_ * o.q_;
        return Rotation(r.w(), r.x(), r.y(), r.z());
    }

    Rotation inverse() const { return Rotation(q_.w(), -q_.x(), -q_.y(), -q_.z()); }

    /// Log map: the rotation vector omega with exp(omega) == *this.
    Vec3 log() const {
        Eigen::AngleAxisd aa(q_);
        double angle = aa.angle();
        if (angle > M_PI) // wrap into (-pi, pi]
            angle -= 2.0 * M_PI;
        return angle * aa.axis();
    }

    /// Geodesic (bi-invariant) distance: angle of the relative rotation.
    /// atan2 form; stable for nearly identical rotations where acos is not.
    double distance(const Rotation& o) const {
        Eigen::Quaterniond r = q_.conjugate() * o.q_;
        double s = r.vec().norm();
        double c = std::abs(r.w());
        return 2.0 * std::atan2(s, c);
    }

    /// Geodesic from *this toward `to`, evaluated at parameter t in [0,1].
    Rotation slerp(const Rotation& to, double t) const {
        Eigen::Quaterniond r = q_.slerp(t, to.q_);
        return Rotation(r.w(), r.x(), r.y(), r.z());
    }

    double norm_drift() const { return std::abs(q_.norm() - 1.0); }

private:
    void renormalize() {
        double n = q_.norm();
        if (!(n > 0.0) || !std::isfinite(n))
            throw invalid_rotation_error("quaternion has zero or non-finite norm");
        q_.coeffs() /= n;
    }

    Eigen::Quaterniond q_;
};

/// Skew-symmetric matrix of omega (the "hat" map).
inline Mat3 hat(const Vec3& w) {
    Mat3 m;
    m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return m;
}

/// Configuration of two rigid molecules: separation L > 0 along e1 plus the
/// two orientations.
struct Config {
    double L = 1.0;
    Rotation U;
    Rotation V;
};

/// Tangent vector at a Config in angular-velocity coordinates. Rotations move
/// by right multiplication: U(t) = U * exp(t * hat(omega_u)).
struct Tangent {
    double dL = 0.0;
    Vec3 omega_u = Vec3::Zero();
    Vec3 omega_v = Vec3::Zero();

    double norm() const { return std::sqrt(dL * dL + omega_u.squaredNorm() + omega_v.squaredNorm()); }
};

/// Product-metric geodesic through p in direction v at time t.
/// Weights on (dL, omega_u, omega_v) are (1,1,1).
inline Config geodesic(const Config& p, const Tangent& v, double t) {
    Config out;
    out.L = p.L + t * v.dL;
    if (out.L <= 0.0)
        throw domain_exit_error("geodesic left the domain: L(t) <= 0");
    out.U = p.U * Rotation::exp(t * v.omega_u);
    out.V = p.V * Rotation::exp(t * v.omega_v);
    return out;
}

inline double config_distance(const Config& a, const Config& b) {
    double dl = a.L - b.L;
    double du = a.U.distance(b.U);
    double dv = a.V.distance(b.V);
    return std::sqrt(dl * dl + du * du + dv * dv);
}

/// Caller-owned RNG state; all stochastic routines take one of these so runs
/// are reproducible under a fixed seed.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), eng_(seed) {}

    double uniform() { return unif_(eng_); }
    double gaussian() { return gauss_(eng_); }
    std::uint64_t seed() const { return seed_; }

    /// Derives an independent stream for block `i` of a parallel loop.
    RngStream fork(std::uint64_t i) const {
        std::seed_seq seq{seed_, i, std::uint64_t(0x9e3779b97f4a7c15ULL)};
        std::vector<std::uint32_t> s(4);
        seq.generate(s.begin(), s.end());
        return RngStream((std::uint64_t(s[0]) << 32) | s[1]);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
    std::normal_distribution<double> gauss_{0.0, 1.0};
};

/// Haar-uniform rotation: a 4D Gaussian vector, normalized, read as a
/// quaternion. Deterministic under a fixed stream.
inline Rotation haar_sample(RngStream& rng) {
    double w, x, y, z, n2;
    do {
        w = rng.gaussian();
        x = rng.gaussian();
        y = rng.gaussian();
        z = rng.gaussian();
        n2 = w * w + x * x + y * y + z * z;
    } while (n2 < 1e-12);
    return Rotation(w, x, y, z);
}

/// Uniform point on the unit sphere.
inline Vec3 sphere_sample(RngStream& rng) {
    Vec3 v;
    double n2;
    do {
        v = Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian());
        n2 = v.squaredNorm();
    } while (n2 < 1e-12);
    return v / std::sqrt(n2);
}

using ConfigFn = std::function<double(const Config&)>;

namespace detail {

inline Config chart_point(const Config& p, const Eigen::Matrix<double, 7, 1>& x) {
    Config out;
    out.L = p.L + x[0];
    if (out.L <= 0.0)
        throw domain_exit_error("chart point left the domain: L <= 0");
    out.U = p.U * Rotation::exp(Vec3(x[1], x[2], x[3]));
    out.V = p.V * Rotation::exp(Vec3(x[4], x[5], x[6]));
    return out;
}

} // namespace detail

/// Central-difference Riemannian gradient in the exponential chart at p.
/// Default step h = 1e-4 (angles are dimensionless).
inline Tangent riem_grad(const ConfigFn& f, const Config& p, double h = 1e-4) {
    Eigen::Matrix<double, 7, 1> g;
    Eigen::Matrix<double, 7, 1> x = Eigen::Matrix<double, 7, 1>::Zero();
    for (int i = 0; i < 7; ++i) {
        x[i] = h;
        double fp = f(detail::chart_point(p, x));
        x[i] = -h;
        double fm = f(detail::chart_point(p, x));
        x[i] = 0.0;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw evaluation_error("non-finite function value in riem_grad");
        g[i] = (fp - fm) / (2.0 * h);
    }
    Tangent t;
    t.dL = g[0];
    t.omega_u = Vec3(g[1], g[2], g[3]);
    t.omega_v = Vec3(g[4], g[5], g[6]);
    return t;
}

/// Central-difference Hessian (7x7, symmetrized) in the exponential chart
/// at p. At critical points this is the Riemannian Hessian.
inline Eigen::Matrix<double, 7, 7> riem_hess(const ConfigFn& f, const Config& p, double h = 1e-4) {
    Eigen::Matrix<double, 7, 7> H;
    Eigen::Matrix<double, 7, 1> x = Eigen::Matrix<double, 7, 1>::Zero();
    double f0 = f(p);
    if (!std::isfinite(f0))
        throw evaluation_error("non-finite function value in riem_hess");
    for (int i = 0; i < 7; ++i) {
        x[i] = h;
        double fp = f(detail::chart_point(p, x));
        x[i] = -h;
        double fm = f(detail::chart_point(p, x));
        x[i] = 0.0;
        H(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
    }
    for (int i = 0; i < 7; ++i) {
        for (int j = i + 1; j < 7; ++j) {
            x[i] = h;
            x[j] = h;
            double fpp = f(detail::chart_point(p, x));
            x[j] = -h;
            double fpm = f(detail::chart_point(p, x));
            x[i] = -h;
            x[j] = h;
            double fmp = f(detail::chart_point(p, x));
            x[j] = -h;
            double fmm = f(detail::chart_point(p, x));
            x[i] = 0.0;
            x[j] = 0.0;
            double v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            H(i, j) = v;
            H(j, i) = v;
        }
    }
    return H;
}

/// Restriction of riem_hess to the rotational (U,V) block.
inline Eigen::Matrix<double, 6, 6> riem_hess_uv(const ConfigFn& f, const Config& p, double h = 1e-4) {
    return riem_hess(f, p, h).bottomRightCorner<6, 6>();
}

} // namespace multipass
