#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "multipass/errors.hpp"
#include "multipass/so3.hpp"

namespace multipass {

/// Weighted point charges representing a neutral rigid molecule's total
/// charge density. Continuous densities enter as quadrature point clouds.
struct ChargeDistribution {
    struct Point {
        double q;
        Vec3 x;
    };

    std::vector<Point> points;
    std::string label;
    double declared_charge = 0.0;

    double total_charge() const {
        double s = 0.0;
        for (const auto& p : points)
            s += p.q;
        return s;
    }

    double abs_charge() const {
        double s = 0.0;
        for (const auto& p : points)
            s += std::abs(p.q);
        return s;
    }

    double max_radius() const {
        double r = 0.0;
        for (const auto& p : points)
            r = std::max(r, p.x.norm());
        return r;
    }

    /// Checks the type invariants: non-empty, finite, and total charge equal
    /// to the declared charge within 1e-12.
    void validate() const {
        if (points.empty())
            throw invalid_input_error("charge distribution has no points");
        for (const auto& p : points)
            if (!std::isfinite(p.q) || !p.x.allFinite())
                throw invalid_input_error("charge distribution has non-finite entries");
        if (std::abs(total_charge() - declared_charge) > 1e-12 * std::max(1.0, abs_charge()))
            throw invalid_input_error("total charge " + std::to_string(total_charge()) +
                                      " does not match declared charge " +
                                      std::to_string(declared_charge));
    }

    ChargeDistribution rotated(const Rotation& R) const {
        ChargeDistribution out = *this;
        for (auto& p : out.points)
            p.x = R * p.x;
        return out;
    }

    ChargeDistribution translated(const Vec3& t) const {
        ChargeDistribution out = *this;
        for (auto& p : out.points)
            p.x += t;
        return out;
    }
};

/// Dense rank-3 symmetric tensor (27 entries).
struct Tensor3 {
    std::array<double, 27> a{};

    double& operator()(int i, int j, int k) { return a[9 * i + 3 * j + k]; }
    double operator()(int i, int j, int k) const { return a[9 * i + 3 * j + k]; }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : a)
            s += v * v;
        return std::sqrt(s);
    }

    bool is_zero(double tol) const { return frobenius_norm() <= tol; }

    /// Contraction in the first slot: the symmetric matrix O(v, ., .).
    Mat3 contract1(const Vec3& v) const {
        Mat3 m = Mat3::Zero();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k)
                    m(j, k) += v[i] * (*this)(i, j, k);
        return m;
    }

    /// The vector O(v, w, .).
    Vec3 contract2(const Vec3& v, const Vec3& w) const {
        Vec3 r = Vec3::Zero();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k)
                    r[k] += v[i] * w[j] * (*this)(i, j, k);
        return r;
    }

    double contract3(const Vec3& v, const Vec3& w, const Vec3& u) const {
        return contract2(v, w).dot(u);
    }

    Tensor3 rotated(const Mat3& R) const {
        Tensor3 out;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) {
                    double s = 0.0;
                    for (int a_ = 0; a_ < 3; ++a_)
                        for (int b = 0; b < 3; ++b)
                            for (int c = 0; c < 3; ++c)
                                s += R(i, a_) * R(j, b) * R(k, c) * (*this)(a_, b, c);
                    out(i, j, k) = s;
                }
        return out;
    }
};

/// Dense rank-4 symmetric tensor (81 entries).
struct Tensor4 {
    std::array<double, 81> a{};

    double& operator()(int i, int j, int k, int l) { return a[27 * i + 9 * j + 3 * k + l]; }
    double operator()(int i, int j, int k, int l) const { return a[27 * i + 9 * j + 3 * k + l]; }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : a)
            s += v * v;
        return std::sqrt(s);
    }

    bool is_zero(double tol) const { return frobenius_norm() <= tol; }

    double contract4(const Vec3& v1, const Vec3& v2, const Vec3& v3, const Vec3& v4) const {
        double s = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k)
                    for (int l = 0; l < 3; ++l)
                        s += v1[i] * v2[j] * v3[k] * v4[l] * (*this)(i, j, k, l);
        return s;
    }

    /// The vector H(v1, v2, v3, .).
    Vec3 contract3(const Vec3& v1, const Vec3& v2, const Vec3& v3) const {
        Vec3 r = Vec3::Zero();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k)
                    for (int l = 0; l < 3; ++l)
                        r[l] += v1[i] * v2[j] * v3[k] * (*this)(i, j, k, l);
        return r;
    }

    Tensor4 rotated(const Mat3& R) const {
        Tensor4 out;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k)
                    for (int l = 0; l < 3; ++l) {
                        double s = 0.0;
                        for (int a_ = 0; a_ < 3; ++a_)
                            for (int b = 0; b < 3; ++b)
                                for (int c = 0; c < 3; ++c)
                                    for (int d = 0; d < 3; ++d)
                                        s += R(i, a_) * R(j, b) * R(k, c) * R(l, d) *
                                             (*this)(a_, b, c, d);
                        out(i, j, k, l) = s;
                    }
        return out;
    }
};

/// Total charge plus the first four multipole tensors of a charge
/// distribution: dipole D, quadrupole Q, octopole O, hexadecapole H.
struct MultipoleSet {
    double total_charge = 0.0;
    Vec3 dipole = Vec3::Zero();
    Mat3 quadrupole = Mat3::Zero();
    Tensor3 octopole;
    Tensor4 hexadecapole;

    /// Frobenius norm of the rank-n tensor, n in {1,...,4}.
    double norm_of_order(int n) const {
        switch (n) {
        case 1: return dipole.norm();
        case 2: return quadrupole.norm();
        case 3: return octopole.frobenius_norm();
        case 4: return hexadecapole.frobenius_norm();
        default: throw invalid_input_error("multipole order must be in {1,...,4}");
        }
    }
};

/// Multipole moments of a point-charge distribution by direct summation,
/// up to max_order in {1,...,4}. Orders above max_order stay zero.
inline MultipoleSet compute_multipoles(const ChargeDistribution& dist, int max_order = 4) {
    dist.validate();
    if (max_order < 1 || max_order > 4)
        throw invalid_input_error("max_order must be in {1,...,4}");

    MultipoleSet m;
    m.total_charge = dist.total_charge();

    auto delta = [](int i, int j) { return i == j ? 1.0 : 0.0; };

    for (const auto& p : dist.points) {
        const Vec3& z = p.x;
        double q = p.q;
        double r2 = z.squaredNorm();

        if (max_order >= 1)
            m.dipole += q * z;

        if (max_order >= 2)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    m.quadrupole(i, j) += q * 0.5 * (3.0 * z[i] * z[j] - r2 * delta(i, j));

        if (max_order >= 3)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    for (int k = 0; k < 3; ++k)
                        m.octopole(i, j, k) +=
                            q * 0.5 *
                            (5.0 * z[i] * z[j] * z[k] -
                             r2 * (z[i] * delta(j, k) + z[j] * delta(i, k) + z[k] * delta(i, j)));

        if (max_order >= 4)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    for (int k = 0; k < 3; ++k)
                        for (int l = 0; l < 3; ++l) {
                            double zz6 = z[i] * z[j] * delta(k, l) + z[i] * z[k] * delta(j, l) +
                                         z[i] * z[l] * delta(j, k) + z[j] * z[k] * delta(i, l) +
                                         z[j] * z[l] * delta(i, k) + z[k] * z[l] * delta(i, j);
                            double dd3 = delta(i, j) * delta(k, l) + delta(i, k) * delta(j, l) +
                                         delta(i, l) * delta(j, k);
                            m.hexadecapole(i, j, k, l) +=
                                q / 8.0 *
                                (35.0 * z[i] * z[j] * z[k] * z[l] - 5.0 * r2 * zz6 + r2 * r2 * dd3);
                        }
    }
    return m;
}

/// Pushforward of the multipoles under a rotation: every rank-n tensor is
/// contracted with n copies of R. Equals compute_multipoles of the rotated
/// point set.
inline MultipoleSet rotate_multipoles(const MultipoleSet& m, const Rotation& R) {
    Mat3 Rm = R.matrix();
    if ((Rm * Rm.transpose() - Mat3::Identity()).norm() > 1e-10)
        throw invalid_rotation_error("rotation failed the orthogonality check");
    MultipoleSet out;
    out.total_charge = m.total_charge;
    out.dipole = Rm * m.dipole;
    out.quadrupole = Rm * m.quadrupole * Rm.transpose();
    out.octopole = m.octopole.rotated(Rm);
    out.hexadecapole = m.hexadecapole.rotated(Rm);
    return out;
}

/// Scale-aware default tolerance for deciding that the order-n moment of
/// `dist` vanishes: 1e-8 * sum|q_i| * max|x_i|^n.
inline double multipole_vanishing_tol(const ChargeDistribution& dist, int n) {
    return 1e-8 * dist.abs_charge() * std::pow(dist.max_radius(), n);
}

/// Smallest n in {1,...,4} whose moment has Frobenius norm above tol;
/// nullopt means all vanish up to order 4 ("n >= 5").
inline std::optional<int> first_nonzero_multipole(const MultipoleSet& m, double tol) {
    if (std::abs(m.total_charge) > 1e-12)
        throw invalid_input_error("first_nonzero_multipole requires a neutral distribution");
    for (int n = 1; n <= 4; ++n)
        if (m.norm_of_order(n) > tol)
            return n;
    return std::nullopt;
}

/// Per-order terms of the Taylor expansion of 1/|L e1 - h| together with the
/// exact value and per-order residuals.
struct ExpansionReport {
    std::vector<double> coefficients; // c_n, the L-independent numerators
    std::vector<double> partial_sums; // sum_{k<=n} c_k / L^(k+1)
    std::vector<double> residuals;    // exact - partial_sums[n]
    int order = 0;
    double exact = 0.0;
};

/// Expansion of the Coulomb potential of a unit point charge at offset h,
/// evaluated at L e1, through order N <= 5. Requires |h| <= L/2.
inline ExpansionReport coulomb_expansion(const Vec3& h, double L, int N) {
    if (N < 0 || N > 5)
        throw invalid_input_error("expansion order must be in {0,...,5}");
    if (!(L > 0.0) || h.norm() > L / 2.0)
        throw out_of_domain_error("coulomb_expansion requires |h| <= L/2");

    double t = h.x(); // h . e1
    double r2 = h.squaredNorm();
    double t2 = t * t;

    std::array<double, 6> c{};
    c[0] = 1.0;
    c[1] = t;
    c[2] = 0.5 * (3.0 * t2 - r2);
    c[3] = 0.5 * (5.0 * t2 * t - 3.0 * t * r2);
    c[4] = (3.0 * r2 * r2 - 30.0 * t2 * r2 + 35.0 * t2 * t2) / 8.0;
    c[5] = (15.0 * t * r2 * r2 - 70.0 * t2 * t * r2 + 63.0 * t2 * t2 * t) / 8.0;

    ExpansionReport rep;
    rep.order = N;
    rep.exact = 1.0 / (L * Vec3::UnitX() - h).norm();
    double sum = 0.0;
    double Lp = L;
    for (int n = 0; n <= N; ++n) {
        rep.coefficients.push_back(c[n]);
        sum += c[n] / Lp;
        Lp *= L;
        rep.partial_sums.push_back(sum);
        rep.residuals.push_back(rep.exact - sum);
    }
    return rep;
}

/// Exact pairwise Coulomb sum of two rotated distributions separated by
/// L e1. The brute-force oracle for the interaction module.
inline double direct_coulomb(const ChargeDistribution& dist1, const ChargeDistribution& dist2,
                             const Rotation& U, const Rotation& V, double L) {
    Mat3 Um = U.matrix();
    Mat3 Vm = V.matrix();
    Vec3 shift = L * Vec3::UnitX();
    double sum = 0.0;
    for (const auto& p1 : dist1.points) {
        Vec3 a = Um * p1.x;
        for (const auto& p2 : dist2.points) {
            Vec3 d = a - (Vm * p2.x + shift);
            double r = d.norm();
            if (r < 1e-14)
                throw singularity_error("coincident charges in direct_coulomb");
            sum += p1.q * p2.q / r;
        }
    }
    return sum;
}

} // namespace multipass
