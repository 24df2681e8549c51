#pragma once

#include <cmath>
#include <tuple>
#include <utility>
#include <vector>

#include "multipass/errors.hpp"
#include "multipass/multipole.hpp"
#include "multipass/so3.hpp"

namespace multipass {

namespace detail {

// Bilinear closed forms for the multipolar interactions, separation axis e1.
// All tensors are already in the lab frame. The (n,m) cases with n <= m are
// written out; n > m goes through the sign rule.

inline double f11(const Vec3& D1, const Vec3& D2) {
    return D1.dot(D2) - 3.0 * D1.x() * D2.x();
}

inline double f12(const Vec3& D1, const Mat3& Q2) {
    return 5.0 * D1.x() * Q2(0, 0) - 2.0 * Q2.row(0).dot(D1);
}

inline double f13(const Vec3& D1, const Tensor3& O2) {
    Vec3 w = O2.contract2(Vec3::UnitX(), Vec3::UnitX());
    return w.dot(3.0 * D1) - 7.0 * D1.x() * w.x();
}

inline Mat3 l_map(const Mat3& Q1) {
    // L(Q) = 35 pQp - 10 pQ - 10 Qp + 2 Q with p = |e1><e1|
    Mat3 L = 2.0 * Q1;
    L.row(0) -= 10.0 * Q1.row(0);
    L.col(0) -= 10.0 * Q1.col(0);
    L(0, 0) += 35.0 * Q1(0, 0);
    return L;
}

inline double f22(const Mat3& Q1, const Mat3& Q2) {
    return (l_map(Q1) * Q2).trace() / 3.0;
}

inline double f14(const Vec3& D1, const Tensor4& H2) {
    Vec3 e1 = Vec3::UnitX();
    Vec3 w = H2.contract3(e1, e1, e1);
    return 9.0 * w.x() * D1.x() - 4.0 * w.dot(D1);
}

inline double f23(const Mat3& Q1, const Tensor3& O2) {
    Vec3 e1 = Vec3::UnitX();
    Vec3 oee = O2.contract2(e1, e1);
    Mat3 oe = O2.contract1(e1);
    return -21.0 * oee.x() * Q1(0, 0) + 14.0 * oee.dot(Q1 * e1) - 2.0 * (oe * Q1).trace();
}

// Derivative of a rank-n tensor under the rotation generator hat(w),
// applied once per slot.

inline Vec3 gen(const Vec3& w, const Vec3& D) { return w.cross(D); }

inline Mat3 gen(const Vec3& w, const Mat3& Q) {
    Mat3 W = hat(w);
    return W * Q - Q * W;
}

inline Tensor3 gen(const Vec3& w, const Tensor3& T) {
    Mat3 W = hat(w);
    Tensor3 out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
                double s = 0.0;
                for (int a = 0; a < 3; ++a)
                    s += W(i, a) * T(a, j, k) + W(j, a) * T(i, a, k) + W(k, a) * T(i, j, a);
                out(i, j, k) = s;
            }
    return out;
}

inline Tensor4 gen(const Vec3& w, const Tensor4& T) {
    Mat3 W = hat(w);
    Tensor4 out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) {
                    double s = 0.0;
                    for (int a = 0; a < 3; ++a)
                        s += W(i, a) * T(a, j, k, l) + W(j, a) * T(i, a, k, l) +
                             W(k, a) * T(i, j, a, l) + W(l, a) * T(i, j, k, a);
                    out(i, j, k, l) = s;
                }
    return out;
}

/// Multipoles of one molecule pushed into the lab frame.
struct LabMultipoles {
    Vec3 D;
    Mat3 Q;
    Tensor3 O;
    Tensor4 H;
};

inline LabMultipoles to_lab(const MultipoleSet& m, const Rotation& R) {
    MultipoleSet r = rotate_multipoles(m, R);
    return LabMultipoles{r.dipole, r.quadrupole, r.octopole, r.hexadecapole};
}

/// f for lab-frame tensors, n <= m assumed checked by the caller.
inline double f_lab(const LabMultipoles& a, const LabMultipoles& b, int n, int m) {
    if (n == 1 && m == 1) return f11(a.D, b.D);
    if (n == 1 && m == 2) return f12(a.D, b.Q);
    if (n == 1 && m == 3) return f13(a.D, b.O);
    if (n == 2 && m == 2) return f22(a.Q, b.Q);
    if (n == 1 && m == 4) return f14(a.D, b.H);
    if (n == 2 && m == 3) return f23(a.Q, b.O);
    throw unsupported_order_error("no closed form for (n,m) outside 2 <= n+m <= 5");
}

inline LabMultipoles gen_lab(const Vec3& w, const LabMultipoles& t) {
    return LabMultipoles{gen(w, t.D), gen(w, t.Q), gen(w, t.O), gen(w, t.H)};
}

} // namespace detail

/// Multipolar interaction energy F^(n,m) of two rotated neutral
/// distributions, separation direction e1. For n > m the sign rule
/// F^(n,m)(rho1,rho2) = (-1)^(n+m) F^(m,n)(rho2,rho1) applies.
inline double f_nm(const MultipoleSet& m1, const MultipoleSet& m2, const Rotation& U,
                   const Rotation& V, int n, int m) {
    if (n < 1 || m < 1 || n > 4 || m > 4 || n + m < 2 || n + m > 5)
        throw unsupported_order_error("f_nm requires 2 <= n+m <= 5 with orders in {1,...,4}");
    if (n <= m)
        return detail::f_lab(detail::to_lab(m1, U), detail::to_lab(m2, V), n, m);
    double sign = ((n + m) % 2 == 0) ? 1.0 : -1.0;
    return sign * detail::f_lab(detail::to_lab(m2, V), detail::to_lab(m1, U), m, n);
}

/// Rotational gradient of f_nm in angular-velocity coordinates
/// (right-multiplication convention, matching geodesic()).
struct GradUV {
    Vec3 gu = Vec3::Zero();
    Vec3 gv = Vec3::Zero();

    double norm() const { return std::sqrt(gu.squaredNorm() + gv.squaredNorm()); }
};

/// Exact directional derivatives of f_nm along U <- U exp(t hat(e_a)) and
/// V <- V exp(t hat(e_a)). Used for fast descent; cross-checked against
/// finite differences in the tests.
inline GradUV f_nm_grad(const MultipoleSet& m1, const MultipoleSet& m2, const Rotation& U,
                        const Rotation& V, int n, int m) {
    if (n > m) {
        double sign = ((n + m) % 2 == 0) ? 1.0 : -1.0;
        GradUV sw = f_nm_grad(m2, m1, V, U, m, n);
        return GradUV{sign * sw.gv, sign * sw.gu};
    }
    detail::LabMultipoles a = detail::to_lab(m1, U);
    detail::LabMultipoles b = detail::to_lab(m2, V);
    // U exp(t hat(e_a)) pushes tensors like exp(t hat(U e_a)) does in the lab.
    Mat3 Um = U.matrix(), Vm = V.matrix();
    GradUV g;
    for (int axis = 0; axis < 3; ++axis) {
        g.gu[axis] = detail::f_lab(detail::gen_lab(Um.col(axis), a), b, n, m);
        g.gv[axis] = detail::f_lab(a, detail::gen_lab(Vm.col(axis), b), n, m);
    }
    return g;
}

/// All F^(n,m) with n+m <= 5 for a fixed pair of rotated molecules.
struct InteractionTable {
    /// (n, m, value), in the fixed order of increasing n+m then n.
    std::vector<std::tuple<int, int, double>> entries;

    double get(int n, int m) const {
        for (const auto& [en, em, v] : entries)
            if (en == n && em == m)
                return v;
        throw unsupported_order_error("(n,m) not present in interaction table");
    }

    static const std::vector<std::pair<int, int>>& supported_orders() {
        static const std::vector<std::pair<int, int>> orders = {
            {1, 1}, {1, 2}, {2, 1}, {1, 3}, {2, 2}, {3, 1}, {1, 4}, {2, 3}, {3, 2}, {4, 1}};
        return orders;
    }
};

inline InteractionTable interaction_table(const MultipoleSet& m1, const MultipoleSet& m2,
                                          const Rotation& U, const Rotation& V) {
    InteractionTable t;
    for (auto [n, m] : InteractionTable::supported_orders())
        t.entries.emplace_back(n, m, f_nm(m1, m2, U, V, n, m));
    return t;
}

/// Large-L multipolar expansion of the interaction of two rotated neutral
/// distributions: sum of F^(n,m) / L^(n+m+1) over 2 <= n+m <= N.
inline std::pair<InteractionTable, double>
interaction_expansion(const ChargeDistribution& dist1, const ChargeDistribution& dist2,
                      const Rotation& U, const Rotation& V, double L, int N) {
    if (N < 2 || N > 5)
        throw invalid_input_error("interaction_expansion requires 2 <= N <= 5");
    if (dist1.max_radius() > L / 3.0 || dist2.max_radius() > L / 3.0)
        throw out_of_domain_error("supports must lie within balls of radius L/3");
    MultipoleSet m1 = compute_multipoles(dist1, 4);
    MultipoleSet m2 = compute_multipoles(dist2, 4);
    InteractionTable t = interaction_table(m1, m2, U, V);
    double value = 0.0;
    for (const auto& [n, m, f] : t.entries)
        if (n + m <= N)
            value += f / std::pow(L, n + m + 1);
    return {t, value};
}

/// One rigid molecule in a multi-molecule arrangement.
struct MoleculePlacement {
    MultipoleSet multipoles; // body frame
    Rotation rotation;
    Vec3 center = Vec3::Zero();
    double support_radius = 0.0; // 0 means unknown; skips the domain check
};

/// Classical pairwise multipolar energy of K placed molecules. Each pair is
/// evaluated in a frame where its axis plays the role of e1; the result is
/// independent of the gauge freedom left in that choice.
inline double pairwise_multimolecule_energy(const std::vector<MoleculePlacement>& placements,
                                            int N) {
    if (placements.size() < 2)
        throw invalid_input_error("need at least two placements");
    if (N < 2 || N > 5)
        throw invalid_input_error("pairwise_multimolecule_energy requires 2 <= N <= 5");
    for (const auto& p : placements)
        if (std::abs(p.multipoles.total_charge) > 1e-12)
            throw invalid_input_error("placements must be neutral");

    double total = 0.0;
    for (std::size_t i = 0; i < placements.size(); ++i) {
        for (std::size_t j = i + 1; j < placements.size(); ++j) {
            const auto& a = placements[i];
            const auto& b = placements[j];
            Vec3 d = b.center - a.center;
            double L = d.norm();
            if (L <= 0.0)
                throw out_of_domain_error("coincident molecule centers");
            if (L < 3.0 * std::max(a.support_radius, b.support_radius))
                throw out_of_domain_error("supports overlap: pair distance below 3 x radius");
            Rotation W = Rotation::between(d / L, Vec3::UnitX());
            Rotation Ui = W * a.rotation;
            Rotation Uj = W * b.rotation;
            for (auto [n, m] : InteractionTable::supported_orders())
                if (n + m <= N)
                    total += f_nm(a.multipoles, b.multipoles, Ui, Uj, n, m) /
                             std::pow(L, n + m + 1);
        }
    }
    return total;
}

} // namespace multipass
