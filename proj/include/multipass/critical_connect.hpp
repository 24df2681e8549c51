#pragma once

// Second half of the critical-point module: the negative-sublevel
// connectivity constructions and the Monte-Carlo verification of the
// near-critical negativity property. Included from critical.hpp.

#include <limits>

namespace multipass {

/// Path in SO(3)^2 staying inside {F < -delta}.
struct SublevelPath {
    std::vector<OrientationPair> nodes;
    std::vector<double> f_values;
    double delta = 0.0;

    double max_f() const {
        double m = -std::numeric_limits<double>::infinity();
        for (double v : f_values)
            m = std::max(m, v);
        return m;
    }

    /// Re-evaluates the invariants against an arbitrary functional,
    /// independently of how the path was built.
    void validate(const UVFn& f) const {
        if (nodes.empty() || nodes.size() != f_values.size())
            throw invariant_violation_error("sublevel path is empty or inconsistently sized");
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            double v = f(nodes[i].U, nodes[i].V);
            if (!(v < -delta))
                throw invariant_violation_error("sublevel path node leaves {F < -delta}");
            if (std::abs(v - f_values[i]) > 1e-9 * (1.0 + std::abs(v)))
                throw invariant_violation_error("stored f_value disagrees with re-evaluation");
            if (i > 0 && pair_distance(nodes[i - 1], nodes[i]) > 0.1)
                throw invariant_violation_error("consecutive path nodes further apart than 0.1");
        }
    }
};

namespace detail {

constexpr double kPathStep = 0.045; // node spacing used by the leg builders

// ---------------------------------------------------------------------
// Sphere path utilities
// ---------------------------------------------------------------------

inline std::vector<Vec3> s2_arc(const Vec3& a, const Vec3& b, double max_step = kPathStep) {
    double c = std::clamp(a.dot(b), -1.0, 1.0);
    double ang = std::acos(c);
    std::vector<Vec3> out;
    if (ang < 1e-14) {
        out = {a, b};
        return out;
    }
    if (ang > M_PI - 1e-7) {
        // nearly antipodal: route through a perpendicular waypoint
        Vec3 mid = a.unitOrthogonal();
        auto first = s2_arc(a, mid, max_step);
        auto second = s2_arc(mid, b, max_step);
        first.insert(first.end(), second.begin() + 1, second.end());
        return first;
    }
    int steps = std::max(1, int(std::ceil(ang / max_step)));
    Vec3 axis = a.cross(b).normalized();
    for (int k = 0; k <= steps; ++k) {
        double t = ang * double(k) / steps;
        out.push_back(Rotation::axis_angle(axis, t) * a);
    }
    return out;
}

// ---------------------------------------------------------------------
// Reduction of the dipole-involving cases to S^2 x S^2
// ---------------------------------------------------------------------

// F(U,V) = sign * dipnorm * <x_raw(e), p> with e the separation axis pulled
// into the body frame of the tensor molecule and p the unit dipole in that
// same frame.
struct DipoleCase {
    int dip_mol;    // 1 or 2
    double sign;    // +1 or -1
    double dipnorm; // |D| of the dipole molecule
    int tensor_rank;
    Mat3 Q;    // body-frame tensor of the other molecule (rank 2)
    Tensor3 O; // (rank 3)
    Vec3 dhat; // body-frame dipole direction

    Vec3 x_raw(const Vec3& e) const {
        if (tensor_rank == 2)
            return 5.0 * e.dot(Q * e) * e - 2.0 * (Q * e);
        Vec3 oee = O.contract2(e, e);
        return 3.0 * oee - 7.0 * oee.dot(e) * e;
    }

    double value(const Vec3& e, const Vec3& p) const { return sign * dipnorm * x_raw(e).dot(p); }

    /// Fiber minimizer of p for fixed e; requires x_raw(e) != 0.
    Vec3 r_of(const Vec3& e) const {
        Vec3 x = x_raw(e);
        double n = x.norm();
        if (n < 1e-14)
            throw evaluation_error("r_of at a kernel direction of the reduced field");
        return -sign * x / n;
    }

    std::pair<Vec3, Vec3> reduce(const OrientationPair& uv) const {
        const Rotation& A = (dip_mol == 1) ? uv.U : uv.V; // dipole side
        const Rotation& B = (dip_mol == 1) ? uv.V : uv.U; // tensor side
        Vec3 e = B.inverse() * Vec3::UnitX();
        Vec3 p = B.inverse() * (A * dhat);
        return {e, p};
    }
};

inline DipoleCase make_dipole_case(int n, int m, const MultipoleSet& m1, const MultipoleSet& m2) {
    DipoleCase dc;
    if (n == 1 && m == 2) {
        dc = {1, +1.0, m1.dipole.norm(), 2, m2.quadrupole, {}, m1.dipole.normalized()};
    } else if (n == 2 && m == 1) {
        dc = {2, -1.0, m2.dipole.norm(), 2, m1.quadrupole, {}, m2.dipole.normalized()};
    } else if (n == 1 && m == 3) {
        dc = {1, +1.0, m1.dipole.norm(), 3, {}, m2.octopole, m1.dipole.normalized()};
    } else if (n == 3 && m == 1) {
        dc = {2, +1.0, m2.dipole.norm(), 3, {}, m1.octopole, m2.dipole.normalized()};
    } else {
        throw unsupported_order_error("not a dipole-involving case");
    }
    if (dc.dipnorm < 1e-14)
        throw invalid_input_error("dipole moment vanishes; case reduction undefined");
    if (dc.tensor_rank == 2 && dc.Q.norm() < 1e-14)
        throw invalid_input_error("quadrupole moment vanishes; case reduction undefined");
    if (dc.tensor_rank == 3 && dc.O.frobenius_norm() < 1e-14)
        throw invalid_input_error("octopole moment vanishes; case reduction undefined");
    return dc;
}

// ---------------------------------------------------------------------
// Lifting (e,p) paths back to SO(3)^2 with exact endpoints
// ---------------------------------------------------------------------

// Appends rotations of theta about a body axis (right multiplication).
inline void append_body_circle(std::vector<Rotation>& out, const Rotation& from, const Vec3& axis,
                               double theta) {
    int steps = std::max(1, int(std::ceil(std::abs(theta) / kPathStep)));
    for (int k = 1; k <= steps; ++k)
        out.push_back(from * Rotation::axis_angle(axis, theta * double(k) / steps));
}

// Appends rotations of theta about a lab axis (left multiplication).
inline void append_lab_circle(std::vector<Rotation>& out, const Rotation& from, const Vec3& axis,
                              double theta) {
    int steps = std::max(1, int(std::ceil(std::abs(theta) / kPathStep)));
    for (int k = 1; k <= steps; ++k)
        out.push_back(Rotation::axis_angle(axis, theta * double(k) / steps) * from);
}

/// Angle phi of a rotation S known to fix the unit axis; S = Rot(axis, phi).
inline double angle_about_axis(const Rotation& S, const Vec3& axis) {
    Vec3 l = S.log();
    double phi = l.dot(axis);
    if ((l - phi * axis).norm() > 1e-6 + 1e-6 * std::abs(phi))
        throw invariant_violation_error("rotation does not fix the expected axis");
    return phi;
}

/// Lifts an (e,p) path to (U,V) with the exact given endpoints. The fiber gap
/// at the end is closed by two constant-value circle legs.
inline std::vector<OrientationPair> lift_dipole_path(const DipoleCase& dc,
                                                     const std::vector<std::pair<Vec3, Vec3>>& ep,
                                                     const OrientationPair& start,
                                                     const OrientationPair& target) {
    Rotation A = (dc.dip_mol == 1) ? start.U : start.V;
    Rotation B = (dc.dip_mol == 1) ? start.V : start.U;

    std::vector<Rotation> As = {A}, Bs = {B};
    for (std::size_t k = 1; k < ep.size(); ++k) {
        Vec3 e_prev = B.inverse() * Vec3::UnitX();
        Rotation Bn = B * Rotation::between(e_prev, ep[k].first).inverse();
        Vec3 q_prev = A * dc.dhat;
        Vec3 q_next = Bn * ep[k].second;
        Rotation An = Rotation::between(q_prev, q_next) * A;
        A = An;
        B = Bn;
        As.push_back(A);
        Bs.push_back(B);
    }

    const Rotation A_t = (dc.dip_mol == 1) ? target.U : target.V;
    const Rotation B_t = (dc.dip_mol == 1) ? target.V : target.U;

    // close the tensor-side fiber: B -> B_t about the body axis e*, carrying
    // A along so that (e,p) stays fixed
    Vec3 e_star = B_t.inverse() * Vec3::UnitX();
    double phi = angle_about_axis(B.inverse() * B_t, e_star);
    {
        std::vector<Rotation> legB;
        append_body_circle(legB, B, e_star, phi);
        Rotation rel = B.inverse() * A;
        for (const auto& b : legB) {
            Bs.push_back(b);
            As.push_back(b * rel);
        }
        if (!legB.empty()) {
            B = Bs.back();
            A = As.back();
        }
    }
    // close the dipole-side fiber: A -> A_t about the lab axis q*
    Vec3 q_star = A_t * dc.dhat;
    double psi = angle_about_axis(A_t * A.inverse(), q_star);
    {
        std::vector<Rotation> legA;
        append_lab_circle(legA, A, q_star, psi);
        for (const auto& a : legA) {
            As.push_back(a);
            Bs.push_back(B);
        }
    }
    As.back() = A_t; // snap the exact endpoint
    Bs.back() = B_t;

    std::vector<OrientationPair> out;
    out.reserve(As.size());
    for (std::size_t i = 0; i < As.size(); ++i)
        out.push_back(dc.dip_mol == 1 ? OrientationPair{As[i], Bs[i]}
                                      : OrientationPair{Bs[i], As[i]});
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Per-case thresholds
// ---------------------------------------------------------------------------

/// Case data reused across many connect calls for the same molecule pair.
struct ConnectContext {
    int n = 0, m = 0;
    MultipoleSet m1, m2;
    double delta0 = 0.0; // connectivity threshold for this case
    double c0 = 0.0;     // (2,2) only
    double delta_prime = 0.0; // (2,2) only
};

namespace detail {

/// Estimate of c0 = -sup over orientations of the fiber minimum g(Q1), in
/// the 1/3-normalized units. Deterministic seeded sampling plus hill
/// climbing; slightly shrunk to stay on the safe side.
inline double estimate_c0(const Mat3& Q1ref, const Mat3& Q2ref) {
    Vec3 braw, b;
    Mat3 frame;
    sym3_eigen(Q2ref, braw, frame);
    b = Vec3(braw[2], braw[1], braw[0]); // descending

    auto g_of = [&](const Rotation& U) {
        Mat3 Q1 = U.matrix().transpose() * Q1ref * U.matrix();
        Vec3 a;
        Mat3 fr;
        sym3_eigen(detail::l_map(Q1), a, fr);
        return (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / 3.0;
    };

    RngStream rng(0xC0FFEEu);
    double best = -std::numeric_limits<double>::infinity();
    Rotation bestU;
    for (int i = 0; i < 4096; ++i) {
        Rotation U = haar_sample(rng);
        double g = g_of(U);
        if (g > best) {
            best = g;
            bestU = U;
        }
    }
    double radius = 0.3;
    while (radius > 1e-6) {
        bool improved = false;
        for (int k = 0; k < 24; ++k) {
            Rotation U = bestU * Rotation::exp(radius * sphere_sample(rng));
            double g = g_of(U);
            if (g > best) {
                best = g;
                bestU = U;
                improved = true;
            }
        }
        if (!improved)
            radius *= 0.5;
    }
    double c0 = -best;
    if (!(c0 > 0.0))
        throw invariant_violation_error("fiber minimum failed to stay negative over orientations");
    return 0.98 * c0;
}

/// Safe-leg margin delta' at the bridging orientation: the four fiber
/// minimizers link through half-turns about the extreme eigen-axes; along
/// those legs F interpolates to the exchanged critical value.
inline double estimate_delta_prime(const Mat3& Q1ref, const Mat3& Q2ref) {
    Vec3 braw;
    Mat3 fr;
    sym3_eigen(Q2ref, braw, fr);
    bool two_nonneg = braw[1] >= 0.0; // middle eigenvalue sign decides the type
    Rotation orient = orient_M_sign(Q1ref, two_nonneg ? MSignPattern::two_positive
                                                      : MSignPattern::two_negative);
    QQStructure s = qq_structure(Q1ref, Q2ref, orient);
    const auto& a = s.eigen_a;
    const auto& b = s.eigen_b;
    // exchange about ascending axis 0 swaps pairings on axes 1,2; about
    // axis 2 swaps them on axes 0,1
    double swap0 = (a[0] * b[0] + a[1] * b[2] + a[2] * b[1]) / 3.0;
    double swap2 = (a[0] * b[1] + a[1] * b[0] + a[2] * b[2]) / 3.0;
    double worst = std::max(swap0, swap2);
    if (!(worst < 0.0))
        throw invariant_violation_error("exchange legs at the bridging orientation are not negative");
    return -worst;
}

inline double min_xraw_on_grid(const DipoleCase& dc) {
    static const SphereGrid grid = SphereGrid::icosphere(4);
    double mn = std::numeric_limits<double>::infinity();
    for (const auto& v : grid.vertices)
        mn = std::min(mn, dc.x_raw(v).norm());
    return mn;
}

} // namespace detail

/// Per-case connectivity threshold delta0 and reusable case data.
inline ConnectContext make_connect_context(int n, int m, const MultipoleSet& m1,
                                           const MultipoleSet& m2) {
    if (n + m == 5)
        throw unsupported_case_error(
            "n+m = 5 interactions are not supported by the sublevel machinery");
    if (n < 1 || m < 1 || n + m < 2 || n + m > 4)
        throw unsupported_order_error("sublevel machinery requires 2 <= n+m <= 4");

    ConnectContext ctx;
    ctx.n = n;
    ctx.m = m;
    ctx.m1 = m1;
    ctx.m2 = m2;

    if (n == 1 && m == 1) {
        double s = m1.dipole.norm() * m2.dipole.norm();
        if (s < 1e-14)
            throw invalid_input_error("dipole-dipole case requires nonzero dipoles");
        ctx.delta0 = 0.5 * s;
        return ctx;
    }
    if (n == 2 && m == 2) {
        ctx.c0 = detail::estimate_c0(m1.quadrupole, m2.quadrupole);
        ctx.delta_prime = detail::estimate_delta_prime(m1.quadrupole, m2.quadrupole);
        ctx.delta0 = std::min(ctx.delta_prime, ctx.c0 / 2.0);
        return ctx;
    }

    detail::DipoleCase dc = detail::make_dipole_case(n, m, m1, m2);
    if (dc.tensor_rank == 2) {
        Vec3 ev;
        Mat3 fr;
        sym3_eigen(dc.Q, ev, fr);
        double absmin = std::min({std::abs(ev[0]), std::abs(ev[1]), std::abs(ev[2])});
        double opnorm = std::max({std::abs(ev[0]), std::abs(ev[1]), std::abs(ev[2])});
        if (absmin < 1e-10 * opnorm) {
            ctx.delta0 = dc.dipnorm * opnorm; // kernel case
        } else {
            ctx.delta0 = dc.dipnorm * 0.98 * detail::min_xraw_on_grid(dc);
        }
    } else {
        static const SphereGrid grid = SphereGrid::icosphere(4);
        std::vector<double> g(grid.vertices.size());
        for (std::size_t i = 0; i < grid.vertices.size(); ++i)
            g[i] = dc.x_raw(grid.vertices[i]).norm();
        ctx.delta0 = dc.dipnorm * connectivity_threshold(grid, g);
    }
    if (!(ctx.delta0 > 0.0))
        throw invariant_violation_error("computed connectivity threshold is not positive");
    return ctx;
}

inline double connect_delta0(int n, int m, const MultipoleSet& m1, const MultipoleSet& m2) {
    return make_connect_context(n, m, m1, m2).delta0;
}

// ---------------------------------------------------------------------------
// The constructions
// ---------------------------------------------------------------------------

namespace detail {

inline SublevelPath finish_path(const ConnectContext& ctx, std::vector<OrientationPair> nodes,
                                double delta) {
    SublevelPath path;
    path.delta = delta;
    for (const auto& nd : nodes) {
        if (!path.nodes.empty()) {
            double d = pair_distance(path.nodes.back(), nd);
            if (d < 1e-13)
                continue;
            if (d > 0.08) {
                // the lift can stretch spacing; subdivide on both factors
                const OrientationPair& prev = path.nodes.back();
                int sub = int(std::ceil(d / 0.08));
                for (int s = 1; s < sub; ++s) {
                    double t = double(s) / sub;
                    path.nodes.push_back({prev.U.slerp(nd.U, t), prev.V.slerp(nd.V, t)});
                }
            }
        }
        path.nodes.push_back(nd);
    }
    UVFn f = [&](const Rotation& U, const Rotation& V) {
        return f_nm(ctx.m1, ctx.m2, U, V, ctx.n, ctx.m);
    };
    for (const auto& nd : path.nodes)
        path.f_values.push_back(f(nd.U, nd.V));
    path.validate(f);
    return path;
}

// (1,1): both molecules are dipoles; reduction to the two lab directions.
inline std::vector<OrientationPair> connect_dd(const ConnectContext& ctx,
                                               const OrientationPair& start,
                                               const OrientationPair& end) {
    Vec3 d1 = ctx.m1.dipole.normalized();
    Vec3 d2 = ctx.m2.dipole.normalized();
    auto reduce = [&](const OrientationPair& uv) {
        return std::pair<Vec3, Vec3>(uv.U * d1, uv.V * d2);
    };
    auto r_of = [&](const Vec3& p1) {
        Vec3 x = p1 - 3.0 * p1.x() * Vec3::UnitX();
        return Vec3(-x / x.norm());
    };

    auto [p1s, p2s] = reduce(start);
    auto [p1e, p2e] = reduce(end);

    // forward: drop p2 to the fiber minimizer, transport along p1, then the
    // reversed construction from the end point
    std::vector<std::pair<Vec3, Vec3>> ep;
    for (const auto& p2 : s2_arc(p2s, r_of(p1s)))
        ep.emplace_back(p1s, p2);
    for (const auto& p1 : s2_arc(p1s, p1e))
        ep.emplace_back(p1, r_of(p1));
    for (const auto& p2 : s2_arc(r_of(p1e), p2e))
        ep.emplace_back(p1e, p2);

    // lift: p1 drives U, p2 drives V, fibers are circles about the dipoles
    Rotation U = start.U, V = start.V;
    std::vector<OrientationPair> out = {start};
    for (std::size_t k = 1; k < ep.size(); ++k) {
        U = Rotation::between(U * d1, ep[k].first) * U;
        V = Rotation::between(V * d2, ep[k].second) * V;
        out.push_back({U, V});
    }
    // fiber closure about the final lab axes
    Vec3 q1 = end.U * d1, q2 = end.V * d2;
    double a1 = angle_about_axis(end.U * U.inverse(), q1);
    double a2 = angle_about_axis(end.V * V.inverse(), q2);
    std::vector<Rotation> legU, legV;
    append_lab_circle(legU, U, q1, a1);
    for (const auto& u : legU)
        out.push_back({u, V});
    if (!legU.empty())
        U = out.back().U;
    append_lab_circle(legV, V, q2, a2);
    for (const auto& v : legV)
        out.push_back({U, v});
    out.back() = end;
    return out;
}

// dipole-quadrupole and dipole-octopole via the (e,p) reduction; the e-leg
// follows a widest path of ||x_raw|| on the sphere grid.
inline std::vector<OrientationPair> connect_dipole_tensor(const ConnectContext& ctx,
                                                          const OrientationPair& start,
                                                          const OrientationPair& end) {
    DipoleCase dc = make_dipole_case(ctx.n, ctx.m, ctx.m1, ctx.m2);
    auto [es, ps] = dc.reduce(start);
    auto [ee, pe] = dc.reduce(end);

    static const SphereGrid grid = SphereGrid::icosphere(4);
    std::vector<double> g(grid.vertices.size());
    for (std::size_t i = 0; i < grid.vertices.size(); ++i)
        g[i] = dc.x_raw(grid.vertices[i]).norm();

    std::vector<Vec3> e_leg;
    double de = std::acos(std::clamp(es.dot(ee), -1.0, 1.0));
    if (de < 0.15) {
        e_leg = s2_arc(es, ee);
    } else {
        int vs = grid.nearest(es), ve = grid.nearest(ee);
        std::vector<int> vp = widest_path(grid, g, vs, ve);
        if (vp.empty())
            throw invariant_violation_error("sphere graph search failed");
        e_leg = s2_arc(es, grid.vertices[vp.front()]);
        for (std::size_t i = 1; i < vp.size(); ++i) {
            auto seg = s2_arc(grid.vertices[vp[i - 1]], grid.vertices[vp[i]]);
            e_leg.insert(e_leg.end(), seg.begin() + 1, seg.end());
        }
        auto tail = s2_arc(grid.vertices[vp.back()], ee);
        e_leg.insert(e_leg.end(), tail.begin() + 1, tail.end());
    }

    // subdivide until both e and the carried minimizer direction move slowly
    std::vector<Vec3> e_fine;
    e_fine.push_back(e_leg.front());
    for (std::size_t i = 1; i < e_leg.size(); ++i) {
        std::function<void(const Vec3&, const Vec3&, int)> refine = [&](const Vec3& a,
                                                                        const Vec3& b, int depth) {
            double da = std::acos(std::clamp(a.dot(b), -1.0, 1.0));
            double dr = std::acos(std::clamp(dc.r_of(a).dot(dc.r_of(b)), -1.0, 1.0));
            if ((da <= kPathStep && dr <= 0.06) || depth >= 16) {
                e_fine.push_back(b);
                return;
            }
            Vec3 mid = (a + b).normalized();
            refine(a, mid, depth + 1);
            refine(mid, b, depth + 1);
        };
        refine(e_leg[i - 1], e_leg[i], 0);
    }

    std::vector<std::pair<Vec3, Vec3>> ep;
    for (const auto& p : s2_arc(ps, dc.r_of(es)))
        ep.emplace_back(es, p);
    for (const auto& e : e_fine)
        ep.emplace_back(e, dc.r_of(e));
    for (const auto& p : s2_arc(dc.r_of(ee), pe))
        ep.emplace_back(ee, p);

    return lift_dipole_path(dc, ep, start, end);
}

// ---------------------------------------------------------------------
// quadrupole-quadrupole
// ---------------------------------------------------------------------

struct QQWork {
    const ConnectContext& ctx;
    Mat3 Q1ref, Q2ref;
    Vec3 b_desc;

    explicit QQWork(const ConnectContext& c) : ctx(c), Q1ref(c.m1.quadrupole), Q2ref(c.m2.quadrupole) {
        Vec3 braw;
        Mat3 fr;
        sym3_eigen(Q2ref, braw, fr);
        b_desc = Vec3(braw[2], braw[1], braw[0]);
    }

    double F(const Rotation& U, const Rotation& V) const {
        return f_nm(ctx.m1, ctx.m2, U, V, 2, 2);
    }

    Mat3 lab_L(const Rotation& U) const {
        Mat3 Q1 = U.matrix() * Q1ref * U.matrix().transpose();
        return l_map(Q1);
    }

    double fiber_min_value(const Rotation& U) const {
        Vec3 a;
        Mat3 fr;
        sym3_eigen(lab_L(U), a, fr);
        return (a[0] * b_desc[0] + a[1] * b_desc[1] + a[2] * b_desc[2]) / 3.0;
    }

    /// V-only descent keeping U fixed; appends the accepted iterates.
    Rotation fiber_descend(const Rotation& U, Rotation V, std::vector<OrientationPair>& out) const {
        double fcur = F(U, V);
        double step = 0.2;
        Vec3 last_move = Vec3::Zero(), last_grad = Vec3::Zero();
        bool have_last = false;
        for (int it = 0; it < 2000; ++it) {
            GradUV g = f_nm_grad(ctx.m1, ctx.m2, U, V, 2, 2);
            double gn = g.gv.norm();
            if (gn <= 1e-10 * (1.0 + std::abs(fcur)))
                break;
            if (have_last) {
                Vec3 y = g.gv - last_grad;
                double sy = last_move.dot(y);
                if (sy > 1e-16)
                    step = std::clamp(last_move.squaredNorm() / sy * gn, 1e-8, 0.8);
            }
            last_grad = g.gv;
            have_last = true;
            Vec3 dir = -g.gv / gn;
            double t = step;
            bool ok = false;
            for (int bt = 0; bt < 40; ++bt) {
                Rotation cand = V * Rotation::exp(t * dir);
                double fc = F(U, cand);
                if (fc <= fcur - 1e-4 * t * gn) {
                    // subdivide the accepted move so spacing stays small
                    int sub = std::max(1, int(std::ceil(t / kPathStep)));
                    for (int s = 1; s <= sub; ++s)
                        out.push_back({U, V * Rotation::exp(t * double(s) / sub * dir)});
                    V = cand;
                    fcur = fc;
                    last_move = t * dir;
                    ok = true;
                    break;
                }
                t *= 0.5;
            }
            if (!ok)
                break;
        }
        return V;
    }

    /// Exchange quarter-turns walking the fiber pairing down to the minimum.
    Rotation exchange_to_minimum(const Rotation& U, Rotation V,
                                 std::vector<OrientationPair>& out) const {
        for (int guard = 0; guard < 8; ++guard) {
            Vec3 a;
            Mat3 frame;
            sym3_eigen(lab_L(U), a, frame);
            Mat3 Q2 = V.matrix() * Q2ref * V.matrix().transpose();
            Vec3 d(frame.col(0).dot(Q2 * frame.col(0)), frame.col(1).dot(Q2 * frame.col(1)),
                   frame.col(2).dot(Q2 * frame.col(2)));
            int bi = -1, bj = -1;
            double scale = 1.0 + a.cwiseAbs().maxCoeff() * d.cwiseAbs().maxCoeff();
            double bestdrop = -1e-10 * scale;
            for (int i = 0; i < 3; ++i)
                for (int j = i + 1; j < 3; ++j) {
                    double change = (a[i] - a[j]) * (d[j] - d[i]) / 3.0;
                    if (change < bestdrop) {
                        bestdrop = change;
                        bi = i;
                        bj = j;
                    }
                }
            if (bi < 0)
                break;
            int k = 3 - bi - bj;
            Vec3 axis = frame.col(k);
            int steps = std::max(1, int(std::ceil((M_PI / 2) / kPathStep)));
            for (int s = 1; s <= steps; ++s)
                out.push_back({U, Rotation::axis_angle(axis, (M_PI / 2) * s / steps) * V});
            V = out.back().V;
        }
        return V;
    }

    /// Constant-L leg moving U along a geodesic toward target, re-minimizing
    /// the fiber whenever F drifts up toward -0.7 c0.
    Rotation bridge_U(Rotation U, Rotation& V, const Rotation& target,
                      std::vector<OrientationPair>& out) const {
        double h = 0.02;
        bool progressed = true;
        for (int guard = 0; guard < 5000; ++guard) {
            double ang = U.distance(target);
            if (ang < 1e-12)
                break;
            int steps = std::max(1, int(std::ceil(ang / h)));
            bool interrupted = false;
            progressed = false;
            for (int s = 1; s <= steps; ++s) {
                Rotation Un = U.slerp(target, double(s) / steps);
                if (F(Un, V) >= -0.7 * ctx.c0) {
                    interrupted = true;
                    break;
                }
                out.push_back({Un, V});
                U = Un;
                progressed = true;
            }
            if (!interrupted)
                return target;
            V = fiber_descend(U, V, out);
            V = exchange_to_minimum(U, V, out);
            if (F(U, V) >= -0.9 * ctx.c0)
                throw invariant_violation_error("fiber re-minimization failed to restore depth");
            // stuck right after a re-minimization: resolve with finer steps
            h = progressed ? 0.02 : std::max(h * 0.5, 1e-4);
        }
        if (U.distance(target) > 1e-9)
            throw invariant_violation_error("bridge leg failed to reach the target orientation");
        return target;
    }
};

inline std::vector<OrientationPair> connect_qq(const ConnectContext& ctx,
                                               const OrientationPair& start,
                                               const OrientationPair& end) {
    QQWork w(ctx);

    bool two_nonneg = w.b_desc[1] >= 0.0;
    // bridging orientation: lab Q1 gets e1 as its bottom (two-positive M) or
    // top (two-negative M) eigenvector
    Vec3 ev;
    Mat3 evec;
    sym3_eigen(w.Q1ref, ev, evec);
    Vec3 src = two_nonneg ? Vec3(evec.col(0)) : Vec3(evec.col(2));
    Rotation U_bridge = Rotation::between(src, Vec3::UnitX());

    auto half = [&](const OrientationPair& from) {
        std::vector<OrientationPair> leg = {from};
        Rotation U = from.U, V = from.V;
        V = w.fiber_descend(U, V, leg);
        V = w.exchange_to_minimum(U, V, leg);
        U = w.bridge_U(U, V, U_bridge, leg);
        V = w.fiber_descend(U, V, leg);
        V = w.exchange_to_minimum(U, V, leg);
        return leg;
    };

    std::vector<OrientationPair> fwd = half(start);
    std::vector<OrientationPair> bwd = half(end);

    // close the V gap inside the fiber over the bridging orientation: both
    // sides sit on minimizers, which differ by a stabilizer element. Try the
    // direct slerp first (exact for degenerate fibers and for half-turns
    // about safe axes); fall back to the safe-axis Klein decomposition.
    Rotation VA = fwd.back().V, VB = bwd.back().V;
    Vec3 a;
    Mat3 frame;
    sym3_eigen(w.lab_L(U_bridge), a, frame);

    std::vector<OrientationPair> klein;

    // When L has a degenerate eigen-pair, the fiber minimizers form a circle
    // orbit under lab rotations about the remaining axis, and F is exactly
    // invariant along it. Align side A onto side B's minimizer matrix first.
    {
        double scale = 1.0 + a.cwiseAbs().maxCoeff();
        int lone = -1;
        if (std::abs(a[0] - a[1]) < 1e-7 * scale)
            lone = 2;
        else if (std::abs(a[1] - a[2]) < 1e-7 * scale)
            lone = 0;
        if (lone >= 0) {
            Vec3 axis = frame.col(lone);
            Mat3 Q2A = VA.matrix() * w.Q2ref * VA.matrix().transpose();
            Mat3 Q2B = VB.matrix() * w.Q2ref * VB.matrix().transpose();
            auto mismatch = [&](double phi) {
                Mat3 R = Rotation::axis_angle(axis, phi).matrix();
                return (R * Q2A * R.transpose() - Q2B).norm();
            };
            double best_phi = 0.0, best = mismatch(0.0);
            for (int k = 1; k < 720; ++k) {
                double phi = 2.0 * M_PI * k / 720;
                double v = mismatch(phi);
                if (v < best) {
                    best = v;
                    best_phi = phi;
                }
            }
            for (double h = 2.0 * M_PI / 720; h > 1e-12; h *= 0.5) {
                for (double cand : {best_phi - h, best_phi + h}) {
                    double v = mismatch(cand);
                    if (v < best) {
                        best = v;
                        best_phi = cand;
                    }
                }
            }
            if (best < 1e-6 * (1.0 + w.Q2ref.norm()) && std::abs(best_phi) > 1e-12) {
                int steps = std::max(1, int(std::ceil(std::abs(best_phi) / kPathStep)));
                for (int s = 1; s <= steps; ++s)
                    klein.push_back(
                        {U_bridge, Rotation::axis_angle(axis, best_phi * s / steps) * VA});
                VA = klein.back().V;
            }
        }
    }

    Rotation V = VA;
    double sang = VA.distance(VB);
    if (sang > 1e-12) {
        std::vector<OrientationPair> trial;
        int steps = std::max(1, int(std::ceil(sang / kPathStep)));
        for (int s = 1; s <= steps; ++s)
            trial.push_back({U_bridge, VA.slerp(VB, double(s) / steps)});
        double worst = -std::numeric_limits<double>::infinity();
        for (const auto& nd : trial)
            worst = std::max(worst, w.F(nd.U, nd.V));
        if (worst <= -ctx.delta0) {
            klein = std::move(trial);
            V = VB;
        } else {
            // must be a half-turn about the unsafe middle axis; compose the
            // two safe half-turns (ascending eigen-axes 0 and 2) instead
            auto half_turn = [&](int axis_idx) {
                Vec3 ax = frame.col(axis_idx);
                int hsteps = std::max(1, int(std::ceil(M_PI / kPathStep)));
                for (int s = 1; s <= hsteps; ++s)
                    klein.push_back({U_bridge, Rotation::axis_angle(ax, M_PI * s / hsteps) * V});
                V = klein.back().V;
            };
            half_turn(0);
            half_turn(2);
            double gap = V.distance(VB);
            if (gap > 0.05)
                throw invariant_violation_error(
                    "fiber gap is not a stabilizer half-turn; cannot close the path");
            int gsteps = std::max(1, int(std::ceil(gap / kPathStep)));
            for (int s = 1; s <= gsteps; ++s)
                klein.push_back({U_bridge, V.slerp(VB, double(s) / gsteps)});
        }
    }

    std::vector<OrientationPair> out = fwd;
    out.insert(out.end(), klein.begin(), klein.end());
    out.insert(out.end(), bwd.rbegin(), bwd.rend());
    return out;
}

} // namespace detail

/// Connects two configurations inside {F^(n,m) < -delta} by a continuous
/// path staying in the sublevel set. Requires delta below the per-case
/// threshold delta0 computed in the context.
inline SublevelPath connect_negative_sublevel(const ConnectContext& ctx,
                                              const OrientationPair& start,
                                              const OrientationPair& end, double delta) {
    if (!(delta > 0.0) || delta >= ctx.delta0)
        throw unsupported_delta_error("delta must lie in (0, delta0); delta0 = " +
                                      std::to_string(ctx.delta0));
    UVFn f = [&](const Rotation& U, const Rotation& V) {
        return f_nm(ctx.m1, ctx.m2, U, V, ctx.n, ctx.m);
    };
    if (!(f(start.U, start.V) < -delta) || !(f(end.U, end.V) < -delta))
        throw precondition_error("endpoints must satisfy F < -delta");

    if (pair_distance(start, end) < 1e-12) {
        SublevelPath p;
        p.delta = delta;
        p.nodes = {start};
        p.f_values = {f(start.U, start.V)};
        return p;
    }

    std::vector<OrientationPair> nodes;
    if (ctx.n == 1 && ctx.m == 1)
        nodes = detail::connect_dd(ctx, start, end);
    else if (ctx.n == 2 && ctx.m == 2)
        nodes = detail::connect_qq(ctx, start, end);
    else
        nodes = detail::connect_dipole_tensor(ctx, start, end);

    return detail::finish_path(ctx, std::move(nodes), delta);
}

inline SublevelPath connect_negative_sublevel(int n, int m, const MultipoleSet& m1,
                                              const MultipoleSet& m2, const OrientationPair& start,
                                              const OrientationPair& end, double delta) {
    return connect_negative_sublevel(make_connect_context(n, m, m1, m2), start, end, delta);
}

// ---------------------------------------------------------------------------
// Monte-Carlo verification of the near-critical negativity property
// ---------------------------------------------------------------------------

/// Default deltas for which the near-critical negativity check is expected
/// to hold, per interaction case.
inline double localmin_default_delta(int n, int m, const MultipoleSet& m1, const MultipoleSet& m2) {
    if (n == 1 && m == 1)
        return m1.dipole.norm() * m2.dipole.norm() / 3.0;
    if (n == 2 && m == 2)
        return detail::estimate_c0(m1.quadrupole, m2.quadrupole) / 8.0;
    detail::DipoleCase dc = detail::make_dipole_case(n, m, m1, m2);
    if (dc.tensor_rank == 2) {
        Vec3 ev;
        Mat3 fr;
        sym3_eigen(dc.Q, ev, fr);
        double absmin = std::min({std::abs(ev[0]), std::abs(ev[1]), std::abs(ev[2])});
        double opnorm = std::max({std::abs(ev[0]), std::abs(ev[1]), std::abs(ev[2])});
        if (absmin < 1e-10 * opnorm)
            return dc.dipnorm * opnorm / 128.0; // kernel case; empirical default
        return dc.dipnorm * 0.98 * detail::min_xraw_on_grid(dc) / 3.0;
    }
    // octopole: min of ||x_raw|| away from its kernel caps
    std::vector<Vec3> kernels = octopole_kernel_vectors(dc.O, 1e-6);
    static const SphereGrid grid = SphereGrid::icosphere(4);
    double mn = std::numeric_limits<double>::infinity();
    for (const auto& v : grid.vertices) {
        bool near = false;
        for (const auto& k : kernels)
            if (std::abs(k.dot(v)) > std::cos(0.3))
                near = true;
        if (!near)
            mn = std::min(mn, dc.x_raw(v).norm());
    }
    return dc.dipnorm * mn / 3.0;
}

struct LocalMinReport {
    int n = 0, m = 0;
    double delta = 0.0;
    int samples = 0;
    std::uint64_t seed = 0;
    int near_critical_count = 0;
    double min_f_at_near_critical = std::numeric_limits<double>::infinity();

    struct Counterexample {
        OrientationPair point;
        double f = 0.0, grad_norm = 0.0, hess_min_eig = 0.0;
    };
    std::vector<Counterexample> counterexamples;
};

/// Haar-samples SO(3)^2, refines every sample by descent, and checks that
/// each near-critical point (gradient within delta, Hessian above -delta)
/// has F <= -delta. Violations are collected, not thrown. When an octopole
/// is involved it must be non-degenerate.
inline LocalMinReport verify_localmin_property(int n, int m, const MultipoleSet& m1,
                                               const MultipoleSet& m2, double delta, int samples,
                                               std::uint64_t seed) {
    if (n < 1 || m < 1 || n + m < 2 || n + m > 4)
        throw unsupported_order_error("near-critical check requires 2 <= n+m <= 4");
    if (n == 3 && !check_octopole_nondegeneracy(m1.octopole))
        throw precondition_error("octopole of molecule 1 is degenerate: O(v,.,.) = 0 for some "
                                 "v != 0, which the near-critical negativity property requires "
                                 "to be excluded");
    if (m == 3 && !check_octopole_nondegeneracy(m2.octopole))
        throw precondition_error("octopole of molecule 2 is degenerate: O(v,.,.) = 0 for some "
                                 "v != 0, which the near-critical negativity property requires "
                                 "to be excluded");
    if (!(delta > 0.0) || samples <= 0)
        throw invalid_input_error("delta and samples must be positive");

    UVFn f = [&](const Rotation& U, const Rotation& V) { return f_nm(m1, m2, U, V, n, m); };
    UVGradFn g = [&](const Rotation& U, const Rotation& V) {
        return f_nm_grad(m1, m2, U, V, n, m);
    };

    LocalMinReport rep;
    rep.n = n;
    rep.m = m;
    rep.delta = delta;
    rep.samples = samples;
    rep.seed = seed;

    const int block_size = 512;
    const std::size_t blocks = (samples + block_size - 1) / block_size;
    std::vector<LocalMinReport> partial(blocks);
    RngStream root(seed);

    parallel_for_blocks(blocks, [&](std::size_t bi) {
        RngStream rng = root.fork(bi);
        LocalMinReport& out = partial[bi];
        int count = std::min(block_size, samples - int(bi) * block_size);
        DescentOptions opts;
        opts.step = 0.3;
        opts.grad_tol = std::min(1e-7, delta * 1e-3);
        opts.hess_tol = 1e-6;
        opts.max_steps = 800;
        for (int s = 0; s < count; ++s) {
            OrientationPair p{haar_sample(rng), haar_sample(rng)};

            auto judge = [&](const OrientationPair& q, double gn, double hmin, double fv) {
                if (gn <= delta && hmin >= -delta) {
                    ++out.near_critical_count;
                    out.min_f_at_near_critical = std::min(out.min_f_at_near_critical, fv);
                    if (!(fv <= -delta))
                        out.counterexamples.push_back({q, fv, gn, hmin});
                }
            };

            // raw sample first: almost never near-critical, but cheap to test
            GradUV g0 = g(p.U, p.V);
            if (g0.norm() <= delta) {
                Eigen::Matrix<double, 6, 6> H = uv_hess_fd(f, p.U, p.V);
                Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(H);
                judge(p, g0.norm(), es.eigenvalues()(0), f(p.U, p.V));
            }

            PseudoMinReport dr = descend_to_pseudo_minimum(f, p, opts, g);
            judge(dr.point, dr.grad_norm, dr.hess_min_eig, dr.f_value);
        }
    });

    for (const auto& part : partial) {
        rep.near_critical_count += part.near_critical_count;
        rep.min_f_at_near_critical = std::min(rep.min_f_at_near_critical, part.min_f_at_near_critical);
        rep.counterexamples.insert(rep.counterexamples.end(), part.counterexamples.begin(),
                                   part.counterexamples.end());
    }
    return rep;
}

} // namespace multipass
