#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "multipass/critical.hpp"
#include "multipass/errors.hpp"
#include "multipass/interaction.hpp"
#include "multipass/so3.hpp"

namespace multipass {

/// Positive orientation-dependent coefficient of the -1/L^6 term.
struct CvdwModel {
    std::function<double(const Rotation&, const Rotation&)> fn;
    bool is_constant = false;

    static CvdwModel constant(double c0) {
        if (!(c0 > 0.0))
            throw invalid_input_error("constant vdW coefficient must be positive");
        CvdwModel m;
        m.fn = [c0](const Rotation&, const Rotation&) { return c0; };
        m.is_constant = true;
        return m;
    }

    /// Smooth positive stand-in built from rotation-invariant combinations
    /// of the two lab dipole axes: c0 + c1 (Ud1.e1)^2 + c2 (Vd2.e1)^2
    /// + c3 (Ud1.Vd2)^2 with c0 > 0 and c1,c2,c3 >= 0.
    static CvdwModel polynomial(double c0, double c1, double c2, double c3, const Vec3& d1,
                                const Vec3& d2) {
        if (!(c0 > 0.0) || c1 < 0 || c2 < 0 || c3 < 0)
            throw invalid_input_error("polynomial vdW model requires c0 > 0 and c1,c2,c3 >= 0");
        Vec3 a = d1.normalized(), b = d2.normalized();
        CvdwModel m;
        m.fn = [=](const Rotation& U, const Rotation& V) {
            double x = (U * a).x();
            double y = (V * b).x();
            double z = (U * a).dot(V * b);
            return c0 + c1 * x * x + c2 * y * y + c3 * z * z;
        };
        return m;
    }
};

/// Model energy surface over Config space:
///   E(tau) = E1 + E2 + kappa/L + sum F^(n,m)(U,V) / L^(n+m+1) - cvdw(U,V)/L^6
/// truncated at multipole order N and valid for L >= L_min.
struct ModelEnergy {
    double E1 = 0.0, E2 = 0.0;
    MultipoleSet m1, m2; // body frames
    CvdwModel cvdw = CvdwModel::constant(1.0);
    int order = 5;
    double kappa = 0.0; // <= 0, charged-dissociation tail
    double L_min = 1.0;

    double e_infinity() const { return E1 + E2; }

    /// First non-vanishing multipole order of each molecule (relative
    /// tolerance against the largest moment); nullopt = none up to 4.
    std::optional<int> first_order(const MultipoleSet& m) const {
        double scale = 0.0;
        for (int k = 1; k <= 4; ++k)
            scale = std::max(scale, m.norm_of_order(k));
        if (scale <= 0.0)
            return std::nullopt;
        for (int k = 1; k <= 4; ++k)
            if (m.norm_of_order(k) > 1e-9 * scale)
                return k;
        return std::nullopt;
    }

    void validate() const {
        if (kappa > 0.0)
            throw invalid_input_error("charged-tail coefficient kappa must be <= 0");
        if (order < 2 || order > 5)
            throw invalid_input_error("multipole order must be in {2,...,5}");
        if (!(L_min > 0.0))
            throw invalid_input_error("validity floor L_min must be positive");
    }

    double operator()(const Config& tau) const { return energy(tau); }

    /// Orders with a non-vanishing moment product; zero terms are skipped.
    std::vector<std::pair<int, int>> active_orders() const {
        std::vector<std::pair<int, int>> out;
        for (auto [n, m] : InteractionTable::supported_orders())
            if (n + m <= order && m1.norm_of_order(n) > 1e-14 && m2.norm_of_order(m) > 1e-14)
                out.emplace_back(n, m);
        return out;
    }

    double energy(const Config& tau) const {
        if (tau.L < L_min)
            throw out_of_domain_error("separation below the model validity floor");
        double e = E1 + E2 + kappa / tau.L;
        for (auto [n, m] : active_orders())
            e += f_nm(m1, m2, tau.U, tau.V, n, m) / std::pow(tau.L, n + m + 1);
        e -= cvdw.fn(tau.U, tau.V) / std::pow(tau.L, 6);
        return e;
    }

    /// Analytic gradient except for a finite-difference vdW part when the
    /// coefficient is orientation-dependent.
    Tangent gradient(const Config& tau) const {
        Tangent g;
        double L = tau.L;
        g.dL = -kappa / (L * L);
        for (auto [n, m] : active_orders()) {
            int p = n + m + 1;
            double F = f_nm(m1, m2, tau.U, tau.V, n, m);
            GradUV gf = f_nm_grad(m1, m2, tau.U, tau.V, n, m);
            double Lp = std::pow(L, p);
            g.dL += -double(p) * F / (Lp * L);
            g.omega_u += gf.gu / Lp;
            g.omega_v += gf.gv / Lp;
        }
        double L6 = std::pow(L, 6);
        g.dL += 6.0 * cvdw.fn(tau.U, tau.V) / (L6 * L);
        if (!cvdw.is_constant) {
            GradUV gc = uv_grad_fd(cvdw.fn, tau.U, tau.V);
            g.omega_u -= gc.gu / L6;
            g.omega_v -= gc.gv / L6;
        }
        return g;
    }
};

/// Ordered samples of a continuous path in Config space.
struct DiscretePath {
    std::vector<Config> nodes;
    std::vector<double> energies;

    double max_energy() const {
        double m = -std::numeric_limits<double>::infinity();
        for (double e : energies)
            m = std::max(m, e);
        return m;
    }

    std::size_t argmax_energy() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < energies.size(); ++i)
            if (energies[i] > energies[best])
                best = i;
        return best;
    }

    double max_L() const {
        double m = 0.0;
        for (const auto& c : nodes)
            m = std::max(m, c.L);
        return m;
    }

    void recompute_energies(const ModelEnergy& me) {
        energies.resize(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i)
            energies[i] = me.energy(nodes[i]);
    }
};

inline Config config_interpolate(const Config& a, const Config& b, double t) {
    Config c;
    c.L = a.L + t * (b.L - a.L);
    c.U = a.U.slerp(b.U, t);
    c.V = a.V.slerp(b.V, t);
    return c;
}

/// Geodesic (product metric) initial path with n nodes.
inline DiscretePath make_geodesic_path(const ModelEnergy& me, const Config& a, const Config& b,
                                       int n_nodes = 64) {
    if (n_nodes < 2)
        throw invalid_input_error("a path needs at least two nodes");
    DiscretePath p;
    for (int i = 0; i < n_nodes; ++i)
        p.nodes.push_back(config_interpolate(a, b, double(i) / (n_nodes - 1)));
    p.recompute_energies(me);
    return p;
}

/// Resamples the path to near-uniform arclength, keeping endpoints.
inline void remesh_uniform(DiscretePath& path) {
    std::size_t n = path.nodes.size();
    if (n < 3)
        return;
    std::vector<double> cum(n, 0.0);
    for (std::size_t i = 1; i < n; ++i)
        cum[i] = cum[i - 1] + config_distance(path.nodes[i - 1], path.nodes[i]);
    double total = cum.back();
    if (total < 1e-14)
        return;
    std::vector<Config> out;
    out.reserve(n);
    out.push_back(path.nodes.front());
    std::size_t seg = 0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        double target = total * double(i) / (n - 1);
        while (seg + 2 < n && cum[seg + 1] < target)
            ++seg;
        double w = (target - cum[seg]) / std::max(cum[seg + 1] - cum[seg], 1e-300);
        out.push_back(config_interpolate(path.nodes[seg], path.nodes[seg + 1], std::clamp(w, 0.0, 1.0)));
    }
    out.push_back(path.nodes.back());
    path.nodes = std::move(out);
}

struct MinMaxOptions {
    int iters = 500;
    double step = 0.05;
    double endpoint_grad_tol = 1e-6;
    double endpoint_hess_tol = 1e-6;
};

/// Checks that tau is a local minimum of the model over its domain
/// {L >= L_min}. The multipole family is attractive at rotational minima, so
/// genuine minima sit on the validity floor with an inward-pointing
/// L-derivative; there the constrained (rotational) conditions apply.
inline bool is_local_minimum(const ModelEnergy& me, const Config& tau, double grad_tol = 1e-6,
                             double hess_tol = 1e-6) {
    Tangent g = me.gradient(tau);
    bool on_floor = tau.L <= me.L_min + 2.5e-4; // finite-difference probing band
    if (on_floor) {
        if (g.dL < -grad_tol)
            return false; // energy still decreases into the wall
        Vec3 gu = g.omega_u, gv = g.omega_v;
        if (std::sqrt(gu.squaredNorm() + gv.squaredNorm()) > grad_tol)
            return false;
        UVFn f = [&](const Rotation& U, const Rotation& V) { return me.energy({tau.L, U, V}); };
        Eigen::Matrix<double, 6, 6> H = uv_hess_fd(f, tau.U, tau.V);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(H);
        return es.eigenvalues()(0) >= -hess_tol;
    }
    if (g.norm() > grad_tol)
        return false;
    auto H = riem_hess([&](const Config& c) { return me.energy(c); }, tau);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 7, 7>> es(H);
    return es.eigenvalues()(0) >= -hess_tol;
}

/// String-method style min-max relaxation: interior nodes take damped
/// gradient steps, the path is remeshed to uniform arclength, and a sweep is
/// accepted only if the maximal energy did not increase. Endpoints must be
/// verified local minima of the model.
inline DiscretePath minmax_optimize(const ModelEnergy& me, const DiscretePath& init,
                                    const MinMaxOptions& opts = {}) {
    me.validate();
    if (init.nodes.size() < 2)
        throw invalid_input_error("initial path needs at least two nodes");
    for (const Config& endpoint : {init.nodes.front(), init.nodes.back()})
        if (!is_local_minimum(me, endpoint, opts.endpoint_grad_tol, opts.endpoint_hess_tol))
            throw precondition_error("path endpoint is not a local minimum of the model");

    DiscretePath cur = init;
    cur.recompute_energies(me);

    // per-node move along the gradient component perpendicular to the path
    // tangent, accepted only when the node's own energy decreases; the
    // sampled maximum is therefore non-increasing across sweeps
    auto sweep_once = [&](DiscretePath& path, double step) {
        for (std::size_t i = 1; i + 1 < path.nodes.size(); ++i) {
            Tangent g = me.gradient(path.nodes[i]);
            // chart tangent through the neighbors
            Eigen::Matrix<double, 7, 1> tan;
            const Config& a = path.nodes[i - 1];
            const Config& b = path.nodes[i + 1];
            const Config& c = path.nodes[i];
            tan << b.L - a.L, (c.U.inverse() * b.U).log() - (c.U.inverse() * a.U).log(),
                (c.V.inverse() * b.V).log() - (c.V.inverse() * a.V).log();
            double tn = tan.norm();
            Eigen::Matrix<double, 7, 1> gv;
            gv << g.dL, g.omega_u, g.omega_v;
            if (tn > 1e-14)
                gv -= (gv.dot(tan) / (tn * tn)) * tan;
            double gn = gv.norm();
            if (gn < 1e-14)
                continue;
            Tangent dir;
            dir.dL = -gv[0] / gn;
            dir.omega_u = -Vec3(gv[1], gv[2], gv[3]) / gn;
            dir.omega_v = -Vec3(gv[4], gv[5], gv[6]) / gn;
            double t = step;
            for (int bt = 0; bt < 20; ++bt) {
                Config moved;
                try {
                    moved = geodesic(path.nodes[i], dir, t);
                } catch (const error&) {
                    t *= 0.5;
                    continue;
                }
                if (moved.L < me.L_min)
                    moved.L = me.L_min;
                double em = me.energy(moved);
                if (em <= path.energies[i] - 1e-4 * t * gn) {
                    path.nodes[i] = moved;
                    path.energies[i] = em;
                    break;
                }
                t *= 0.5;
            }
        }
    };

    double step = opts.step;
    double plateau_ref = cur.max_energy();
    int plateau_at = 0;
    for (int sweep = 0; sweep < opts.iters; ++sweep) {
        double before = cur.max_energy();
        sweep_once(cur, step);
        // opportunistic remesh: keep only when it does not lift the sampled max
        DiscretePath meshed = cur;
        remesh_uniform(meshed);
        meshed.recompute_energies(me);
        if (meshed.max_energy() <= cur.max_energy() + 1e-12)
            cur = std::move(meshed);
        double after = cur.max_energy();
        if (after > before + 1e-9)
            throw invariant_violation_error("min-max sweep increased the path maximum");
        if (sweep - plateau_at >= 50) {
            if (plateau_ref - after <= 1e-10 * (1.0 + std::abs(after)))
                break;
            plateau_ref = after;
            plateau_at = sweep;
        }
    }
    return cur;
}

/// Report of one surgery application.
struct SurgeryReport {
    bool applied = false;
    std::size_t t0_index = 0, t1_index = 0;
    double L_star = 0.0;
    DiscretePath replaced_segment; // the new constant-L piece
    double max_energy_before = 0.0;
    double max_energy_after = 0.0;
    std::string route; // "multipole", "vdw-dominated", or "charged-tail"
};

namespace detail {

inline void append_config_leg(std::vector<Config>& nodes, const Config& from, const Config& to,
                              double max_step = 0.08) {
    double d = config_distance(from, to);
    int steps = std::max(1, int(std::ceil(d / max_step)));
    for (int s = 1; s <= steps; ++s)
        nodes.push_back(config_interpolate(from, to, double(s) / steps));
}

} // namespace detail

/// Rewrites the path so it never exceeds separation L_star: the excursion
/// between the first and last crossings is replaced by a constant-L leg
/// whose rotations follow descent to pseudo-minima and a negative-sublevel
/// connection of the leading multipolar term. For vdW-dominated or charged
/// models any rotation geodesic works. Never increases the maximal energy.
inline std::pair<DiscretePath, SurgeryReport> surgery(const ModelEnergy& me,
                                                      const DiscretePath& path, double L_star) {
    me.validate();
    if (path.nodes.size() < 2)
        throw invalid_input_error("path too short for surgery");
    if (L_star <= std::max(path.nodes.front().L, path.nodes.back().L))
        throw precondition_error("L_star must exceed the endpoint separations");

    DiscretePath in = path;
    in.recompute_energies(me);
    SurgeryReport rep;
    rep.L_star = L_star;
    rep.max_energy_before = in.max_energy();

    // first/last crossing of L_star
    std::size_t i0 = in.nodes.size(), i1 = 0;
    for (std::size_t i = 0; i < in.nodes.size(); ++i) {
        if (in.nodes[i].L >= L_star) {
            if (i0 == in.nodes.size())
                i0 = i;
            i1 = i;
        }
    }
    if (i0 == in.nodes.size()) {
        rep.applied = false;
        rep.max_energy_after = rep.max_energy_before;
        rep.route = "no-op";
        return {in, rep};
    }

    auto crossing = [&](std::size_t lo, std::size_t hi) {
        // interpolated node with L exactly L_star between lo and hi
        double t = (L_star - in.nodes[lo].L) / (in.nodes[hi].L - in.nodes[lo].L);
        return config_interpolate(in.nodes[lo], in.nodes[hi], std::clamp(t, 0.0, 1.0));
    };
    Config cross0 = (i0 == 0) ? in.nodes[0] : crossing(i0 - 1, i0);
    Config cross1 = (i1 + 1 == in.nodes.size()) ? in.nodes.back() : crossing(i1 + 1, i1);
    cross0.L = L_star;
    cross1.L = L_star;
    rep.t0_index = i0;
    rep.t1_index = i1;

    auto n1 = me.first_order(me.m1);
    auto n2 = me.first_order(me.m2);
    bool vdw_dominated = !n1.has_value() || !n2.has_value() || (*n1 + *n2 >= 6);

    std::vector<Config> leg;
    leg.push_back(cross0);
    UVFn Efix = [&](const Rotation& U, const Rotation& V) {
        return me.energy({L_star, U, V});
    };

    if (me.kappa < 0.0 || vdw_dominated) {
        rep.route = (me.kappa < 0.0) ? "charged-tail" : "vdw-dominated";
        detail::append_config_leg(leg, cross0, cross1);
    } else if (*n1 + *n2 == 5) {
        throw unsupported_case_error(
            "leading multipole orders sum to 5; the sublevel machinery does not cover this case");
    } else {
        rep.route = "multipole";
        int n = *n1, m = *n2;

        // Step 1: descend the fixed-L energy to local pseudo-minima at both
        // crossing orientations, recording the monotone trajectories.
        DescentOptions dopt;
        dopt.keep_trajectory = true;
        dopt.grad_tol = 1e-9;
        auto rep0 = descend_to_pseudo_minimum(Efix, {cross0.U, cross0.V}, dopt);
        auto rep1 = descend_to_pseudo_minimum(Efix, {cross1.U, cross1.V}, dopt);

        // Step 2: the leading multipolar term must be negative there.
        double delta_loc = localmin_default_delta(n, m, me.m1, me.m2);
        double F0 = f_nm(me.m1, me.m2, rep0.point.U, rep0.point.V, n, m);
        double F1 = f_nm(me.m1, me.m2, rep1.point.U, rep1.point.V, n, m);
        if (!(F0 <= -delta_loc) || !(F1 <= -delta_loc))
            throw invariant_violation_error(
                "surgery step 2 failed: the leading multipolar interaction is not negative at a "
                "local pseudo-minimum, contradicting the near-critical negativity property");

        // Step 3: connect through the negative sublevel set of F^(n1,n2).
        ConnectContext ctx = make_connect_context(n, m, me.m1, me.m2);
        double delta_c = std::min(0.9 * delta_loc, 0.5 * ctx.delta0);
        SublevelPath sub = connect_negative_sublevel(ctx, rep0.point, rep1.point, delta_c);

        for (const auto& uv : rep0.trajectory)
            leg.push_back({L_star, uv.U, uv.V});
        for (const auto& uv : sub.nodes)
            leg.push_back({L_star, uv.U, uv.V});
        for (auto it = rep1.trajectory.rbegin(); it != rep1.trajectory.rend(); ++it)
            leg.push_back({L_star, it->U, it->V});
    }
    leg.push_back(cross1);

    // densify the leg so the path mesh stays fine
    std::vector<Config> dense;
    dense.push_back(leg.front());
    for (std::size_t i = 1; i < leg.size(); ++i) {
        if (config_distance(dense.back(), leg[i]) < 1e-13)
            continue;
        detail::append_config_leg(dense, dense.back(), leg[i]);
    }

    DiscretePath out;
    for (std::size_t i = 0; i < i0; ++i)
        out.nodes.push_back(in.nodes[i]);
    out.nodes.insert(out.nodes.end(), dense.begin(), dense.end());
    for (std::size_t i = i1 + 1; i < in.nodes.size(); ++i)
        out.nodes.push_back(in.nodes[i]);
    out.recompute_energies(me);

    rep.applied = true;
    rep.replaced_segment.nodes = dense;
    rep.replaced_segment.recompute_energies(me);
    rep.max_energy_after = out.max_energy();
    if (rep.max_energy_after > rep.max_energy_before + 1e-9)
        throw invariant_violation_error("surgery increased the maximal path energy");
    return {out, rep};
}

/// Saddle candidate extracted from an optimized path.
struct TransitionState {
    Config tau;
    double energy = 0.0;
    double grad_norm = 0.0;
    /// Interior pass: eigenvalues of the full 7x7 Hessian. Floor-constrained
    /// pass: the six rotational-block eigenvalues followed by d2E/dL2.
    Eigen::Matrix<double, 7, 1> hess_spectrum = Eigen::Matrix<double, 7, 1>::Zero();
    int negative_count = 0; // strictly negative, symmetry zero-modes excluded
    int zero_count = 0;     // near-zero (symmetry) modes, reported separately
    bool refined = false;
    bool boundary_active = false; // pass sits on the validity floor
};

struct TransitionOptions {
    int newton_iters = 250;
    double trust_radius = 0.2;
    double grad_tol = 1e-9;
    double zero_tol_rel = 1e-4; // |lambda| <= rel * max|lambda| counts as zero
};

/// Takes the max-energy node of the path and refines it by damped Newton on
/// the gradient; reports the Hessian spectrum with near-zero symmetry modes
/// counted separately. A pass pinned to the validity floor (inward
/// L-derivative positive) is refined and classified in the rotational block
/// only. On divergence the unrefined node is returned flagged.
inline TransitionState transition_state(const ModelEnergy& me, const DiscretePath& path,
                                        const TransitionOptions& opts = {}) {
    if (path.nodes.empty())
        throw invalid_input_error("empty path");
    DiscretePath p = path;
    p.recompute_energies(me);
    Config cur = p.nodes[p.argmax_energy()];

    TransitionState ts;
    const double band = 2.5e-4; // finite-difference probing clearance
    if (cur.L <= me.L_min + band) {
        if (me.gradient(cur).dL > 0.0) {
            ts.boundary_active = true;
            cur.L = me.L_min;
        } else {
            cur.L = me.L_min + band; // off the wall; refine as interior
        }
    }

    ConfigFn f = [&](const Config& c) { return me.energy(c); };
    const int dim = ts.boundary_active ? 6 : 7;

    auto grad_of = [&](const Config& c) {
        Tangent t = me.gradient(c);
        Eigen::VectorXd g(dim);
        if (dim == 7)
            g << t.dL, t.omega_u, t.omega_v;
        else
            g << t.omega_u, t.omega_v;
        return g;
    };
    auto hess_of = [&](const Config& c) -> Eigen::MatrixXd {
        if (dim == 7)
            return riem_hess(f, c);
        UVFn fr = [&](const Rotation& U, const Rotation& V) { return me.energy({c.L, U, V}); };
        return uv_hess_fd(fr, c.U, c.V);
    };

    // climbing refinement: reverse the gradient along the lowest Hessian
    // eigenvector and descend along the rest; accepted steps must reduce the
    // gradient norm. The saddle cannot sit below the endpoint minima.
    double efloor = std::max(p.energies.front(), p.energies.back()) - 1e-9;
    double trust = opts.trust_radius;
    for (int it = 0; it < opts.newton_iters; ++it) {
        Eigen::VectorXd g = grad_of(cur);
        double gn = g.norm();
        if (gn <= opts.grad_tol)
            break;
        Eigen::MatrixXd H = hess_of(cur);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
        Eigen::VectorXd v1 = es.eigenvectors().col(0);
        Eigen::VectorXd d = -(g - 2.0 * g.dot(v1) * v1);
        double dn = d.norm();
        if (dn < 1e-16)
            break;
        d /= dn;
        Tangent dir;
        if (dim == 7) {
            dir.dL = d[0];
            dir.omega_u = Vec3(d[1], d[2], d[3]);
            dir.omega_v = Vec3(d[4], d[5], d[6]);
        } else {
            dir.omega_u = Vec3(d[0], d[1], d[2]);
            dir.omega_v = Vec3(d[3], d[4], d[5]);
        }
        double t = trust;
        bool accepted = false;
        for (int bt = 0; bt < 30; ++bt) {
            try {
                Config next = geodesic(cur, dir, t);
                double floor = ts.boundary_active ? me.L_min : me.L_min + band;
                if (next.L < floor)
                    next.L = floor;
                if (grad_of(next).norm() < gn && me.energy(next) >= efloor) {
                    cur = next;
                    trust = std::min(t * 1.6, opts.trust_radius);
                    accepted = true;
                    break;
                }
            } catch (const error&) {
            }
            t *= 0.5;
        }
        if (!accepted)
            break;
    }
    ts.refined = grad_of(cur).norm() <= 1e-4;

    ts.tau = cur;
    ts.energy = me.energy(cur);
    ts.grad_norm = grad_of(cur).norm();

    Eigen::MatrixXd H = hess_of(cur);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    if (dim == 7) {
        ts.hess_spectrum = es.eigenvalues();
    } else {
        ts.hess_spectrum.head<6>() = es.eigenvalues();
        // report the (constrained) L curvature separately in the last slot
        double h = 1e-4;
        double e0 = me.energy(cur);
        double ep = me.energy({cur.L + h, cur.U, cur.V});
        double epp = me.energy({cur.L + 2 * h, cur.U, cur.V});
        ts.hess_spectrum[6] = (epp - 2 * ep + e0) / (h * h);
    }
    double scale = es.eigenvalues().cwiseAbs().maxCoeff();
    double ztol = opts.zero_tol_rel * std::max(scale, 1e-300);
    for (int i = 0; i < dim; ++i) {
        double lam = es.eigenvalues()(i);
        if (lam < -ztol)
            ++ts.negative_count;
        else if (lam <= ztol)
            ++ts.zero_count;
    }
    return ts;
}

} // namespace multipass
