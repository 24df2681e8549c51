#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "multipass/errors.hpp"
#include "multipass/interaction.hpp"
#include "multipass/multipole.hpp"
#include "multipass/parallel.hpp"
#include "multipass/sphere_grid.hpp"
#include "multipass/so3.hpp"

namespace multipass {

/// A point on SO(3) x SO(3).
struct OrientationPair {
    Rotation U;
    Rotation V;
};

inline double pair_distance(const OrientationPair& a, const OrientationPair& b) {
    double du = a.U.distance(b.U);
    double dv = a.V.distance(b.V);
    return std::sqrt(du * du + dv * dv);
}

using UVFn = std::function<double(const Rotation&, const Rotation&)>;
using UVGradFn = std::function<GradUV(const Rotation&, const Rotation&)>;

/// Central-difference gradient on SO(3)^2 in angular-velocity coordinates.
inline GradUV uv_grad_fd(const UVFn& f, const Rotation& U, const Rotation& V, double h = 1e-4) {
    GradUV g;
    for (int a = 0; a < 3; ++a) {
        Vec3 w = Vec3::Unit(a) * h;
        g.gu[a] = (f(U * Rotation::exp(w), V) - f(U * Rotation::exp(-w), V)) / (2 * h);
        g.gv[a] = (f(U, V * Rotation::exp(w)) - f(U, V * Rotation::exp(-w))) / (2 * h);
    }
    return g;
}

/// Central-difference 6x6 Hessian on SO(3)^2 in the exponential chart.
inline Eigen::Matrix<double, 6, 6> uv_hess_fd(const UVFn& f, const Rotation& U, const Rotation& V,
                                              double h = 1e-4) {
    auto at = [&](const Eigen::Matrix<double, 6, 1>& x) {
        return f(U * Rotation::exp(Vec3(x[0], x[1], x[2])), V * Rotation::exp(Vec3(x[3], x[4], x[5])));
    };
    Eigen::Matrix<double, 6, 6> H;
    Eigen::Matrix<double, 6, 1> x = Eigen::Matrix<double, 6, 1>::Zero();
    double f0 = at(x);
    for (int i = 0; i < 6; ++i) {
        x[i] = h;
        double fp = at(x);
        x[i] = -h;
        double fm = at(x);
        x[i] = 0;
        H(i, i) = (fp - 2 * f0 + fm) / (h * h);
    }
    for (int i = 0; i < 6; ++i)
        for (int j = i + 1; j < 6; ++j) {
            x[i] = h, x[j] = h;
            double fpp = at(x);
            x[j] = -h;
            double fpm = at(x);
            x[i] = -h, x[j] = h;
            double fmp = at(x);
            x[j] = -h;
            double fmm = at(x);
            x[i] = x[j] = 0;
            H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4 * h * h);
        }
    return H;
}

/// Result of a geodesic descent run on SO(3)^2.
struct PseudoMinReport {
    OrientationPair point;
    double grad_norm = 0.0;
    double hess_min_eig = 0.0;
    double f_value = 0.0;
    int steps = 0;
    bool converged = false;
    /// Accepted iterates, start included; f is non-increasing along it.
    std::vector<OrientationPair> trajectory;
};

struct DescentOptions {
    double step = 0.1;
    double grad_tol = 1e-7;
    double hess_tol = 1e-6;
    int max_steps = 2000;
    bool keep_trajectory = false;
    double fd_step = 1e-4;
};

/// Geodesic gradient descent with backtracking on SO(3)^2, with saddle
/// escape along the most negative Hessian direction. Terminates at a point
/// with small gradient and Hessian bounded below by -hess_tol, i.e. a
/// numerical local pseudo-minimum. f never increases between accepted
/// iterates.
inline PseudoMinReport descend_to_pseudo_minimum(const UVFn& f, const OrientationPair& start,
                                                 const DescentOptions& opts = {},
                                                 const UVGradFn& grad = nullptr) {
    if (!(opts.step > 0.0) || !(opts.grad_tol > 0.0) || opts.max_steps < 0)
        throw invalid_input_error("descent parameters must be positive");

    auto gradient = [&](const OrientationPair& p) {
        return grad ? grad(p.U, p.V) : uv_grad_fd(f, p.U, p.V, opts.fd_step);
    };

    PseudoMinReport rep;
    OrientationPair cur = start;
    double fcur = f(cur.U, cur.V);
    if (!std::isfinite(fcur))
        throw evaluation_error("non-finite f at descent start");
    double step = opts.step;
    if (opts.keep_trajectory)
        rep.trajectory.push_back(cur);

    // Barzilai-Borwein state (chart coordinates; curvature from gradient
    // differences, safeguarded by Armijo backtracking)
    Eigen::Matrix<double, 6, 1> last_move = Eigen::Matrix<double, 6, 1>::Zero();
    Eigen::Matrix<double, 6, 1> last_grad = Eigen::Matrix<double, 6, 1>::Zero();
    bool have_last = false;

    // requirement(t) = minimal decrease accepted at trial step t
    auto try_direction = [&](const Vec3& du, const Vec3& dv,
                             const std::function<double(double)>& requirement) -> bool {
        double t = step;
        for (int bt = 0; bt < 40; ++bt) {
            OrientationPair cand{cur.U * Rotation::exp(t * du), cur.V * Rotation::exp(t * dv)};
            double fc = f(cand.U, cand.V);
            if (fc <= fcur - requirement(t)) {
                cur = cand;
                fcur = fc;
                step = std::min(t * 1.5, 0.8);
                last_move << t * du, t * dv;
                if (opts.keep_trajectory)
                    rep.trajectory.push_back(cur);
                return true;
            }
            t *= 0.5;
        }
        return false;
    };

    // rolling window to detect a stall at the floating-point noise floor
    const int window = 40;
    double window_f = fcur;
    int window_at = 0;

    int it = 0;
    for (; it < opts.max_steps; ++it) {
        GradUV g = gradient(cur);
        double gn = g.norm();
        Eigen::Matrix<double, 6, 1> gvec;
        gvec << g.gu, g.gv;
        if (have_last) {
            Eigen::Matrix<double, 6, 1> y = gvec - last_grad;
            double sy = last_move.dot(y);
            if (sy > 1e-16) {
                double bb = last_move.squaredNorm() / sy; // step length along -g/|g|
                step = std::clamp(bb * gn, 1e-8, 0.8);
            }
        }
        last_grad = gvec;
        have_last = true;

        bool stalled = false;
        if (it - window_at >= window) {
            stalled = (window_f - fcur) <= 1e-12 * (1.0 + std::abs(fcur));
            window_f = fcur;
            window_at = it;
        }

        if (gn <= opts.grad_tol || stalled) {
            // near-critical or out of representable decrease: escape along
            // the most negative Hessian direction or stop
            Eigen::Matrix<double, 6, 6> H = uv_hess_fd(f, cur.U, cur.V, opts.fd_step);
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(H);
            double lmin = es.eigenvalues()(0);
            if (lmin >= -opts.hess_tol) {
                rep.converged = true;
                rep.grad_norm = gn;
                rep.hess_min_eig = lmin;
                break;
            }
            Eigen::Matrix<double, 6, 1> dir = es.eigenvectors().col(0);
            Vec3 du(dir[0], dir[1], dir[2]), dv(dir[3], dir[4], dir[5]);
            auto quad = [&](double t) { return 0.25 * (-lmin) * t * t; };
            if (!try_direction(du, dv, quad) && !try_direction(-du, -dv, quad)) {
                // flat to numerical precision in the escape direction
                rep.converged = true;
                rep.grad_norm = gn;
                rep.hess_min_eig = lmin;
                break;
            }
            window_f = fcur;
            window_at = it;
            continue;
        }
        Vec3 du = -g.gu / gn, dv = -g.gv / gn;
        auto armijo = [&](double t) { return 1e-4 * t * gn; };
        if (!try_direction(du, dv, armijo)) {
            // no decrease found along the gradient; treat as converged-flat
            Eigen::Matrix<double, 6, 6> H = uv_hess_fd(f, cur.U, cur.V, opts.fd_step);
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(H);
            rep.converged = true;
            rep.grad_norm = gn;
            rep.hess_min_eig = es.eigenvalues()(0);
            break;
        }
    }
    if (!rep.converged) {
        GradUV g = gradient(cur);
        rep.grad_norm = g.norm();
        Eigen::Matrix<double, 6, 6> H = uv_hess_fd(f, cur.U, cur.V, opts.fd_step);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(H);
        rep.hess_min_eig = es.eigenvalues()(0);
    }
    rep.point = cur;
    rep.f_value = fcur;
    rep.steps = it;
    return rep;
}

// ---------------------------------------------------------------------------
// Octopole structure
// ---------------------------------------------------------------------------

/// True iff v -> O(v,.,.) has trivial kernel, tested through the singular
/// values of the 9x3 matricization.
inline bool check_octopole_nondegeneracy(const Tensor3& O, double tol = 1e-8) {
    Eigen::Matrix<double, 9, 3> K;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                K(3 * j + k, i) = O(i, j, k);
    Eigen::JacobiSVD<Eigen::Matrix<double, 9, 3>> svd(K);
    double smax = svd.singularValues()(0);
    if (smax == 0.0)
        return false;
    return svd.singularValues()(2) > tol * smax;
}

/// All unit v (up to sign) with ||O(v,v,.)|| <= tol, found by a dense sphere
/// scan plus Newton (Gauss-Newton) refinement in the local sphere chart.
/// There can be at most three pairwise non-parallel solutions; more means the
/// tolerance is too loose or O is numerically zero.
inline std::vector<Vec3> octopole_kernel_vectors(const Tensor3& O, double tol = 1e-8) {
    double onorm = O.frobenius_norm();
    if (onorm <= 0.0)
        throw invalid_input_error("octopole_kernel_vectors requires O != 0");
    double abs_tol = tol * onorm;

    static const SphereGrid grid = SphereGrid::icosphere(4);

    auto value = [&](const Vec3& v) { return O.contract2(v, v).norm(); };

    auto refine = [&](Vec3 v) {
        for (int it = 0; it < 60; ++it) {
            Vec3 h = O.contract2(v, v);
            if (h.norm() < 1e-14 * onorm)
                break;
            // chart basis at v
            Vec3 t1 = v.unitOrthogonal();
            Vec3 t2 = v.cross(t1);
            Eigen::Matrix<double, 3, 2> J;
            J.col(0) = 2.0 * O.contract2(v, t1);
            J.col(1) = 2.0 * O.contract2(v, t2);
            Eigen::Vector2d step =
                J.colPivHouseholderQr().solve(-h);
            if (!step.allFinite())
                break;
            double sn = step.norm();
            if (sn > 0.5)
                step *= 0.5 / sn;
            v = (v + step[0] * t1 + step[1] * t2).normalized();
            if (sn < 1e-15)
                break;
        }
        return v;
    };

    std::vector<Vec3> found;
    auto consider = [&](Vec3 v) {
        v = refine(v);
        if (value(v) > abs_tol)
            return;
        for (const auto& w : found)
            if (std::abs(w.dot(v)) > 1.0 - 1e-8)
                return;
        // canonical sign: first component of largest magnitude positive
        int arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0)
            v = -v;
        found.push_back(v);
    };

    // local minima of the scan below a coarse cap are candidate kernels
    std::vector<double> g(grid.vertices.size());
    for (std::size_t i = 0; i < grid.vertices.size(); ++i)
        g[i] = value(grid.vertices[i]);
    double coarse = 0.2 * onorm;
    for (std::size_t i = 0; i < grid.vertices.size(); ++i) {
        if (g[i] > coarse)
            continue;
        bool locmin = true;
        for (int w : grid.neighbors[int(i)])
            if (g[w] < g[i])
                locmin = false;
        if (locmin)
            consider(grid.vertices[i]);
    }

    if (found.size() > 3)
        throw invariant_violation_error(
            "more than three non-parallel kernel directions: tolerance too loose or O is "
            "numerically zero");
    return found;
}

// ---------------------------------------------------------------------------
// Quadrupole-quadrupole structure
// ---------------------------------------------------------------------------

/// Eigen-decomposition of a symmetric 3x3 with deterministic ordering:
/// ascending eigenvalues; on ties, eigenvectors ordered lexicographically
/// after sign-normalizing the first component of largest magnitude.
inline void sym3_eigen(const Mat3& A, Vec3& evals, Mat3& evecs) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(A);
    evals = es.eigenvalues();
    evecs = es.eigenvectors();
    for (int c = 0; c < 3; ++c) {
        int arg = 0;
        evecs.col(c).cwiseAbs().maxCoeff(&arg);
        if (evecs.col(c)(arg) < 0)
            evecs.col(c) = -evecs.col(c);
    }
    // stable tie-break on (almost) equal eigenvalues
    for (int c = 0; c < 2; ++c) {
        if (std::abs(evals[c] - evals[c + 1]) < 1e-12 * (1.0 + std::abs(evals[c]))) {
            auto lex_less = [](const Vec3& a, const Vec3& b) {
                for (int i = 0; i < 3; ++i) {
                    if (a[i] < b[i] - 1e-14)
                        return true;
                    if (a[i] > b[i] + 1e-14)
                        return false;
                }
                return false;
            };
            if (lex_less(Vec3(evecs.col(c + 1)), Vec3(evecs.col(c)))) {
                evecs.col(c).swap(evecs.col(c + 1));
                std::swap(evals[c], evals[c + 1]);
            }
        }
    }
    // keep det +1 so the frame is a rotation
    if (evecs.determinant() < 0)
        evecs.col(2) = -evecs.col(2);
}

/// Structure report for the quadrupole-quadrupole interaction at a chosen
/// orientation of the first quadrupole. All interaction values carry the
/// 1/3 normalization of f_nm(2,2).
struct QQStructure {
    Mat3 L_of_Q1;
    Mat3 M_of_Q1;
    Vec3 eigen_a; // ascending eigenvalues of L
    Vec3 eigen_b; // descending eigenvalues of Q2ref
    /// The six critical values divided by 3, indexed by the permutation
    /// (i,j,k) pairing a with (b_i, b_j, b_k); order below.
    std::array<double, 6> critical_values{};
    std::array<std::array<int, 3>, 6> permutations{};
    double g_min = 0.0;
    double h_max = 0.0;
    /// Lowest eigenvalue of the fiber Hessian at each critical point.
    std::array<double, 6> hess_min_eig_at_each_critical{};
};

/// Evaluates the eigenvalue-pairing structure of F^(2,2) for Q1 rotated by
/// the given orientation. Q1 enters as U^T Q1ref U.
inline QQStructure qq_structure(const Mat3& Q1ref, const Mat3& Q2ref, const Rotation& orientationU) {
    auto check = [](const Mat3& Q, const char* name) {
        if ((Q - Q.transpose()).norm() > 1e-10 * (1.0 + Q.norm()))
            throw invalid_input_error(std::string(name) + " must be symmetric");
        if (std::abs(Q.trace()) > 1e-10 * (1.0 + Q.norm()))
            throw invalid_input_error(std::string(name) + " must be traceless");
        if (Q.norm() == 0.0)
            throw invalid_input_error(std::string(name) + " must be nonzero");
    };
    check(Q1ref, "Q1ref");
    check(Q2ref, "Q2ref");

    Mat3 Um = orientationU.matrix();
    Mat3 Q1 = Um.transpose() * Q1ref * Um;

    QQStructure s;
    s.L_of_Q1 = detail::l_map(Q1);
    s.M_of_Q1 = s.L_of_Q1 - (s.L_of_Q1.trace() / 3.0) * Mat3::Identity();

    Mat3 frameA, frameB;
    Vec3 a, braw;
    sym3_eigen(s.L_of_Q1, a, frameA);
    sym3_eigen(Q2ref, braw, frameB);
    s.eigen_a = a; // ascending
    s.eigen_b = Vec3(braw[2], braw[1], braw[0]); // descending

    const std::array<std::array<int, 3>, 6> perms = {
        {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    s.permutations = perms;
    auto A_of = [&](const std::array<int, 3>& p) {
        return s.eigen_a[0] * s.eigen_b[p[0]] + s.eigen_a[1] * s.eigen_b[p[1]] +
               s.eigen_a[2] * s.eigen_b[p[2]];
    };
    for (int i = 0; i < 6; ++i)
        s.critical_values[i] = A_of(perms[i]) / 3.0;

    s.g_min = A_of({0, 1, 2}) / 3.0;
    s.h_max = A_of({2, 1, 0}) / 3.0;

    for (int i = 0; i < 6; ++i) {
        double worst = -std::numeric_limits<double>::infinity();
        const auto& p = perms[i];
        for (int t = 0; t < 3; ++t) {
            std::array<int, 3> q = p;
            std::swap(q[t], q[(t + 1) % 3]);
            worst = std::max(worst, A_of(p) - A_of(q));
        }
        s.hess_min_eig_at_each_critical[i] = -2.0 * worst / 3.0;
    }
    return s;
}

/// Orientation choice for the sign pattern of M(Q1) = L(Q1) - tr L / 3.
/// two-negative aligns e1 with the top eigenvector of Q1ref; two-positive
/// with the bottom one. Returned U satisfies U e1 = chosen eigenvector, for
/// use as Q1 = U^T Q1ref U.
enum class MSignPattern { two_positive, two_negative };

inline Rotation orient_M_sign(const Mat3& Q1ref, MSignPattern want) {
    if ((Q1ref - Q1ref.transpose()).norm() > 1e-10 * (1.0 + Q1ref.norm()) || Q1ref.norm() == 0.0)
        throw invalid_input_error("Q1ref must be symmetric nonzero");
    Vec3 evals;
    Mat3 evecs;
    sym3_eigen(Q1ref, evals, evecs); // ascending
    Vec3 target = (want == MSignPattern::two_negative) ? Vec3(evecs.col(2)) : Vec3(evecs.col(0));
    return Rotation::between(Vec3::UnitX(), target); // U e1 = target
}

} // namespace multipass

#include "multipass/critical_connect.hpp"
