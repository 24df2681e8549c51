#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "multipass/errors.hpp"
#include "multipass/so3.hpp"

namespace multipass {

using Cplx = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;

/// Finite Hermitian stand-in for a molecule: a Hamiltonian, its ground
/// space, and three dipole-operator components. Complex scalars throughout;
/// phases matter for the path-dressing construction.
class ToyMolecule {
public:
    static ToyMolecule from_operators(const MatC& H, const MatC& Dx, const MatC& Dy,
                                      const MatC& Dz, std::string label = {},
                                      double cluster_tol_rel = 1e-8) {
        ToyMolecule m;
        m.label_ = std::move(label);
        auto check_herm = [](const MatC& A, const char* name) {
            if (A.rows() != A.cols() || (A - A.adjoint()).norm() > 1e-10 * (1.0 + A.norm()))
                throw invalid_input_error(std::string(name) + " must be square Hermitian");
        };
        check_herm(H, "H");
        check_herm(Dx, "Dx");
        check_herm(Dy, "Dy");
        check_herm(Dz, "Dz");
        if (Dx.rows() != H.rows() || Dy.rows() != H.rows() || Dz.rows() != H.rows())
            throw invalid_input_error("dipole operators must match the Hamiltonian dimension");
        m.H_ = 0.5 * (H + H.adjoint());
        m.D_[0] = 0.5 * (Dx + Dx.adjoint());
        m.D_[1] = 0.5 * (Dy + Dy.adjoint());
        m.D_[2] = 0.5 * (Dz + Dz.adjoint());

        Eigen::SelfAdjointEigenSolver<MatC> es(m.H_);
        m.evals_ = es.eigenvalues();
        m.evecs_ = es.eigenvectors();
        m.E0_ = m.evals_(0);
        double scale = std::max(1.0, m.evals_.cwiseAbs().maxCoeff());
        double ctol = cluster_tol_rel * scale;
        m.ground_dim_ = 1;
        while (m.ground_dim_ < m.evals_.size() &&
               m.evals_(m.ground_dim_) - m.E0_ <= ctol)
            ++m.ground_dim_;
        if (m.ground_dim_ == m.evals_.size())
            m.gap_ = 0.0;
        else
            m.gap_ = m.evals_(m.ground_dim_) - m.E0_;
        return m;
    }

    int dim() const { return int(H_.rows()); }
    int ground_dim() const { return ground_dim_; }
    double ground_energy() const { return E0_; }
    double gap() const { return gap_; }
    const std::string& label() const { return label_; }
    const MatC& hamiltonian() const { return H_; }
    const MatC& dipole(int axis) const { return D_[axis]; }
    const Eigen::VectorXd& eigenvalues() const { return evals_; }
    const MatC& eigenvectors() const { return evecs_; }

    /// Ground-space projector.
    MatC ground_projector() const {
        MatC G = evecs_.leftCols(ground_dim_);
        return G * G.adjoint();
    }

    VecC ground_vector(int j = 0) const {
        if (j < 0 || j >= ground_dim_)
            throw invalid_input_error("ground vector index outside the ground space");
        return evecs_.col(j);
    }

    /// Lab-frame dipole component: sum_a R(axis,a) D_a.
    MatC rotated_dipole(const Rotation& R, int lab_axis) const {
        Mat3 Rm = R.matrix();
        return Rm(lab_axis, 0) * D_[0] + Rm(lab_axis, 1) * D_[1] + Rm(lab_axis, 2) * D_[2];
    }

    void validate() const {
        double scale = std::max(1.0, H_.norm());
        MatC P = ground_projector();
        if ((H_ * P - E0_ * P).norm() > 1e-10 * scale)
            throw invariant_violation_error("H P != E0 P");
        if ((P * P - P).norm() > 1e-10 || (P - P.adjoint()).norm() > 1e-10)
            throw invariant_violation_error("ground projector is not an orthogonal projector");
    }

private:
    MatC H_;
    std::array<MatC, 3> D_;
    Eigen::VectorXd evals_;
    MatC evecs_;
    double E0_ = 0.0;
    double gap_ = 0.0;
    int ground_dim_ = 1;
    std::string label_;
};

namespace detail {

/// Overlap coefficients of the dipole-coupled pair state f Psi1 x Psi2 in
/// the product eigenbasis, with the (i,j) pair metric delta - 3 n n^T.
/// Returns the na x nb coefficient matrix.
inline MatC pair_coupling_coefficients(const ToyMolecule& a, const ToyMolecule& b,
                                       const Rotation& U, const Rotation& V, const VecC& psi1,
                                       const VecC& psi2, const Vec3& axis) {
    Mat3 metric = Mat3::Identity() - 3.0 * axis * axis.transpose();
    MatC c = MatC::Zero(a.dim(), b.dim());
    for (int i = 0; i < 3; ++i) {
        VecC av = a.eigenvectors().adjoint() * (a.rotated_dipole(U, i) * psi1);
        for (int j = 0; j < 3; ++j) {
            if (metric(i, j) == 0.0)
                continue;
            VecC bv = b.eigenvectors().adjoint() * (b.rotated_dipole(V, j) * psi2);
            c += metric(i, j) * av * bv.transpose();
        }
    }
    return c;
}

} // namespace detail

/// Squared norm of the component of f Psi1 x Psi2 off the ground block.
inline double vdw_excitation_norm(const ToyMolecule& a, const ToyMolecule& b, const Rotation& U,
                                  const Rotation& V) {
    MatC c = detail::pair_coupling_coefficients(a, b, U, V, a.ground_vector(), b.ground_vector(),
                                                Vec3::UnitX());
    double s = 0.0;
    for (int k = 0; k < a.dim(); ++k)
        for (int l = 0; l < b.dim(); ++l)
            if (k >= a.ground_dim() || l >= b.ground_dim())
                s += std::norm(c(k, l));
    return std::sqrt(s);
}

/// Van der Waals correlation coefficient for a chosen pair of ground
/// vectors: the resolvent quadratic form of the dipolar coupling, computed
/// spectrally with the ground block deflated. Always >= 0.
inline double cvdw_pair(const ToyMolecule& a, const ToyMolecule& b, const Rotation& U,
                        const Rotation& V, const VecC& psi1, const VecC& psi2) {
    double scale = std::max({1.0, a.hamiltonian().norm(), b.hamiltonian().norm()});
    if (a.gap() <= 1e-12 * scale || b.gap() <= 1e-12 * scale)
        throw ill_posed_resolvent_error("vanishing spectral gap above the ground space");
    MatC c = detail::pair_coupling_coefficients(a, b, U, V, psi1, psi2, Vec3::UnitX());
    double C = 0.0;
    for (int k = 0; k < a.dim(); ++k) {
        for (int l = 0; l < b.dim(); ++l) {
            if (k < a.ground_dim() && l < b.ground_dim())
                continue; // ground block removed by the projector
            double denom = (a.eigenvalues()(k) - a.ground_energy()) +
                           (b.eigenvalues()(l) - b.ground_energy());
            C += std::norm(c(k, l)) / denom;
        }
    }
    return C;
}

inline double cvdw_pair(const ToyMolecule& a, const ToyMolecule& b, const Rotation& U,
                        const Rotation& V) {
    return cvdw_pair(a, b, U, V, a.ground_vector(), b.ground_vector());
}

/// Uniform mixed-state average of cvdw_pair over orthonormal ground bases.
inline double cvdw_pair_averaged(const ToyMolecule& a, const ToyMolecule& b, const Rotation& U,
                                 const Rotation& V) {
    double sum = 0.0;
    for (int i = 0; i < a.ground_dim(); ++i)
        for (int j = 0; j < b.ground_dim(); ++j)
            sum += cvdw_pair(a, b, U, V, a.ground_vector(i), b.ground_vector(j));
    return sum / double(a.ground_dim() * b.ground_dim());
}

/// Sampled positivity check of the correlation coefficient. Violations are
/// collected and flagged, not thrown: a finite toy system can place the
/// coupled state inside the ground block.
struct VdwPositivityReport {
    int samples = 0;
    std::uint64_t seed = 0;
    double min_c = std::numeric_limits<double>::infinity();
    double min_excitation_norm = std::numeric_limits<double>::infinity();
    struct Violation {
        Rotation U, V;
        double c;
        double excitation_norm;
    };
    std::vector<Violation> violations;
};

inline VdwPositivityReport check_vdw_positivity(const ToyMolecule& a, const ToyMolecule& b,
                                                int samples, std::uint64_t seed) {
    bool zero_dipoles = true;
    for (int i = 0; i < 3; ++i)
        if (a.dipole(i).norm() > 0 || b.dipole(i).norm() > 0)
            zero_dipoles = false;
    if (zero_dipoles)
        throw invalid_input_error("both molecules have vanishing dipole operators");

    VdwPositivityReport rep;
    rep.samples = samples;
    rep.seed = seed;
    RngStream rng(seed);
    double scale = std::max({1.0, a.hamiltonian().norm(), b.hamiltonian().norm()});
    for (int s = 0; s < samples; ++s) {
        Rotation U = haar_sample(rng), V = haar_sample(rng);
        double xn = vdw_excitation_norm(a, b, U, V);
        double C = cvdw_pair(a, b, U, V);
        rep.min_c = std::min(rep.min_c, C);
        rep.min_excitation_norm = std::min(rep.min_excitation_norm, xn);
        if (!(xn > 1e-12 * scale) || !(C > 0.0))
            rep.violations.push_back({U, V, C, xn});
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Three-body term and the full quantum correction
// ---------------------------------------------------------------------------

namespace detail {

/// Dense tensor-space vector of (f_pq on slots p,q) applied to the product
/// ground state, expressed in the product eigenbasis of all K molecules.
inline VecC coupled_state(const std::vector<const ToyMolecule*>& mols,
                          const std::vector<Rotation>& rot, int p, int q, const Vec3& axis) {
    int K = int(mols.size());
    std::vector<Eigen::Index> dims(K);
    Eigen::Index total = 1;
    for (int i = 0; i < K; ++i) {
        dims[i] = mols[i]->dim();
        total *= dims[i];
    }
    Mat3 metric = Mat3::Identity() - 3.0 * axis * axis.transpose();

    // per-slot eigenbasis coefficient vectors
    std::vector<VecC> base(K);
    for (int i = 0; i < K; ++i) {
        // ground vector in its own eigenbasis: first unit vector
        base[i] = VecC::Zero(dims[i]);
        base[i](0) = 1.0;
    }
    auto dip_coeff = [&](int slot, int lab_axis) {
        const ToyMolecule& m = *mols[slot];
        return VecC(m.eigenvectors().adjoint() *
                    (m.rotated_dipole(rot[slot], lab_axis) * m.ground_vector()));
    };

    VecC out = VecC::Zero(total);
    for (int i = 0; i < 3; ++i) {
        VecC ap = dip_coeff(p, i);
        for (int j = 0; j < 3; ++j) {
            if (metric(i, j) == 0.0)
                continue;
            VecC bq = dip_coeff(q, j);
            // assemble the rank-1-in-(p,q) product over all slots
            std::vector<const VecC*> factors(K);
            for (int s = 0; s < K; ++s)
                factors[s] = &base[s];
            factors[p] = &ap;
            factors[q] = &bq;
            for (Eigen::Index idx = 0; idx < total; ++idx) {
                Cplx v = metric(i, j);
                Eigen::Index rem = idx;
                for (int s = K - 1; s >= 0; --s) {
                    Eigen::Index comp = rem % dims[s];
                    rem /= dims[s];
                    v *= (*factors[s])(comp);
                    if (v == Cplx(0, 0))
                        break;
                }
                out(idx) += v;
            }
        }
    }
    return out;
}

/// Applies the restricted inverse of sum_{s in subset}(H_s - E_s) over the
/// subset's joint excitations; components with the whole subset in its
/// ground clusters are annihilated.
inline void apply_restricted_inverse(const std::vector<const ToyMolecule*>& mols, VecC& w,
                                     const std::vector<int>& subset) {
    int K = int(mols.size());
    std::vector<Eigen::Index> dims(K);
    for (int i = 0; i < K; ++i)
        dims[i] = mols[i]->dim();
    for (Eigen::Index idx = 0; idx < w.size(); ++idx) {
        Eigen::Index rem = idx;
        std::vector<Eigen::Index> comp(K);
        for (int s = K - 1; s >= 0; --s) {
            comp[s] = rem % dims[s];
            rem /= dims[s];
        }
        double denom = 0.0;
        bool all_ground = true;
        for (int s : subset) {
            denom += mols[s]->eigenvalues()(comp[s]) - mols[s]->ground_energy();
            if (comp[s] >= mols[s]->ground_dim())
                all_ground = false;
        }
        if (all_ground)
            w(idx) = 0.0;
        else
            w(idx) /= denom;
    }
}

} // namespace detail

/// Three-body potential: the (i,j) coupled excitation propagated by the
/// restricted two-body inverse and overlapped with the (i,k) coupling. The
/// result does not depend on whether the (i,j) or (i,k) resolvent is used.
/// Slots are fixed as i=0, j=1, k=2; pair axes are those of (i,j) and (i,k).
inline double three_body_W(const ToyMolecule& a, const ToyMolecule& b, const ToyMolecule& c,
                           const Rotation& Ua, const Rotation& Ub, const Rotation& Uc,
                           const Vec3& axis_ij, const Vec3& axis_ik,
                           const std::vector<int>& resolvent_subset = {0, 1}) {
    double scale = std::max({1.0, a.hamiltonian().norm(), b.hamiltonian().norm(),
                             c.hamiltonian().norm()});
    for (const ToyMolecule* m : {&a, &b, &c})
        if (m->gap() <= 1e-12 * scale)
            throw ill_posed_resolvent_error("vanishing spectral gap above a ground space");
    std::vector<const ToyMolecule*> mols = {&a, &b, &c};
    std::vector<Rotation> rot = {Ua, Ub, Uc};
    VecC w_ij = detail::coupled_state(mols, rot, 0, 1, axis_ij.normalized());
    VecC w_ik = detail::coupled_state(mols, rot, 0, 2, axis_ik.normalized());
    detail::apply_restricted_inverse(mols, w_ij, resolvent_subset);
    // with complex ground states the raw overlap carries a phase; the energy
    // expansion only sees the symmetric combination, i.e. the real part
    Cplx val = w_ik.dot(w_ij); // conjugates the first argument
    return val.real();
}

/// Full quantum correction of a K-molecule arrangement at order 1/L^6:
///   -< (sum f_ij / L_ij^3) Psi, R (sum f_kl / L_kl^3) Psi >
/// with the joint restricted inverse R. Always <= 0.
inline double full_quantum_correction(const std::vector<const ToyMolecule*>& mols,
                                      const std::vector<Rotation>& rot,
                                      const std::vector<Vec3>& centers) {
    int K = int(mols.size());
    if (K < 2 || int(rot.size()) != K || int(centers.size()) != K)
        throw invalid_input_error("need K >= 2 molecules with rotations and centers");
    Eigen::Index total = 1;
    for (auto* m : mols)
        total *= m->dim();
    VecC w = VecC::Zero(total);
    for (int i = 0; i < K; ++i) {
        for (int j = i + 1; j < K; ++j) {
            Vec3 d = centers[j] - centers[i];
            double L = d.norm();
            if (L <= 0)
                throw invalid_input_error("coincident molecule centers");
            w += detail::coupled_state(mols, rot, i, j, Vec3(d / L)) / std::pow(L, 3);
        }
    }
    VecC rw = w;
    std::vector<int> all(K);
    for (int i = 0; i < K; ++i)
        all[i] = i;
    detail::apply_restricted_inverse(mols, rw, all);
    Cplx val = w.dot(rw);
    if (std::abs(val.imag()) > 1e-10 * (1.0 + std::abs(val.real())))
        throw invariant_violation_error("quantum correction acquired an imaginary part");
    return -val.real();
}

// ---------------------------------------------------------------------------
// Path dressing
// ---------------------------------------------------------------------------

/// One-parameter family of Hermitian matrices on [0,1].
struct HermitianFamily {
    std::function<MatC(double)> H;
    int dim = 0;

    /// Piecewise-linear interpolation through equally spaced samples.
    static HermitianFamily from_samples(std::vector<MatC> nodes) {
        if (nodes.size() < 2)
            throw invalid_input_error("family needs at least two sample matrices");
        int d = int(nodes.front().rows());
        for (auto& n : nodes) {
            if (n.rows() != d || n.cols() != d)
                throw invalid_input_error("family samples must share one dimension");
            n = 0.5 * (n + MatC(n.adjoint()));
        }
        HermitianFamily fam;
        fam.dim = d;
        fam.H = [nodes = std::move(nodes)](double t) {
            double x = std::clamp(t, 0.0, 1.0) * double(nodes.size() - 1);
            std::size_t k = std::min(std::size_t(x), nodes.size() - 2);
            double w = x - double(k);
            return MatC((1.0 - w) * nodes[k] + w * nodes[k + 1]);
        };
        return fam;
    }

    /// Largest sampled one-step variation at resolution 1/samples.
    double continuity_modulus(int samples = 256) const {
        double m = 0.0;
        MatC prev = H(0.0);
        for (int k = 1; k <= samples; ++k) {
            MatC curh = H(double(k) / samples);
            m = std::max(m, (curh - prev).norm());
            prev = curh;
        }
        return m;
    }
};

/// Sampled dressed path: normalized states x(t) with Rayleigh quotient
/// within eps of the running ground energy's maximum.
struct DressedPath {
    std::vector<double> t;
    std::vector<VecC> x;
    std::vector<double> rayleigh;
    std::vector<double> ground_energy;
    double max_excess = 0.0; // max rayleigh - max ground energy
    int segments = 0;
};

namespace detail {

struct GroundInfo {
    double e0;
    MatC basis; // ground cluster eigenvectors (columns)
};

inline GroundInfo ground_info(const MatC& H, double cluster_tol) {
    Eigen::SelfAdjointEigenSolver<MatC> es(H);
    int gdim = 1;
    while (gdim < es.eigenvalues().size() &&
           es.eigenvalues()(gdim) - es.eigenvalues()(0) <= cluster_tol)
        ++gdim;
    return {es.eigenvalues()(0), es.eigenvectors().leftCols(gdim)};
}

/// Great-circle arc between unit vectors of a complex Hilbert space, with
/// the end phase-aligned first so the arc stays short. `from` is taken by
/// value: callers may pass elements of `out`, which push_back reallocates.
inline void append_eigenspace_arc(std::vector<VecC>& out, VecC from, VecC to, int steps) {
    Cplx ov = from.dot(to); // conj(from) . to
    double r = std::abs(ov);
    if (r > 1e-14) {
        Cplx phase = ov / r;
        // phase leg: from -> phase * from
        double ang = std::arg(phase);
        for (int s = 1; s <= steps; ++s)
            out.push_back(std::exp(Cplx(0, ang * s / steps)) * from);
        VecC a = out.back();
        double omega = std::acos(std::clamp(r, 0.0, 1.0));
        if (omega > 1e-14) {
            // real slerp in span{a, to}: cos(omega) = Re<a, to> = r
            VecC w = (to - r * a);
            double wn = w.norm();
            if (wn > 1e-14) {
                w /= wn;
                for (int s = 1; s <= steps; ++s) {
                    double th = omega * s / steps;
                    out.push_back(std::cos(th) * a + std::sin(th) * w);
                }
            }
        }
        out.push_back(to);
    } else {
        // orthogonal endpoints: quarter circle
        for (int s = 1; s <= steps; ++s) {
            double th = 0.5 * M_PI * s / steps;
            out.push_back(std::cos(th) * from + std::sin(th) * to);
        }
        out.push_back(to);
    }
}

} // namespace detail

struct DressOptions {
    int initial_segments = 16;
    int max_segments = 8192;
    int samples_per_leg = 8;
    double cluster_tol_rel = 1e-8;
};

/// Builds a continuous family of normalized states along the Hamiltonian
/// family whose Rayleigh quotient stays within eps of the maximal ground
/// energy. Within each step the state first collapses onto the next ground
/// space and then moves inside it (complex phases permitted), which keeps
/// the step-local Rayleigh quotient non-increasing.
inline DressedPath dress_path(const HermitianFamily& fam, const VecC& x0, const VecC& x1,
                              double eps, const DressOptions& opts = {}) {
    if (!(eps > 0.0))
        throw invalid_input_error("eps must be positive");
    if (x0.size() != fam.dim || x1.size() != fam.dim)
        throw invalid_input_error("endpoint vectors must match the family dimension");
    double scale = std::max(1.0, fam.H(0.0).norm());
    double ctol = opts.cluster_tol_rel * scale;

    // verify the endpoints are ground vectors
    for (auto [tv, xv] : {std::pair{0.0, x0}, std::pair{1.0, x1}}) {
        MatC H = fam.H(tv);
        detail::GroundInfo gi = detail::ground_info(H, ctol);
        VecC res = H * xv - gi.e0 * xv;
        if (std::abs(xv.norm() - 1.0) > 1e-10 || res.norm() > 1e-8 * scale)
            throw invalid_input_error("endpoint is not a normalized ground vector");
    }

    double achieved = std::numeric_limits<double>::infinity();
    for (int N = opts.initial_segments; N <= opts.max_segments; N *= 2) {
        // ground data at the segment endpoints
        std::vector<detail::GroundInfo> gi(N + 1);
        for (int k = 0; k <= N; ++k)
            gi[k] = detail::ground_info(fam.H(double(k) / N), ctol);

        // interior node states: follow the previous node through the next
        // projector when possible
        std::vector<VecC> node(N + 1);
        node[0] = x0;
        for (int k = 1; k < N; ++k) {
            VecC proj = gi[k].basis * (gi[k].basis.adjoint() * node[k - 1]);
            double pn = proj.norm();
            node[k] = (pn > 1e-8) ? VecC(proj / pn) : VecC(gi[k].basis.col(0));
        }
        node[N] = x1;

        DressedPath path;
        path.segments = N;
        auto push = [&](double tt, const VecC& xx) {
            path.t.push_back(tt);
            path.x.push_back(xx);
        };
        push(0.0, x0);
        for (int k = 0; k < N; ++k) {
            const VecC& xk = node[k];
            const VecC& xk1 = node[k + 1];
            const MatC& B = gi[k + 1].basis;
            VecC px = B * (B.adjoint() * xk);
            double pn = px.norm();
            std::vector<VecC> leg;
            if (pn <= 1e-12) {
                // no ground component: quarter circle onto the next state
                for (int s = 1; s <= 2 * opts.samples_per_leg; ++s) {
                    double th = 0.5 * M_PI * s / (2 * opts.samples_per_leg);
                    leg.push_back(std::cos(th) * xk + std::sin(th) * xk1);
                }
            } else {
                VecC phat = px / pn;
                VecC q = xk - px;
                double qn = q.norm();
                double alpha = std::acos(std::clamp(pn, 0.0, 1.0));
                if (qn > 1e-14 && alpha > 1e-14) {
                    VecC qhat = q / qn;
                    for (int s = 1; s <= opts.samples_per_leg; ++s) {
                        double th = alpha * (1.0 - double(s) / opts.samples_per_leg);
                        leg.push_back(std::cos(th) * phat + std::sin(th) * qhat);
                    }
                } else {
                    leg.push_back(phat);
                }
                detail::append_eigenspace_arc(leg, leg.back(), xk1, opts.samples_per_leg);
            }
            for (std::size_t s = 0; s < leg.size(); ++s) {
                double tt = (double(k) + double(s + 1) / double(leg.size())) / N;
                push(tt, leg[s].normalized());
            }
        }

        // dense evaluation of the Rayleigh quotient against the running
        // ground energy
        double max_ray = -std::numeric_limits<double>::infinity();
        double max_e = -std::numeric_limits<double>::infinity();
        path.rayleigh.resize(path.t.size());
        path.ground_energy.resize(path.t.size());
        for (std::size_t i = 0; i < path.t.size(); ++i) {
            MatC H = fam.H(path.t[i]);
            double ray = std::real(Cplx(path.x[i].dot(H * path.x[i])));
            Eigen::SelfAdjointEigenSolver<MatC> es(H, Eigen::EigenvaluesOnly);
            path.rayleigh[i] = ray;
            path.ground_energy[i] = es.eigenvalues()(0);
            max_ray = std::max(max_ray, ray);
            max_e = std::max(max_e, es.eigenvalues()(0));
        }
        path.max_excess = max_ray - max_e;
        achieved = std::min(achieved, path.max_excess);
        if (path.max_excess <= eps)
            return path;
    }
    throw resolution_exceeded_error(
        "segment cap reached before the requested Rayleigh excess was met", achieved);
}

} // namespace multipass
