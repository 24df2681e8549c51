#include <catch2/catch_amalgamated.hpp>

#include "multipass/critical.hpp"
#include "test_support.hpp"

using namespace multipass;
using namespace testsupport;

namespace {

MultipoleSet unit_dipole(const Vec3& d = Vec3::UnitX()) {
    MultipoleSet m;
    m.dipole = d;
    return m;
}

UVFn f11_fn(const MultipoleSet& a, const MultipoleSet& b) {
    return [&a, &b](const Rotation& U, const Rotation& V) { return f_nm(a, b, U, V, 1, 1); };
}

/// Octopole with O(e_i,e_j,e_k) = lambda for distinct indices, zero else.
Tensor3 mixed_octopole(double lambda) {
    Tensor3 O;
    int idx[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (auto& p : idx)
        O(p[0], p[1], p[2]) = lambda;
    return O;
}

/// Nonzero symmetric pair-traceless octopole with O(e1,.,.) = 0.
Tensor3 degenerate_octopole() {
    Tensor3 O;
    O(1, 1, 1) = 1.0;
    O(1, 2, 2) = O(2, 1, 2) = O(2, 2, 1) = -1.0;
    return O;
}

} // namespace

TEST_CASE("descend_to_pseudo_minimum") {
    MultipoleSet d1 = unit_dipole(), d2 = unit_dipole();
    UVFn f = f11_fn(d1, d2);

    SECTION("already at the aligned minimum") {
        OrientationPair start{Rotation(), Rotation()};
        REQUIRE(f(start.U, start.V) == Catch::Approx(-2.0));
        auto rep = descend_to_pseudo_minimum(f, start);
        REQUIRE(rep.converged);
        REQUIRE(rep.f_value == Catch::Approx(-2.0).margin(1e-10));
        REQUIRE(rep.steps <= 1);
    }

    SECTION("random starts end on the negative critical levels") {
        RngStream rng(4);
        UVGradFn g = [&](const Rotation& U, const Rotation& V) {
            return f_nm_grad(d1, d2, U, V, 1, 1);
        };
        for (int i = 0; i < 25; ++i) {
            OrientationPair start{haar_sample(rng), haar_sample(rng)};
            auto rep = descend_to_pseudo_minimum(f, start, {}, g);
            REQUIRE(rep.converged);
            bool near = std::abs(rep.f_value + 2.0) < 1e-4 || std::abs(rep.f_value + 1.0) < 1e-4;
            REQUIRE(near);
        }
    }

    SECTION("quadrupole pair reaches the pairing minimum -12") {
        MultipoleSet rod = compute_multipoles(rod3());
        UVFn f22 = [&](const Rotation& U, const Rotation& V) { return f_nm(rod, rod, U, V, 2, 2); };
        UVGradFn g22 = [&](const Rotation& U, const Rotation& V) {
            return f_nm_grad(rod, rod, U, V, 2, 2);
        };
        RngStream rng(6);
        for (int i = 0; i < 10; ++i) {
            OrientationPair start{haar_sample(rng), haar_sample(rng)};
            auto rep = descend_to_pseudo_minimum(f22, start, {}, g22);
            REQUIRE(rep.converged);
            REQUIRE(rep.f_value == Catch::Approx(-12.0).margin(1e-4));
        }
    }

    SECTION("f never increases along the accepted trajectory") {
        RngStream rng(9);
        DescentOptions opts;
        opts.keep_trajectory = true;
        OrientationPair start{haar_sample(rng), haar_sample(rng)};
        auto rep = descend_to_pseudo_minimum(f, start, opts);
        double prev = std::numeric_limits<double>::infinity();
        for (const auto& node : rep.trajectory) {
            double v = f(node.U, node.V);
            REQUIRE(v <= prev + 1e-12);
            prev = v;
        }
    }

    SECTION("step exhaustion flags instead of throwing") {
        RngStream rng(10);
        DescentOptions opts;
        opts.max_steps = 1;
        opts.grad_tol = 1e-15;
        OrientationPair start{haar_sample(rng), haar_sample(rng)};
        auto rep = descend_to_pseudo_minimum(f, start, opts);
        REQUIRE_FALSE(rep.converged);
    }
}

TEST_CASE("octopole kernel vectors and non-degeneracy") {
    SECTION("mixed-entry octopole has kernels exactly on the axes") {
        Tensor3 O = mixed_octopole(1.0);
        auto ks = octopole_kernel_vectors(O, 1e-8);
        REQUIRE(ks.size() == 3);
        for (const auto& v : ks) {
            double best = std::max({std::abs(v.dot(Vec3::UnitX())), std::abs(v.dot(Vec3::UnitY())),
                                    std::abs(v.dot(Vec3::UnitZ()))});
            REQUIRE(best == Catch::Approx(1.0).margin(1e-8));
        }
        REQUIRE(check_octopole_nondegeneracy(O));
    }

    SECTION("tetrahedral octopole: nondegenerate, at most three kernel pairs") {
        MultipoleSet m = compute_multipoles(tetrahedral());
        REQUIRE(check_octopole_nondegeneracy(m.octopole));
        auto ks = octopole_kernel_vectors(m.octopole, 1e-8);
        REQUIRE(ks.size() <= 3);
        REQUIRE(!ks.empty());
    }

    SECTION("axial octopole with no kernel directions") {
        ChargeDistribution d;
        d.points = {{1.0, Vec3(1, 0, 0)},
                    {-3.0, Vec3(0, 0, 0)},
                    {3.0, Vec3(-1, 0, 0)},
                    {-1.0, Vec3(-2, 0, 0)}};
        MultipoleSet m = compute_multipoles(d);
        REQUIRE(m.octopole.frobenius_norm() > 0.1);
        auto ks = octopole_kernel_vectors(m.octopole, 1e-10);
        REQUIRE(ks.empty());
    }

    SECTION("zero and degenerate octopoles") {
        Tensor3 zero;
        REQUIRE_FALSE(check_octopole_nondegeneracy(zero));
        REQUIRE_THROWS_AS(octopole_kernel_vectors(zero), invalid_input_error);
        Tensor3 dg = degenerate_octopole();
        REQUIRE(dg.contract1(Vec3::UnitX()).norm() < 1e-14);
        REQUIRE(dg.frobenius_norm() > 0.5);
        REQUIRE_FALSE(check_octopole_nondegeneracy(dg));
    }
}

TEST_CASE("qq_structure") {
    Mat3 rodQ = Vec3(2, -1, -1).asDiagonal();

    SECTION("rod pair worked example") {
        QQStructure s = qq_structure(rodQ, rodQ, Rotation());
        REQUIRE((s.L_of_Q1 - Mat3(Vec3(34, -2, -2).asDiagonal())).norm() < 1e-12);
        REQUIRE((s.M_of_Q1 - Mat3(Vec3(24, -12, -12).asDiagonal())).norm() < 1e-12);
        REQUIRE(s.g_min == Catch::Approx(-12.0));
        REQUIRE(s.h_max == Catch::Approx(24.0));
    }

    SECTION("random pairs: signs, trace identity, bounds") {
        RngStream rng(12);
        auto rand_q = [&]() {
            Mat3 A;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    A(r, c) = rng.gaussian();
            Mat3 S = 0.5 * (A + A.transpose());
            S -= (S.trace() / 3.0) * Mat3::Identity();
            return S;
        };
        for (int i = 0; i < 40; ++i) {
            Mat3 Q1 = rand_q(), Q2 = rand_q();
            Rotation U = haar_sample(rng);
            QQStructure s = qq_structure(Q1, Q2, U);
            REQUIRE(s.g_min < 0.0);
            REQUIRE(s.h_max > 0.0);
            REQUIRE(std::abs(s.M_of_Q1.trace()) < 1e-10 * (1 + s.L_of_Q1.norm()));
            double a321 = 3 * s.critical_values[5];
            double a213 = 3 * s.critical_values[2];
            double a132 = 3 * s.critical_values[1];
            REQUIRE(std::abs(a321 + a213 + a132) < 1e-10 * (1 + std::abs(a321)));
            for (double A : s.critical_values) {
                REQUIRE(A >= s.g_min - 1e-12);
                REQUIRE(A <= s.h_max + 1e-12);
            }
        }
    }

    SECTION("pairing minimum matches sampled brute force") {
        RngStream rng(13);
        Mat3 Q2 = Vec3(1.5, -0.5, -1.0).asDiagonal();
        MultipoleSet m1, m2;
        m1.quadrupole = rodQ;
        m2.quadrupole = Q2;
        Rotation orientU = haar_sample(rng);
        QQStructure s = qq_structure(rodQ, Q2, orientU);
        Rotation Ulab = orientU.inverse(); // pushforward matching U^T Q1ref U
        double best = std::numeric_limits<double>::infinity();
        Rotation bestV;
        for (int i = 0; i < 20000; ++i) {
            Rotation V = haar_sample(rng);
            double v = f_nm(m1, m2, Ulab, V, 2, 2);
            if (v < best) {
                best = v;
                bestV = V;
            }
        }
        double step = 0.1;
        while (step > 1e-7) {
            bool better = false;
            for (int a = 0; a < 3; ++a)
                for (double sgn : {1.0, -1.0}) {
                    Rotation cand = bestV * Rotation::axis_angle(Vec3::Unit(a), sgn * step);
                    double v = f_nm(m1, m2, Ulab, cand, 2, 2);
                    if (v < best) {
                        best = v;
                        bestV = cand;
                        better = true;
                    }
                }
            if (!better)
                step *= 0.5;
        }
        REQUIRE(best == Catch::Approx(s.g_min).margin(1e-6));
    }

    SECTION("exchange rotation identity f(theta) - f(0) = -(A - A') sin^2") {
        RngStream rng(15);
        Mat3 Q1 = Vec3(2, -1, -1).asDiagonal();
        Mat3 Q2 = Vec3(1.2, 0.3, -1.5).asDiagonal();
        MultipoleSet m1, m2;
        m1.quadrupole = Q1;
        m2.quadrupole = Q2;
        Rotation U = haar_sample(rng);
        Mat3 L = detail::l_map(U.matrix() * Q1 * U.matrix().transpose());
        Vec3 a;
        Mat3 frame;
        sym3_eigen(L, a, frame);
        Vec3 braw;
        Mat3 W;
        sym3_eigen(Q2, braw, W);
        Mat3 P = Mat3::Zero();
        int sigma[3] = {2, 0, 1};    // axis i carries b_desc[sigma[i]]
        int descIdx[3] = {2, 1, 0};  // braw index of b_desc[k]
        for (int i = 0; i < 3; ++i)
            P(descIdx[sigma[i]], i) = 1.0;
        Mat3 Vm = frame * P.transpose() * W.transpose();
        if (Vm.determinant() < 0)
            Vm = frame * Mat3(Vec3(-1, 1, 1).asDiagonal()) * P.transpose() * W.transpose();
        Rotation V = Rotation::from_matrix(Vm, 1e-9);

        Vec3 bdesc(braw[2], braw[1], braw[0]);
        double A0 = a[0] * bdesc[sigma[0]] + a[1] * bdesc[sigma[1]] + a[2] * bdesc[sigma[2]];
        double A1 = a[0] * bdesc[sigma[1]] + a[1] * bdesc[sigma[0]] + a[2] * bdesc[sigma[2]];
        for (double theta : {0.2, 0.7, 1.3}) {
            Rotation Vrot = Rotation::axis_angle(frame.col(2), theta) * V;
            double lhs = f_nm(m1, m2, U, Vrot, 2, 2) - f_nm(m1, m2, U, V, 2, 2);
            double rhs = -(A0 - A1) / 3.0 * std::sin(theta) * std::sin(theta);
            REQUIRE(lhs == Catch::Approx(rhs).margin(1e-9 * (1 + std::abs(A0))));
        }
    }
}

TEST_CASE("orient_M_sign") {
    Mat3 rodQ = Vec3(2, -1, -1).asDiagonal();

    SECTION("rod wants two-negative at the identity") {
        Rotation U = orient_M_sign(rodQ, MSignPattern::two_negative);
        REQUIRE(std::abs((U * Vec3::UnitX()).dot(Vec3::UnitX())) ==
                Catch::Approx(1.0).margin(1e-12));
        QQStructure s = qq_structure(rodQ, rodQ, U);
        Vec3 ev;
        Mat3 fr;
        sym3_eigen(s.M_of_Q1, ev, fr);
        REQUIRE(ev[0] < 0);
        REQUIRE(ev[1] < 0);
        REQUIRE(ev[2] > 0);
    }

    SECTION("random inputs produce the requested pattern with tr M = 0") {
        RngStream rng(16);
        for (int i = 0; i < 20; ++i) {
            Mat3 A;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    A(r, c) = rng.gaussian();
            Mat3 Q = 0.5 * (A + A.transpose());
            Q -= (Q.trace() / 3.0) * Mat3::Identity();
            for (auto want : {MSignPattern::two_positive, MSignPattern::two_negative}) {
                Rotation U = orient_M_sign(Q, want);
                QQStructure s = qq_structure(Q, rodQ, U);
                REQUIRE(std::abs(s.M_of_Q1.trace()) < 1e-9 * (1 + s.M_of_Q1.norm()));
                Vec3 ev;
                Mat3 fr;
                sym3_eigen(s.M_of_Q1, ev, fr);
                int pos = (ev[0] > 0) + (ev[1] > 0) + (ev[2] > 0);
                REQUIRE(pos == (want == MSignPattern::two_positive ? 2 : 1));
            }
        }
    }
}

TEST_CASE("verify_localmin_property (reduced sample counts)") {
    MultipoleSet dip = unit_dipole();
    MultipoleSet rod = compute_multipoles(rod3());
    MultipoleSet tet = compute_multipoles(tetrahedral());

    SECTION("dipole-dipole at delta = 1/3") {
        auto rep = verify_localmin_property(1, 1, dip, dip, 1.0 / 3.0, 2000, 7);
        REQUIRE(rep.counterexamples.empty());
        REQUIRE(rep.near_critical_count > 0);
        REQUIRE(rep.min_f_at_near_critical <= -1.0 / 3.0);
    }

    SECTION("dipole-quadrupole and quadrupole-dipole at default deltas") {
        double d12 = localmin_default_delta(1, 2, dip, rod);
        REQUIRE(d12 > 0);
        auto rep = verify_localmin_property(1, 2, dip, rod, d12, 1000, 8);
        REQUIRE(rep.counterexamples.empty());
        double d21 = localmin_default_delta(2, 1, rod, dip);
        auto rep2 = verify_localmin_property(2, 1, rod, dip, d21, 1000, 9);
        REQUIRE(rep2.counterexamples.empty());
    }

    SECTION("quadrupole-quadrupole at c0/8") {
        double d22 = localmin_default_delta(2, 2, rod, rod);
        REQUIRE(d22 > 0);
        auto rep = verify_localmin_property(2, 2, rod, rod, d22, 1000, 10);
        REQUIRE(rep.counterexamples.empty());
    }

    SECTION("dipole-octopole with the tetrahedral octopole") {
        double d13 = localmin_default_delta(1, 3, dip, tet);
        REQUIRE(d13 > 0);
        auto rep = verify_localmin_property(1, 3, dip, tet, d13, 500, 11);
        REQUIRE(rep.counterexamples.empty());
    }

    SECTION("degenerate octopole is rejected up front") {
        MultipoleSet bad;
        bad.octopole = degenerate_octopole();
        REQUIRE_THROWS_AS(verify_localmin_property(1, 3, dip, bad, 0.1, 10, 1),
                          precondition_error);
    }

    SECTION("deterministic under a fixed seed") {
        auto a = verify_localmin_property(1, 1, dip, dip, 1.0 / 3.0, 500, 42);
        auto b = verify_localmin_property(1, 1, dip, dip, 1.0 / 3.0, 500, 42);
        REQUIRE(a.near_critical_count == b.near_critical_count);
        REQUIRE(a.min_f_at_near_critical == b.min_f_at_near_critical);
    }
}

namespace {

OrientationPair sample_sublevel(const UVFn& f, double delta, RngStream& rng) {
    for (int i = 0; i < 100000; ++i) {
        OrientationPair p{haar_sample(rng), haar_sample(rng)};
        if (f(p.U, p.V) < -delta)
            return p;
    }
    throw std::runtime_error("sublevel rejection sampling failed");
}

} // namespace

TEST_CASE("connect_negative_sublevel") {
    MultipoleSet dip = unit_dipole();
    MultipoleSet rod = compute_multipoles(rod3());
    MultipoleSet tet = compute_multipoles(tetrahedral());

    SECTION("dipole-dipole worked example: -2 to -1 at delta = 0.4") {
        OrientationPair start{Rotation(), Rotation()}; // aligned, F = -2
        OrientationPair end{Rotation::between(Vec3::UnitX(), Vec3::UnitZ()),
                            Rotation::between(Vec3::UnitX(), -Vec3::UnitZ())}; // F = -1
        UVFn f = f11_fn(dip, dip);
        REQUIRE(f(start.U, start.V) == Catch::Approx(-2.0));
        REQUIRE(f(end.U, end.V) == Catch::Approx(-1.0));
        SublevelPath path = connect_negative_sublevel(1, 1, dip, dip, start, end, 0.4);
        REQUIRE(path.max_f() <= -0.5);
        REQUIRE(pair_distance(path.nodes.front(), start) < 1e-9);
        REQUIRE(pair_distance(path.nodes.back(), end) < 1e-9);
        path.validate(f);
    }

    SECTION("identical endpoints give a single node") {
        OrientationPair start{Rotation(), Rotation()};
        SublevelPath path = connect_negative_sublevel(1, 1, dip, dip, start, start, 0.4);
        REQUIRE(path.nodes.size() == 1);
    }

    SECTION("preconditions") {
        OrientationPair good{Rotation(), Rotation()};
        OrientationPair bad{Rotation::between(Vec3::UnitX(), -Vec3::UnitX()), Rotation()};
        REQUIRE_THROWS_AS(connect_negative_sublevel(1, 1, dip, dip, good, bad, 0.4),
                          precondition_error);
        REQUIRE_THROWS_AS(connect_negative_sublevel(1, 1, dip, dip, good, good, 0.6),
                          unsupported_delta_error);
        REQUIRE_THROWS_AS(connect_negative_sublevel(1, 4, dip, dip, good, good, 0.1),
                          unsupported_case_error);
        REQUIRE_THROWS_AS(connect_negative_sublevel(2, 3, rod, tet, good, good, 0.1),
                          unsupported_case_error);
    }

    SECTION("dipole-quadrupole random endpoint pairs") {
        ConnectContext ctx = make_connect_context(1, 2, dip, rod);
        UVFn f = [&](const Rotation& U, const Rotation& V) { return f_nm(dip, rod, U, V, 1, 2); };
        double delta = ctx.delta0 / 2.0;
        RngStream rng(21);
        for (int rep = 0; rep < 10; ++rep) {
            OrientationPair a = sample_sublevel(f, delta, rng);
            OrientationPair b = sample_sublevel(f, delta, rng);
            SublevelPath path = connect_negative_sublevel(ctx, a, b, delta);
            path.validate(f);
            REQUIRE(pair_distance(path.nodes.front(), a) < 1e-9);
            REQUIRE(pair_distance(path.nodes.back(), b) < 1e-9);
        }
    }

    SECTION("quadrupole-dipole (swapped) random endpoint pairs") {
        ConnectContext ctx = make_connect_context(2, 1, rod, dip);
        UVFn f = [&](const Rotation& U, const Rotation& V) { return f_nm(rod, dip, U, V, 2, 1); };
        double delta = ctx.delta0 / 2.0;
        RngStream rng(22);
        for (int rep = 0; rep < 5; ++rep) {
            OrientationPair a = sample_sublevel(f, delta, rng);
            OrientationPair b = sample_sublevel(f, delta, rng);
            SublevelPath path = connect_negative_sublevel(ctx, a, b, delta);
            path.validate(f);
        }
    }

    SECTION("dipole-octopole random endpoint pairs") {
        ConnectContext ctx = make_connect_context(1, 3, dip, tet);
        UVFn f = [&](const Rotation& U, const Rotation& V) { return f_nm(dip, tet, U, V, 1, 3); };
        double delta = ctx.delta0 / 2.0;
        RngStream rng(23);
        for (int rep = 0; rep < 5; ++rep) {
            OrientationPair a = sample_sublevel(f, delta, rng);
            OrientationPair b = sample_sublevel(f, delta, rng);
            SublevelPath path = connect_negative_sublevel(ctx, a, b, delta);
            path.validate(f);
        }
    }

    SECTION("quadrupole-quadrupole random endpoint pairs at delta = 1") {
        ConnectContext ctx = make_connect_context(2, 2, rod, rod);
        REQUIRE(ctx.delta0 > 1.0);
        UVFn f = [&](const Rotation& U, const Rotation& V) { return f_nm(rod, rod, U, V, 2, 2); };
        RngStream rng(24);
        for (int rep = 0; rep < 5; ++rep) {
            OrientationPair a = sample_sublevel(f, 1.0, rng);
            OrientationPair b = sample_sublevel(f, 1.0, rng);
            SublevelPath path = connect_negative_sublevel(ctx, a, b, 1.0);
            path.validate(f);
            REQUIRE(pair_distance(path.nodes.front(), a) < 1e-9);
            REQUIRE(pair_distance(path.nodes.back(), b) < 1e-9);
        }
    }

    SECTION("reduction to (e,p) agrees with f_nm") {
        RngStream rng(25);
        for (auto [n, m] : {std::pair{1, 2}, std::pair{2, 1}, std::pair{1, 3}, std::pair{3, 1}}) {
            const MultipoleSet& a = (n == 1) ? dip : (n == 2 ? rod : tet);
            const MultipoleSet& b = (m == 1) ? dip : (m == 2 ? rod : tet);
            auto dc = detail::make_dipole_case(n, m, a, b);
            for (int i = 0; i < 20; ++i) {
                OrientationPair p{haar_sample(rng), haar_sample(rng)};
                auto [e, q] = dc.reduce(p);
                REQUIRE(dc.value(e, q) ==
                        Catch::Approx(f_nm(a, b, p.U, p.V, n, m)).epsilon(1e-10).margin(1e-12));
            }
        }
    }
}
