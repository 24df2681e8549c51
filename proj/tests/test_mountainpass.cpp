#include <catch2/catch_amalgamated.hpp>

#include "multipass/mountainpass.hpp"
#include "test_support.hpp"

using namespace multipass;
using namespace testsupport;

namespace {

ModelEnergy vdw_only_model() {
    ModelEnergy me;
    me.cvdw = CvdwModel::constant(1.0);
    me.L_min = 1.0;
    return me;
}

ModelEnergy dipole_model(double lmin = 2.0) {
    ModelEnergy me;
    me.m1.dipole = Vec3::UnitX();
    me.m2.dipole = Vec3::UnitX();
    me.cvdw = CvdwModel::constant(1.0);
    me.order = 2;
    me.L_min = lmin;
    return me;
}

ModelEnergy quadrupole_model() {
    ModelEnergy me;
    me.m1.quadrupole = Vec3(2.0, -0.5, -1.5).asDiagonal();
    me.m2.quadrupole = Vec3(1.7, -0.2, -1.5).asDiagonal();
    me.cvdw = CvdwModel::constant(1.0);
    me.order = 4;
    me.L_min = 2.0;
    return me;
}

/// Wandering path: endpoints below L_star, interior excursions far out.
DiscretePath wandering_path(const ModelEnergy& me, RngStream& rng, double far) {
    DiscretePath p;
    int n = 40;
    Rotation U = haar_sample(rng), V = haar_sample(rng);
    for (int i = 0; i < n; ++i) {
        double t = double(i) / (n - 1);
        double bump = std::sin(M_PI * t);
        double L = 5.0 + (far - 5.0) * bump * (0.3 + 0.7 * rng.uniform());
        U = U * Rotation::exp(0.35 * sphere_sample(rng));
        V = V * Rotation::exp(0.35 * sphere_sample(rng));
        p.nodes.push_back({std::max(L, me.L_min), U, V});
    }
    p.nodes.front().L = 5.0;
    p.nodes.back().L = 5.0;
    p.recompute_energies(me);
    return p;
}

} // namespace

TEST_CASE("model_energy") {
    SECTION("vdW term only") {
        ModelEnergy me = vdw_only_model();
        double e = me.energy({10.0, Rotation(), Rotation()});
        REQUIRE(e == Catch::Approx(-1e-6).margin(1e-18));
    }

    SECTION("aligned dipole pair dominated by F11 = -2") {
        ModelEnergy me;
        me.m1.dipole = Vec3::UnitX();
        me.m2.dipole = Vec3::UnitX();
        me.cvdw = CvdwModel::constant(1e-9);
        me.order = 2;
        me.L_min = 1.0;
        double L = 20.0;
        double e = me.energy({L, Rotation(), Rotation()});
        REQUIRE(e == Catch::Approx(-2.0 / (L * L * L)).epsilon(1e-6));
    }

    SECTION("charged tail dominates at large L") {
        ModelEnergy me = vdw_only_model();
        me.kappa = -1.0;
        double e = me.energy({100.0, Rotation(), Rotation()});
        REQUIRE(e == Catch::Approx(-0.01 - 1e-12).epsilon(1e-9));
    }

    SECTION("validity floor enforced; kappa > 0 rejected") {
        ModelEnergy me = vdw_only_model();
        me.L_min = 2.0;
        REQUIRE_THROWS_AS(me.energy({1.5, Rotation(), Rotation()}), out_of_domain_error);
        me.kappa = 0.5;
        REQUIRE_THROWS_AS(me.validate(), invalid_input_error);
    }

    SECTION("energy approaches E1+E2 uniformly at large L") {
        ModelEnergy me = quadrupole_model();
        me.E1 = -3.0;
        me.E2 = -4.5;
        RngStream rng(40);
        double fmax = 0.0;
        for (int i = 0; i < 200; ++i) {
            Rotation U = haar_sample(rng), V = haar_sample(rng);
            fmax = std::max(fmax, std::abs(f_nm(me.m1, me.m2, U, V, 2, 2)));
        }
        for (double L : {50.0, 100.0, 200.0}) {
            RngStream r2(41);
            for (int i = 0; i < 100; ++i) {
                Rotation U = haar_sample(r2), V = haar_sample(r2);
                double gap = std::abs(me.energy({L, U, V}) - me.e_infinity());
                REQUIRE(gap <= 1.5 * fmax / std::pow(L, 5) + 2.0 / std::pow(L, 6));
            }
        }
    }

    SECTION("global rotation about e1 leaves the energy unchanged") {
        ModelEnergy me = quadrupole_model();
        me.m1.dipole = Vec3(0.3, 0.1, -0.2);
        me.m2.dipole = Vec3(-0.4, 0.2, 0.1);
        me.cvdw = CvdwModel::polynomial(1.0, 0.3, 0.2, 0.1, me.m1.dipole, me.m2.dipole);
        RngStream rng(42);
        for (int i = 0; i < 20; ++i) {
            Config tau{3.0 + 5.0 * rng.uniform(), haar_sample(rng), haar_sample(rng)};
            double base = me.energy(tau);
            Rotation G = Rotation::axis_angle(Vec3::UnitX(), 2 * M_PI * rng.uniform());
            double rot = me.energy({tau.L, G * tau.U, G * tau.V});
            REQUIRE(rot == Catch::Approx(base).epsilon(1e-10).margin(1e-12));
        }
    }

    SECTION("cvdw positivity sampled") {
        ModelEnergy me = quadrupole_model();
        me.m1.dipole = Vec3::UnitX();
        me.m2.dipole = Vec3::UnitX();
        me.cvdw = CvdwModel::polynomial(0.5, 0.2, 0.2, 0.4, me.m1.dipole, me.m2.dipole);
        RngStream rng(43);
        for (int i = 0; i < 1000; ++i) {
            Rotation U = haar_sample(rng), V = haar_sample(rng);
            REQUIRE(me.cvdw.fn(U, V) > 0.0);
        }
    }

    SECTION("analytic gradient matches finite differences") {
        ModelEnergy me = quadrupole_model();
        me.m1.dipole = Vec3(0.5, 0, 0);
        me.m2.dipole = Vec3(0.5, 0, 0);
        me.kappa = -0.3;
        RngStream rng(44);
        ConfigFn f = [&](const Config& c) { return me.energy(c); };
        for (int i = 0; i < 10; ++i) {
            Config tau{4.0 + 3.0 * rng.uniform(), haar_sample(rng), haar_sample(rng)};
            Tangent fd = riem_grad(f, tau);
            Tangent an = me.gradient(tau);
            REQUIRE(std::abs(fd.dL - an.dL) < 1e-6 * (1 + std::abs(an.dL)));
            REQUIRE((fd.omega_u - an.omega_u).norm() < 1e-6 * (1 + an.omega_u.norm()));
            REQUIRE((fd.omega_v - an.omega_v).norm() < 1e-6 * (1 + an.omega_v.norm()));
        }
    }
}

TEST_CASE("minmax_optimize") {
    SECTION("endpoints must be local minima") {
        ModelEnergy me = dipole_model();
        RngStream rng(50);
        Config a{me.L_min, haar_sample(rng), haar_sample(rng)};
        Config b{me.L_min, Rotation(), Rotation()};
        DiscretePath init = make_geodesic_path(me, a, b, 16);
        REQUIRE_THROWS_AS(minmax_optimize(me, init), precondition_error);
    }

    SECTION("equal endpoints with a small loop collapse to the point") {
        ModelEnergy me = dipole_model();
        Config a{me.L_min, Rotation(), Rotation()};
        REQUIRE(is_local_minimum(me, a));
        DiscretePath init;
        int n = 24;
        for (int i = 0; i < n; ++i) {
            double t = double(i) / (n - 1);
            double bump = 0.4 * std::sin(M_PI * t);
            init.nodes.push_back(
                {a.L + bump, a.U * Rotation::axis_angle(Vec3::UnitY(), bump), a.V});
        }
        init.nodes.front() = a;
        init.nodes.back() = a;
        init.recompute_energies(me);
        MinMaxOptions mo;
        mo.iters = 400;
        DiscretePath opt = minmax_optimize(me, init, mo);
        REQUIRE(opt.max_energy() <= me.energy(a) + 1e-6);
    }

    SECTION("zero barrier along the symmetry orbit") {
        ModelEnergy me = dipole_model();
        Config a{me.L_min, Rotation(), Rotation()};
        Rotation flip = Rotation::axis_angle(Vec3::UnitX(), M_PI);
        Config b{me.L_min, flip * a.U, flip * a.V};
        REQUIRE(is_local_minimum(me, a));
        REQUIRE(is_local_minimum(me, b));
        DiscretePath init = make_geodesic_path(me, a, b, 32);
        MinMaxOptions mo;
        mo.iters = 100;
        DiscretePath opt = minmax_optimize(me, init, mo);
        REQUIRE(opt.max_energy() == Catch::Approx(me.energy(a)).margin(1e-6));

        TransitionState ts = transition_state(me, opt);
        REQUIRE(ts.grad_norm <= 1e-6);
        REQUIRE(ts.negative_count == 0);
    }

    SECTION("dipole flip barrier hits the -1 critical level") {
        ModelEnergy me = dipole_model();
        Config a{me.L_min, Rotation(), Rotation()};
        Rotation flip = Rotation::axis_angle(Vec3::UnitY(), M_PI); // e1 -> -e1
        Config b{me.L_min, flip, flip};
        REQUIRE(is_local_minimum(me, b));

        ConnectContext ctx = make_connect_context(1, 1, me.m1, me.m2);
        SublevelPath sp = connect_negative_sublevel(ctx, {a.U, a.V}, {b.U, b.V}, 0.45);
        DiscretePath init;
        int n = int(sp.nodes.size());
        for (int i = 0; i < 64; ++i) {
            const auto& nd = sp.nodes[std::size_t(i) * (n - 1) / 63];
            init.nodes.push_back({me.L_min, nd.U, nd.V});
        }
        init.recompute_energies(me);
        MinMaxOptions mo;
        mo.iters = 300;
        DiscretePath opt = minmax_optimize(me, init, mo);
        // densify to estimate the continuum maximum: the sampled nodes can
        // straddle the crossing of the critical level
        double dense_max = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < opt.nodes.size(); ++i)
            for (int s = 0; s <= 8; ++s)
                dense_max = std::max(dense_max,
                                     me.energy(config_interpolate(opt.nodes[i - 1], opt.nodes[i],
                                                                  double(s) / 8)));
        double expect = -1.0 / std::pow(me.L_min, 3) - 1.0 / std::pow(me.L_min, 6);
        REQUIRE(dense_max == Catch::Approx(expect).margin(3e-4));
        REQUIRE(dense_max >= expect - 1e-5);
    }
}

TEST_CASE("surgery") {
    RngStream rng(60);

    SECTION("no-op when the path stays below L_star") {
        ModelEnergy me = vdw_only_model();
        DiscretePath p = make_geodesic_path(me, {3.0, Rotation(), Rotation()},
                                            {4.0, haar_sample(rng), haar_sample(rng)}, 16);
        auto [out, rep] = surgery(me, p, 50.0);
        REQUIRE_FALSE(rep.applied);
        REQUIRE(out.nodes.size() == p.nodes.size());
    }

    SECTION("vdW-only wandering paths are cut down to L_star") {
        ModelEnergy me = vdw_only_model();
        for (int trial = 0; trial < 5; ++trial) {
            DiscretePath p = wandering_path(me, rng, 1e4);
            double before = p.max_energy();
            auto [out, rep] = surgery(me, p, 30.0);
            REQUIRE(rep.applied);
            REQUIRE(rep.route == "vdw-dominated");
            REQUIRE(out.max_L() <= 30.0 + 1e-9);
            REQUIRE(rep.max_energy_after <= before + 1e-9);
            for (const auto& c : rep.replaced_segment.nodes)
                REQUIRE(c.L == Catch::Approx(30.0).margin(1e-12));
        }
    }

    SECTION("charged-tail route") {
        ModelEnergy me = vdw_only_model();
        me.kappa = -1.0;
        DiscretePath p = wandering_path(me, rng, 5e3);
        auto [out, rep] = surgery(me, p, 30.0);
        REQUIRE(rep.applied);
        REQUIRE(rep.route == "charged-tail");
        REQUIRE(rep.max_energy_after <= rep.max_energy_before + 1e-9);
    }

    SECTION("dipole model: rotation leg reaches {F11 <= -1/2}") {
        ModelEnergy me = dipole_model(2.0);
        me.order = 5;
        for (int trial = 0; trial < 3; ++trial) {
            DiscretePath p = wandering_path(me, rng, 2e3);
            auto [out, rep] = surgery(me, p, 40.0);
            REQUIRE(rep.applied);
            REQUIRE(rep.route == "multipole");
            REQUIRE(rep.max_energy_after <= rep.max_energy_before + 1e-9);
            REQUIRE(out.max_L() <= 40.0 + 1e-9);
            // away from the two descent tails the leg stays in the deep set
            const auto& seg = rep.replaced_segment.nodes;
            double midF = f_nm(me.m1, me.m2, seg[seg.size() / 2].U, seg[seg.size() / 2].V, 1, 1);
            REQUIRE(midF <= -0.5);
            int deep = 0;
            for (const auto& c : seg)
                if (f_nm(me.m1, me.m2, c.U, c.V, 1, 1) <= -0.5)
                    ++deep;
            REQUIRE(deep > int(seg.size()) / 2);
        }
    }

    SECTION("quadrupole model goes through the (2,2) machinery") {
        ModelEnergy me = quadrupole_model();
        DiscretePath p = wandering_path(me, rng, 1e3);
        auto [out, rep] = surgery(me, p, 40.0);
        REQUIRE(rep.applied);
        REQUIRE(rep.route == "multipole");
        REQUIRE(rep.max_energy_after <= rep.max_energy_before + 1e-9);
    }

    SECTION("n1+n2 = 5 is refused") {
        ModelEnergy me;
        me.m1.dipole = Vec3::UnitX();
        ChargeDistribution cube;
        for (int sx : {-1, 1})
            for (int sy : {-1, 1})
                for (int sz : {-1, 1})
                    cube.points.push_back({1.0, Vec3(sx, sy, sz)});
        cube.points.push_back({-8.0, Vec3::Zero()});
        MultipoleSet cm = compute_multipoles(cube);
        REQUIRE(cm.dipole.norm() < 1e-12);
        REQUIRE(cm.quadrupole.norm() < 1e-12);
        REQUIRE(cm.octopole.frobenius_norm() < 1e-12);
        REQUIRE(cm.hexadecapole.frobenius_norm() > 0.1);
        me.m2 = cm;
        me.cvdw = CvdwModel::constant(1.0);
        me.L_min = 2.0;
        DiscretePath p = wandering_path(me, rng, 1e3);
        REQUIRE_THROWS_AS(surgery(me, p, 40.0), unsupported_case_error);
    }
}

TEST_CASE("transition_state on the quadrupole pass") {
    ModelEnergy me = quadrupole_model();
    UVFn f22 = [&](const Rotation& U, const Rotation& V) {
        return f_nm(me.m1, me.m2, U, V, 2, 2);
    };
    UVGradFn g22 = [&](const Rotation& U, const Rotation& V) {
        return f_nm_grad(me.m1, me.m2, U, V, 2, 2);
    };

    RngStream rng(5150);
    OrientationPair s{haar_sample(rng), haar_sample(rng)};
    auto rep = descend_to_pseudo_minimum(f22, s, {}, g22);
    REQUIRE(rep.converged);
    Mat3 L = detail::l_map(rep.point.U.matrix() * me.m1.quadrupole *
                           rep.point.U.matrix().transpose());
    Vec3 a;
    Mat3 frame;
    sym3_eigen(L, a, frame);
    OrientationPair uv2{rep.point.U, Rotation::axis_angle(frame.col(1), M_PI) * rep.point.V};
    Config tau{me.L_min, rep.point.U, rep.point.V};
    Config tau2{me.L_min, uv2.U, uv2.V};
    REQUIRE(is_local_minimum(me, tau));
    REQUIRE(is_local_minimum(me, tau2));

    ConnectContext ctx = make_connect_context(2, 2, me.m1, me.m2);
    SublevelPath sp = connect_negative_sublevel(ctx, {tau.U, tau.V}, {tau2.U, tau2.V},
                                                ctx.delta0 * 0.5);
    DiscretePath init;
    int n = int(sp.nodes.size());
    for (int i = 0; i < 64; ++i) {
        const auto& nd = sp.nodes[std::size_t(i) * (n - 1) / 63];
        init.nodes.push_back({me.L_min, nd.U, nd.V});
    }
    init.recompute_energies(me);
    MinMaxOptions mo;
    mo.iters = 600;
    DiscretePath opt = minmax_optimize(me, init, mo);
    REQUIRE(opt.max_energy() > opt.energies.front() + 1e-3);

    TransitionState ts = transition_state(me, opt);
    REQUIRE(ts.refined);
    REQUIRE(ts.boundary_active);
    REQUIRE(ts.grad_norm <= 1e-6);
    REQUIRE(ts.negative_count == 1);
    REQUIRE(ts.zero_count == 1);
    REQUIRE(ts.energy >= opt.max_energy() - 1e-9);
    REQUIRE(ts.energy <= opt.max_energy() + 0.05);

    UVFn fr = [&](const Rotation& U, const Rotation& V) { return me.energy({me.L_min, U, V}); };
    Eigen::Matrix<double, 6, 6> H = uv_hess_fd(fr, ts.tau.U, ts.tau.V);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(H);
    Eigen::Matrix<double, 6, 1> v = es.eigenvectors().col(0);
    for (double sgn : {1.0, -1.0}) {
        Vec3 wu(v[0], v[1], v[2]), wv(v[3], v[4], v[5]);
        Config moved{me.L_min, ts.tau.U * Rotation::exp(sgn * 0.05 * wu),
                     ts.tau.V * Rotation::exp(sgn * 0.05 * wv)};
        REQUIRE(me.energy(moved) < ts.energy);
    }
}
