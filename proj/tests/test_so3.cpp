#include <catch2/catch_amalgamated.hpp>

#include "multipass/interaction.hpp"
#include "multipass/so3.hpp"
#include "test_support.hpp"

using namespace multipass;

TEST_CASE("quaternions stay normalized and convert to proper rotations") {
    RngStream rng(42);
    for (int i = 0; i < 200; ++i) {
        Rotation R = haar_sample(rng);
        REQUIRE(R.norm_drift() <= 1e-12);
        Mat3 M = R.matrix();
        REQUIRE((M * M.transpose() - Mat3::Identity()).norm() < 1e-12);
        REQUIRE(M.determinant() == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("geodesic basics") {
    Config p{3.0, Rotation(), Rotation()};

    SECTION("zero tangent is stationary") {
        Tangent v;
        for (double t : {0.0, 0.5, 2.0}) {
            Config q = geodesic(p, v, t);
            REQUIRE(q.L == p.L);
            REQUIRE(q.U.distance(p.U) < 1e-14);
        }
    }

    SECTION("axis-angle identity") {
        Tangent v;
        v.omega_u = M_PI * Vec3::UnitZ();
        Config q = geodesic(p, v, 1.0);
        Rotation expect = Rotation::axis_angle(Vec3::UnitZ(), M_PI);
        REQUIRE(q.U.distance(expect) < 1e-12);
    }

    SECTION("group property: gamma(s+t) = gamma(t) after gamma(s)") {
        RngStream rng(7);
        for (int i = 0; i < 50; ++i) {
            Tangent v;
            v.dL = rng.gaussian() * 0.1;
            v.omega_u = Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian());
            v.omega_v = Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian());
            double s = rng.uniform(), t = rng.uniform();
            Config a = geodesic(p, v, s + t);
            Config b = geodesic(geodesic(p, v, s), v, t);
            REQUIRE(a.U.distance(b.U) < 1e-10);
            REQUIRE(a.V.distance(b.V) < 1e-10);
            REQUIRE(a.L == Catch::Approx(b.L).margin(1e-12));
        }
    }

    SECTION("leaving L > 0 raises") {
        Tangent v;
        v.dL = -1.0;
        REQUIRE_THROWS_AS(geodesic(p, v, 4.0), domain_exit_error);
    }
}

TEST_CASE("haar sampling statistics") {
    SECTION("fixed seed reproduces the sequence") {
        RngStream a(123), b(123);
        for (int i = 0; i < 20; ++i) {
            Rotation ra = haar_sample(a), rb = haar_sample(b);
            REQUIRE(ra.w() == rb.w());
            REQUIRE(ra.x() == rb.x());
        }
    }

    SECTION("mean of R e1 is near zero") {
        RngStream rng(99);
        const int S = 100000;
        Vec3 sum = Vec3::Zero();
        for (int i = 0; i < S; ++i)
            sum += haar_sample(rng) * Vec3::UnitX();
        REQUIRE((sum / S).norm() <= 0.02);
    }

    SECTION("trace distribution matches the Haar density (KS test)") {
        // On SO(3), tr R = 1 + 2 cos(theta) with density (1-cos theta)/pi
        // in theta; the CDF is (theta - sin theta)/pi.
        RngStream rng(2024);
        const int S = 100000;
        std::vector<double> thetas(S);
        for (int i = 0; i < S; ++i) {
            double tr = haar_sample(rng).matrix().trace();
            double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
            thetas[i] = std::acos(c);
        }
        std::sort(thetas.begin(), thetas.end());
        double ks = 0.0;
        for (int i = 0; i < S; ++i) {
            double cdf = (thetas[i] - std::sin(thetas[i])) / M_PI;
            ks = std::max(ks, std::abs(cdf - double(i + 1) / S));
            ks = std::max(ks, std::abs(cdf - double(i) / S));
        }
        REQUIRE(ks < 0.01);
    }
}

TEST_CASE("riemannian derivatives") {
    SECTION("constant function") {
        ConfigFn f = [](const Config&) { return 3.5; };
        Config p{2.0, Rotation::axis_angle(Vec3::UnitY(), 0.3), Rotation()};
        Tangent g = riem_grad(f, p);
        REQUIRE(g.norm() < 1e-9);
        auto H = riem_hess(f, p);
        REQUIRE(H.norm() < 1e-6);
    }

    SECTION("gradient matches geodesic directional differences") {
        testsupport::MeanStd dummy{0, 0};
        (void)dummy;
        MultipoleSet m1 = compute_multipoles(testsupport::rod3());
        MultipoleSet m2 = m1;
        ConfigFn f = [&](const Config& c) { return f_nm(m1, m2, c.U, c.V, 2, 2); };
        RngStream rng(5);
        for (int i = 0; i < 20; ++i) {
            Config p{10.0, haar_sample(rng), haar_sample(rng)};
            Tangent g = riem_grad(f, p);
            Tangent dir;
            dir.omega_u = sphere_sample(rng);
            dir.omega_v = sphere_sample(rng);
            double n = dir.norm();
            dir.dL = 0;
            double h = 1e-5;
            double fd = (f(geodesic(p, dir, h)) - f(geodesic(p, dir, -h))) / (2 * h);
            double an = g.omega_u.dot(dir.omega_u) + g.omega_v.dot(dir.omega_v);
            REQUIRE(fd == Catch::Approx(an).epsilon(1e-6).margin(1e-6 * n));
        }
    }

    SECTION("analytic f_nm gradient agrees with finite differences") {
        RngStream rng(11);
        MultipoleSet ma = compute_multipoles(testsupport::random_neutral(rng));
        MultipoleSet mb = compute_multipoles(testsupport::random_neutral(rng));
        for (auto [n, m] : InteractionTable::supported_orders()) {
            Rotation U = haar_sample(rng), V = haar_sample(rng);
            GradUV g = f_nm_grad(ma, mb, U, V, n, m);
            ConfigFn f = [&](const Config& c) { return f_nm(ma, mb, c.U, c.V, n, m); };
            Tangent fd = riem_grad(f, Config{5.0, U, V});
            double scale = std::max(1.0, g.norm());
            REQUIRE((fd.omega_u - g.gu).norm() / scale < 1e-6);
            REQUIRE((fd.omega_v - g.gv).norm() / scale < 1e-6);
        }
    }
}
