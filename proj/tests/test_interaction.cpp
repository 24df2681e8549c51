#include <catch2/catch_amalgamated.hpp>

#include "multipass/interaction.hpp"
#include "test_support.hpp"

using namespace multipass;
using namespace testsupport;

namespace {

double lab_coulomb(const std::vector<MoleculePlacement>& places,
                   const std::vector<ChargeDistribution>& dists) {
    // exact Coulomb sum over all placed point clouds, pair by pair
    double sum = 0.0;
    for (std::size_t i = 0; i < places.size(); ++i)
        for (std::size_t j = i + 1; j < places.size(); ++j)
            for (const auto& p : dists[i].points)
                for (const auto& q : dists[j].points) {
                    Vec3 a = places[i].rotation * p.x + places[i].center;
                    Vec3 b = places[j].rotation * q.x + places[j].center;
                    sum += p.q * q.q / (a - b).norm();
                }
    return sum;
}

} // namespace

TEST_CASE("f_nm closed forms") {
    MultipoleSet rod = compute_multipoles(rod3());
    MultipoleSet dip;
    dip.dipole = Vec3::UnitX();

    SECTION("aligned unit dipoles give -2, transverse give 1") {
        MultipoleSet d3;
        d3.dipole = Vec3::UnitZ();
        REQUIRE(f_nm(dip, dip, Rotation(), Rotation(), 1, 1) == Catch::Approx(-2.0));
        REQUIRE(f_nm(d3, d3, Rotation(), Rotation(), 1, 1) == Catch::Approx(1.0));
    }

    SECTION("rod quadrupole pair gives 24") {
        REQUIRE(f_nm(rod, rod, Rotation(), Rotation(), 2, 2) == Catch::Approx(24.0));
    }

    SECTION("dipole-quadrupole gives 6") {
        REQUIRE(f_nm(dip, rod, Rotation(), Rotation(), 1, 2) == Catch::Approx(6.0));
    }

    SECTION("orders outside 2 <= n+m <= 5 are rejected") {
        REQUIRE_THROWS_AS(f_nm(rod, rod, Rotation(), Rotation(), 3, 3), unsupported_order_error);
        REQUIRE_THROWS_AS(f_nm(rod, rod, Rotation(), Rotation(), 0, 2), unsupported_order_error);
    }

    SECTION("sign rule (property test)") {
        RngStream rng(8);
        for (int rep = 0; rep < 10; ++rep) {
            MultipoleSet a = compute_multipoles(random_neutral(rng));
            MultipoleSet b = compute_multipoles(random_neutral(rng));
            Rotation U = haar_sample(rng), V = haar_sample(rng);
            for (auto [n, m] : InteractionTable::supported_orders()) {
                double lhs = f_nm(a, b, U, V, n, m);
                double sign = ((n + m) % 2 == 0) ? 1.0 : -1.0;
                double rhs = sign * f_nm(b, a, V, U, m, n);
                REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-10).margin(1e-12));
            }
        }
    }

    SECTION("haar average vanishes (small monte carlo)") {
        RngStream rng(14);
        MultipoleSet a = compute_multipoles(random_neutral(rng));
        MultipoleSet b = compute_multipoles(random_neutral(rng));
        Rotation V = haar_sample(rng);
        const int S = 20000;
        for (auto [n, m] : {std::pair{1, 1}, std::pair{2, 2}, std::pair{2, 3}}) {
            std::vector<double> vals(S);
            for (int i = 0; i < S; ++i)
                vals[i] = f_nm(a, b, haar_sample(rng), V, n, m);
            auto ms = mean_std(vals);
            REQUIRE(std::abs(ms.mean) <= 5.0 * ms.std / std::sqrt(double(S)));
        }
    }
}

TEST_CASE("interaction_expansion") {
    SECTION("all moments zero gives zero at every order") {
        ChargeDistribution atom = icosahedral_atom();
        for (int N : {2, 3, 4, 5}) {
            auto [table, value] = interaction_expansion(atom, atom, Rotation(), Rotation(), 50.0, N);
            REQUIRE(value == Catch::Approx(0.0).margin(1e-12));
        }
    }

    SECTION("rod pair at L = 100 matches the oracle") {
        ChargeDistribution rod = rod3();
        auto [table, value] = interaction_expansion(rod, rod, Rotation(), Rotation(), 100.0, 5);
        REQUIRE(value == Catch::Approx(24.0 / std::pow(100.0, 5)).epsilon(1e-6));
        double exact = direct_coulomb(rod, rod, Rotation(), Rotation(), 100.0);
        REQUIRE(value == Catch::Approx(exact).epsilon(1e-2));
    }

    SECTION("fat dipole pair at L = 50: residual at seventh order") {
        ChargeDistribution d = dipole_pair(Vec3::UnitX(), 1.0);
        auto [table, value] = interaction_expansion(d, d, Rotation(), Rotation(), 50.0, 5);
        REQUIRE(value == Catch::Approx(-2.0 / std::pow(50.0, 3)).epsilon(1e-3));
        // fit C on smaller L, then check the bound at L = 50
        double C = 0.0;
        for (double L : {20.0, 30.0, 40.0}) {
            double diff = std::abs(interaction_expansion(d, d, Rotation(), Rotation(), L, 5).second -
                                   direct_coulomb(d, d, Rotation(), Rotation(), L));
            C = std::max(C, diff * std::pow(L, 7));
        }
        double diff50 = std::abs(value - direct_coulomb(d, d, Rotation(), Rotation(), 50.0));
        REQUIRE(diff50 <= 1.5 * C / std::pow(50.0, 7));
    }

    SECTION("oracle decay slope (light version of the acceptance run)") {
        RngStream rng(77);
        Rotation U = haar_sample(rng), V = haar_sample(rng);
        auto [a, b] = conditioned_pair(rng, U, V);
        for (int N : {2, 4}) {
            std::vector<double> Ls = {30, 60, 120, 240};
            std::vector<double> errs;
            for (double L : Ls)
                errs.push_back(interaction_expansion(a, b, U, V, L, N).second -
                               direct_coulomb(a, b, U, V, L));
            REQUIRE(loglog_slope(Ls, errs) == Catch::Approx(-(N + 2)).margin(0.2));
        }
    }

    SECTION("support condition enforced") {
        ChargeDistribution rod = rod3();
        REQUIRE_THROWS_AS(interaction_expansion(rod, rod, Rotation(), Rotation(), 2.5, 4),
                          out_of_domain_error);
    }
}

TEST_CASE("pairwise_multimolecule_energy") {
    MultipoleSet rodm = compute_multipoles(rod3());

    SECTION("K = 2 reduces to interaction_expansion") {
        ChargeDistribution rod = rod3();
        RngStream rng(19);
        Rotation U = haar_sample(rng), V = haar_sample(rng);
        double L = 40.0;
        auto [table, expect] = interaction_expansion(rod, rod, U, V, L, 5);
        std::vector<MoleculePlacement> pl(2);
        pl[0] = {rodm, U, Vec3::Zero(), rod.max_radius()};
        pl[1] = {rodm, V, L * Vec3::UnitX(), rod.max_radius()};
        REQUIRE(pairwise_multimolecule_energy(pl, 5) == Catch::Approx(expect).epsilon(1e-12));
    }

    SECTION("aligned equilateral triangle of rods: three equal pair terms") {
        double side = 200.0;
        Rotation A = Rotation::between(Vec3::UnitX(), Vec3::UnitZ()); // rod axis -> normal
        std::vector<Vec3> verts = {Vec3(0, 0, 0), Vec3(side, 0, 0),
                                   Vec3(side / 2, side * std::sqrt(3.0) / 2, 0)};
        std::vector<MoleculePlacement> pl;
        std::vector<ChargeDistribution> dists;
        for (const auto& v : verts) {
            pl.push_back({rodm, A, v, rod3().max_radius()});
            dists.push_back(rod3());
        }
        double total = pairwise_multimolecule_energy(pl, 5);
        std::vector<MoleculePlacement> pair = {pl[0], pl[1]};
        double one = pairwise_multimolecule_energy(pair, 5);
        REQUIRE(total == Catch::Approx(3.0 * one).epsilon(1e-9));
        REQUIRE(total == Catch::Approx(lab_coulomb(pl, dists)).epsilon(1e-3));
    }

    SECTION("a molecule with no moments up to order 4 contributes nothing") {
        MultipoleSet atomm = compute_multipoles(icosahedral_atom());
        RngStream rng(20);
        std::vector<MoleculePlacement> pl(3);
        pl[0] = {rodm, haar_sample(rng), Vec3::Zero(), 1.0};
        pl[1] = {rodm, haar_sample(rng), Vec3(60, 10, -4), 1.0};
        pl[2] = {atomm, haar_sample(rng), Vec3(-30, 55, 12), 1.0};
        double with = pairwise_multimolecule_energy(pl, 5);
        std::vector<MoleculePlacement> two = {pl[0], pl[1]};
        double without = pairwise_multimolecule_energy(two, 5);
        REQUIRE(with == Catch::Approx(without).margin(1e-15));
    }

    SECTION("invariance under a global rotation of all placements") {
        RngStream rng(21);
        std::vector<MoleculePlacement> pl(3);
        pl[0] = {rodm, haar_sample(rng), Vec3::Zero(), 1.0};
        pl[1] = {rodm, haar_sample(rng), Vec3(70, -20, 5), 1.0};
        pl[2] = {compute_multipoles(tetrahedral()), haar_sample(rng), Vec3(10, 65, -40), 2.0};
        double base = pairwise_multimolecule_energy(pl, 5);
        for (int rep = 0; rep < 5; ++rep) {
            Rotation G = haar_sample(rng);
            std::vector<MoleculePlacement> rot = pl;
            for (auto& p : rot) {
                p.rotation = G * p.rotation;
                p.center = G * p.center;
            }
            REQUIRE(pairwise_multimolecule_energy(rot, 5) ==
                    Catch::Approx(base).epsilon(1e-9));
        }
    }

    SECTION("overlapping supports rejected") {
        std::vector<MoleculePlacement> pl(2);
        pl[0] = {rodm, Rotation(), Vec3::Zero(), 1.0};
        pl[1] = {rodm, Rotation(), Vec3(2.0, 0, 0), 1.0};
        REQUIRE_THROWS_AS(pairwise_multimolecule_energy(pl, 4), out_of_domain_error);
    }
}
