#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "coldplasma/medium.hpp"

using namespace coldplasma;

namespace {

MediumSpec two_species(Profile omega_p, Profile nu, Vec3 Bext) {
    MediumSpec spec;
    spec.species.push_back({"electron", omega_p, nu, -1, 1.0});
    spec.species.push_back({"ion", omega_p, nu, +1, 0.5});
    spec.B_ext = VectorProfile::uniform(Bext);
    return spec;
}

} // namespace

TEST_CASE("uniform external field gives constant b and Omega_c", "[medium]") {
    Grid g{2.0, 2.0, 2.0, 4, 4, 4};
    auto m = sample_medium(two_species(Profile::constant(1.0), Profile::constant(1.0), {{0, 0, 3.0}}), g);

    for (int f = 0; f < 3; ++f) {
        const auto d = g.edge_dims(f);
        for (int i = 0; i < d[0]; ++i)
            for (int j = 0; j < d[1]; ++j)
                for (int k = 0; k < d[2]; ++k) {
                    const Vec3 b = m.b_at(f, i, j, k);
                    REQUIRE(b[0] == 0.0);
                    REQUIRE(b[1] == 0.0);
                    REQUIRE(b[2] == 1.0);
                    REQUIRE(std::abs(norm(b) - 1.0) < 1e-12);
                    REQUIRE(m.species[0].Omega_c[f](i, j, k) == -3.0);
                    REQUIRE(m.species[1].Omega_c[f](i, j, k) == 1.5);
                }
    }
    REQUIRE(m.bounds.hyp1_ok);
    REQUIRE(m.bounds.hyp2_ok);
    REQUIRE(m.bounds.Omega_star == 3.0);
}

TEST_CASE("omega_p vanishing at a sample point fails hyp1 without throwing", "[medium]") {
    Grid g{2.0, 2.0, 2.0, 2, 2, 2};
    // Zero of omega_p placed exactly at an Ey sample location.
    const Vec3 center{{1.0, 0.5, 1.0}};
    auto spec = two_species(Profile::gaussian(center, 0.4, -1.0, 1.0), Profile::constant(1.0),
                            {{0, 0, 1.0}});
    MediumFields m;
    REQUIRE_NOTHROW(m = sample_medium(spec, g));
    REQUIRE_FALSE(m.bounds.hyp1_ok);
    REQUIRE(m.bounds.violation_count > 0);
}

TEST_CASE("zero external field at a sample throws", "[medium]") {
    Grid g{1.0, 1.0, 1.0, 2, 2, 2};
    auto spec = two_species(Profile::constant(1.0), Profile::constant(1.0), {{0, 0, 0}});
    REQUIRE_THROWS_AS(sample_medium(spec, g), ZeroExternalField);
}

TEST_CASE("linear ramp nu bounds", "[medium]") {
    Grid g{1.0, 1.0, 1.0, 5, 3, 3};
    auto spec = two_species(Profile::constant(1.0), Profile::ramp(0, 0.5, 1.5, 1.0), {{0, 0, 1}});
    auto m = sample_medium(spec, g);
    REQUIRE(m.bounds.nu_lower == Catch::Approx(0.5).epsilon(1e-14));
    REQUIRE(m.bounds.nu_star == Catch::Approx(1.5).epsilon(1e-14));
    REQUIRE(m.bounds.hyp2_ok);
}

TEST_CASE("nu == 0 passes hyp1 but fails hyp2", "[medium]") {
    Grid g{1.0, 1.0, 1.0, 3, 3, 3};
    auto m = sample_medium(two_species(Profile::constant(1.0), Profile::constant(0.0), {{0, 0, 1}}), g);
    REQUIRE(m.bounds.hyp1_ok);
    REQUIRE_FALSE(m.bounds.hyp2_ok);

    auto m2 = sample_medium(two_species(Profile::constant(1.0), Profile::constant(1.0), {{0, 0, 2}}), g);
    REQUIRE(m2.bounds.hyp1_ok);
    REQUIRE(m2.bounds.hyp2_ok);
    REQUIRE(m2.bounds.nu_star == 1.0);
    REQUIRE(m2.bounds.Omega_star == 2.0);
}

TEST_CASE("report equals brute-force scan and is idempotent", "[medium]") {
    Grid g{2.0, 1.0, 1.5, 4, 3, 2};
    MediumSpec spec;
    spec.species.push_back({"electron",
                            Profile::product({Profile::ramp(0, 0.7, 1.9, 2.0),
                                              Profile::gaussian({{1.0, 0.5, 0.75}}, 0.8, 0.5, 1.0)}),
                            Profile::gaussian({{0.3, 0.2, 0.4}}, 0.5, 2.0, 0.1), -1, 1.0});
    spec.species.push_back({"ion", Profile::constant(0.8), Profile::ramp(2, 0.05, 0.6, 1.5), +1, 0.3});
    spec.B_ext.comp[0] = Profile::ramp(1, 0.2, 0.9, 1.0);
    spec.B_ext.comp[1] = Profile::constant(0.4);
    spec.B_ext.comp[2] = Profile::gaussian({{1.0, 0.5, 0.75}}, 0.7, 1.0, 0.5);
    auto m = sample_medium(spec, g);

    double nu_star = -1e300, nu_lower = 1e300, omega_star = -1e300, omega_lower = 1e300,
           Omega_star = 0.0;
    for (const auto& s : m.species)
        for (int f = 0; f < 3; ++f) {
            for (double x : s.nu[f].v) {
                nu_star = std::max(nu_star, x);
                nu_lower = std::min(nu_lower, x);
            }
            for (double x : s.omega_p[f].v) {
                omega_star = std::max(omega_star, x);
                omega_lower = std::min(omega_lower, x);
            }
            for (double x : s.Omega_c[f].v) Omega_star = std::max(Omega_star, std::abs(x));
        }
    REQUIRE(m.bounds.nu_star == nu_star);
    REQUIRE(m.bounds.nu_lower == nu_lower);
    REQUIRE(m.bounds.omega_star == omega_star);
    REQUIRE(m.bounds.omega_lower == omega_lower);
    REQUIRE(m.bounds.Omega_star == Omega_star);
    REQUIRE(m.bounds.hyp1_ok == (nu_lower >= 0.0 && omega_lower > 0.0));
    REQUIRE(m.bounds.hyp2_ok == (nu_lower > 0.0 && omega_lower > 0.0));

    // |b| = 1 everywhere sampled.
    for (int f = 0; f < 3; ++f) {
        const auto d = g.edge_dims(f);
        for (int i = 0; i < d[0]; ++i)
            for (int j = 0; j < d[1]; ++j)
                for (int k = 0; k < d[2]; ++k)
                    REQUIRE(std::abs(norm(m.b_at(f, i, j, k)) - 1.0) < 1e-12);
    }

    auto r1 = validate_hypotheses(m);
    auto r2 = validate_hypotheses(m);
    REQUIRE(r1.nu_star == r2.nu_star);
    REQUIRE(r1.nu_lower == r2.nu_lower);
    REQUIRE(r1.omega_star == r2.omega_star);
    REQUIRE(r1.Omega_star == r2.Omega_star);
    REQUIRE(r1.hyp1_ok == r2.hyp1_ok);
    REQUIRE(r1.hyp2_ok == r2.hyp2_ok);
    REQUIRE(r1.violation_count == r2.violation_count);
}
