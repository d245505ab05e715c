#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "coldplasma/stix.hpp"

using namespace coldplasma;

namespace {

Eigen::Matrix3cd to_eigen(const CMat3& m) {
    Eigen::Matrix3cd out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out(r, c) = m(r, c);
    return out;
}
Eigen::Matrix3d to_eigen(const Mat3& m) {
    Eigen::Matrix3d out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out(r, c) = m(r, c);
    return out;
}

Vec3 random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 b{{n(rng), n(rng), n(rng)}};
    while (norm(b) < 0.2) b = {{n(rng), n(rng), n(rng)}};
    return b * (1.0 / norm(b));
}

} // namespace

TEST_CASE("stix frame canonical and random cases", "[stix]") {
    auto f = stix_frame({{0, 0, 1}});
    REQUIRE(f.e1[0] == Catch::Approx(1.0));
    REQUIRE(std::abs(f.e1[1]) < 1e-15);
    REQUIRE(std::abs(f.e1[2]) < 1e-15);
    REQUIRE(f.e2[1] == Catch::Approx(1.0));

    auto fx = stix_frame({{1, 0, 0}});
    REQUIRE(std::abs(dot(fx.e1, fx.e2)) < 1e-14);
    const Vec3 c = cross(fx.e1, fx.e2);
    for (int i = 0; i < 3; ++i) REQUIRE(c[i] == Catch::Approx(fx.e3[i]).margin(1e-14));

    std::mt19937_64 rng(7);
    for (int t = 0; t < 200; ++t) {
        const Vec3 b = random_unit(rng);
        auto fr = stix_frame(b);
        const std::array<Vec3, 3> e{fr.e1, fr.e2, fr.e3};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double gram = dot(e[i], e[j]);
                REQUIRE(std::abs(gram - (i == j ? 1.0 : 0.0)) < 1e-12);
            }
        const Vec3 cr = cross(fr.e1, fr.e2);
        for (int i = 0; i < 3; ++i) REQUIRE(std::abs(cr[i] - b[i]) < 1e-12);
    }

    REQUIRE_THROWS_AS(stix_frame({{0, 0, 1.01}}), DegenerateDirection);
}

TEST_CASE("assemble_M matches the Stix-frame display and the cross formula", "[stix]") {
    const Mat3 m = assemble_M(1.0, 2.0, {{0, 0, 1}});
    const double expect[9] = {1, -2, 0, 2, 1, 0, 0, 0, 1};
    for (int i = 0; i < 9; ++i) REQUIRE(m.m[i] == Catch::Approx(expect[i]).margin(1e-15));

    const Mat3 iso = assemble_M(0.7, 0.0, {{0, 1, 0}});
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            REQUIRE(iso(r, c) == Catch::Approx(r == c ? 0.7 : 0.0).margin(1e-15));

    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const Vec3 b = random_unit(rng);
        const double nu = std::abs(n(rng)), Om = n(rng);
        const Mat3 M = assemble_M(nu, Om, b);
        const Vec3 v{{n(rng), n(rng), n(rng)}};
        const Vec3 lhs = M * v;
        const Vec3 rhs = cross(b, v) * Om + v * nu;
        for (int i = 0; i < 3; ++i)
            REQUIRE(std::abs(lhs[i] - rhs[i]) <= 1e-13 * (1.0 + norm(rhs)));
    }
}

TEST_CASE("inv_shifted_M closed form vs LU oracle", "[stix]") {
    // alpha=0, Omega=0, nu=1: identity.
    const CMat3 id = inv_shifted_M(0.0, 1.0, 0.0, {{0, 0, 1}});
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            REQUIRE(std::abs(id(r, c) - Complex(r == c ? 1.0 : 0.0)) < 1e-14);

    std::mt19937_64 rng(13);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (int t = 0; t < 500; ++t) {
        const Vec3 b = (t == 0) ? Vec3{{0, 0, 1}} : random_unit(rng);
        const double nu = (t == 0) ? 1.0 : u(rng);
        const double Om = (t == 0) ? 2.0 : n(rng) * 2.0;
        const double alpha = (t == 0) ? 0.5 : n(rng) * 3.0;

        const CMat3 inv = inv_shifted_M(alpha, nu, Om, b);
        const CMat3 shifted = to_complex(assemble_M(nu, Om, b));
        CMat3 ia = shifted;
        for (int r = 0; r < 3; ++r) ia(r, r) += Complex(0.0, alpha);

        // product with (i alpha I + M) is the identity
        const CMat3 prod = ia * inv;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                REQUIRE(std::abs(prod(r, c) - Complex(r == c ? 1.0 : 0.0)) < 1e-12);

        // generic numeric inversion oracle
        const Eigen::Matrix3cd oracle = to_eigen(ia).partialPivLu().inverse();
        const Eigen::Matrix3cd mine = to_eigen(inv);
        REQUIRE((mine - oracle).norm() <= 1e-12 * oracle.norm());

        // normal matrix: operator norm equals spectral radius
        const Eigen::JacobiSVD<Eigen::Matrix3cd> svd(mine);
        const double opnorm = svd.singularValues()(0);
        Eigen::ComplexEigenSolver<Eigen::Matrix3cd> es(mine);
        const double rho = es.eigenvalues().cwiseAbs().maxCoeff();
        REQUIRE(opnorm == Catch::Approx(rho).epsilon(1e-10));
    }

    // nu = 0 and alpha = Omega makes d_s vanish.
    REQUIRE_THROWS_AS(inv_shifted_M(2.0, 0.0, 2.0, {{0, 0, 1}}), SingularShift);
}

TEST_CASE("I + lambda M is uniformly positive for admissible lambda", "[stix]") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int t = 0; t < 200; ++t) {
        const double nu = u(rng), Om = n(rng) * 2.0;
        const double lam_max = 0.5 / std::max(nu + std::abs(Om), 1e-6);
        const double lam = lam_max * (0.05 + 0.95 * u(rng) / 2.0);
        const Vec3 b = random_unit(rng);
        const Mat3 A = assemble_M(nu, Om, b) * lam + Mat3::identity();
        const Vec3 v{{n(rng), n(rng), n(rng)}};
        REQUIRE(dot(A * v, v) >= dot(v, v) * (1.0 - 1e-13));

        const Mat3 inv = inv_I_plus_lambda_M(lam, nu, Om, b);
        const Mat3 prod = A * inv;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                REQUIRE(std::abs(prod(r, c) - (r == c ? 1.0 : 0.0)) < 1e-12);
    }
}

TEST_CASE("assemble_D scalar reduction, positivity, per-species oracle", "[stix]") {
    MediumPoint p;
    p.b = {{0, 0, 1}};
    p.add(1.3, 0.8, 0.0);
    p.add(0.7, 0.8, 0.0);
    const double lam = 0.2;
    const CMat3 D = assemble_D({false, lam}, p);
    const double scalar = (1.3 * 1.3 + 0.7 * 0.7) / (1.0 + lam * 0.8);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            REQUIRE(std::abs(D(r, c) - Complex(r == c ? scalar : 0.0)) < 1e-13);

    std::mt19937_64 rng(23);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    for (int t = 0; t < 100; ++t) {
        MediumPoint q;
        q.b = random_unit(rng);
        q.add(u(rng), u(rng), n(rng) * 2.0);
        q.add(u(rng), u(rng), n(rng) * 2.0);
        const double lmax = 0.5 / (2.0 + 4.0);
        const double lambda = lmax * u(rng) / 2.0;
        const CMat3 Dl = assemble_D({false, lambda}, q);
        for (int rep = 0; rep < 100; ++rep) {
            const Vec3 v{{n(rng), n(rng), n(rng)}};
            const CVec3 cv{{Complex(v[0]), Complex(v[1]), Complex(v[2])}};
            const Complex quad = cdot(cv, Dl * cv);
            REQUIRE(std::real(quad) >= -1e-12);
        }

        const double alpha = n(rng) * 3.0;
        const CMat3 Da = assemble_D({true, alpha}, q);
        Eigen::Matrix3cd oracle = Eigen::Matrix3cd::Zero();
        for (int s = 0; s < q.count; ++s) {
            const auto& sp = q.species[s];
            Eigen::Matrix3cd ia = to_eigen(assemble_M(sp.nu, sp.Omega_c, q.b)).cast<Complex>();
            ia += Complex(0.0, alpha) * Eigen::Matrix3cd::Identity();
            oracle += sp.omega_p * sp.omega_p * ia.partialPivLu().inverse();
        }
        REQUIRE((to_eigen(Da) - oracle).norm() <= 1e-12 * (1.0 + oracle.norm()));
    }
}

TEST_CASE("B_alpha eigen triple and normality", "[stix]") {
    {
        MediumPoint p;
        p.b = {{0, 0, 1}};
        p.add(1.0, 1.0, 0.0);
        auto [B, tri] = B_alpha(0.0, p);
        REQUIRE(std::abs(tri.lambda3 - Complex(1.0, 0.0)) < 1e-14);
        REQUIRE(std::real(tri.lambda3) == Catch::Approx(1.0));
    }

    std::mt19937_64 rng(29);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.2, 2.5);
    for (int t = 0; t < 300; ++t) {
        MediumPoint p;
        p.b = random_unit(rng);
        p.add(u(rng), u(rng), n(rng) * 2.0);
        p.add(u(rng), u(rng), n(rng) * 2.0);
        const double alpha = (t % 5 == 0) ? 0.0 : n(rng) * 4.0;

        auto [B, tri] = B_alpha(alpha, p);
        const Eigen::Matrix3cd Be = to_eigen(B);

        // normality
        const Eigen::Matrix3cd comm = Be * Be.adjoint() - Be.adjoint() * Be;
        REQUIRE(comm.norm() < 1e-11 * std::max(1.0, Be.norm() * Be.norm()));

        // eigen triple vs generic eigensolver, multiset match
        Eigen::ComplexEigenSolver<Eigen::Matrix3cd> es(Be);
        std::vector<Complex> got{es.eigenvalues()(0), es.eigenvalues()(1), es.eigenvalues()(2)};
        const double scale = std::max(1.0, Be.norm());
        for (Complex lam : {tri.lambda1, tri.lambda2, tri.lambda3}) {
            double best = 1e300;
            size_t best_i = 0;
            for (size_t i = 0; i < got.size(); ++i)
                if (std::abs(got[i] - lam) < best) {
                    best = std::abs(got[i] - lam);
                    best_i = i;
                }
            REQUIRE(best <= 1e-10 * scale);
            got.erase(got.begin() + static_cast<long>(best_i));
        }

        // det(B - lambda_j I) residual
        for (Complex lam : {tri.lambda1, tri.lambda2, tri.lambda3}) {
            const Eigen::Matrix3cd shifted = Be - lam * Eigen::Matrix3cd::Identity();
            REQUIRE(std::abs(shifted.determinant()) < 1e-9 * std::pow(std::max(1.0, Be.norm()), 3));
        }

        // closed real parts agree with the complex route and are positive
        const auto re = b_alpha_re_eigenvalues(alpha, p);
        REQUIRE(re[0] == Catch::Approx(std::real(tri.lambda1)).margin(1e-11));
        REQUIRE(re[1] == Catch::Approx(std::real(tri.lambda2)).margin(1e-11));
        REQUIRE(re[2] == Catch::Approx(std::real(tri.lambda3)).margin(1e-11));
        REQUIRE(re[0] > 0.0);
        REQUIRE(re[1] > 0.0);
        REQUIRE(re[2] > 0.0);
    }
}

TEST_CASE("zeta_eta: scans, Lemma bound, ramp oracle", "[stix]") {
    Grid g{1.0, 1.0, 1.0, 3, 2, 2};
    MediumSpec spec;
    spec.species.push_back({"electron", Profile::constant(1.2), Profile::ramp(0, 0.5, 1.5, 1.0), -1, 1.0});
    spec.species.push_back({"ion", Profile::constant(0.9), Profile::ramp(0, 0.5, 1.5, 1.0), +1, 0.4});
    spec.B_ext = VectorProfile::uniform({{0.3, 0.1, 1.5}});
    auto m = sample_medium(spec, g);

    const double alpha = 1.7;
    const auto ze = zeta_eta(alpha, m);
    REQUIRE(ze.zeta > 0.0);
    REQUIRE(ze.eta >= ze.zeta);

    // exhaustive scan oracle via the generic eigensolver route
    double zeta_scan = 1e300, eta_scan = 0.0;
    for (int f = 0; f < 3; ++f) {
        const auto d = g.edge_dims(f);
        for (int i = 0; i < d[0]; ++i)
            for (int j = 0; j < d[1]; ++j)
                for (int k = 0; k < d[2]; ++k) {
                    auto [B, tri] = B_alpha(alpha, medium_point(m, f, i, j, k));
                    Eigen::ComplexEigenSolver<Eigen::Matrix3cd> es(to_eigen(B));
                    for (int e = 0; e < 3; ++e) {
                        zeta_scan = std::min(zeta_scan, std::real(es.eigenvalues()(e)));
                        eta_scan = std::max(eta_scan, std::abs(es.eigenvalues()(e)));
                    }
                }
    }
    REQUIRE(ze.zeta == Catch::Approx(zeta_scan).epsilon(1e-9));
    REQUIRE(ze.eta == Catch::Approx(eta_scan).epsilon(1e-9));

    // uniform medium: zeta equals the pointwise minimum of the closed forms
    MediumSpec uspec;
    uspec.species.push_back({"electron", Profile::constant(1.0), Profile::constant(0.7), -1, 1.0});
    uspec.species.push_back({"ion", Profile::constant(0.5), Profile::constant(0.7), +1, 0.2});
    uspec.B_ext = VectorProfile::uniform({{0, 0, 2.0}});
    auto um = sample_medium(uspec, Grid{1, 1, 1, 2, 2, 2});
    auto uze = zeta_eta(alpha, um);
    const auto re = b_alpha_re_eigenvalues(alpha, medium_point(um, 0, 0, 0, 0));
    REQUIRE(uze.zeta == Catch::Approx(std::min({re[0], re[1], re[2]})).epsilon(1e-12));

    // Lemma: eta (v*v) >= |v* B v| >= Re(v* B v) >= zeta (v*v)
    std::mt19937_64 rng(31);
    std::normal_distribution<double> n(0.0, 1.0);
    int checked = 0;
    while (checked < 1000) {
        const int f = static_cast<int>(rng() % 3);
        const auto d = g.edge_dims(f);
        const int i = static_cast<int>(rng() % static_cast<unsigned>(d[0]));
        const int j = static_cast<int>(rng() % static_cast<unsigned>(d[1]));
        const int k = static_cast<int>(rng() % static_cast<unsigned>(d[2]));
        auto [B, tri] = B_alpha(alpha, medium_point(m, f, i, j, k));
        CVec3 v{{Complex(n(rng), n(rng)), Complex(n(rng), n(rng)), Complex(n(rng), n(rng))}};
        const double vv = std::real(cdot(v, v));
        if (vv < 1e-12) continue;
        const Complex q = cdot(v, B * v);
        REQUIRE(ze.eta * vv >= std::abs(q) * (1.0 - 1e-11));
        REQUIRE(std::abs(q) >= std::real(q) * (1.0 - 1e-15));
        REQUIRE(std::real(q) >= ze.zeta * vv * (1.0 - 1e-11));
        ++checked;
    }

    // nu == 0 medium: zeta is not positive
    MediumSpec zspec = uspec;
    zspec.species[0].nu = Profile::constant(0.0);
    zspec.species[1].nu = Profile::constant(0.0);
    auto zm = sample_medium(zspec, Grid{1, 1, 1, 2, 2, 2});
    REQUIRE_THROWS_AS(zeta_eta(0.5, zm), NonPositiveZeta);
}
