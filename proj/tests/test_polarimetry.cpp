#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "polarsdf/polarimetry.hpp"

using namespace polarsdf;

namespace {

constexpr double pi = std::numbers::pi;

// Malus-law intensity behind an ideal linear polarizer, written out directly
// from the partially polarized beam decomposition (unpolarized part plus a
// fully polarized part at angle psi).
double malus(double s0, double dolp, double psi, double theta)
{
    const double pol = dolp * s0;
    return 0.5 * (s0 - pol) + pol * std::cos(theta - psi) * std::cos(theta - psi);
}

} // namespace

TEST_CASE("stokes from four analyzer intensities")
{
    SUBCASE("unpolarized light")
    {
        const auto s = stokes_from_intensities({0.5, 0.5, 0.5, 0.5});
        CHECK(s.s0 == doctest::Approx(1.0));
        CHECK(s.s1 == doctest::Approx(0.0));
        CHECK(s.s2 == doctest::Approx(0.0));
        CHECK(s.s3 == 0.0);
    }
    SUBCASE("horizontal polarizer")
    {
        const auto s = stokes_from_intensities({1.0, 0.5, 0.0, 0.5});
        CHECK(s.s0 == doctest::Approx(1.0));
        CHECK(s.s1 == doctest::Approx(1.0));
        CHECK(s.s2 == doctest::Approx(0.0));
    }
    SUBCASE("negative or non-finite intensities are rejected")
    {
        CHECK_THROWS_AS(stokes_from_intensities({-0.1, 0.5, 0.5, 0.5}), InvalidInput);
        CHECK_THROWS_AS(stokes_from_intensities({NAN, 0.5, 0.5, 0.5}), InvalidInput);
    }
}

TEST_CASE("analyzer intensities agree with Malus law")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double s0 = 0.1 + u(rng), dolp = u(rng), psi = pi * u(rng);
        const StokesVector s{s0, dolp * s0 * std::cos(2 * psi), dolp * s0 * std::sin(2 * psi), 0.0};
        for (double th : {0.0, pi / 4, pi / 2, 3 * pi / 4, 0.3}) {
            CHECK(analyzer_intensity(s, th) == doctest::Approx(malus(s0, dolp, psi, th)).epsilon(1e-12));
        }
        const auto I = intensities_from_stokes(s);
        CHECK(I.i0 == doctest::Approx(malus(s0, dolp, psi, 0.0)).epsilon(1e-12));
        CHECK(I.i135 == doctest::Approx(malus(s0, dolp, psi, 3 * pi / 4)).epsilon(1e-12));
    }
}

TEST_CASE("stokes round trip through analyzer intensities")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double s0 = 1e-3 + 10.0 * u(rng), dolp = u(rng), ang = 2 * pi * u(rng);
        const StokesVector s{s0, dolp * s0 * std::cos(ang), dolp * s0 * std::sin(ang), 0.0};
        const auto r = stokes_from_intensities(intensities_from_stokes(s));
        worst = std::max({worst, std::abs(r.s0 - s.s0), std::abs(r.s1 - s.s1), std::abs(r.s2 - s.s2)});
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("angle of polarization")
{
    CHECK(aop({1, 1, 0, 0}) == doctest::Approx(0.0));
    CHECK(aop({1, 0, 1, 0}) == doctest::Approx(pi / 4));
    CHECK(aop({1, -1, 0, 0}) == doctest::Approx(pi / 2));
    CHECK(aop({1, 0, -1, 0}) == doctest::Approx(3 * pi / 4));
    CHECK_THROWS_AS(aop({1, 0, 0, 0}), DegeneratePolarization);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double psi = pi * u(rng) * 0.999999;
        const double k = 0.01 + u(rng);
        const StokesVector s{2.0, k * std::cos(2 * psi), k * std::sin(2 * psi), 0.0};
        const double a = aop(s);
        CHECK(a >= 0.0);
        CHECK(a < pi);
        CHECK(a == doctest::Approx(psi).epsilon(1e-9));
        // Invariant under intensity scaling.
        CHECK(aop(s * 3.5) == doctest::Approx(a).epsilon(1e-12));
        // The analyzer at the AoP transmits the maximum.
        CHECK(analyzer_intensity(s, a) >= analyzer_intensity(s, a + 0.01));
        CHECK(analyzer_intensity(s, a) >= analyzer_intensity(s, a - 0.01));
    }
}

TEST_CASE("wrap to [0, pi)")
{
    CHECK(wrap_pi(-0.1) == doctest::Approx(pi - 0.1));
    CHECK(wrap_pi(pi) == doctest::Approx(0.0));
    CHECK(wrap_pi(7 * pi + 0.2) == doctest::Approx(0.2));
    for (double a = -20; a < 20; a += 0.37) {
        const double w = wrap_pi(a);
        CHECK(w >= 0.0);
        CHECK(w < pi);
    }
}

TEST_CASE("degree of linear polarization and physical check")
{
    StokesVector s{2.0, 1.0, 0.0, 0.0};
    CHECK(s.dolp() == doctest::Approx(0.5));
    CHECK(s.physical());
    CHECK_FALSE(StokesVector{1.0, 1.0, 1.0, 0.0}.physical());
}

TEST_CASE("polarized image validation and aop map")
{
    PolarizedImage img(2, 1, 3);
    img.mask = {1, 1};
    for (int c = 0; c < 3; ++c) {
        img.at(0, 0, c) = {1.0, 0.0, 0.2, 0.0};
        img.at(1, 0, c) = {1.0, 0.0, 0.0, 0.0};
    }
    img.validate();
    const auto m = aop_map(img);
    CHECK(m.ok(0, 0));
    CHECK(m.at(0, 0) == doctest::Approx(pi / 4));
    CHECK_FALSE(m.ok(1, 0));

    img.at(1, 0, 1).s3 = 0.1;
    CHECK_THROWS_AS(img.validate(), InvalidInput);
    img.at(1, 0, 1).s3 = 0.0;
    img.at(1, 0, 2).s0 = NAN;
    CHECK_THROWS_AS(img.validate(), InvalidInput);
}
