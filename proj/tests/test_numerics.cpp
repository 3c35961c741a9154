#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cslab/numerics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

using namespace cslab::numerics;

namespace {

// mpmath, 30 digits: x, K0, K1, Y0, Y1
struct KYRef {
    double x, k0, k1, y0, y1;
};
constexpr KYRef kKY[] = {
    {0.05, 3.1142340294719898, 19.909674325882505, -1.9793110008172096, -12.78985517117497},
    {0.1, 2.4270690247020166, 9.8538447808706056, -1.5342386513503668, -6.4589510947020266},
    {0.25, 1.5415067512483028, 3.7470259744407116, -0.93157302493005869, -2.7041052293152824},
    {0.5, 0.92441907122766586, 1.6564411200033009, -0.44451873350670656, -1.4714723926702431},
    {0.8, 0.56534710526589563, 0.86178163447218027, -0.086802279656606718, -0.97814417668335887},
    {1.0, 0.42102443824070833, 0.60190723019723457, 0.088256964215676958, -0.78121282130028872},
    {1.5, 0.21380556264752574, 0.27738780045684382, 0.38244892379775884, -0.4123086269739113},
    {1.99, 0.1153017675517768, 0.14171756162240131, 0.50927712019200982, -0.1126814084217741},
    {2.0, 0.11389387274953344, 0.13986588181652243, 0.51037567264974512, -0.10703243154093755},
    {2.01, 0.11250436099872805, 0.13804087731920771, 0.51141783604726119, -0.10140362210171799},
    {2.5, 0.062347553200366186, 0.073890816347747064, 0.49807035961523189, 0.1459181379667858},
    {3.0, 0.034739504386279248, 0.040156431128194184, 0.37685001001279038, 0.32467442479179998},
    {4.0, 0.011159676085853024, 0.012483498887268431, -0.016940739325064992, 0.39792571055710001},
    {5.0, 0.0036910983340425943, 0.0040446134454521642, -0.30851762524903378, 0.14786314339122684},
    {7.5, 0.00024917761635611439, 0.00026529739012528953, 0.11731328614820863, -0.25912851048611625},
    {10.0, 1.7780062316167652e-5, 1.8648773453825585e-5, 0.055671167283599391, 0.24901542420695388},
    {15.0, 9.8195364823964345e-8, 1.0141729369762092e-7, 0.20546429603891826, 0.021073628036873512},
    {20.0, 5.7412378153365243e-10, 5.8830579695570382e-10, 0.062640596809383831, -0.1655116143625213},
    {30.0, 2.1324774964630564e-14, 2.1677320018915494e-14, -0.11729573168666403, 0.084425570661747235},
    {50.0, 3.4101677497894955e-23, 3.4441022267175556e-23, -0.098064995470077079, -0.056795668562014768},
};

struct JRef {
    double x, j0, j1;
};
constexpr JRef kJ[] = {
    {0.05, 0.99937509764946858, 0.024992188313759701},  {0.1, 0.99750156206604003, 0.049937526036242},
    {0.25, 0.9844359292958527, 0.12402597732272692},    {0.5, 0.9384698072408129, 0.24226845767487389},
    {0.8, 0.84628735275048025, 0.36884204609417001},    {1.0, 0.76519768655796655, 0.44005058574493352},
    {1.5, 0.51182767173591813, 0.55793650791009964},    {1.99, 0.22966118404558944, 0.57734949404681154},
    {2.0, 0.22389077914123567, 0.57672480775687339},    {2.01, 0.21812682132584891, 0.57606009095475477},
    {2.5, -0.048383776468197996, 0.49709410246427404},  {3.0, -0.26005195490193344, 0.33905895852593646},
    {4.0, -0.39714980986384737, -0.066043328023549136}, {5.0, -0.1775967713143383, -0.32757913759146522},
    {7.5, 0.2663396578803784, 0.13524842757970551},     {10.0, -0.24593576445134834, 0.043472746168861437},
    {15.0, -0.014224472826780773, 0.20510403861352276}, {20.0, 0.16702466434058315, 0.066833124175850046},
    {30.0, -0.086367983581040211, -0.11875106261662294}, {50.0, 0.055812327669251815, -0.097511828125175138},
};

double abs_scaled(double got, double ref) { return std::abs(got - ref) / std::max(1.0, std::abs(ref)); }

} // namespace

TEST_CASE("modified Bessel K0, K1 match reference table to 1e-10 relative") {
    for (const auto& r : kKY) {
        CAPTURE(r.x);
        CHECK(std::abs(bessel_k0(r.x) / r.k0 - 1.0) < 1e-10);
        CHECK(std::abs(bessel_k1(r.x) / r.k1 - 1.0) < 1e-10);
    }
}

TEST_CASE("Bessel Y0, Y1 match reference table to 1e-10") {
    for (const auto& r : kKY) {
        CAPTURE(r.x);
        CHECK(abs_scaled(bessel_y0(r.x), r.y0) < 1e-10);
        CHECK(abs_scaled(bessel_y1(r.x), r.y1) < 1e-10);
    }
}

TEST_CASE("Bessel J0, J1 match reference table to 1e-10") {
    for (const auto& r : kJ) {
        CAPTURE(r.x);
        CHECK(abs_scaled(bessel_j0(r.x), r.j0) < 1e-10);
        CHECK(abs_scaled(bessel_j1(r.x), r.j1) < 1e-10);
    }
}

TEST_CASE("Bessel Wronskian J1 Y0 - J0 Y1 = 2 / (pi x)") {
    for (double x = 0.3; x < 60.0; x *= 1.37) {
        const double w = bessel_j1(x) * bessel_y0(x) - bessel_j0(x) * bessel_y1(x);
        CHECK(w * std::numbers::pi * x / 2.0 == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("Bessel functions reject nonpositive arguments") {
    CHECK_THROWS_AS(bessel_k0(0.0), std::domain_error);
    CHECK_THROWS_AS(bessel_y1(-1.0), std::domain_error);
}

TEST_CASE("Gauss-Hermite rule integrates Gaussian moments exactly") {
    for (int n : {1, 2, 5, 20, 64}) {
        const auto rule = gauss_hermite(n);
        double m0 = 0.0, m2 = 0.0, m4 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = rule.nodes[i], w = rule.weights[i];
            m0 += w;
            m2 += w * x * x;
            m4 += w * x * x * x * x;
        }
        const double sp = std::sqrt(std::numbers::pi);
        CHECK(m0 == doctest::Approx(sp).epsilon(1e-13));
        if (n >= 2) CHECK(m2 == doctest::Approx(sp / 2.0).epsilon(1e-12));
        if (n >= 3) CHECK(m4 == doctest::Approx(0.75 * sp).epsilon(1e-12));
    }
    // int exp(-x^2) cos(x) dx = sqrt(pi) exp(-1/4)
    const auto rule = gauss_hermite(40);
    double s = 0.0;
    for (int i = 0; i < 40; ++i) s += rule.weights[i] * std::cos(rule.nodes[i]);
    CHECK(s == doctest::Approx(std::sqrt(std::numbers::pi) * std::exp(-0.25)).epsilon(1e-13));
}

TEST_CASE("Rng streams are reproducible and distinct") {
    Rng a(7, 3), b(7, 3), c(7, 4);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.normal();
        CHECK(x == b.normal());
        differs |= x != c.normal();
    }
    CHECK(differs);
}

TEST_CASE("compensated sum recovers small terms") {
    CompensatedSum s;
    s.add(1e16);
    for (int i = 0; i < 1000; ++i) s.add(1.0);
    s.add(-1e16);
    CHECK(s.value() == 1000.0);
}

TEST_CASE("fft then ifft returns n times the input; single tone lands in one bin") {
    const int n = 16;
    std::vector<cplx> x(n);
    for (int k = 0; k < n; ++k) x[k] = std::polar(1.0, 2.0 * std::numbers::pi * 3 * k / n);
    const auto f = fft(x);
    for (int m = 0; m < n; ++m) CHECK(std::abs(f[m] - (m == 3 ? cplx(n) : cplx(0))) < 1e-12);
    const auto back = ifft(f);
    for (int k = 0; k < n; ++k) CHECK(std::abs(back[k] / double(n) - x[k]) < 1e-13);
    CHECK(dft_frequency(3, n, 0.5) == doctest::Approx(2.0 * std::numbers::pi * 3 / (n * 0.5)));
    CHECK(dft_frequency(n - 1, n, 0.5) < 0.0);
}

TEST_CASE("convolve3d agrees with direct summation") {
    Array3 a(3, 2, 4), b(2, 3, 2);
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] = std::sin(1.0 + i);
    for (std::size_t i = 0; i < b.size(); ++i) b.data[i] = std::cos(0.5 * i);
    const Array3 c = convolve3d(a, b);
    REQUIRE(c.nx == 4);
    REQUIRE(c.ny == 4);
    REQUIRE(c.nz == 5);
    for (int i = 0; i < c.nx; ++i)
        for (int j = 0; j < c.ny; ++j)
            for (int k = 0; k < c.nz; ++k) {
                double s = 0.0;
                for (int p = 0; p < a.nx; ++p)
                    for (int q = 0; q < a.ny; ++q)
                        for (int r = 0; r < a.nz; ++r) {
                            const int u = i - p, v = j - q, w = k - r;
                            if (u < 0 || v < 0 || w < 0 || u >= b.nx || v >= b.ny || w >= b.nz) continue;
                            s += a.at(p, q, r) * b.at(u, v, w);
                        }
                CHECK(c.at(i, j, k) == doctest::Approx(s).epsilon(1e-12));
            }
}
