// Integer-order Bessel functions used by the kernel calculators.
//
// x <= 2: ascending power series (A&S 9.1.11 / 9.6.11 with digamma sums).
// x >  2: Steed's CF1/CF2 pair for J and Y, Temme's CF2 for K, both run
//         at order 0 and lifted to order 1 by the Wronskian-free relations
//         J1 = -J0', Y1 = -Y0', K1 from the CF2 ratio.

#include "cslab/numerics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cslab::numerics {

namespace {

constexpr double kEuler = 0.57721566490153286061;
constexpr double kEps = 1e-16;
constexpr double kFpMin = 1e-300;
constexpr int kMaxIter = 100000;
constexpr double kSplit = 2.0;

void require_positive(double x, const char* who) {
    if (!(x > 0.0) || !std::isfinite(x)) throw std::domain_error(std::string(who) + ": argument must be positive");
}

struct SeriesJY {
    double j0, j1, y0, y1;
};

struct SeriesIK {
    double k0, k1;
};

SeriesJY series_jy(double x) {
    const double q = -0.25 * x * x;
    const double lx = std::log(0.5 * x);
    // order 0
    double term = 1.0, j0 = 1.0, harm = 0.0, ysum = 0.0;
    for (int k = 1; k < 200; ++k) {
        term *= q / (static_cast<double>(k) * k);
        harm += 1.0 / k;
        j0 += term;
        ysum += -harm * term;  // (-1)^(k+1) H_k (x^2/4)^k/(k!)^2 == -H_k * term
        if (std::abs(term) < kEps * std::abs(j0) && k > 3) break;
    }
    const double y0 = (2.0 / std::numbers::pi) * ((lx + kEuler) * j0 + ysum);
    // order 1
    term = 1.0;
    double j1s = 1.0;
    double psi1 = -kEuler, psi2 = 1.0 - kEuler;  // psi(k+1), psi(k+2) at k = 0
    double dsum = psi1 + psi2;
    for (int k = 1; k < 200; ++k) {
        term *= q / (static_cast<double>(k) * (k + 1));
        psi1 += 1.0 / k;
        psi2 += 1.0 / (k + 1);
        j1s += term;
        dsum += (psi1 + psi2) * term;
        if (std::abs(term) < kEps * std::abs(j1s) && k > 3) break;
    }
    const double j1 = 0.5 * x * j1s;
    const double y1 = -2.0 / (std::numbers::pi * x) + (2.0 / std::numbers::pi) * lx * j1 -
                      (x / (2.0 * std::numbers::pi)) * dsum;
    return {j0, j1, y0, y1};
}

SeriesIK series_k(double x) {
    const double q = 0.25 * x * x;
    const double lx = std::log(0.5 * x);
    double term = 1.0, i0 = 1.0, harm = 0.0, ksum = 0.0;
    for (int k = 1; k < 200; ++k) {
        term *= q / (static_cast<double>(k) * k);
        harm += 1.0 / k;
        i0 += term;
        ksum += harm * term;
        if (term < kEps * i0 && k > 3) break;
    }
    const double k0 = -(lx + kEuler) * i0 + ksum;
    term = 1.0;
    double i1s = 1.0;
    double psi1 = -kEuler, psi2 = 1.0 - kEuler;
    double dsum = psi1 + psi2;
    for (int k = 1; k < 200; ++k) {
        term *= q / (static_cast<double>(k) * (k + 1));
        psi1 += 1.0 / k;
        psi2 += 1.0 / (k + 1);
        i1s += term;
        dsum += (psi1 + psi2) * term;
        if (term < kEps * i1s && k > 3) break;
    }
    const double i1 = 0.5 * x * i1s;
    const double k1 = 1.0 / x + lx * i1 - 0.25 * x * dsum;
    return {k0, k1};
}

// Steed's method at order 0 (NR bessjy with nu = 0, x >= 2).
SeriesJY steed_jy(double x) {
    const double xi = 1.0 / x, xi2 = 2.0 * xi, w = xi2 / std::numbers::pi;
    int isign = 1;
    double h = kFpMin, b = 0.0, d = 0.0, c = h;
    int i = 0;
    for (; i < kMaxIter; ++i) {
        b += xi2;
        d = b - d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = b - 1.0 / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = c * d;
        h *= del;
        if (d < 0.0) isign = -isign;
        if (std::abs(del - 1.0) <= kEps) break;
    }
    if (i == kMaxIter) throw std::runtime_error("bessel: CF1 failed to converge");
    const double rjl = isign * kFpMin;
    const double f = h;  // J0'/J0

    double a = 0.25, p = -0.5 * xi, q = 1.0;
    const double br = 2.0 * x;
    double bi = 2.0;
    double fact = a * xi / (p * p + q * q);
    double cr = br + q * fact, ci = bi + p * fact;
    double den = br * br + bi * bi;
    double dr = br / den, di = -bi / den;
    double dlr = cr * dr - ci * di, dli = cr * di + ci * dr;
    double temp = p * dlr - q * dli;
    q = p * dli + q * dlr;
    p = temp;
    for (i = 1; i < kMaxIter; ++i) {
        a += 2.0 * i;
        bi += 2.0;
        dr = a * dr + br;
        di = a * di + bi;
        if (std::abs(dr) + std::abs(di) < kFpMin) dr = kFpMin;
        fact = a / (cr * cr + ci * ci);
        cr = br + cr * fact;
        ci = bi - ci * fact;
        if (std::abs(cr) + std::abs(ci) < kFpMin) cr = kFpMin;
        den = dr * dr + di * di;
        dr /= den;
        di /= -den;
        dlr = cr * dr - ci * di;
        dli = cr * di + ci * dr;
        temp = p * dlr - q * dli;
        q = p * dli + q * dlr;
        p = temp;
        if (std::abs(dlr - 1.0) + std::abs(dli) <= kEps) break;
    }
    if (i == kMaxIter) throw std::runtime_error("bessel: CF2 failed to converge");
    const double gam = (p - f) / q;
    double j0 = std::sqrt(w / ((p - f) * gam + q));
    j0 = std::copysign(j0, rjl);
    const double y0 = j0 * gam;
    const double y0p = y0 * (p + q / gam);
    return {j0, -f * j0, y0, -y0p};
}

// Temme's CF2 for K at order 0 (NR bessik, x >= 2).
SeriesIK temme_k(double x) {
    const double xi = 1.0 / x;
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d, delh = d;
    double q1 = 0.0, q2 = 1.0;
    const double a1 = 0.25;
    double q = a1, c = a1, a = -a1;
    double s = 1.0 + q * delh;
    int i = 1;
    for (; i < kMaxIter; ++i) {
        a -= 2.0 * i;
        c = -a * c / (i + 1.0);
        const double qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        const double dels = q * delh;
        s += dels;
        if (std::abs(dels / s) < kEps) break;
    }
    if (i == kMaxIter) throw std::runtime_error("bessel: K continued fraction failed to converge");
    h *= a1;
    const double k0 = std::sqrt(std::numbers::pi / (2.0 * x)) * std::exp(-x) / s;
    const double k1 = k0 * (x + 0.5 - h) * xi;
    return {k0, k1};
}

SeriesJY jy(double x) { return x <= kSplit ? series_jy(x) : steed_jy(x); }
SeriesIK kk(double x) { return x <= kSplit ? series_k(x) : temme_k(x); }

} // namespace

double bessel_k0(double x) {
    require_positive(x, "bessel_k0");
    return kk(x).k0;
}

double bessel_k1(double x) {
    require_positive(x, "bessel_k1");
    return kk(x).k1;
}

double bessel_y0(double x) {
    require_positive(x, "bessel_y0");
    return jy(x).y0;
}

double bessel_y1(double x) {
    require_positive(x, "bessel_y1");
    return jy(x).y1;
}

double bessel_j0(double x) {
    require_positive(x, "bessel_j0");
    return jy(x).j0;
}

double bessel_j1(double x) {
    require_positive(x, "bessel_j1");
    return jy(x).j1;
}

} // namespace cslab::numerics
