#include "cslab/noise_paths.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cslab {

using numerics::cplx;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double integrate(const auto& f, double lo, double hi) {
    if (hi <= lo) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-13);
}

int next_pow2(int n) {
    int m = 1;
    while (m < n) m <<= 1;
    return m;
}

// int_{w0}^{w1} (g0 + s (w - w0)) cos(w tau) dw
double linear_piece_cosine(double w0, double w1, double g0, double g1, double tau) {
    const double s = (w1 - w0) > 0.0 ? (g1 - g0) / (w1 - w0) : 0.0;
    if (std::abs(tau) * w1 < 1e-4) {
        // cos ~ 1 - w^2 tau^2 / 2 on the piece
        auto poly = [&](double w) {
            const double lin = g0 - s * w0;
            return lin * (w - tau * tau * w * w * w / 6.0) + s * (w * w / 2.0 - tau * tau * w * w * w * w / 8.0);
        };
        return poly(w1) - poly(w0);
    }
    auto prim = [&](double w) {
        const double g = g0 + s * (w - w0);
        return g * std::sin(w * tau) / tau + s * std::cos(w * tau) / (tau * tau);
    };
    return prim(w1) - prim(w0);
}

// Overlap integral of two adjacent-or-distant unit cells: int (dt - |u|) G(m dt + u) du over |u| < dt.
double cell_pair_integral(const Kernel& k, int m, double dt) {
    auto f = [&](double u) { return (dt - std::abs(u)) * kernel_value(k, m * dt + u); };
    if (m == 0) return 2.0 * integrate([&](double u) { return (dt - u) * kernel_value(k, u); }, 0.0, dt);
    return integrate(f, -dt, 0.0) + integrate(f, 0.0, dt);
}

std::vector<double> channel_rate(const NoisePath& p, int c) {
    std::vector<double> out(p.grid.n_steps);
    for (int k = 0; k < p.grid.n_steps; ++k) out[k] = p.increment(c, k) / p.grid.dt;
    return out;
}

} // namespace

TimeGrid::TimeGrid(double t0_, double dt_, int n_steps_) : t0(t0_), dt(dt_), n_steps(n_steps_) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("TimeGrid: dt must be positive");
    if (n_steps < 0) throw std::invalid_argument("TimeGrid: n_steps must be nonnegative");
}

double NoisePath::increment(int c, int k) const {
    const auto& v = values.at(c);
    if (kind == NoiseKind::rate) return v.at(k) * grid.dt;
    return v.at(k + 1) - v.at(k);
}

double NoisePath::total(int c) const {
    if (kind == NoiseKind::integrated) return values.at(c).back() - values.at(c).front();
    numerics::CompensatedSum s;
    for (double w : values.at(c)) s.add(w * grid.dt);
    return s.value();
}

NoisePath NoisePath::as_rate() const {
    if (kind == NoiseKind::rate) return *this;
    NoisePath out{grid, NoiseKind::rate, {}};
    for (int c = 0; c < channels(); ++c) out.values.push_back(channel_rate(*this, c));
    return out;
}

Kernel Kernel::delta() { return Kernel{}; }

Kernel Kernel::ornstein_uhlenbeck(double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("Kernel: OU alpha must be positive");
    Kernel k;
    k.kind_ = KernelKind::ornstein_uhlenbeck;
    k.alpha_ = alpha;
    return k;
}

Kernel Kernel::tachyon_nonrel(double a) {
    if (!(a > 0.0)) throw std::invalid_argument("Kernel: tachyon length must be positive");
    Kernel k;
    k.kind_ = KernelKind::tachyon_nonrel;
    k.a_ = a;
    return k;
}

Kernel Kernel::custom_spectral(std::vector<double> omega, std::vector<double> spectrum) {
    if (omega.size() != spectrum.size() || omega.size() < 2)
        throw std::invalid_argument("Kernel: spectral table needs >= 2 matching nodes");
    for (std::size_t i = 0; i < omega.size(); ++i) {
        if (spectrum[i] < 0.0 || !std::isfinite(spectrum[i]))
            throw std::invalid_argument("Kernel: spectral density must be nonnegative");
        if (omega[i] < 0.0 || (i > 0 && omega[i] <= omega[i - 1]))
            throw std::invalid_argument("Kernel: spectral table frequencies must be nonnegative and increasing");
    }
    Kernel k;
    k.kind_ = KernelKind::custom_spectral;
    k.omega_ = std::move(omega);
    k.spec_ = std::move(spectrum);
    return k;
}

double kernel_value(const Kernel& k, double tau) {
    const double t = std::abs(tau);
    switch (k.kind()) {
    case KernelKind::delta:
        return t == 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    case KernelKind::ornstein_uhlenbeck:
        return 0.5 * k.alpha() * std::exp(-k.alpha() * t);
    case KernelKind::tachyon_nonrel: {
        const double c = 1.0 / (kTwoPi * kTwoPi);
        if (t == 0.0) return c / k.a();
        return c * std::sin(t / k.a()) / t;
    }
    case KernelKind::custom_spectral: {
        // G(tau) = (1/pi) int_0^inf Gt(w) cos(w tau) dw
        const auto& w = k.table_omega();
        const auto& g = k.table_spectrum();
        double s = 0.0;
        if (w.front() > 0.0) {
            // flat extension of the first value down to zero frequency
            s += linear_piece_cosine(0.0, w.front(), g.front(), g.front(), t);
        }
        for (std::size_t i = 0; i + 1 < w.size(); ++i) s += linear_piece_cosine(w[i], w[i + 1], g[i], g[i + 1], t);
        return s / std::numbers::pi;
    }
    }
    return 0.0;
}

double spectral_density(const Kernel& k, double omega) {
    const double w = std::abs(omega);
    switch (k.kind()) {
    case KernelKind::delta:
        return 1.0;
    case KernelKind::ornstein_uhlenbeck:
        return k.alpha() * k.alpha() / (w * w + k.alpha() * k.alpha());
    case KernelKind::tachyon_nonrel: {
        const double edge = 1.0 / k.a();
        if (w < edge) return 1.0 / (4.0 * std::numbers::pi);
        if (w == edge) return 1.0 / (8.0 * std::numbers::pi);
        return 0.0;
    }
    case KernelKind::custom_spectral: {
        const auto& x = k.table_omega();
        const auto& y = k.table_spectrum();
        if (w <= x.front()) return y.front();
        if (w > x.back()) return 0.0;
        const auto it = std::upper_bound(x.begin(), x.end(), w);
        const std::size_t i = static_cast<std::size_t>(it - x.begin()) - 1;
        if (i + 1 >= x.size()) return y.back();
        const double f = (w - x[i]) / (x[i + 1] - x[i]);
        return y[i] + f * (y[i + 1] - y[i]);
    }
    }
    return 0.0;
}

double kernel_double_integral(const Kernel& k, double t) {
    if (t <= 0.0) return 0.0;
    switch (k.kind()) {
    case KernelKind::delta:
        return t;
    case KernelKind::ornstein_uhlenbeck:
        return t + std::expm1(-k.alpha() * t) / k.alpha();
    default:
        break;
    }
    // 2 int_0^t (t - tau) G(tau) dtau, split into pieces so oscillatory kernels resolve.
    const double scale = k.kind() == KernelKind::tachyon_nonrel ? k.a() : 1.0 / std::max(1e-300, k.table_omega().back());
    const int pieces = std::clamp(static_cast<int>(std::ceil(t / (std::numbers::pi * scale))), 1, 100000);
    numerics::CompensatedSum s;
    for (int p = 0; p < pieces; ++p) {
        const double lo = t * p / pieces, hi = t * (p + 1) / pieces;
        s.add(integrate([&](double tau) { return (t - tau) * kernel_value(k, tau); }, lo, hi));
    }
    return 2.0 * s.value();
}

Eigen::MatrixXd kernel_cell_gram(const Kernel& k, const TimeGrid& grid) {
    const int n = grid.n_steps;
    const double dt = grid.dt;
    std::vector<double> d(n);
    switch (k.kind()) {
    case KernelKind::delta:
        d.assign(n, 0.0);
        if (n > 0) d[0] = dt;
        break;
    case KernelKind::ornstein_uhlenbeck: {
        const double al = k.alpha();
        if (n > 0) d[0] = dt + std::expm1(-al * dt) / al;
        const double off = (std::cosh(al * dt) - 1.0) / al;
        for (int m = 1; m < n; ++m) d[m] = off * std::exp(-al * m * dt);
        break;
    }
    default:
        for (int m = 0; m < n; ++m) d[m] = cell_pair_integral(k, m, dt);
        break;
    }
    Eigen::MatrixXd g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g(i, j) = d[std::abs(i - j)];
    return g;
}

Eigen::MatrixXd kernel_gram(const Kernel& k, const TimeGrid& grid) {
    const int n = grid.n_steps;
    if (k.kind() == KernelKind::delta) return Eigen::MatrixXd::Identity(n, n) / grid.dt;
    std::vector<double> c(n);
    for (int m = 0; m < n; ++m) c[m] = kernel_value(k, m * grid.dt);
    Eigen::MatrixXd g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g(i, j) = c[std::abs(i - j)];
    return g;
}

NoisePath sample_brownian(const TimeGrid& grid, double diffusion, std::uint64_t seed, std::uint64_t stream,
                          int channels) {
    if (diffusion < 0.0) throw std::invalid_argument("sample_brownian: diffusion must be nonnegative");
    if (channels < 1) throw std::invalid_argument("sample_brownian: channels must be >= 1");
    numerics::Rng rng(seed, stream);
    const double sd = std::sqrt(2.0 * diffusion * grid.dt);
    NoisePath p{grid, NoiseKind::integrated, {}};
    for (int c = 0; c < channels; ++c) {
        std::vector<double> b(grid.n_steps + 1, 0.0);
        for (int k = 0; k < grid.n_steps; ++k) b[k + 1] = b[k] + sd * rng.normal();
        p.values.push_back(std::move(b));
    }
    return p;
}

NoisePath sample_white(const TimeGrid& grid, double lambda, std::uint64_t seed, std::uint64_t stream, int channels) {
    if (lambda < 0.0) throw std::invalid_argument("sample_white: rate must be nonnegative");
    if (channels < 1) throw std::invalid_argument("sample_white: channels must be >= 1");
    numerics::Rng rng(seed, stream);
    const double sd = std::sqrt(kNoiseVariancePerRate * lambda / grid.dt);
    NoisePath p{grid, NoiseKind::rate, {}};
    for (int c = 0; c < channels; ++c) {
        std::vector<double> w(grid.n_steps);
        for (auto& x : w) x = sd * rng.normal();
        p.values.push_back(std::move(w));
    }
    return p;
}

NoisePath sample_colored(const TimeGrid& grid, const Kernel& kernel, std::uint64_t seed, std::uint64_t stream) {
    const int n = grid.n_steps;
    NoisePath p{grid, NoiseKind::rate, {std::vector<double>(n, 0.0)}};
    if (n == 0) return p;
    numerics::Rng rng(seed, stream);
    auto& out = p.values[0];
    if (kernel.kind() == KernelKind::delta) {
        const double sd = 1.0 / std::sqrt(grid.dt);
        for (auto& x : out) x = sd * rng.normal();
        return p;
    }

    // Circulant embedding of the covariance on a grid padded to 4x duration.
    const int m = next_pow2(4 * n);
    std::vector<cplx> c(m);
    for (int j = 0; j <= m / 2; ++j) {
        const double v = kernel_value(kernel, j * grid.dt);
        c[j] = v;
        if (j > 0 && j < m / 2) c[m - j] = v;
    }
    const auto eig = numerics::fft(c);
    double emax = 0.0, emin = 0.0;
    for (const auto& e : eig) {
        emax = std::max(emax, e.real());
        emin = std::min(emin, e.real());
    }
    if (emin >= -1e-8 * emax) {
        std::vector<cplx> z(m);
        for (int l = 0; l < m; ++l) {
            const double s = std::sqrt(std::max(0.0, eig[l].real()) / m);
            const double re = rng.normal();
            const double im = rng.normal();
            z[l] = s * cplx(re, im);
        }
        const auto y = numerics::fft(z);
        for (int k = 0; k < n; ++k) out[k] = y[k].real();
        return p;
    }
    if (n > 2048)
        throw std::runtime_error("sample_colored: circulant embedding is indefinite and the grid is too long for the "
                                 "dense fallback");
    const Eigen::MatrixXd g = kernel_gram(kernel, grid);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    const double gmax = es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues().minCoeff() < -1e-8 * gmax)
        throw std::runtime_error("sample_colored: kernel Gram matrix is not positive semidefinite");
    Eigen::VectorXd z(n);
    for (int k = 0; k < n; ++k) z(k) = rng.normal();
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::VectorXd y = es.eigenvectors() * root.asDiagonal() * z;
    for (int k = 0; k < n; ++k) out[k] = y(k);
    return p;
}

KernelInverse kernel_inverse_finite(const Eigen::MatrixXd& gram, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("kernel_inverse_finite: dt must be positive");
    if (gram.rows() != gram.cols() || gram.rows() == 0)
        throw std::invalid_argument("kernel_inverse_finite: Gram matrix must be square and nonempty");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const auto& ev = es.eigenvalues();
    const double emax = ev.cwiseAbs().maxCoeff();
    const double cut = 1e-10 * emax;
    KernelInverse out;
    out.dimension = static_cast<int>(gram.rows());
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
    double total = 0.0, dropped = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        total += std::abs(ev(i));
        if (ev(i) > cut) {
            inv(i) = 1.0 / ev(i);
            ++out.rank;
        } else {
            dropped += std::abs(ev(i));
        }
    }
    out.discarded_fraction = total > 0.0 ? dropped / total : 0.0;
    out.inverse = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose() / (dt * dt);
    return out;
}

KernelInverse kernel_inverse_finite(const Kernel& kernel, const TimeGrid& grid) {
    if (!(grid.duration() > 0.0)) throw std::invalid_argument("kernel_inverse_finite: empty grid");
    return kernel_inverse_finite(kernel_gram(kernel, grid), grid.dt);
}

NoisePath kernel_sqrt_smear(const Kernel& kernel, const NoisePath& signal) {
    NoisePath in = signal.as_rate();
    const int n = in.grid.n_steps;
    if (kernel.kind() == KernelKind::delta || n == 0) return in;
    const int m = next_pow2(4 * n);
    std::vector<double> gain(m);
    for (int l = 0; l < m; ++l) gain[l] = std::sqrt(spectral_density(kernel, numerics::dft_frequency(l, m, in.grid.dt)));
    for (auto& ch : in.values) {
        std::vector<cplx> buf(m, 0.0);
        for (int k = 0; k < n; ++k) buf[k] = ch[k];
        auto spec = numerics::fft(buf);
        for (int l = 0; l < m; ++l) spec[l] *= gain[l];
        const auto y = numerics::ifft(spec);
        for (int k = 0; k < n; ++k) ch[k] = y[k].real() / m;
    }
    return in;
}

std::vector<double> sqrt_kernel_samples(const Kernel& kernel, double dt, int n) {
    if (n < 1 || !(dt > 0.0)) throw std::invalid_argument("sqrt_kernel_samples: need n >= 1 and dt > 0");
    std::vector<cplx> spec(n);
    for (int l = 0; l < n; ++l) spec[l] = std::sqrt(spectral_density(kernel, numerics::dft_frequency(l, n, dt)));
    const auto g = numerics::ifft(spec);
    std::vector<double> out(n);
    for (int k = 0; k < n; ++k) out[k] = g[k].real() / (n * dt);
    return out;
}

std::vector<double> convolve_with_kernel(const Kernel& kernel, const std::vector<double>& x, double dt) {
    if (kernel.kind() == KernelKind::delta) return x;
    const int n = static_cast<int>(x.size());
    std::vector<double> g(n);
    for (int m = 0; m < n; ++m) g[m] = kernel_value(kernel, m * dt);
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) {
        numerics::CompensatedSum s;
        for (int j = 0; j < n; ++j) s.add(g[std::abs(i - j)] * x[j]);
        y[i] = s.value() * dt;
    }
    return y;
}

void write_noise_csv(std::ostream& os, const NoisePath& path) {
    os << "time";
    for (int c = 0; c < path.channels(); ++c) os << ",w" << c;
    os << '\n';
    const int rows = path.kind == NoiseKind::rate ? path.grid.n_steps : path.grid.n_steps + 1;
    os << std::setprecision(17);
    for (int k = 0; k < rows; ++k) {
        os << path.grid.time(k);
        for (int c = 0; c < path.channels(); ++c) os << ',' << path.values[c][k];
        os << '\n';
    }
}

NoisePath read_noise_csv(std::istream& is, NoiseKind kind) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("read_noise_csv: missing header");
    const int channels = static_cast<int>(std::count(line.begin(), line.end(), ','));
    if (channels < 1) throw std::runtime_error("read_noise_csv: header needs a time column and >= 1 channel");
    std::vector<double> times;
    std::vector<std::vector<double>> values(channels);
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                throw std::runtime_error("read_noise_csv: bad number on line " + std::to_string(lineno));
            }
        }
        if (static_cast<int>(row.size()) != channels + 1)
            throw std::runtime_error("read_noise_csv: wrong column count on line " + std::to_string(lineno));
        times.push_back(row[0]);
        for (int c = 0; c < channels; ++c) values[c].push_back(row[c + 1]);
    }
    if (times.size() < 2) throw std::runtime_error("read_noise_csv: need at least two rows to infer dt");
    const double dt = times[1] - times[0];
    const int n = kind == NoiseKind::rate ? static_cast<int>(times.size()) : static_cast<int>(times.size()) - 1;
    return NoisePath{TimeGrid(times[0], dt, n), kind, std::move(values)};
}

} // namespace cslab
