#include "adaptsde/stats.hpp"

#include <cmath>

#include "adaptsde/errors.hpp"

namespace adaptsde {

bool Estimate::within(double target, double k) const {
    if (infinite_ci() || !std::isfinite(std_err)) return false;
    return std::fabs(mean - target) <= k * std_err;
}

double MomentSums::variance() const {
    if (n < 2) return std::numeric_limits<double>::infinity();
    const double m = sum / n;
    return std::max(0.0, (sum_sq - n * m * m) / (n - 1.0));
}

Estimate MomentSums::estimate() const {
    Estimate e;
    e.samples = static_cast<std::size_t>(n);
    e.mean = mean();
    e.std_err = n < 2 ? std::numeric_limits<double>::infinity() : std::sqrt(variance() / n);
    return e;
}

LinearFit fit_rate(std::span<const double> x, std::span<const double> err) {
    if (x.size() != err.size()) throw DimensionMismatch("fit_rate: size mismatch");
    if (x.size() < 3) throw InvalidArgument("fit_rate: need at least 3 points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0) || !(err[i] > 0)) throw InvalidArgument("fit_rate: values must be positive");
        sx += std::log(x[i]);
        sy += std::log(err[i]);
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx, dy = std::log(err[i]) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 1e-300) throw InvalidArgument("fit_rate: degenerate abscissae");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

void LeastSquares::add(std::span<const double> x, double y) {
    if (static_cast<int>(x.size()) != p_) throw DimensionMismatch("LeastSquares: row size");
    for (int i = 0; i < p_; ++i) {
        xty_[i] += x[i] * y;
        for (int j = 0; j < p_; ++j) xtx_[i * p_ + j] += x[i] * x[j];
    }
    yty_ += y * y;
    n_ += 1.0;
}

void LeastSquares::merge(const LeastSquares& o) {
    if (o.p_ == 0) return;
    if (p_ == 0) {
        *this = o;
        return;
    }
    if (o.p_ != p_) throw DimensionMismatch("LeastSquares: merge size");
    for (std::size_t i = 0; i < xtx_.size(); ++i) xtx_[i] += o.xtx_[i];
    for (int i = 0; i < p_; ++i) xty_[i] += o.xty_[i];
    yty_ += o.yty_;
    n_ += o.n_;
}

Regression LeastSquares::solve() const {
    const int p = p_;
    if (p < 1 || n_ <= p) throw InvalidArgument("least squares: too few rows");
    // Cholesky of the normal matrix; p is tiny.
    std::vector<double> L(static_cast<std::size_t>(p) * p, 0.0);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j <= i; ++j) {
            double s = xtx_[i * p + j];
            for (int k = 0; k < j; ++k) s -= L[i * p + k] * L[j * p + k];
            if (i == j) {
                if (s <= 0) throw InvalidArgument("least squares: singular design");
                L[i * p + i] = std::sqrt(s);
            } else {
                L[i * p + j] = s / L[j * p + j];
            }
        }
    auto solve_with = [&](std::vector<double> rhs) {
        for (int i = 0; i < p; ++i) {
            for (int k = 0; k < i; ++k) rhs[i] -= L[i * p + k] * rhs[k];
            rhs[i] /= L[i * p + i];
        }
        for (int i = p - 1; i >= 0; --i) {
            for (int k = i + 1; k < p; ++k) rhs[i] -= L[k * p + i] * rhs[k];
            rhs[i] /= L[i * p + i];
        }
        return rhs;
    };
    Regression reg;
    reg.coef = solve_with(xty_);
    double rss = yty_;
    for (int i = 0; i < p; ++i) rss -= reg.coef[i] * xty_[i];
    const double sigma2 = std::max(0.0, rss) / (n_ - p);
    reg.std_err.resize(p);
    for (int i = 0; i < p; ++i) {
        std::vector<double> e(p, 0.0);
        e[i] = 1.0;
        reg.std_err[i] = std::sqrt(sigma2 * solve_with(e)[i]);
    }
    return reg;
}

Regression least_squares(std::span<const double> X, std::span<const double> y, int p) {
    if (p < 1 || X.size() != y.size() * static_cast<std::size_t>(p)) throw DimensionMismatch("least_squares: shape");
    LeastSquares ls(p);
    for (std::size_t r = 0; r < y.size(); ++r) ls.add(X.subspan(r * p, p), y[r]);
    return ls.solve();
}

int default_threads() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace adaptsde
