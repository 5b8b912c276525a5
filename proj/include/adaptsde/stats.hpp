#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace adaptsde {

/// Monte Carlo mean with standard error. n < 2 gives an infinite-width interval.
struct Estimate {
    double mean = 0.0;
    double std_err = std::numeric_limits<double>::infinity();
    std::size_t samples = 0;

    bool infinite_ci() const { return samples < 2; }
    /// |mean - target| <= k * stderr. Never true for an infinite interval.
    bool within(double target, double k = 4.0) const;
};

/// Plain sums; merged in a fixed order they reproduce bit-for-bit.
struct MomentSums {
    double n = 0.0;
    double sum = 0.0;
    double sum_sq = 0.0;

    void add(double x) {
        n += 1.0;
        sum += x;
        sum_sq += x * x;
    }
    void merge(const MomentSums& o) {
        n += o.n;
        sum += o.sum;
        sum_sq += o.sum_sq;
    }
    double mean() const { return n > 0 ? sum / n : 0.0; }
    double variance() const;
    Estimate estimate() const;
};

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Ordinary least squares of log(error) on log(x). Needs >= 3 positive points and
/// distinct abscissae. For x = step size the slope is the convergence order; for
/// x = evaluation count the order is -slope.
LinearFit fit_rate(std::span<const double> x, std::span<const double> error);

struct Regression {
    std::vector<double> coef;
    std::vector<double> std_err;
};

/// Streaming normal equations for y ~ X b without intercept.
class LeastSquares {
public:
    LeastSquares() = default;
    explicit LeastSquares(int p) : p_(p), xtx_(static_cast<std::size_t>(p) * p, 0.0), xty_(p, 0.0) {}

    void add(std::span<const double> x, double y);
    void merge(const LeastSquares& o);
    double rows() const { return n_; }
    /// Throws InvalidArgument for a singular design or too few rows.
    Regression solve() const;

private:
    int p_ = 0;
    double n_ = 0.0;
    double yty_ = 0.0;
    std::vector<double> xtx_, xty_;
};

/// X is n x p row-major.
Regression least_squares(std::span<const double> X, std::span<const double> y, int p);

/// Hardware thread count, at least 1. Used when a thread count of 0 is requested.
int default_threads();

/// Runs fn(chunk, begin, end) for every chunk of [0, n) and returns the results indexed
/// by chunk. Chunk boundaries depend only on n and chunk_size, so reducing the returned
/// vector in order gives the same bits for any thread count. The first exception thrown
/// by a worker is rethrown.
template <class R>
std::vector<R> run_chunked(std::size_t n, std::size_t chunk_size, int threads,
                           const std::function<R(std::size_t, std::size_t, std::size_t)>& fn) {
    const std::size_t chunks = n == 0 ? 0 : (n + chunk_size - 1) / chunk_size;
    std::vector<R> out(chunks);
    if (threads <= 0) threads = default_threads();
    const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(threads), chunks));
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto work = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= chunks) return;
            try {
                out[c] = fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                next.store(chunks);
                return;
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < workers; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (err) std::rethrow_exception(err);
    return out;
}

}  // namespace adaptsde
