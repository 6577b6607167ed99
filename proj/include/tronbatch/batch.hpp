#pragma once

#include <algorithm>
#include <chrono>
#include <exception>
#include <stdexcept>
#include <thread>
#include <vector>

#include "tronbatch/tron.hpp"

namespace tronbatch {

// Problems above this dimension are rejected at construction.
inline constexpr int kDefaultCapacity = 64;

struct BatchResult {
    std::vector<SolveReport> reports;      // same order as the input problems
    std::vector<double> per_problem_time;  // seconds, measured inside the worker
    std::vector<double> partition_times;   // wall seconds per static partition
    double batch_wall_time = 0.0;
};

// Solves independent problems with a static even partition in input order.
// Each problem is solved single-threaded, so the reports are a pure function
// of (problems, x0s, cfg) regardless of the worker count.
template <BoundedProblem P>
BatchResult solve_batch(const std::vector<P>& problems, const std::vector<Vector>& x0s,
                        const TronConfig& cfg = {}, int workers = 1) {
    using clock = std::chrono::steady_clock;
    if (workers < 1) throw std::invalid_argument("solve_batch: workers must be >= 1");
    if (problems.size() != x0s.size())
        throw std::invalid_argument("solve_batch: problems and x0s length mismatch");
    cfg.validate();

    const int n = static_cast<int>(problems.size());
    BatchResult out;
    out.reports.resize(n);
    out.per_problem_time.assign(n, 0.0);
    out.partition_times.assign(workers, 0.0);

    std::vector<std::exception_ptr> errors(workers);
    auto run_chunk = [&](int k, int lo, int hi) {
        const auto t0 = clock::now();
        try {
            for (int i = lo; i < hi; ++i) {
                const auto ti = clock::now();
                out.reports[i] = solve(problems[i], x0s[i], cfg);
                out.per_problem_time[i] = std::chrono::duration<double>(clock::now() - ti).count();
            }
        } catch (...) {
            errors[k] = std::current_exception();
        }
        out.partition_times[k] = std::chrono::duration<double>(clock::now() - t0).count();
    };

    const auto t0 = clock::now();
    if (workers == 1) {
        run_chunk(0, 0, n);
    } else {
        const int base = n / workers;
        const int rem = n % workers;
        std::vector<std::thread> threads;
        threads.reserve(workers);
        int lo = 0;
        for (int k = 0; k < workers; ++k) {
            const int hi = lo + base + (k < rem ? 1 : 0);
            threads.emplace_back(run_chunk, k, lo, hi);
            lo = hi;
        }
        for (auto& t : threads) t.join();
    }
    out.batch_wall_time = std::chrono::duration<double>(clock::now() - t0).count();

    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

struct ImbalanceStats {
    std::vector<double> nu_per_iter;  // percent imbalance per iteration
    double nu_max = 0.0;
    double nu_min = 0.0;
    double nu_mean = 0.0;
};

// Percent imbalance nu_k = (t_max_k / t_mean_k - 1) * 100 over the partition
// times of each iteration, with max/min/mean aggregates over iterations.
inline ImbalanceStats imbalance(const std::vector<std::vector<double>>& times_per_iter) {
    if (times_per_iter.empty())
        throw std::invalid_argument("imbalance: need at least one iteration");
    ImbalanceStats stats;
    stats.nu_per_iter.reserve(times_per_iter.size());
    for (const auto& times : times_per_iter) {
        if (times.size() < 2) throw std::invalid_argument("imbalance: need at least 2 partitions");
        double tmax = 0.0, tsum = 0.0;
        for (double t : times) {
            if (!(t > 0.0)) throw std::invalid_argument("imbalance: partition times must be positive");
            tmax = std::max(tmax, t);
            tsum += t;
        }
        const double tmean = tsum / static_cast<double>(times.size());
        stats.nu_per_iter.push_back((tmax / tmean - 1.0) * 100.0);
    }
    stats.nu_max = *std::max_element(stats.nu_per_iter.begin(), stats.nu_per_iter.end());
    stats.nu_min = *std::min_element(stats.nu_per_iter.begin(), stats.nu_per_iter.end());
    double s = 0.0;
    for (double nu : stats.nu_per_iter) s += nu;
    stats.nu_mean = s / static_cast<double>(stats.nu_per_iter.size());
    return stats;
}

// Benchmark family: f(x) = 120 - prod_i x_i with bounds 0 <= x_i <= i
// (1-based), optimum at x*_i = i. The zero lower bound and the u/2 default
// start keep the product term well scaled.
class Hs45Problem {
public:
    explicit Hs45Problem(int n, int capacity = kDefaultCapacity) : n_(n) {
        if (n < 1 || n > capacity)
            throw std::invalid_argument("Hs45Problem: dimension out of capacity [1, " +
                                        std::to_string(capacity) + "]");
        l_.assign(n, 0.0);
        u_.resize(n);
        for (int i = 0; i < n; ++i) u_[i] = static_cast<double>(i + 1);
    }

    int dim() const { return n_; }
    const Vector& lower() const { return l_; }
    const Vector& upper() const { return u_; }

    Vector default_start() const { return scal(0.5, u_); }

    double eval_f(const Vector& x) const {
        double prod = 1.0;
        for (int i = 0; i < n_; ++i) prod *= x[i];
        return 120.0 - prod;
    }

    Vector eval_grad(const Vector& x) const {
        // g_i = -prod_{j != i} x_j via prefix/suffix products (zeros allowed)
        Vector prefix(n_ + 1, 1.0), suffix(n_ + 1, 1.0);
        for (int i = 0; i < n_; ++i) prefix[i + 1] = prefix[i] * x[i];
        for (int i = n_ - 1; i >= 0; --i) suffix[i] = suffix[i + 1] * x[i];
        Vector g(n_);
        for (int i = 0; i < n_; ++i) g[i] = -prefix[i] * suffix[i + 1];
        return g;
    }

    DenseMatrix eval_hess(const Vector& x) const {
        Vector prefix(n_ + 1, 1.0), suffix(n_ + 1, 1.0);
        for (int i = 0; i < n_; ++i) prefix[i + 1] = prefix[i] * x[i];
        for (int i = n_ - 1; i >= 0; --i) suffix[i] = suffix[i + 1] * x[i];
        DenseMatrix h(n_);
        for (int i = 0; i < n_; ++i) {
            double mid = 1.0;  // product of x_k for i < k < j, grown incrementally
            for (int j = i + 1; j < n_; ++j) {
                const double v = -prefix[i] * mid * suffix[j + 1];
                h(i, j) = v;
                h(j, i) = v;
                mid *= x[j];
            }
        }
        return h;
    }

private:
    int n_ = 0;
    Vector l_, u_;
};

inline Hs45Problem make_hs45(int n, int capacity = kDefaultCapacity) {
    return Hs45Problem(n, capacity);
}

}  // namespace tronbatch
