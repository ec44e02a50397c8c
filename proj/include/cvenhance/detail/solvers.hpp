#pragma once

// Derivative-free 1-D solvers with deterministic iteration caps.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace cvenhance::detail {

inline constexpr int kMaxIterations = 200;

struct MinimizeResult {
    double x = 0.0;
    double fx = 0.0;
    int iterations = 0;
    double bracket = 0.0;
};

/// Golden-section minimisation of f on [lo, hi] until the bracket is at most `tol` wide.
/// The returned point is the better of the two interior probes and both endpoints.
template <class F>
MinimizeResult golden_section(F&& f, double lo, double hi, double tol, int max_iter = kMaxIterations) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    int it = 0;
    while (b - a > tol && it < max_iter) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        ++it;
    }
    MinimizeResult best{c, fc, it, b - a};
    if (fd < best.fx) best.x = d, best.fx = fd;
    for (double edge : {lo, hi}) {
        const double fe = f(edge);
        if (fe < best.fx) best.x = edge, best.fx = fe;
    }
    return best;
}

struct Scan {
    std::vector<double> x;
    std::vector<double> fx;
};

/// Evaluates f on n evenly spaced points spanning [lo, hi] inclusive.
template <class F>
Scan scan(F&& f, double lo, double hi, std::size_t n) {
    Scan s;
    s.x.resize(n);
    s.fx.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.x[i] = (i + 1 == n) ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        s.fx[i] = f(s.x[i]);
    }
    return s;
}

/// Scan then golden-section refinement inside the neighbourhood of the best sample.
template <class F>
MinimizeResult scan_minimize(F&& f, double lo, double hi, double tol, std::size_t samples = 512) {
    const Scan s = scan(f, lo, hi, samples);
    std::size_t best = 0;
    for (std::size_t i = 1; i < samples; ++i)
        if (s.fx[i] < s.fx[best]) best = i;
    const double a = s.x[best == 0 ? 0 : best - 1];
    const double b = s.x[best + 1 == samples ? best : best + 1];
    return golden_section(f, a, b, tol);
}

enum class RootStatus { Converged, NoSignChange };

struct RootResult {
    RootStatus status = RootStatus::NoSignChange;
    double x = 0.0;
    int iterations = 0;
    double bracket = 0.0;
};

/// Bisection for g(x) = 0 on [lo, hi]; requires a sign change at the endpoints.
template <class G>
RootResult bisect(G&& g, double lo, double hi, double tol, int max_iter = kMaxIterations) {
    double ga = g(lo), gb = g(hi);
    if (ga == 0.0) return {RootStatus::Converged, lo, 0, 0.0};
    if (gb == 0.0) return {RootStatus::Converged, hi, 0, 0.0};
    if ((ga < 0.0) == (gb < 0.0)) return {RootStatus::NoSignChange, 0.0, 0, hi - lo};

    double a = lo, b = hi;
    int it = 0;
    while (b - a > tol && it < max_iter) {
        const double m = 0.5 * (a + b);
        if (m <= a || m >= b) break;
        const double gm = g(m);
        ++it;
        if (gm == 0.0) return {RootStatus::Converged, m, it, 0.0};
        if ((gm < 0.0) == (ga < 0.0)) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    return {RootStatus::Converged, 0.5 * (a + b), it, b - a};
}

}  // namespace cvenhance::detail
