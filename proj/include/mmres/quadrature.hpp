#pragma once

// Globally adaptive Gauss-Kronrod (7/15) quadrature on a finite interval.

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <vector>

namespace mmres::quad {

struct Result {
    double value = 0.0;
    double error = 0.0;
    int evaluations = 0;
    bool converged = false;
};

namespace detail {

// Kronrod nodes (positive half) and weights; every other node is a Gauss node.
inline constexpr std::array<double, 8> xk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> wk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> wg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
    double a, b, value, error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment gk15(F& f, double a, double b) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    const double fc = f(c);
    double k = wk[7] * fc;
    double g = wg[3] * fc;
    for (int j = 0; j < 7; ++j) {
        const double dx = h * xk[j];
        const double s = f(c - dx) + f(c + dx);
        k += wk[j] * s;
        if (j % 2 == 1) g += wg[j / 2] * s;
    }
    k *= h;
    g *= h;
    return {a, b, k, std::abs(k - g)};
}

} // namespace detail

/// Integrates f over [a, b] until the summed error estimate is below
/// max(abs_tol, rel_tol * |I|) or `max_segments` is reached.
template <class F>
Result integrate(F&& f, double a, double b, double rel_tol = 1e-10, double abs_tol = 0.0,
                 int max_segments = 2000) {
    Result r;
    if (a == b) {
        r.converged = true;
        return r;
    }
    std::priority_queue<detail::Segment> heap;
    auto first = detail::gk15(f, a, b);
    r.evaluations = 15;
    double total = first.value, err = first.error;
    heap.push(first);
    int segments = 1;
    while (err > std::max(abs_tol, rel_tol * std::abs(total))) {
        if (segments >= max_segments) {
            r.value = total;
            r.error = err;
            return r;
        }
        const auto s = heap.top();
        heap.pop();
        const double m = 0.5 * (s.a + s.b);
        const auto left = detail::gk15(f, s.a, m);
        const auto right = detail::gk15(f, m, s.b);
        r.evaluations += 30;
        total += left.value + right.value - s.value;
        err += left.error + right.error - s.error;
        heap.push(left);
        heap.push(right);
        ++segments;
        if (err < 0.0) err = 0.0;
    }
    // Re-sum to avoid drift from incremental updates.
    double sum = 0.0, esum = 0.0;
    while (!heap.empty()) {
        sum += heap.top().value;
        esum += heap.top().error;
        heap.pop();
    }
    r.value = sum;
    r.error = esum;
    r.converged = true;
    return r;
}

} // namespace mmres::quad
