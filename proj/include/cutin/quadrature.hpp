#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

namespace cutin {

struct QuadRule {
    std::vector<double> x;
    std::vector<double> w;
};

// Composite 8-point Gauss-Legendre on [lo, hi]; `cuts` become panel edges
// (kinks of the integrand) and each piece gets at least `min_panels` panels.
inline QuadRule composite_gauss(double lo, double hi, std::vector<double> cuts, int min_panels) {
    using G = boost::math::quadrature::gauss<double, 8>;
    QuadRule q;
    if (!(hi > lo)) return q;
    cuts.push_back(lo);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    std::vector<double> edges;
    for (double c : cuts)
        if (c >= lo && c <= hi && (edges.empty() || c > edges.back())) edges.push_back(c);

    const auto& abs = G::abscissa();
    const auto& wts = G::weights();
    // Boost stores the non-negative half of a symmetric rule.
    std::vector<std::pair<double, double>> ref;
    for (std::size_t i = 0; i < abs.size(); ++i) {
        ref.push_back({abs[i], wts[i]});
        if (abs[i] != 0.0) ref.push_back({-abs[i], wts[i]});
    }
    std::sort(ref.begin(), ref.end());

    const double total = hi - lo;
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
        double a = edges[e], b = edges[e + 1];
        int panels = std::max(1, int(std::ceil(min_panels * (b - a) / total)));
        double h = (b - a) / panels;
        for (int p = 0; p < panels; ++p) {
            double c = a + (p + 0.5) * h;
            for (auto [xi, wi] : ref) {
                q.x.push_back(c + 0.5 * h * xi);
                q.w.push_back(0.5 * h * wi);
            }
        }
    }
    return q;
}

}  // namespace cutin
