#include "ecgauth/metric.hpp"

#include <algorithm>
#include <cmath>

#include "ecgauth/errors.hpp"

namespace ecgauth {

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.empty())
        throw ShapeMismatch("correlation needs two equal-length vectors");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw DegenerateVector("zero-variance vector has no defined correlation");
    // Rounding can push |r| marginally past 1 for affinely related inputs.
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

MatchScore mapping_score(std::span<const double> x, std::span<const double> y) {
    return {std::abs(pearson(x, y))};
}

MatchScore mapping_score(const FeatureVector& x, const FeatureVector& y) {
    return mapping_score(std::span(x.values), std::span(y.values));
}

double distance(std::span<const double> x, std::span<const double> y) {
    return 1.0 - mapping_score(x, y).value;
}

double distance(const FeatureVector& x, const FeatureVector& y) {
    return distance(std::span(x.values), std::span(y.values));
}

bool decide(MatchScore score, Threshold tau) { return score.value > tau.tau; }

}  // namespace ecgauth
