#pragma once

#include <span>

#include "ecgauth/feature.hpp"

namespace ecgauth {

struct MatchScore {
    double value = 0.0;  // in [0, 1]
};

struct Threshold {
    double tau = 0.7;  // in (0, 1); 0.7..0.8 is the recommended band
};

/// Signed Pearson correlation coefficient. Both inputs must have nonzero
/// variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Mapping score: |Pearson r|.
MatchScore mapping_score(std::span<const double> x, std::span<const double> y);
MatchScore mapping_score(const FeatureVector& x, const FeatureVector& y);

/// Contrastive distance 1 - |r|, small for similar vectors.
double distance(std::span<const double> x, std::span<const double> y);
double distance(const FeatureVector& x, const FeatureVector& y);

/// Accept iff score > tau, strictly.
bool decide(MatchScore score, Threshold tau);

}  // namespace ecgauth
