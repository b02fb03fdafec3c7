#pragma once

#include <string>
#include <vector>

namespace ecgauth {

inline constexpr std::size_t kFeatureDim = 2304;

/// Embedding emitted by the encoder.
struct FeatureVector {
    std::vector<double> values;
    std::string record_id;
    std::string subject_id;
};

}  // namespace ecgauth
