#pragma once

#include <string>
#include <vector>

namespace ecgauth {

/// One subject's raw ECG trace from a single lead.
struct EcgRecord {
    std::string record_id;
    std::string subject_id;
    std::vector<double> samples;  // millivolt-scaled amplitudes
    int fs = 0;                   // sampling rate, Hz
    std::string lead;

    double duration_s() const {
        return fs > 0 ? static_cast<double>(samples.size()) / fs : 0.0;
    }
};

enum class Split { Train, Test, Enroll };
enum class SourceTag { PtbLike, MitLike, EcgidLike, Synthetic };

}  // namespace ecgauth
