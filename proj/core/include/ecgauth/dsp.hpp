#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ecgauth/record.hpp"

namespace ecgauth {

struct FilterSpec {
    double low_cut_hz = 0.5;
    double high_cut_hz = 40.0;
    int order = 4;  // pole count of the bandpass; must be even

    void validate(int fs) const;  // requires 0 < low < high < fs/2
};

enum class PeakKind { R, P, T };

struct PeakList {
    PeakKind kind = PeakKind::R;
    std::vector<std::size_t> indices;  // strictly increasing
    int fs = 0;
};

/// One second-order section, direct form II transposed.
/// y[n] = b0 x[n] + s1;  s1' = b1 x[n] - a1 y[n] + s2;  s2' = b2 x[n] - a2 y[n]
struct Biquad {
    double b0, b1, b2;
    double a1, a2;
};

/// Butterworth bandpass as a biquad cascade via the bilinear transform.
std::vector<Biquad> design_butterworth_bandpass(const FilterSpec& spec, int fs);

/// Forward-backward (zero phase) application of a biquad cascade. Uses
/// odd-reflection edge padding and steady-state initial conditions, so the
/// operation is linear in the input and a constant input maps to the filter's
/// DC response without startup transient.
std::vector<double> filtfilt(std::span<const Biquad> sos, std::span<const double> x);

EcgRecord bandpass(const EcgRecord& record, const FilterSpec& spec);

/// Linear-interpolation resampling to target_fs; new length
/// round(n * target_fs / fs). target_fs == fs returns the samples unchanged.
EcgRecord resample(const EcgRecord& record, int target_fs);

/// Endpoint-preserving linear resample of an arbitrary run to out_len samples.
std::vector<double> resample_to_length(std::span<const double> x, std::size_t out_len);

/// Affine min-max map onto [-512, 512]. Constant input is an error.
std::vector<double> normalize(std::span<const double> x);

/// Pan-Tompkins QRS detection: 5-15 Hz bandpass, five-point derivative,
/// squaring, 150 ms moving-window integration, dual adaptive thresholds with
/// search-back. Indices are on the record's own timebase.
PeakList detect_r_peaks(const EcgRecord& record);

struct BeatFiducials {
    std::size_t r = 0;
    std::optional<std::size_t> p;  // absent when the search window underflows
    std::optional<std::size_t> t;
};

/// Window-search delineation around each R peak. Expects a noise-reduced
/// record (run bandpass first); P is the maximum in [r-0.24s, r-0.06s], T the
/// maximum magnitude in [r+0.08s, r+0.40s].
std::vector<BeatFiducials> delineate_beats(const EcgRecord& record, const PeakList& r_peaks);
std::pair<PeakList, PeakList> delineate_pt(const EcgRecord& record, const PeakList& r_peaks);

}  // namespace ecgauth
