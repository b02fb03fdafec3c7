#pragma once

// Independent reference implementations used as test oracles. These stay
// deliberately separate from the production code paths they check.

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "ecgauth/dsp.hpp"
#include "ecgauth/encoder.hpp"

namespace oracle {

/// Bit-level decode of one format-212 3-byte group: low byte plus low nibble
/// form the first 12-bit sample, high nibble plus third byte the second,
/// both two's complement.
std::pair<int, int> decode_212(std::uint8_t b0, std::uint8_t b1, std::uint8_t b2);

/// Straight-loop reference encoder: per-output-element window scans with
/// explicit zero padding, channels kept as separate rows.
std::vector<double> naive_forward(const ecgauth::EncoderModel& model,
                                  std::span<const double> input);

/// Reference for the integer shift-add path: double arithmetic over
/// reconstructed weights qw/2^n, with the input and every conv output
/// snapped to the 2^-n activation grid exactly where the integer pipeline
/// rounds.
std::vector<double> fixed_point_reference_forward(const ecgauth::EncoderModel& qmodel,
                                                  std::span<const double> input);

/// |Pearson r| evaluated directly from the defining formula.
double naive_abs_pearson(std::span<const double> x, std::span<const double> y);

/// Amplitude gain of the zero-phase cascade at freq_hz, measured from the
/// steady-state response to a sinusoid (central third of a 6 s probe).
double measure_filtfilt_gain(std::span<const ecgauth::Biquad> sos, double freq_hz, int fs);

/// Central finite difference d(eval)/d(param).
double central_difference(const std::function<double()>& eval, double& param, double eps);

/// Relative error with an absolute floor for near-zero pairs.
double rel_error(double a, double b, double floor = 1e-8);

}  // namespace oracle
