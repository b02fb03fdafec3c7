#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ecgauth/encoder.hpp"

namespace ecgauth {

struct ShiftAddOps {
    std::uint64_t shifts = 0;
    std::uint64_t adds = 0;
    std::uint64_t inversions = 0;
};

/// Computes value * y through the binary expansion of |y|: one shift per set
/// bit, accumulated by addition, one inversion when y is negative. Exact, or
/// AccumulatorOverflow when the result leaves the signed 64-bit range.
std::int64_t shift_add_multiply(std::int64_t value, std::int64_t y, ShiftAddOps* ops = nullptr);

/// Replaces every weight X by round(2^n * X) stored as an integer with scale
/// n (round half away from zero). Biases are quantized identically.
EncoderModel quantize_model(const EncoderModel& model, int n_bits);

/// Multiplication-free forward pass: integer accumulation per conv layer via
/// shift_add_multiply, a single rescale by 2^-n at each layer output before
/// ReLU/pool, and activations rounded to integers at the next conv boundary.
std::vector<double> quantized_forward(const EncoderModel& model, std::span<const double> input);
FeatureVector quantized_forward(const EncoderModel& model, const Segment& segment);

struct PruneMask {
    std::vector<std::vector<std::uint8_t>> keep;  // per conv layer, congruent to weights
    double sparsity = 0.0;

    std::size_t pruned_count() const;
    std::size_t total_count() const;
};

/// Global magnitude pruning across all conv weights: the ceil(sparsity * W)
/// smallest-magnitude entries are zeroed and masked. During training the
/// trainer zeroes masked gradients and recomputes the mask at its milestones.
std::pair<EncoderModel, PruneMask> prune(const EncoderModel& model, double sparsity);

struct CostReport {
    std::string model_tag;
    std::uint64_t multiplications = 0;
    std::uint64_t inversions = 0;
    std::uint64_t bit_shifts = 0;
    std::uint64_t additions = 0;

    // Cortex-M4 weights: multiplication 3 cycles, the rest 1 cycle each.
    std::uint64_t cpu_cycles() const {
        return 3 * multiplications + inversions + bit_shifts + additions;
    }
};

/// Per-inference operation counts for the model as stored: one multiply and
/// one add per MAC at full precision, shift/add/inversion counts from the
/// quantized weights' set bits, nothing for pruned-away weights.
CostReport cost_report(const EncoderModel& model);

std::string cost_csv_header();
std::string cost_csv_row(const CostReport& report);

}  // namespace ecgauth
