#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ecgauth/feature.hpp"
#include "ecgauth/segment.hpp"

namespace ecgauth {

enum class LayerKind : std::uint8_t { Conv1D, ReLU, MaxPool1D, AdaptiveMaxPool1D, Flatten };

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    // Conv1D: stride fixed at 1, odd kernel, zero same-padding
    int in_ch = 0, out_ch = 0, kernel = 0;
    bool same_pad = true;
    // MaxPool1D
    int window = 0, stride = 0;
    // AdaptiveMaxPool1D
    int target_len = 0;

    static LayerSpec conv(int in_ch, int out_ch, int kernel);
    static LayerSpec relu();
    static LayerSpec max_pool(int window, int stride);
    static LayerSpec adaptive_max_pool(int target_len);
    static LayerSpec flatten();
};

/// Weights of one Conv1D layer. w is laid out [out_ch][in_ch][kernel].
/// Quantized models carry integer payloads qw/qb at scale 2^-n instead of w/b;
/// pruned models carry a keep-mask congruent to w.
struct ConvTensor {
    int out_ch = 0, in_ch = 0, kernel = 0;
    std::vector<double> w, b;
    std::vector<std::int64_t> qw, qb;
    std::vector<std::uint8_t> mask;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_ch) * in_ch * kernel;
    }
};

enum class PrecisionKind : std::uint8_t { Full = 0, Quantized = 1, Pruned = 2 };

struct EncoderModel {
    std::vector<LayerSpec> layers;
    std::vector<ConvTensor> conv;  // one entry per Conv1D layer, in order
    PrecisionKind precision = PrecisionKind::Full;
    int quant_bits = 0;
    int input_len = static_cast<int>(kSegmentLength);

    int feature_dim() const;

    /// Validates the shape chain and initializes weights uniformly in
    /// +-sqrt(6/(fan_in+fan_out)), biases zero.
    static EncoderModel build(std::vector<LayerSpec> layers, int input_len, std::uint64_t seed);

    /// The production architecture: six conv/ReLU/pool blocks mapping a
    /// 1x1000 segment to a 1x2304 feature vector.
    static EncoderModel canonical(std::uint64_t seed);
};

/// Audits a layer chain over the given input length; returns the flattened
/// output dimension or throws ShapeMismatch.
int audit_shape(std::span<const LayerSpec> layers, int input_len);

std::vector<double> forward(const EncoderModel& model, std::span<const double> input);
FeatureVector forward(const EncoderModel& model, const Segment& segment);

/// Activations recorded by a forward pass, as needed for backpropagation.
struct ForwardTrace {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[i+1] = layer i output
};

ForwardTrace forward_traced(const EncoderModel& model, std::span<const double> input);

struct ConvGrad {
    std::vector<double> dw, db;
};

struct Gradients {
    std::vector<ConvGrad> conv;

    static Gradients zeros_like(const EncoderModel& model);
    void accumulate(const Gradients& other, double scale = 1.0);
    bool finite() const;
};

/// Reverse-mode gradients of <upstream, output> with respect to every conv
/// weight and bias. Max pooling routes gradient to the argmax, lowest index
/// on ties; ReLU passes gradient only where the pre-activation is positive.
Gradients backward(const EncoderModel& model, const ForwardTrace& trace,
                   std::span<const double> upstream);
Gradients backward(const EncoderModel& model, const Segment& segment,
                   std::span<const double> upstream);

std::vector<std::uint8_t> serialize_model(const EncoderModel& model);
EncoderModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_model(const std::filesystem::path& path);

/// SHA-256 of the serialized model; template databases bind to this.
std::array<std::uint8_t, 32> model_fingerprint(const EncoderModel& model);

}  // namespace ecgauth
