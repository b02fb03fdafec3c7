#include "ecgauth/compress.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ecgauth/errors.hpp"

namespace ecgauth {

std::int64_t shift_add_multiply(std::int64_t value, std::int64_t y, ShiftAddOps* ops) {
    if (y == 0) return 0;
    std::uint64_t mag = y < 0 ? static_cast<std::uint64_t>(-(y + 1)) + 1
                              : static_cast<std::uint64_t>(y);
    std::int64_t acc = 0;
    bool first = true;
    while (mag != 0) {
        const int a = std::countr_zero(mag);
        mag &= mag - 1;  // clear lowest set bit
        std::int64_t term;
        if (a >= 63 || __builtin_mul_overflow(value, std::int64_t{1} << a, &term))
            throw AccumulatorOverflow("shift-add term exceeds 64-bit range");
        if (ops) ++ops->shifts;
        if (first) {
            acc = term;
            first = false;
        } else {
            if (__builtin_add_overflow(acc, term, &acc))
                throw AccumulatorOverflow("shift-add accumulator exceeds 64-bit range");
            if (ops) ++ops->adds;
        }
    }
    if (y < 0) {
        acc = -acc;
        if (ops) ++ops->inversions;
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

EncoderModel quantize_model(const EncoderModel& model, int n_bits) {
    if (model.precision == PrecisionKind::Quantized)
        throw Error("model is already quantized");
    if (n_bits < 2 || n_bits > 24) throw InvalidSpec("quantization precision must lie in [2, 24]");

    EncoderModel out = model;
    out.precision = PrecisionKind::Quantized;
    out.quant_bits = n_bits;
    const double scale = std::ldexp(1.0, n_bits);
    for (ConvTensor& t : out.conv) {
        t.qw.resize(t.w.size());
        for (std::size_t i = 0; i < t.w.size(); ++i) t.qw[i] = std::llround(t.w[i] * scale);
        t.qb.resize(t.b.size());
        for (std::size_t i = 0; i < t.b.size(); ++i) t.qb[i] = std::llround(t.b[i] * scale);
        t.w.clear();
        t.b.clear();
        t.mask.clear();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Integer forward pass
// ---------------------------------------------------------------------------

namespace {

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_add_overflow(a, b, &r))
        throw AccumulatorOverflow("conv accumulator exceeds 64-bit range");
    return r;
}

std::int64_t checked_shift_left(std::int64_t v, int bits) {
    std::int64_t r;
    if (__builtin_mul_overflow(v, std::int64_t{1} << bits, &r))
        throw AccumulatorOverflow("scale alignment exceeds 64-bit range");
    return r;
}

// Right shift by n with round-half-away-from-zero; brings a 2^(2n)-scaled
// accumulator back to the 2^n activation scale.
std::int64_t rounding_shift_right(std::int64_t v, int n) {
    const std::int64_t half = std::int64_t{1} << (n - 1);
    return v >= 0 ? (v + half) >> n : -((-v + half) >> n);
}

}  // namespace

std::vector<double> quantized_forward(const EncoderModel& model, std::span<const double> input) {
    if (model.precision != PrecisionKind::Quantized)
        throw Error("quantized_forward requires a quantized model");
    if (static_cast<int>(input.size()) != model.input_len)
        throw ShapeMismatch("input length does not match model");
    audit_shape(model.layers, model.input_len);

    const int n_bits = model.quant_bits;
    // Activations are integers carrying n fractional bits (scale 2^n).
    std::vector<std::int64_t> act(input.size());
    for (std::size_t i = 0; i < input.size(); ++i)
        act[i] = std::llround(std::ldexp(input[i], n_bits));

    int len = model.input_len;
    int ch = 1;
    std::size_t conv_idx = 0;

    for (const LayerSpec& l : model.layers) {
        switch (l.kind) {
            case LayerKind::Conv1D: {
                const ConvTensor& t = model.conv[conv_idx++];
                const int pad = l.same_pad ? (l.kernel - 1) / 2 : 0;
                const int len_out = l.same_pad ? len : len - l.kernel + 1;
                // The accumulator runs at scale 2^(2n): activation times
                // weight; the bias is shifted up to match.
                std::vector<std::int64_t> acc(static_cast<std::size_t>(len_out) * l.out_ch);
                for (int oc = 0; oc < l.out_ch; ++oc) {
                    std::int64_t* out_row = acc.data() + static_cast<std::size_t>(oc) * len_out;
                    std::fill(out_row, out_row + len_out,
                              checked_shift_left(t.qb[static_cast<std::size_t>(oc)], n_bits));
                    for (int ic = 0; ic < l.in_ch; ++ic) {
                        const std::int64_t* in_row =
                            act.data() + static_cast<std::size_t>(ic) * len;
                        const std::int64_t* w_row =
                            t.qw.data() + (static_cast<std::size_t>(oc) * l.in_ch + ic) * l.kernel;
                        for (int k = 0; k < l.kernel; ++k) {
                            const std::int64_t y = w_row[k];
                            if (y == 0) continue;
                            const int off = k - pad;
                            const int t0 = std::max(0, -off);
                            const int t1 = std::min(len_out, len - off);
                            for (int tt = t0; tt < t1; ++tt)
                                out_row[tt] = checked_add(out_row[tt],
                                                          shift_add_multiply(in_row[tt + off], y));
                        }
                    }
                }
                // Single rescale by 2^-n at the layer output.
                act.resize(acc.size());
                for (std::size_t i = 0; i < acc.size(); ++i)
                    act[i] = rounding_shift_right(acc[i], n_bits);
                len = len_out;
                ch = l.out_ch;
                break;
            }
            case LayerKind::ReLU:
                for (auto& v : act)
                    if (v < 0) v = 0;
                break;
            case LayerKind::MaxPool1D: {
                const int len_out = (len - l.window) / l.stride + 1;
                std::vector<std::int64_t> out(static_cast<std::size_t>(len_out) * ch);
                for (int c = 0; c < ch; ++c) {
                    const std::int64_t* in_row = act.data() + static_cast<std::size_t>(c) * len;
                    std::int64_t* out_row = out.data() + static_cast<std::size_t>(c) * len_out;
                    for (int j = 0; j < len_out; ++j) {
                        const int lo = j * l.stride;
                        std::int64_t best = in_row[lo];
                        for (int i = lo + 1; i < lo + l.window; ++i)
                            if (in_row[i] > best) best = in_row[i];
                        out_row[j] = best;
                    }
                }
                act = std::move(out);
                len = len_out;
                break;
            }
            case LayerKind::AdaptiveMaxPool1D: {
                const int target = l.target_len;
                std::vector<std::int64_t> out(static_cast<std::size_t>(target) * ch);
                for (int c = 0; c < ch; ++c) {
                    const std::int64_t* in_row = act.data() + static_cast<std::size_t>(c) * len;
                    std::int64_t* out_row = out.data() + static_cast<std::size_t>(c) * target;
                    for (int j = 0; j < target; ++j) {
                        const int lo = (j * len) / target;
                        const int hi = ((j + 1) * len + target - 1) / target;
                        std::int64_t best = in_row[lo];
                        for (int i = lo + 1; i < hi; ++i)
                            if (in_row[i] > best) best = in_row[i];
                        out_row[j] = best;
                    }
                }
                act = std::move(out);
                len = target;
                break;
            }
            case LayerKind::Flatten:
                break;
        }
    }

    std::vector<double> features(act.size());
    for (std::size_t i = 0; i < act.size(); ++i)
        features[i] = std::ldexp(static_cast<double>(act[i]), -n_bits);
    return features;
}

FeatureVector quantized_forward(const EncoderModel& model, const Segment& segment) {
    FeatureVector fv;
    fv.values = quantized_forward(model, segment.values);
    fv.record_id = segment.record_id;
    fv.subject_id = segment.subject_id;
    return fv;
}

// ---------------------------------------------------------------------------
// Pruning
// ---------------------------------------------------------------------------

std::size_t PruneMask::pruned_count() const {
    std::size_t n = 0;
    for (const auto& layer : keep) n += static_cast<std::size_t>(std::count(layer.begin(), layer.end(), 0));
    return n;
}

std::size_t PruneMask::total_count() const {
    std::size_t n = 0;
    for (const auto& layer : keep) n += layer.size();
    return n;
}

std::pair<EncoderModel, PruneMask> prune(const EncoderModel& model, double sparsity) {
    if (model.precision == PrecisionKind::Quantized)
        throw Error("pruning requires a full-precision model");
    if (!(sparsity >= 0.0 && sparsity < 1.0)) throw InvalidSpec("sparsity must lie in [0, 1)");

    struct Entry {
        double magnitude;
        std::size_t layer, idx;
    };
    // Magnitudes are ranked globally after per-layer RMS normalization.
    // Layers differ in weight scale (fan-in driven), and an unnormalized
    // ranking would concentrate the mask in the smallest-scale layers instead
    // of thinning every layer's multiply count by the sparsity fraction.
    std::vector<double> layer_rms(model.conv.size(), 1.0);
    for (std::size_t li = 0; li < model.conv.size(); ++li) {
        double acc = 0.0;
        for (double w : model.conv[li].w) acc += w * w;
        const double rms =
            std::sqrt(acc / std::max<std::size_t>(1, model.conv[li].w.size()));
        layer_rms[li] = rms > 0.0 ? rms : 1.0;
    }
    std::vector<Entry> entries;
    for (std::size_t li = 0; li < model.conv.size(); ++li)
        for (std::size_t i = 0; i < model.conv[li].w.size(); ++i)
            entries.push_back({std::abs(model.conv[li].w[i]) / layer_rms[li], li, i});

    const auto to_prune =
        static_cast<std::size_t>(std::ceil(sparsity * static_cast<double>(entries.size())));
    // Deterministic selection order: magnitude, then position.
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.idx < b.idx;
    });

    EncoderModel out = model;
    out.precision = PrecisionKind::Pruned;
    PruneMask mask;
    mask.sparsity = sparsity;
    mask.keep.resize(out.conv.size());
    for (std::size_t li = 0; li < out.conv.size(); ++li)
        mask.keep[li].assign(out.conv[li].w.size(), 1);
    for (std::size_t i = 0; i < to_prune; ++i) {
        out.conv[entries[i].layer].w[entries[i].idx] = 0.0;
        mask.keep[entries[i].layer][entries[i].idx] = 0;
    }
    for (std::size_t li = 0; li < out.conv.size(); ++li) {
        // Unpruned weights that happen to be exactly zero would break the
        // mask invariant; mark them pruned as well.
        for (std::size_t i = 0; i < out.conv[li].w.size(); ++i)
            if (out.conv[li].w[i] == 0.0) mask.keep[li][i] = 0;
        out.conv[li].mask = mask.keep[li];
    }
    return {std::move(out), std::move(mask)};
}

// ---------------------------------------------------------------------------
// Cost model
// ---------------------------------------------------------------------------

CostReport cost_report(const EncoderModel& model) {
    audit_shape(model.layers, model.input_len);
    CostReport report;
    switch (model.precision) {
        case PrecisionKind::Full: report.model_tag = "full"; break;
        case PrecisionKind::Quantized:
            report.model_tag = "int" + std::to_string(model.quant_bits);
            break;
        case PrecisionKind::Pruned: report.model_tag = "pruned"; break;
    }

    int len = model.input_len;
    std::size_t conv_idx = 0;
    for (const LayerSpec& l : model.layers) {
        switch (l.kind) {
            case LayerKind::Conv1D: {
                const ConvTensor& t = model.conv[conv_idx++];
                const auto out_len =
                    static_cast<std::uint64_t>(l.same_pad ? len : len - l.kernel + 1);
                if (model.precision == PrecisionKind::Quantized) {
                    for (std::int64_t y : t.qw) {
                        if (y == 0) continue;
                        const auto mag = y < 0 ? static_cast<std::uint64_t>(-(y + 1)) + 1
                                               : static_cast<std::uint64_t>(y);
                        const auto pop = static_cast<std::uint64_t>(std::popcount(mag));
                        report.bit_shifts += pop * out_len;
                        report.additions += pop * out_len;
                        if (y < 0) report.inversions += out_len;
                    }
                    for (std::int64_t y : t.qb)
                        if (y != 0) report.additions += out_len;
                } else {
                    for (double w : t.w) {
                        if (w == 0.0) continue;  // pruned or structurally zero taps cost nothing
                        report.multiplications += out_len;
                        report.additions += out_len;
                    }
                    for (double b : t.b)
                        if (b != 0.0) report.additions += out_len;
                }
                len = static_cast<int>(out_len);
                break;
            }
            case LayerKind::MaxPool1D:
                len = (len - l.window) / l.stride + 1;
                break;
            case LayerKind::AdaptiveMaxPool1D:
                len = l.target_len;
                break;
            default:
                break;
        }
    }
    return report;
}

std::string cost_csv_header() { return "model_tag,mult,inv,shift,add,cycles"; }

std::string cost_csv_row(const CostReport& r) {
    std::ostringstream out;
    out << r.model_tag << "," << r.multiplications << "," << r.inversions << "," << r.bit_shifts
        << "," << r.additions << "," << r.cpu_cycles();
    return out.str();
}

}  // namespace ecgauth
