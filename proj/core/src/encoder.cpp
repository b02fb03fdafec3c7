#include "ecgauth/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ecgauth/errors.hpp"
#include "ecgauth/io_util.hpp"
#include "ecgauth/rng.hpp"

namespace ecgauth {

LayerSpec LayerSpec::conv(int in_ch, int out_ch, int kernel) {
    LayerSpec s;
    s.kind = LayerKind::Conv1D;
    s.in_ch = in_ch;
    s.out_ch = out_ch;
    s.kernel = kernel;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::ReLU;
    return s;
}

LayerSpec LayerSpec::max_pool(int window, int stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool1D;
    s.window = window;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::adaptive_max_pool(int target_len) {
    LayerSpec s;
    s.kind = LayerKind::AdaptiveMaxPool1D;
    s.target_len = target_len;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

int audit_shape(std::span<const LayerSpec> layers, int input_len) {
    if (input_len <= 0) throw ShapeMismatch("input length must be positive");
    int len = input_len;
    int ch = 1;
    int flattened = -1;
    for (const LayerSpec& l : layers) {
        if (flattened != -1) throw ShapeMismatch("no layers may follow Flatten");
        switch (l.kind) {
            case LayerKind::Conv1D: {
                if (l.in_ch != ch)
                    throw ShapeMismatch("conv expects " + std::to_string(l.in_ch) +
                                        " channels, chain provides " + std::to_string(ch));
                if (l.out_ch <= 0 || l.kernel <= 0) throw ShapeMismatch("bad conv dimensions");
                if (l.same_pad && l.kernel % 2 == 0)
                    throw ShapeMismatch("same-padding conv needs an odd kernel");
                len = l.same_pad ? len : len - l.kernel + 1;
                ch = l.out_ch;
                break;
            }
            case LayerKind::ReLU:
                break;
            case LayerKind::MaxPool1D:
                if (l.window <= 0 || l.stride <= 0) throw ShapeMismatch("bad pool dimensions");
                if (len < l.window) throw ShapeMismatch("pool window exceeds input length");
                len = (len - l.window) / l.stride + 1;
                break;
            case LayerKind::AdaptiveMaxPool1D:
                if (l.target_len <= 0 || l.target_len > len)
                    throw ShapeMismatch("adaptive pool target must lie in [1, input length]");
                len = l.target_len;
                break;
            case LayerKind::Flatten:
                flattened = len * ch;
                break;
        }
        if (len <= 0) throw ShapeMismatch("layer chain collapses to zero length");
    }
    if (flattened == -1) throw ShapeMismatch("layer chain must end with Flatten");
    return flattened;
}

int EncoderModel::feature_dim() const { return audit_shape(layers, input_len); }

EncoderModel EncoderModel::build(std::vector<LayerSpec> layers, int input_len,
                                 std::uint64_t seed) {
    audit_shape(layers, input_len);
    EncoderModel model;
    model.layers = std::move(layers);
    model.input_len = input_len;
    Rng rng(seed);
    for (const LayerSpec& l : model.layers) {
        if (l.kind != LayerKind::Conv1D) continue;
        ConvTensor t;
        t.out_ch = l.out_ch;
        t.in_ch = l.in_ch;
        t.kernel = l.kernel;
        const double fan_in = static_cast<double>(l.in_ch) * l.kernel;
        const double fan_out = static_cast<double>(l.out_ch) * l.kernel;
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        t.w.resize(t.weight_count());
        for (double& v : t.w) v = uniform_real(rng, -bound, bound);
        t.b.assign(static_cast<std::size_t>(t.out_ch), 0.0);
        model.conv.push_back(std::move(t));
    }
    return model;
}

EncoderModel EncoderModel::canonical(std::uint64_t seed) {
    std::vector<LayerSpec> layers = {
        LayerSpec::conv(1, 8, 7),    LayerSpec::relu(), LayerSpec::max_pool(2, 2),
        LayerSpec::conv(8, 16, 7),   LayerSpec::relu(), LayerSpec::max_pool(2, 2),
        LayerSpec::conv(16, 32, 5),  LayerSpec::relu(), LayerSpec::max_pool(2, 2),
        LayerSpec::conv(32, 64, 5),  LayerSpec::relu(), LayerSpec::max_pool(2, 2),
        LayerSpec::conv(64, 128, 3), LayerSpec::relu(), LayerSpec::max_pool(2, 2),
        LayerSpec::conv(128, 256, 3), LayerSpec::relu(), LayerSpec::adaptive_max_pool(9),
        LayerSpec::flatten()};
    EncoderModel model = build(std::move(layers), static_cast<int>(kSegmentLength), seed);
    if (model.feature_dim() != static_cast<int>(kFeatureDim))
        throw ShapeMismatch("canonical architecture must emit 2304 features");
    return model;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace {

struct LayerWeights {
    std::span<const double> w, b;
};

// Full and pruned models carry real weights; quantized models are
// reconstructed as qw / 2^n on the fly.
LayerWeights weights_for(const EncoderModel& model, std::size_t conv_idx,
                         std::vector<double>& scratch_w, std::vector<double>& scratch_b) {
    const ConvTensor& t = model.conv[conv_idx];
    if (model.precision != PrecisionKind::Quantized) return {t.w, t.b};
    const double scale = std::ldexp(1.0, -model.quant_bits);
    scratch_w.resize(t.qw.size());
    scratch_b.resize(t.qb.size());
    for (std::size_t i = 0; i < t.qw.size(); ++i)
        scratch_w[i] = static_cast<double>(t.qw[i]) * scale;
    for (std::size_t i = 0; i < t.qb.size(); ++i)
        scratch_b[i] = static_cast<double>(t.qb[i]) * scale;
    return {scratch_w, scratch_b};
}

void conv_forward(const LayerSpec& l, std::span<const double> w, std::span<const double> b,
                  std::span<const double> in, int len_in, std::vector<double>& out,
                  int& len_out) {
    const int pad = l.same_pad ? (l.kernel - 1) / 2 : 0;
    len_out = l.same_pad ? len_in : len_in - l.kernel + 1;
    out.assign(static_cast<std::size_t>(len_out) * l.out_ch, 0.0);
    for (int oc = 0; oc < l.out_ch; ++oc) {
        double* out_row = out.data() + static_cast<std::size_t>(oc) * len_out;
        std::fill(out_row, out_row + len_out, b[static_cast<std::size_t>(oc)]);
        for (int ic = 0; ic < l.in_ch; ++ic) {
            const double* in_row = in.data() + static_cast<std::size_t>(ic) * len_in;
            const double* w_row =
                w.data() + (static_cast<std::size_t>(oc) * l.in_ch + ic) * l.kernel;
            for (int k = 0; k < l.kernel; ++k) {
                const double wv = w_row[k];
                if (wv == 0.0) continue;
                const int off = k - pad;
                const int t0 = std::max(0, -off);
                const int t1 = std::min(len_out, len_in - off);
                for (int t = t0; t < t1; ++t) out_row[t] += wv * in_row[t + off];
            }
        }
    }
}

void pool_forward(const LayerSpec& l, std::span<const double> in, int len_in, int ch,
                  std::vector<double>& out, int& len_out) {
    len_out = (len_in - l.window) / l.stride + 1;
    out.resize(static_cast<std::size_t>(len_out) * ch);
    for (int c = 0; c < ch; ++c) {
        const double* in_row = in.data() + static_cast<std::size_t>(c) * len_in;
        double* out_row = out.data() + static_cast<std::size_t>(c) * len_out;
        for (int j = 0; j < len_out; ++j) {
            const int lo = j * l.stride;
            double best = in_row[lo];
            for (int i = lo + 1; i < lo + l.window; ++i)
                if (in_row[i] > best) best = in_row[i];
            out_row[j] = best;
        }
    }
}

void adaptive_pool_forward(const LayerSpec& l, std::span<const double> in, int len_in, int ch,
                           std::vector<double>& out) {
    const int target = l.target_len;
    out.resize(static_cast<std::size_t>(target) * ch);
    for (int c = 0; c < ch; ++c) {
        const double* in_row = in.data() + static_cast<std::size_t>(c) * len_in;
        double* out_row = out.data() + static_cast<std::size_t>(c) * target;
        for (int j = 0; j < target; ++j) {
            const int lo = (j * len_in) / target;
            const int hi = ((j + 1) * len_in + target - 1) / target;
            double best = in_row[lo];
            for (int i = lo + 1; i < hi; ++i)
                if (in_row[i] > best) best = in_row[i];
            out_row[j] = best;
        }
    }
}

struct ShapeCursor {
    int len, ch;
};

}  // namespace

ForwardTrace forward_traced(const EncoderModel& model, std::span<const double> input) {
    if (static_cast<int>(input.size()) != model.input_len)
        throw ShapeMismatch("input length does not match model");
    audit_shape(model.layers, model.input_len);

    ForwardTrace trace;
    trace.acts.reserve(model.layers.size() + 1);
    trace.acts.emplace_back(input.begin(), input.end());

    std::vector<double> scratch_w, scratch_b;
    ShapeCursor cur{model.input_len, 1};
    std::size_t conv_idx = 0;
    for (const LayerSpec& l : model.layers) {
        const std::vector<double>& in = trace.acts.back();
        std::vector<double> out;
        switch (l.kind) {
            case LayerKind::Conv1D: {
                const auto lw = weights_for(model, conv_idx++, scratch_w, scratch_b);
                int len_out = 0;
                conv_forward(l, lw.w, lw.b, in, cur.len, out, len_out);
                cur = {len_out, l.out_ch};
                break;
            }
            case LayerKind::ReLU:
                out.resize(in.size());
                // Written so NaN propagates instead of being clipped to zero;
                // a poisoned activation must surface as a non-finite loss.
                for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] < 0.0 ? 0.0 : in[i];
                break;
            case LayerKind::MaxPool1D: {
                int len_out = 0;
                pool_forward(l, in, cur.len, cur.ch, out, len_out);
                cur.len = len_out;
                break;
            }
            case LayerKind::AdaptiveMaxPool1D:
                adaptive_pool_forward(l, in, cur.len, cur.ch, out);
                cur.len = l.target_len;
                break;
            case LayerKind::Flatten:
                out = in;  // channel-major layout is already flat
                break;
        }
        trace.acts.push_back(std::move(out));
    }
    return trace;
}

std::vector<double> forward(const EncoderModel& model, std::span<const double> input) {
    return forward_traced(model, input).acts.back();
}

FeatureVector forward(const EncoderModel& model, const Segment& segment) {
    FeatureVector fv;
    fv.values = forward(model, segment.values);
    fv.record_id = segment.record_id;
    fv.subject_id = segment.subject_id;
    return fv;
}

Gradients Gradients::zeros_like(const EncoderModel& model) {
    Gradients g;
    g.conv.resize(model.conv.size());
    for (std::size_t i = 0; i < model.conv.size(); ++i) {
        g.conv[i].dw.assign(model.conv[i].weight_count(), 0.0);
        g.conv[i].db.assign(static_cast<std::size_t>(model.conv[i].out_ch), 0.0);
    }
    return g;
}

void Gradients::accumulate(const Gradients& other, double scale) {
    for (std::size_t i = 0; i < conv.size(); ++i) {
        for (std::size_t j = 0; j < conv[i].dw.size(); ++j)
            conv[i].dw[j] += scale * other.conv[i].dw[j];
        for (std::size_t j = 0; j < conv[i].db.size(); ++j)
            conv[i].db[j] += scale * other.conv[i].db[j];
    }
}

bool Gradients::finite() const {
    for (const auto& g : conv) {
        for (double v : g.dw)
            if (!std::isfinite(v)) return false;
        for (double v : g.db)
            if (!std::isfinite(v)) return false;
    }
    return true;
}

Gradients backward(const EncoderModel& model, const ForwardTrace& trace,
                   std::span<const double> upstream) {
    if (trace.acts.size() != model.layers.size() + 1)
        throw ShapeMismatch("trace does not match model layers");
    if (upstream.size() != trace.acts.back().size())
        throw ShapeMismatch("upstream gradient does not match output size");

    // Reconstruct the per-layer (len, ch) cursors from the trace.
    std::vector<ShapeCursor> shapes(model.layers.size() + 1);
    shapes[0] = {model.input_len, 1};
    std::size_t conv_count = 0;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& l = model.layers[i];
        ShapeCursor cur = shapes[i];
        switch (l.kind) {
            case LayerKind::Conv1D:
                cur.len = l.same_pad ? cur.len : cur.len - l.kernel + 1;
                cur.ch = l.out_ch;
                ++conv_count;
                break;
            case LayerKind::MaxPool1D:
                cur.len = (cur.len - l.window) / l.stride + 1;
                break;
            case LayerKind::AdaptiveMaxPool1D:
                cur.len = l.target_len;
                break;
            default:
                break;
        }
        shapes[i + 1] = cur;
    }

    Gradients grads = Gradients::zeros_like(model);
    std::vector<double> grad(upstream.begin(), upstream.end());
    std::vector<double> scratch_w, scratch_b;
    std::size_t conv_idx = conv_count;

    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const LayerSpec& l = model.layers[li];
        const std::vector<double>& in = trace.acts[li];
        const ShapeCursor in_shape = shapes[li];
        const ShapeCursor out_shape = shapes[li + 1];
        std::vector<double> next;

        switch (l.kind) {
            case LayerKind::Conv1D: {
                --conv_idx;
                const auto lw = weights_for(model, conv_idx, scratch_w, scratch_b);
                ConvGrad& cg = grads.conv[conv_idx];
                next.assign(in.size(), 0.0);
                const int pad = l.same_pad ? (l.kernel - 1) / 2 : 0;
                for (int oc = 0; oc < l.out_ch; ++oc) {
                    const double* g_row =
                        grad.data() + static_cast<std::size_t>(oc) * out_shape.len;
                    double bsum = 0.0;
                    for (int t = 0; t < out_shape.len; ++t) bsum += g_row[t];
                    cg.db[static_cast<std::size_t>(oc)] += bsum;
                    for (int ic = 0; ic < l.in_ch; ++ic) {
                        const double* in_row =
                            in.data() + static_cast<std::size_t>(ic) * in_shape.len;
                        double* nx_row =
                            next.data() + static_cast<std::size_t>(ic) * in_shape.len;
                        const std::size_t w_base =
                            (static_cast<std::size_t>(oc) * l.in_ch + ic) * l.kernel;
                        for (int k = 0; k < l.kernel; ++k) {
                            const int off = k - pad;
                            const int t0 = std::max(0, -off);
                            const int t1 = std::min(out_shape.len, in_shape.len - off);
                            double wsum = 0.0;
                            const double wv = lw.w[w_base + static_cast<std::size_t>(k)];
                            for (int t = t0; t < t1; ++t) {
                                wsum += g_row[t] * in_row[t + off];
                                nx_row[t + off] += wv * g_row[t];
                            }
                            cg.dw[w_base + static_cast<std::size_t>(k)] += wsum;
                        }
                    }
                }
                break;
            }
            case LayerKind::ReLU:
                next.resize(in.size());
                for (std::size_t i = 0; i < in.size(); ++i)
                    next[i] = in[i] > 0.0 ? grad[i] : 0.0;
                break;
            case LayerKind::MaxPool1D: {
                next.assign(in.size(), 0.0);
                for (int c = 0; c < in_shape.ch; ++c) {
                    const double* in_row = in.data() + static_cast<std::size_t>(c) * in_shape.len;
                    const double* g_row =
                        grad.data() + static_cast<std::size_t>(c) * out_shape.len;
                    double* nx_row = next.data() + static_cast<std::size_t>(c) * in_shape.len;
                    for (int j = 0; j < out_shape.len; ++j) {
                        const int lo = j * l.stride;
                        int best = lo;
                        for (int i = lo + 1; i < lo + l.window; ++i)
                            if (in_row[i] > in_row[best]) best = i;
                        nx_row[best] += g_row[j];
                    }
                }
                break;
            }
            case LayerKind::AdaptiveMaxPool1D: {
                next.assign(in.size(), 0.0);
                for (int c = 0; c < in_shape.ch; ++c) {
                    const double* in_row = in.data() + static_cast<std::size_t>(c) * in_shape.len;
                    const double* g_row =
                        grad.data() + static_cast<std::size_t>(c) * out_shape.len;
                    double* nx_row = next.data() + static_cast<std::size_t>(c) * in_shape.len;
                    for (int j = 0; j < out_shape.len; ++j) {
                        const int lo = (j * in_shape.len) / out_shape.len;
                        const int hi =
                            ((j + 1) * in_shape.len + out_shape.len - 1) / out_shape.len;
                        int best = lo;
                        for (int i = lo + 1; i < hi; ++i)
                            if (in_row[i] > in_row[best]) best = i;
                        nx_row[best] += g_row[j];
                    }
                }
                break;
            }
            case LayerKind::Flatten:
                next = grad;
                break;
        }
        grad = std::move(next);
    }
    return grads;
}

Gradients backward(const EncoderModel& model, const Segment& segment,
                   std::span<const double> upstream) {
    return backward(model, forward_traced(model, segment.values), upstream);
}

// ---------------------------------------------------------------------------
// Serialization: magic "ECGA", version, architecture, precision, payload, CRC32
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint8_t kModelVersion = 1;
constexpr std::array<std::uint8_t, 4> kModelMagic = {'E', 'C', 'G', 'A'};

void check_mask_invariant(const ConvTensor& t) {
    if (t.mask.size() != t.w.size()) throw ShapeMismatch("prune mask size mismatch");
    for (std::size_t i = 0; i < t.w.size(); ++i)
        if ((t.mask[i] == 0) != (t.w[i] == 0.0))
            throw ShapeMismatch("prune mask zeros must match weight zeros");
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const EncoderModel& model) {
    io::ByteWriter w;
    w.raw(kModelMagic);
    w.u8(kModelVersion);
    w.u32(static_cast<std::uint32_t>(model.input_len));
    w.u32(static_cast<std::uint32_t>(model.layers.size()));
    for (const LayerSpec& l : model.layers) {
        w.u8(static_cast<std::uint8_t>(l.kind));
        switch (l.kind) {
            case LayerKind::Conv1D:
                w.u32(static_cast<std::uint32_t>(l.in_ch));
                w.u32(static_cast<std::uint32_t>(l.out_ch));
                w.u32(static_cast<std::uint32_t>(l.kernel));
                w.u8(l.same_pad ? 1 : 0);
                break;
            case LayerKind::MaxPool1D:
                w.u32(static_cast<std::uint32_t>(l.window));
                w.u32(static_cast<std::uint32_t>(l.stride));
                break;
            case LayerKind::AdaptiveMaxPool1D:
                w.u32(static_cast<std::uint32_t>(l.target_len));
                break;
            default:
                break;
        }
    }
    w.u8(static_cast<std::uint8_t>(model.precision));
    w.u8(static_cast<std::uint8_t>(model.quant_bits));
    w.u32(static_cast<std::uint32_t>(model.conv.size()));
    for (const ConvTensor& t : model.conv) {
        w.u32(static_cast<std::uint32_t>(t.out_ch));
        w.u32(static_cast<std::uint32_t>(t.in_ch));
        w.u32(static_cast<std::uint32_t>(t.kernel));
        if (model.precision == PrecisionKind::Quantized) {
            for (std::int64_t v : t.qw) w.i64(v);
            for (std::int64_t v : t.qb) w.i64(v);
        } else {
            for (double v : t.w) w.f64(v);
            for (double v : t.b) w.f64(v);
            if (model.precision == PrecisionKind::Pruned)
                for (std::uint8_t m : t.mask) w.u8(m);
        }
    }
    auto bytes = w.take();
    const std::uint32_t crc = io::crc32(bytes);
    io::ByteWriter tail;
    tail.u32(crc);
    bytes.insert(bytes.end(), tail.bytes().begin(), tail.bytes().end());
    return bytes;
}

EncoderModel deserialize_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || !std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin()))
        throw BadMagic("not a model file");
    if (bytes.size() < 5) throw ChecksumMismatch("model file truncated");
    if (bytes[4] != kModelVersion)
        throw VersionMismatch("model file version " + std::to_string(bytes[4]) +
                              " not supported");
    if (bytes.size() < 9) throw ChecksumMismatch("model file truncated");
    const auto payload = bytes.subspan(0, bytes.size() - 4);
    io::ByteReader crc_reader(bytes.subspan(bytes.size() - 4));
    if (io::crc32(payload) != crc_reader.u32())
        throw ChecksumMismatch("model file checksum mismatch");

    io::ByteReader r(payload.subspan(5));
    EncoderModel model;
    model.input_len = static_cast<int>(r.u32());
    const auto layer_count = r.u32();
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        LayerSpec l;
        l.kind = static_cast<LayerKind>(r.u8());
        switch (l.kind) {
            case LayerKind::Conv1D:
                l.in_ch = static_cast<int>(r.u32());
                l.out_ch = static_cast<int>(r.u32());
                l.kernel = static_cast<int>(r.u32());
                l.same_pad = r.u8() != 0;
                break;
            case LayerKind::MaxPool1D:
                l.window = static_cast<int>(r.u32());
                l.stride = static_cast<int>(r.u32());
                break;
            case LayerKind::AdaptiveMaxPool1D:
                l.target_len = static_cast<int>(r.u32());
                break;
            case LayerKind::ReLU:
            case LayerKind::Flatten:
                break;
            default:
                throw IoError("unknown layer kind in model file");
        }
        model.layers.push_back(l);
    }
    model.precision = static_cast<PrecisionKind>(r.u8());
    model.quant_bits = static_cast<int>(r.u8());
    const auto conv_count = r.u32();
    for (std::uint32_t i = 0; i < conv_count; ++i) {
        ConvTensor t;
        t.out_ch = static_cast<int>(r.u32());
        t.in_ch = static_cast<int>(r.u32());
        t.kernel = static_cast<int>(r.u32());
        const std::size_t wc = t.weight_count();
        if (model.precision == PrecisionKind::Quantized) {
            t.qw.resize(wc);
            for (auto& v : t.qw) v = r.i64();
            t.qb.resize(static_cast<std::size_t>(t.out_ch));
            for (auto& v : t.qb) v = r.i64();
        } else {
            t.w.resize(wc);
            for (auto& v : t.w) v = r.f64();
            t.b.resize(static_cast<std::size_t>(t.out_ch));
            for (auto& v : t.b) v = r.f64();
            if (model.precision == PrecisionKind::Pruned) {
                t.mask.resize(wc);
                for (auto& m : t.mask) m = r.u8();
                check_mask_invariant(t);
            }
        }
        model.conv.push_back(std::move(t));
    }
    if (!r.exhausted()) throw IoError("trailing bytes in model file");
    audit_shape(model.layers, model.input_len);
    std::size_t conv_layers = 0;
    for (const auto& l : model.layers)
        if (l.kind == LayerKind::Conv1D) ++conv_layers;
    if (conv_layers != model.conv.size())
        throw ShapeMismatch("conv tensor count does not match architecture");
    return model;
}

void save_model(const EncoderModel& model, const std::filesystem::path& path) {
    io::atomic_write_file(path, serialize_model(model));
}

EncoderModel load_model(const std::filesystem::path& path) {
    return deserialize_model(io::read_file(path));
}

std::array<std::uint8_t, 32> model_fingerprint(const EncoderModel& model) {
    return io::sha256(serialize_model(model));
}

}  // namespace ecgauth
