#include <benchmark/benchmark.h>

#include "ecgauth/compress.hpp"
#include "ecgauth/dsp.hpp"
#include "ecgauth/encoder.hpp"
#include "ecgauth/ingest.hpp"
#include "ecgauth/metric.hpp"
#include "ecgauth/rng.hpp"
#include "ecgauth/segment.hpp"

using namespace ecgauth;

namespace {

EcgRecord bench_record() {
    auto params = SyntheticSubjectParams::randomized(1, 0.05);
    auto sr = synth_record(params, 30.0, 500, 1);
    return sr.record;
}

Segment bench_segment() {
    const EcgRecord prepped = resample(bandpass(bench_record(), FilterSpec{}), kSegmentFs);
    return segment_npd(prepped, 1, 1)[0];
}

}  // namespace

static void BM_Bandpass(benchmark::State& state) {
    const EcgRecord rec = bench_record();
    const FilterSpec spec{};
    for (auto _ : state) benchmark::DoNotOptimize(bandpass(rec, spec));
}
BENCHMARK(BM_Bandpass);

static void BM_DetectRPeaks(benchmark::State& state) {
    const EcgRecord rec = resample(bandpass(bench_record(), FilterSpec{}), kSegmentFs);
    for (auto _ : state) benchmark::DoNotOptimize(detect_r_peaks(rec));
}
BENCHMARK(BM_DetectRPeaks);

static void BM_EncoderForward(benchmark::State& state) {
    const EncoderModel model = EncoderModel::canonical(1);
    const Segment seg = bench_segment();
    for (auto _ : state) benchmark::DoNotOptimize(forward(model, seg.values));
}
BENCHMARK(BM_EncoderForward);

static void BM_EncoderBackward(benchmark::State& state) {
    const EncoderModel model = EncoderModel::canonical(1);
    const Segment seg = bench_segment();
    const ForwardTrace trace = forward_traced(model, seg.values);
    std::vector<double> upstream(kFeatureDim, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(backward(model, trace, upstream));
}
BENCHMARK(BM_EncoderBackward);

static void BM_QuantizedForward(benchmark::State& state) {
    const EncoderModel q =
        quantize_model(EncoderModel::canonical(1), static_cast<int>(state.range(0)));
    const Segment seg = bench_segment();
    for (auto _ : state) benchmark::DoNotOptimize(quantized_forward(q, seg.values));
}
BENCHMARK(BM_QuantizedForward)->Arg(4)->Arg(8)->Arg(16);

static void BM_ShiftAddMultiply(benchmark::State& state) {
    Rng rng(3);
    std::vector<std::pair<std::int64_t, std::int64_t>> cases(1024);
    for (auto& [n, y] : cases) {
        n = static_cast<std::int64_t>(uniform_index(rng, 2u << 20)) - (1 << 20);
        y = static_cast<std::int64_t>(uniform_index(rng, 2u << 12)) - (1 << 12);
    }
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& [n, y] = cases[i++ & 1023];
        benchmark::DoNotOptimize(shift_add_multiply(n, y));
    }
}
BENCHMARK(BM_ShiftAddMultiply);

static void BM_MappingScore(benchmark::State& state) {
    const EncoderModel model = EncoderModel::canonical(1);
    const auto a = forward(model, bench_segment().values);
    Rng rng(5);
    auto b = a;
    for (auto& v : b) v += uniform_real(rng, -1.0, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(mapping_score(a, b));
}
BENCHMARK(BM_MappingScore);

BENCHMARK_MAIN();
