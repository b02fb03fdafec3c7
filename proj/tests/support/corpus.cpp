#include "corpus.hpp"

#include "ecgauth/dsp.hpp"

namespace corpus {

using namespace ecgauth;

DatasetCatalog catalog(int subjects, std::uint64_t seed, double duration_s, double noise_rms_mv,
                       int fs) {
    SyntheticCatalogOptions opts;
    opts.subjects = subjects;
    opts.records_per_subject = 2;
    opts.duration_s = duration_s;
    opts.fs = fs;
    opts.noise_rms_mv = noise_rms_mv;
    opts.seed = seed;
    return make_synthetic_catalog(opts);
}

EcgRecord prepped_record(std::uint64_t seed, double duration_s, double noise_rms_mv) {
    auto params = SyntheticSubjectParams::randomized(seed, noise_rms_mv);
    auto sr = synth_record(params, duration_s, 500, seed);
    return resample(bandpass(sr.record, FilterSpec{}), kSegmentFs);
}

Segment segment(std::uint64_t seed) {
    const EcgRecord rec = prepped_record(seed);
    return segment_npd(rec, 1, seed)[0];
}

EncoderModel tiny_model(std::uint64_t seed) {
    std::vector<LayerSpec> layers = {
        LayerSpec::conv(1, 2, 5),  LayerSpec::relu(), LayerSpec::max_pool(4, 4),
        LayerSpec::conv(2, 4, 3),  LayerSpec::relu(), LayerSpec::adaptive_max_pool(4),
        LayerSpec::flatten()};
    return EncoderModel::build(std::move(layers), static_cast<int>(kSegmentLength), seed);
}

EncoderModel micro_model(std::uint64_t seed, int input_len) {
    std::vector<LayerSpec> layers = {
        LayerSpec::conv(1, 2, 5),  LayerSpec::relu(), LayerSpec::max_pool(2, 2),
        LayerSpec::conv(2, 4, 3),  LayerSpec::relu(), LayerSpec::adaptive_max_pool(4),
        LayerSpec::flatten()};
    return EncoderModel::build(std::move(layers), input_len, seed);
}

}  // namespace corpus
