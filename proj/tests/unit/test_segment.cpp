#include <doctest.h>

#include <cmath>

#include "corpus.hpp"
#include "ecgauth/dsp.hpp"
#include "ecgauth/errors.hpp"
#include "ecgauth/ingest.hpp"
#include "ecgauth/segment.hpp"

using namespace ecgauth;

namespace {

// Record with hand-placed R bumps so piece counts are fully controlled.
EcgRecord bumps_at(const std::vector<double>& beat_times_s, double duration_s, int fs = 200) {
    EcgRecord rec;
    rec.record_id = "bumps";
    rec.subject_id = "bumps";
    rec.fs = fs;
    rec.samples.assign(static_cast<std::size_t>(duration_s * fs), 0.0);
    for (double bt : beat_times_s) {
        for (std::size_t i = 0; i < rec.samples.size(); ++i) {
            const double dt = static_cast<double>(i) / fs - bt;
            rec.samples[i] += std::exp(-dt * dt / (2.0 * 0.012 * 0.012));
        }
    }
    return rec;
}

std::vector<double> even_times(int count, double start, double step) {
    std::vector<double> t;
    for (int i = 0; i < count; ++i) t.push_back(start + i * step);
    return t;
}

}  // namespace

TEST_CASE("segment_npd basics") {
    const EcgRecord rec = corpus::prepped_record(21, 10.0);  // 2000 samples at 200 Hz
    const auto segs = segment_npd(rec, 3, 77);
    REQUIRE(segs.size() == 3);
    for (const auto& s : segs) {
        CHECK_NOTHROW(s.validate());
        CHECK(s.values.size() == kSegmentLength);
        CHECK(s.piece_boundaries.empty());
        CHECK(s.method == SegMethod::NPD);
        CHECK(s.record_id == rec.record_id);
    }
    CHECK(segment_npd(rec, 3, 77)[1].values == segs[1].values);  // deterministic

    EcgRecord tiny = rec;
    tiny.samples.resize(999);
    CHECK_THROWS_AS(segment_npd(tiny, 1, 0), RecordTooShort);
}

TEST_CASE("segment_r2r counting with no dropped pieces") {
    // 11 evenly spaced beats, all inter-R pieces under the limit.
    const EcgRecord rec = bumps_at(even_times(11, 0.5, 1.0), 11.5);
    REQUIRE(detect_r_peaks(rec).indices.size() == 11);
    const auto segs = segment_r2r(rec, 2.0, 0);
    CHECK(segs.size() == 6);  // 10 pieces -> sliding window of 5
    for (const auto& s : segs) {
        CHECK_NOTHROW(s.validate());
        CHECK(s.piece_boundaries ==
              std::vector<std::size_t>{0, 200, 400, 600, 800, 1000});
    }
}

TEST_CASE("segment_r2r drops over-length pieces before grouping") {
    // Beats at 1 s spacing with one 2.5 s gap: 11 peaks, 10 pieces, the long
    // one dropped, 9 surviving, 5 segments.
    std::vector<double> times = {0.5, 1.5, 2.5, 3.5, 4.5, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0};
    const EcgRecord rec = bumps_at(times, 12.6);
    REQUIRE(detect_r_peaks(rec).indices.size() == 11);
    const auto segs = segment_r2r(rec, 2.0, 0);
    CHECK(segs.size() == 5);
}

TEST_CASE("segment_r2r needs six beats") {
    const EcgRecord rec = bumps_at(even_times(4, 0.5, 1.0), 4.5);
    CHECK_THROWS_AS(segment_r2r(rec, 2.0, 0), TooFewBeats);
}

TEST_CASE("segment_p2t counting") {
    SyntheticSubjectParams params;
    params.heart_rate_bpm = 60.0;
    params.heart_rate_jitter_bpm = 0.0;
    // 9 beats fit in 9.5 s; every beat is fully delineable.
    const SyntheticRecord sr = synth_record(params, 9.5, 200, 5);
    REQUIRE(sr.r_peaks.size() == 9);
    const auto segs = segment_p2t(sr.record, 0);
    CHECK(segs.size() == 5);  // 9 - 5 + 1
    for (const auto& s : segs) {
        CHECK_NOTHROW(s.validate());
        CHECK(s.method == SegMethod::P2T);
    }
}

TEST_CASE("segment_p2t rejects too few delineated beats") {
    SyntheticSubjectParams params;
    params.heart_rate_bpm = 60.0;
    params.heart_rate_jitter_bpm = 0.0;
    const SyntheticRecord sr = synth_record(params, 3.6, 200, 6);
    CHECK_THROWS_AS(segment_p2t(sr.record, 0), TooFewBeats);
}

TEST_CASE("segment invariants hold across the synthetic corpus") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const EcgRecord rec = corpus::prepped_record(seed, 30.0, 0.02);
        for (const SegMethod method : {SegMethod::NPD, SegMethod::R2R, SegMethod::P2T}) {
            const auto segs = make_segments(rec, method, 4, 2.0, seed);
            REQUIRE(segs.size() == 4);
            for (const auto& s : segs) CHECK_NOTHROW(s.validate());
        }
    }
}

TEST_CASE("r2r and p2t counts follow surviving pieces minus four") {
    const EcgRecord rec = corpus::prepped_record(42, 30.0);
    const std::size_t beats = detect_r_peaks(rec).indices.size();
    const auto segs = segment_r2r(rec, 2.0, 0);
    CHECK(segs.size() == beats - 1 - 4);  // no piece exceeds 2 s at synthetic heart rates
}
