#include "ecgauth/segment.hpp"

#include <cmath>
#include <span>

#include "ecgauth/dsp.hpp"
#include "ecgauth/errors.hpp"
#include "ecgauth/rng.hpp"

namespace ecgauth {

void Segment::validate() const {
    if (values.size() != kSegmentLength)
        throw ShapeMismatch("segment must hold exactly 1000 samples");
    for (double v : values)
        if (!(v >= -512.0 && v <= 512.0))
            throw ShapeMismatch("segment sample outside [-512, 512]");
    if (!piece_boundaries.empty() && piece_boundaries.size() != kPiecesPerSegment + 1)
        throw ShapeMismatch("piece boundary table must have 6 entries");
}

namespace {

std::vector<std::size_t> spliced_boundaries() {
    std::vector<std::size_t> b(kPiecesPerSegment + 1);
    for (std::size_t i = 0; i <= kPiecesPerSegment; ++i) b[i] = i * kPieceLength;
    return b;
}

// Five consecutive pieces (stride 1) -> one 1000-sample normalized segment.
std::vector<Segment> splice_pieces(const std::vector<std::vector<double>>& pieces,
                                   const EcgRecord& record, SegMethod method) {
    std::vector<Segment> out;
    if (pieces.size() < kPiecesPerSegment) return out;
    for (std::size_t start = 0; start + kPiecesPerSegment <= pieces.size(); ++start) {
        std::vector<double> values;
        values.reserve(kSegmentLength);
        for (std::size_t k = 0; k < kPiecesPerSegment; ++k)
            values.insert(values.end(), pieces[start + k].begin(), pieces[start + k].end());
        Segment seg;
        seg.values = normalize(values);
        seg.method = method;
        seg.record_id = record.record_id;
        seg.subject_id = record.subject_id;
        seg.piece_boundaries = spliced_boundaries();
        out.push_back(std::move(seg));
    }
    return out;
}

}  // namespace

std::vector<Segment> segment_npd(const EcgRecord& record, std::size_t count,
                                 std::uint64_t rng_seed) {
    if (record.samples.size() < kSegmentLength)
        throw RecordTooShort("record holds fewer than 1000 samples");
    Rng rng(rng_seed);
    std::vector<Segment> out;
    out.reserve(count);
    const std::size_t max_start = record.samples.size() - kSegmentLength;
    for (std::size_t i = 0; i < count; ++i) {
        const auto start = static_cast<std::size_t>(uniform_index(rng, max_start + 1));
        const std::span<const double> window(record.samples.data() + start, kSegmentLength);
        Segment seg;
        seg.values = normalize(window);
        seg.method = SegMethod::NPD;
        seg.record_id = record.record_id;
        seg.subject_id = record.subject_id;
        out.push_back(std::move(seg));
    }
    return out;
}

std::vector<Segment> segment_r2r(const EcgRecord& record, double max_piece_len_s,
                                 std::uint64_t /*rng_seed*/) {
    const PeakList r = detect_r_peaks(record);
    if (r.indices.size() < kPiecesPerSegment + 1)
        throw TooFewBeats("need at least 6 R peaks for R2R segmentation");

    const auto max_len =
        static_cast<std::size_t>(std::llround(max_piece_len_s * record.fs));
    std::vector<std::vector<double>> pieces;
    for (std::size_t i = 0; i + 1 < r.indices.size(); ++i) {
        const std::size_t len = r.indices[i + 1] - r.indices[i];
        if (len > max_len) continue;  // outlier interval, skip the piece
        const std::span<const double> run(record.samples.data() + r.indices[i], len);
        pieces.push_back(resample_to_length(run, kPieceLength));
    }
    auto out = splice_pieces(pieces, record, SegMethod::R2R);
    if (out.empty()) throw TooFewBeats("fewer than 5 usable R2R pieces");
    return out;
}

std::vector<Segment> segment_p2t(const EcgRecord& record, std::uint64_t /*rng_seed*/) {
    const PeakList r = detect_r_peaks(record);
    const auto beats = delineate_beats(record, r);

    std::vector<std::vector<double>> pieces;
    for (const auto& beat : beats) {
        if (!beat.p || !beat.t) continue;  // incomplete beats are excluded before grouping
        const std::size_t len = *beat.t - *beat.p + 1;
        const std::span<const double> run(record.samples.data() + *beat.p, len);
        pieces.push_back(resample_to_length(run, kPieceLength));
    }
    if (pieces.size() < kPiecesPerSegment)
        throw TooFewBeats("fewer than 5 fully delineated beats");
    return splice_pieces(pieces, record, SegMethod::P2T);
}

std::vector<Segment> make_segments(const EcgRecord& record, SegMethod method, std::size_t count,
                                   double max_piece_len_s, std::uint64_t rng_seed) {
    if (method == SegMethod::NPD) return segment_npd(record, count, rng_seed);
    std::vector<Segment> pool = method == SegMethod::R2R
                                    ? segment_r2r(record, max_piece_len_s, rng_seed)
                                    : segment_p2t(record, rng_seed);
    if (pool.size() <= count) {
        // The pool is deterministic; top it up with repeats when short.
        Rng rng(rng_seed);
        std::vector<Segment> out = pool;
        while (out.size() < count)
            out.push_back(pool[static_cast<std::size_t>(uniform_index(rng, pool.size()))]);
        return out;
    }
    Rng rng(rng_seed);
    std::vector<Segment> out;
    out.reserve(count);
    for (std::size_t idx : sample_without_replacement(rng, pool.size(), count))
        out.push_back(pool[idx]);
    return out;
}

}  // namespace ecgauth
