#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecgauth/record.hpp"

namespace ecgauth {

enum class SegMethod { NPD, R2R, P2T };

inline constexpr std::size_t kSegmentLength = 1000;
inline constexpr int kSegmentFs = 200;
inline constexpr std::size_t kPieceLength = 200;
inline constexpr std::size_t kPiecesPerSegment = 5;

/// A normalized encoder input: exactly 1000 samples in [-512, 512].
struct Segment {
    std::vector<double> values;
    SegMethod method = SegMethod::NPD;
    std::string record_id;
    std::string subject_id;
    std::vector<std::size_t> piece_boundaries;  // [0,200,...,1000] for R2R/P2T, empty for NPD

    void validate() const;
};

/// Fixed windows at uniformly random start offsets. The record must already
/// be at 200 Hz and hold at least 1000 samples.
std::vector<Segment> segment_npd(const EcgRecord& record, std::size_t count,
                                 std::uint64_t rng_seed);

/// Inter-R-peak pieces, each resampled to 200 samples; pieces longer than
/// max_piece_len_s are dropped and every run of five consecutive surviving
/// pieces (stride 1) becomes one segment.
std::vector<Segment> segment_r2r(const EcgRecord& record, double max_piece_len_s,
                                 std::uint64_t rng_seed);

/// P-peak-to-T-peak pieces per beat, same five-piece splicing as R2R. Beats
/// with a missing P or T are excluded before grouping.
std::vector<Segment> segment_p2t(const EcgRecord& record, std::uint64_t rng_seed);

/// Dispatches on method and returns up to `count` segments: NPD draws exactly
/// count windows; R2R/P2T sample count segments from the deterministic pool
/// (without replacement while possible).
std::vector<Segment> make_segments(const EcgRecord& record, SegMethod method, std::size_t count,
                                   double max_piece_len_s, std::uint64_t rng_seed);

}  // namespace ecgauth
