#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ecgauth/dsp.hpp"
#include "ecgauth/encoder.hpp"
#include "ecgauth/ingest.hpp"
#include "ecgauth/segment.hpp"

namespace ecgauth {

struct EvalOptions {
    int genuine_trials = 100;   // per registered subject
    int impostor_trials = 100;  // per registered subject, drawn from other subjects
    int enroll_segments = 5;
    SegMethod segmentation = SegMethod::NPD;
    double max_piece_len_s = 2.0;
    FilterSpec filter{0.5, 40.0, 4};
    int target_fs = kSegmentFs;
    std::vector<double> tau_grid;  // empty -> 0.00..1.00 in 0.02 steps
};

struct RocPoint {
    double tau = 0.0;
    double far = 0.0;  // = fpr
    double frr = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

struct EvalReport {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;
    double far = 0.0, frr = 0.0;
    std::vector<RocPoint> roc;
    double auc = 0.0;
};

/// Derives every summary metric from raw confusion counts.
EvalReport report_from_counts(std::uint64_t tp, std::uint64_t tn, std::uint64_t fp,
                              std::uint64_t fn);

/// The per-subject verification protocol: each test-split subject in turn is
/// the registered user, enrolled from one half of their records and probed
/// with genuine segments from the other half plus impostor segments from the
/// remaining subjects. Confusion counts accumulate across subjects.
EvalReport run_protocol(const DatasetCatalog& catalog, const EncoderModel& model, double tau,
                        std::uint64_t seed, const EvalOptions& opts = {});

/// Scores are computed once and decisions re-derived per threshold, so
/// FAR is non-increasing and FRR non-decreasing in tau by construction.
std::vector<RocPoint> sweep_threshold(const DatasetCatalog& catalog, const EncoderModel& model,
                                      std::span<const double> taus, std::uint64_t seed,
                                      const EvalOptions& opts = {});

/// Trapezoidal area under the (fpr, tpr) curve, points sorted by fpr.
double roc_auc(std::span<const RocPoint> points);

struct RepeatRates {
    int attempts = 1;
    double genuine_accept = 0.0;
    double impostor_accept = 0.0;
};

/// Any-success repeat authentication for k = 1..max_attempts. Attempt sets
/// are nested (attempt k uses the first k segments of the same trial), so the
/// accept rates are monotone in k by construction.
std::vector<RepeatRates> repeat_protocol(const DatasetCatalog& catalog, const EncoderModel& model,
                                         double tau, int max_attempts, std::uint64_t seed,
                                         const EvalOptions& opts = {});

void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
void write_roc_csv(std::span<const RocPoint> points, const std::filesystem::path& path);

}  // namespace ecgauth
