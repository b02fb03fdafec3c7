#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "ecgauth/compress.hpp"
#include "ecgauth/dsp.hpp"
#include "ecgauth/encoder.hpp"
#include "ecgauth/ingest.hpp"
#include "ecgauth/rng.hpp"
#include "ecgauth/segment.hpp"

namespace ecgauth {

enum class Framework { Siamese, Triplet };

struct TrainConfig {
    Framework framework = Framework::Triplet;
    SegMethod segmentation = SegMethod::NPD;
    int batch_size = 16;          // m
    int segments_per_record = 4;  // n, siamese only
    double lambda = 0.7;          // margin, doubles as the decision threshold
    int epochs = 200;
    double initial_lr = 0.05;
    bool cosine_annealing = true;
    std::uint64_t rng_seed = 1;

    // preprocessing applied to raw records before segmentation
    FilterSpec filter{0.5, 40.0, 4};
    int target_fs = kSegmentFs;
    double max_piece_len_s = 2.0;

    // pruning during training: when sparsity > 0, masked weights get zero
    // gradient and stay zero; the mask is recomputed at each milestone epoch.
    double prune_sparsity = 0.0;
    std::vector<int> prune_milestones;

    void validate() const;
};

struct PairCounts {
    std::uint64_t n_pos = 0;
    std::uint64_t n_neg = 0;
};

/// Closed forms m*n*(n-1)/2 and m*(m-1)*n^2 / 2 for a batch of m records
/// with n segments each.
PairCounts count_pairs(int m, int n);

/// Index pairs over the m*n embeddings of a siamese batch (segment i belongs
/// to record i/n). Negatives are subsampled to |positives| without
/// replacement to balance the two sides.
struct PairBatch {
    std::vector<std::pair<std::size_t, std::size_t>> positives;
    std::vector<std::pair<std::size_t, std::size_t>> negatives;
};
PairBatch build_siamese_pairs(int m, int n, Rng& rng);

enum class TripletHardness { Easy, Hard, SemiHard };

/// Margin taxonomy: easy when d_n >= d_p + lambda, hard when d_n <= d_p,
/// semi-hard in between.
TripletHardness classify_triplet(double d_p, double d_n, double lambda);

/// max(0, d_p - d_n + lambda): the hinge applied per triplet, and to the
/// positive/negative distance means in the siamese loss.
double contrastive_hinge(double d_p, double d_n, double lambda);

struct StepResult {
    double loss = 0.0;
    Gradients grads;
};

/// One siamese batch: n segments per record, all positive pairs, negatives
/// subsampled to match, loss max(0, mean(d_P) - mean(d_N) + lambda).
/// Deterministic for a fixed step_seed.
StepResult siamese_step(std::span<const EcgRecord> batch, const EncoderModel& model,
                        const TrainConfig& cfg, std::uint64_t step_seed);

/// One triplet batch: anchor and positive from each batch record, negative
/// from a uniformly random different record; loss sum of per-triplet hinges.
StepResult triplet_step(std::span<const EcgRecord> batch, std::span<const EcgRecord> all_records,
                        const EncoderModel& model, const TrainConfig& cfg,
                        std::uint64_t step_seed);

/// Cosine annealing: initial_lr * (1 + cos(pi * t / T)) / 2.
double cosine_lr(double initial_lr, int epoch, int total_epochs);

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    EncoderModel model;
    std::vector<EpochStats> history;
    PruneMask mask;  // empty unless prune_sparsity > 0
};

/// Full training loop: Adam updates (beta1 0.9, beta2 0.999, eps 1e-8) over
/// shuffled batches, cosine-annealed learning rate, optional in-training
/// pruning. Deterministic for a fixed config seed.
TrainResult train(const DatasetCatalog& catalog, const EncoderModel& init,
                  const TrainConfig& cfg);

void write_loss_csv(std::span<const EpochStats> history, const std::filesystem::path& path);

}  // namespace ecgauth
