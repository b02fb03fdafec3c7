#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ecgauth/evalkit.hpp"
#include "ecgauth/ingest.hpp"
#include "ecgauth/trainer.hpp"

namespace ecgauth {

/// Configuration document for the command-line tool. JSON with five sections;
/// unknown keys anywhere are rejected. Every field has the default shown in
/// the README.
struct AppConfig {
    std::uint64_t seed = 1;

    struct Dataset {
        std::string kind = "synthetic";  // "synthetic" or "catalog"
        std::string catalog_path;
        int csv_fs = 200;
        int subjects = 20;
        int records_per_subject = 2;
        double duration_s = 60.0;
        int fs = 500;
        double noise_rms_mv = 0.05;
    } dataset;

    struct Preprocess {
        double low_cut_hz = 0.5;
        double high_cut_hz = 40.0;
        int filter_order = 4;
        int target_fs = kSegmentFs;
        std::string segmentation = "npd";  // npd | r2r | p2t
        double max_piece_len_s = 2.0;
    } preprocess;

    struct Train {
        std::string framework = "triplet";  // triplet | siamese
        int batch_size = 16;
        int segments_per_record = 4;
        double lambda = 0.7;
        int epochs = 200;
        double initial_lr = 0.0015;
        bool cosine_annealing = true;
        double prune_sparsity = 0.0;
        std::vector<int> prune_milestones;
    } train;

    struct Compress {
        int n_bits = 8;
        double sparsity = 0.2;
    } compress;

    struct Eval {
        double tau = 0.7;
        int trials = 100;
        int enroll_segments = 5;
        double tau_grid_start = 0.0;
        double tau_grid_stop = 1.0;
        double tau_grid_step = 0.02;
    } eval;

    static AppConfig from_json(const std::string& text);
    static AppConfig from_file(const std::filesystem::path& path);

    SegMethod seg_method() const;
    Framework framework() const;
    FilterSpec filter_spec() const;
    TrainConfig train_config() const;
    EvalOptions eval_options() const;
    DatasetCatalog load_dataset() const;
};

}  // namespace ecgauth
