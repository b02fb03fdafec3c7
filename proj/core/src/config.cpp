#include "ecgauth/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "ecgauth/errors.hpp"

namespace ecgauth {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.contains(key))
            throw ConfigError("unknown key \"" + key + "\" in " + where);
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("bad value for \"") + key + "\" in " + where);
    }
}

}  // namespace

AppConfig AppConfig::from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be an object");
    reject_unknown(root, {"seed", "dataset", "preprocess", "train", "compress", "eval"}, "config");

    AppConfig cfg;
    read(root, "seed", cfg.seed, "config");

    if (root.contains("dataset")) {
        const json& d = root.at("dataset");
        reject_unknown(d,
                       {"kind", "catalog_path", "csv_fs", "subjects", "records_per_subject",
                        "duration_s", "fs", "noise_rms_mv"},
                       "dataset");
        read(d, "kind", cfg.dataset.kind, "dataset");
        read(d, "catalog_path", cfg.dataset.catalog_path, "dataset");
        read(d, "csv_fs", cfg.dataset.csv_fs, "dataset");
        read(d, "subjects", cfg.dataset.subjects, "dataset");
        read(d, "records_per_subject", cfg.dataset.records_per_subject, "dataset");
        read(d, "duration_s", cfg.dataset.duration_s, "dataset");
        read(d, "fs", cfg.dataset.fs, "dataset");
        read(d, "noise_rms_mv", cfg.dataset.noise_rms_mv, "dataset");
        if (cfg.dataset.kind != "synthetic" && cfg.dataset.kind != "catalog")
            throw ConfigError("dataset.kind must be \"synthetic\" or \"catalog\"");
    }

    if (root.contains("preprocess")) {
        const json& p = root.at("preprocess");
        reject_unknown(p,
                       {"low_cut_hz", "high_cut_hz", "filter_order", "target_fs", "segmentation",
                        "max_piece_len_s"},
                       "preprocess");
        read(p, "low_cut_hz", cfg.preprocess.low_cut_hz, "preprocess");
        read(p, "high_cut_hz", cfg.preprocess.high_cut_hz, "preprocess");
        read(p, "filter_order", cfg.preprocess.filter_order, "preprocess");
        read(p, "target_fs", cfg.preprocess.target_fs, "preprocess");
        read(p, "segmentation", cfg.preprocess.segmentation, "preprocess");
        read(p, "max_piece_len_s", cfg.preprocess.max_piece_len_s, "preprocess");
    }

    if (root.contains("train")) {
        const json& t = root.at("train");
        reject_unknown(t,
                       {"framework", "batch_size", "segments_per_record", "lambda", "epochs",
                        "initial_lr", "cosine_annealing", "prune_sparsity", "prune_milestones"},
                       "train");
        read(t, "framework", cfg.train.framework, "train");
        read(t, "batch_size", cfg.train.batch_size, "train");
        read(t, "segments_per_record", cfg.train.segments_per_record, "train");
        read(t, "lambda", cfg.train.lambda, "train");
        read(t, "epochs", cfg.train.epochs, "train");
        read(t, "initial_lr", cfg.train.initial_lr, "train");
        read(t, "cosine_annealing", cfg.train.cosine_annealing, "train");
        read(t, "prune_sparsity", cfg.train.prune_sparsity, "train");
        read(t, "prune_milestones", cfg.train.prune_milestones, "train");
    }

    if (root.contains("compress")) {
        const json& c = root.at("compress");
        reject_unknown(c, {"n_bits", "sparsity"}, "compress");
        read(c, "n_bits", cfg.compress.n_bits, "compress");
        read(c, "sparsity", cfg.compress.sparsity, "compress");
    }

    if (root.contains("eval")) {
        const json& e = root.at("eval");
        reject_unknown(e,
                       {"tau", "trials", "enroll_segments", "tau_grid_start", "tau_grid_stop",
                        "tau_grid_step"},
                       "eval");
        read(e, "tau", cfg.eval.tau, "eval");
        read(e, "trials", cfg.eval.trials, "eval");
        read(e, "enroll_segments", cfg.eval.enroll_segments, "eval");
        read(e, "tau_grid_start", cfg.eval.tau_grid_start, "eval");
        read(e, "tau_grid_stop", cfg.eval.tau_grid_stop, "eval");
        read(e, "tau_grid_step", cfg.eval.tau_grid_step, "eval");
    }
    return cfg;
}

AppConfig AppConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

SegMethod AppConfig::seg_method() const {
    if (preprocess.segmentation == "npd") return SegMethod::NPD;
    if (preprocess.segmentation == "r2r") return SegMethod::R2R;
    if (preprocess.segmentation == "p2t") return SegMethod::P2T;
    throw ConfigError("preprocess.segmentation must be npd, r2r or p2t");
}

Framework AppConfig::framework() const {
    if (train.framework == "triplet") return Framework::Triplet;
    if (train.framework == "siamese") return Framework::Siamese;
    throw ConfigError("train.framework must be triplet or siamese");
}

FilterSpec AppConfig::filter_spec() const {
    return {preprocess.low_cut_hz, preprocess.high_cut_hz, preprocess.filter_order};
}

TrainConfig AppConfig::train_config() const {
    TrainConfig tc;
    tc.framework = framework();
    tc.segmentation = seg_method();
    tc.batch_size = train.batch_size;
    tc.segments_per_record = train.segments_per_record;
    tc.lambda = train.lambda;
    tc.epochs = train.epochs;
    tc.initial_lr = train.initial_lr;
    tc.cosine_annealing = train.cosine_annealing;
    tc.rng_seed = seed;
    tc.filter = filter_spec();
    tc.target_fs = preprocess.target_fs;
    tc.max_piece_len_s = preprocess.max_piece_len_s;
    tc.prune_sparsity = train.prune_sparsity;
    tc.prune_milestones = train.prune_milestones;
    return tc;
}

EvalOptions AppConfig::eval_options() const {
    EvalOptions opts;
    opts.genuine_trials = eval.trials;
    opts.impostor_trials = eval.trials;
    opts.enroll_segments = eval.enroll_segments;
    opts.segmentation = seg_method();
    opts.max_piece_len_s = preprocess.max_piece_len_s;
    opts.filter = filter_spec();
    opts.target_fs = preprocess.target_fs;
    if (eval.tau_grid_step > 0.0) {
        for (double t = eval.tau_grid_start; t <= eval.tau_grid_stop + 1e-12;
             t += eval.tau_grid_step)
            opts.tau_grid.push_back(t);
    }
    return opts;
}

DatasetCatalog AppConfig::load_dataset() const {
    if (dataset.kind == "catalog") {
        if (dataset.catalog_path.empty())
            throw ConfigError("dataset.kind is \"catalog\" but catalog_path is empty");
        return load_catalog(dataset.catalog_path, dataset.csv_fs);
    }
    SyntheticCatalogOptions opts;
    opts.subjects = dataset.subjects;
    opts.records_per_subject = dataset.records_per_subject;
    opts.duration_s = dataset.duration_s;
    opts.fs = dataset.fs;
    opts.noise_rms_mv = dataset.noise_rms_mv;
    opts.seed = seed;
    return make_synthetic_catalog(opts);
}

}  // namespace ecgauth
