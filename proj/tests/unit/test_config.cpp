#include <doctest.h>

#include <fstream>

#include "ecgauth/config.hpp"
#include "ecgauth/errors.hpp"
#include "tempdir.hpp"

using namespace ecgauth;

TEST_CASE("empty config yields the documented defaults") {
    const AppConfig cfg = AppConfig::from_json("{}");
    CHECK(cfg.seed == 1);
    CHECK(cfg.dataset.kind == "synthetic");
    CHECK(cfg.preprocess.target_fs == 200);
    CHECK(cfg.train.lambda == 0.7);
    CHECK(cfg.train.initial_lr == 0.0015);
    CHECK(cfg.eval.tau == 0.7);
    CHECK(cfg.seg_method() == SegMethod::NPD);
    CHECK(cfg.framework() == Framework::Triplet);
}

TEST_CASE("sections parse and map onto module configs") {
    const AppConfig cfg = AppConfig::from_json(R"({
        "seed": 42,
        "dataset": {"subjects": 6, "duration_s": 30.0, "fs": 200},
        "preprocess": {"segmentation": "r2r", "max_piece_len_s": 1.5},
        "train": {"framework": "siamese", "batch_size": 4, "epochs": 10, "initial_lr": 0.01},
        "compress": {"n_bits": 16, "sparsity": 0.4},
        "eval": {"tau": 0.75, "trials": 25}
    })");
    const TrainConfig tc = cfg.train_config();
    CHECK(tc.framework == Framework::Siamese);
    CHECK(tc.segmentation == SegMethod::R2R);
    CHECK(tc.batch_size == 4);
    CHECK(tc.epochs == 10);
    CHECK(tc.rng_seed == 42);
    CHECK(tc.max_piece_len_s == 1.5);

    const EvalOptions eo = cfg.eval_options();
    CHECK(eo.genuine_trials == 25);
    CHECK(eo.segmentation == SegMethod::R2R);
    CHECK(eo.tau_grid.size() == 51);

    const DatasetCatalog catalog = cfg.load_dataset();
    CHECK(catalog.subjects(Split::Test).size() == 6);
}

TEST_CASE("unknown keys are rejected at every level") {
    CHECK_THROWS_AS(AppConfig::from_json(R"({"sede": 1})"), ConfigError);
    CHECK_THROWS_AS(AppConfig::from_json(R"({"train": {"epochz": 5}})"), ConfigError);
    CHECK_THROWS_AS(AppConfig::from_json(R"({"eval": {"tau": 0.7, "x": 1}})"), ConfigError);
}

TEST_CASE("bad values are config errors") {
    CHECK_THROWS_AS(AppConfig::from_json("not json"), ConfigError);
    CHECK_THROWS_AS(AppConfig::from_json(R"({"seed": "abc"})"), ConfigError);
    CHECK_THROWS_AS(AppConfig::from_json(R"({"dataset": {"kind": "nope"}})"), ConfigError);
    CHECK_THROWS_AS(AppConfig::from_json(R"({"train": {"framework": "x"}})").train_config(),
                    ConfigError);
    CHECK_THROWS_AS(AppConfig::from_json(R"({"preprocess": {"segmentation": "x"}})").seg_method(),
                    ConfigError);
    const AppConfig missing = AppConfig::from_json(R"({"dataset": {"kind": "catalog"}})");
    CHECK_THROWS_AS(missing.load_dataset(), ConfigError);
}

TEST_CASE("config loads from a file") {
    corpus::TempDir tmp;
    {
        std::ofstream out(tmp.file("c.json"));
        out << R"({"seed": 9})";
    }
    CHECK(AppConfig::from_file(tmp.file("c.json")).seed == 9);
    CHECK_THROWS_AS(AppConfig::from_file(tmp.file("missing.json")), ConfigError);
}
