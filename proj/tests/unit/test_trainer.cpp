#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <span>

#include "corpus.hpp"
#include "ecgauth/errors.hpp"
#include "ecgauth/metric.hpp"
#include "ecgauth/trainer.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

using namespace ecgauth;

namespace {

TrainConfig toy_config(Framework fw, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.framework = fw;
    cfg.segmentation = SegMethod::NPD;
    cfg.batch_size = 2;
    cfg.segments_per_record = 2;
    cfg.lambda = 0.7;
    cfg.rng_seed = seed;
    return cfg;
}

std::vector<EcgRecord> toy_batch(int count, std::uint64_t seed) {
    std::vector<EcgRecord> records;
    for (int i = 0; i < count; ++i)
        records.push_back(corpus::prepped_record(seed + static_cast<std::uint64_t>(i), 15.0));
    return records;
}

// Micro model that ignores its input: zero weights, distinct biases. Every
// embedding is identical and non-constant.
EncoderModel input_blind_model() {
    EncoderModel model = corpus::tiny_model(1);
    for (auto& t : model.conv) std::fill(t.w.begin(), t.w.end(), 0.0);
    for (std::size_t i = 0; i < model.conv.back().b.size(); ++i)
        model.conv.back().b[i] = 0.25 * static_cast<double>(i + 1);
    return model;
}

double oracle_siamese_loss(std::span<const EcgRecord> batch, const EncoderModel& model,
                           const TrainConfig& cfg, std::uint64_t step_seed) {
    std::vector<EcgRecord> prepped;
    for (const auto& r : batch) prepped.push_back(resample(bandpass(r, cfg.filter), cfg.target_fs));
    Rng rng(step_seed);
    std::vector<std::vector<double>> emb;
    for (const auto& rec : prepped)
        for (const auto& seg : make_segments(rec, cfg.segmentation,
                                             static_cast<std::size_t>(cfg.segments_per_record),
                                             cfg.max_piece_len_s, rng()))
            emb.push_back(forward(model, seg.values));
    const PairBatch pairs =
        build_siamese_pairs(static_cast<int>(batch.size()), cfg.segments_per_record, rng);
    double dp = 0.0, dn = 0.0;
    for (const auto& [a, b] : pairs.positives) dp += 1.0 - oracle::naive_abs_pearson(emb[a], emb[b]);
    for (const auto& [a, b] : pairs.negatives) dn += 1.0 - oracle::naive_abs_pearson(emb[a], emb[b]);
    dp /= static_cast<double>(pairs.positives.size());
    dn /= static_cast<double>(pairs.negatives.size());
    return std::max(0.0, dp - dn + cfg.lambda);
}

double oracle_triplet_loss(std::span<const EcgRecord> batch, std::span<const EcgRecord> all,
                           const EncoderModel& model, const TrainConfig& cfg,
                           std::uint64_t step_seed) {
    std::vector<EcgRecord> prepped_batch, prepped_all;
    for (const auto& r : batch)
        prepped_batch.push_back(resample(bandpass(r, cfg.filter), cfg.target_fs));
    for (const auto& r : all)
        prepped_all.push_back(resample(bandpass(r, cfg.filter), cfg.target_fs));

    Rng rng(step_seed);
    double loss = 0.0;
    for (const auto& rec : prepped_batch) {
        const auto ap = make_segments(rec, cfg.segmentation, 2, cfg.max_piece_len_s, rng());
        std::size_t neg_idx;
        do {
            neg_idx = static_cast<std::size_t>(uniform_index(rng, prepped_all.size()));
        } while (prepped_all[neg_idx].record_id == rec.record_id);
        const auto nseg =
            make_segments(prepped_all[neg_idx], cfg.segmentation, 1, cfg.max_piece_len_s, rng());
        const auto a = forward(model, ap[0].values);
        const auto p = forward(model, ap[1].values);
        const auto n = forward(model, nseg[0].values);
        const double dp = 1.0 - oracle::naive_abs_pearson(a, p);
        const double dn = 1.0 - oracle::naive_abs_pearson(a, n);
        loss += std::max(0.0, dp - dn + cfg.lambda);
    }
    return loss;
}

double grads_max_abs(const Gradients& g) {
    double worst = 0.0;
    for (const auto& layer : g.conv) {
        for (double v : layer.dw) worst = std::max(worst, std::abs(v));
        for (double v : layer.db) worst = std::max(worst, std::abs(v));
    }
    return worst;
}

}  // namespace

TEST_CASE("count_pairs closed forms match brute-force enumeration") {
    CHECK(count_pairs(4, 3).n_pos == 12);
    CHECK(count_pairs(4, 3).n_neg == 54);
    CHECK(count_pairs(2, 2).n_pos == 2);
    CHECK(count_pairs(2, 2).n_neg == 4);
    CHECK_THROWS_AS(count_pairs(1, 3), InvalidSpec);

    for (int m = 2; m <= 8; ++m) {
        for (int n = 2; n <= 8; ++n) {
            std::uint64_t pos = 0, neg = 0;
            const int total = m * n;  // segment i belongs to record i / n
            for (int i = 0; i < total; ++i)
                for (int j = i + 1; j < total; ++j) (i / n == j / n ? pos : neg) += 1;
            const PairCounts counts = count_pairs(m, n);
            REQUIRE(counts.n_pos == pos);
            REQUIRE(counts.n_neg == neg);
            REQUIRE(counts.n_pos + counts.n_neg ==
                    static_cast<std::uint64_t>(total) * (total - 1) / 2);
        }
    }
}

TEST_CASE("siamese pair building subsamples negatives without same-record pairs") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        Rng rng(seed);
        const int m = 2 + static_cast<int>(seed % 5);
        const int n = 2 + static_cast<int>(seed % 3);
        const PairBatch batch = build_siamese_pairs(m, n, rng);
        const PairCounts counts = count_pairs(m, n);
        REQUIRE(batch.positives.size() == counts.n_pos);
        REQUIRE(batch.negatives.size() == counts.n_pos);  // balanced subsample
        for (const auto& [a, b] : batch.positives)
            REQUIRE(a / static_cast<std::size_t>(n) == b / static_cast<std::size_t>(n));
        std::set<std::pair<std::size_t, std::size_t>> seen;
        for (const auto& [a, b] : batch.negatives) {
            REQUIRE(a / static_cast<std::size_t>(n) != b / static_cast<std::size_t>(n));
            REQUIRE(seen.insert({a, b}).second);  // no duplicates
        }
    }
}

TEST_CASE("triplet hardness taxonomy") {
    CHECK(classify_triplet(0.1, 0.9, 0.7) == TripletHardness::Easy);
    CHECK(classify_triplet(0.5, 0.4, 0.7) == TripletHardness::Hard);
    CHECK(classify_triplet(0.2, 0.6, 0.7) == TripletHardness::SemiHard);
    // Boundaries: equal distances are hard, exactly at margin is easy.
    CHECK(classify_triplet(0.3, 0.3, 0.7) == TripletHardness::Hard);
    CHECK(classify_triplet(0.2, 0.9, 0.7) == TripletHardness::Easy);
}

TEST_CASE("hinge arithmetic") {
    CHECK(contrastive_hinge(0.5, 0.4, 0.7) == doctest::Approx(0.8));
    CHECK(contrastive_hinge(0.0, 1.0, 0.7) == 0.0);
    CHECK(contrastive_hinge(0.0, 0.0, 0.7) == doctest::Approx(0.7));
    // With lambda 0 and identical anchor/positive, the loss vanishes.
    CHECK(contrastive_hinge(0.0, 0.3, 0.0) == 0.0);
}

TEST_CASE("identical embeddings give loss lambda and zero gradients") {
    const EncoderModel blind = input_blind_model();
    const auto batch = toy_batch(2, 100);
    const TrainConfig cfg = toy_config(Framework::Siamese, 1);

    const StepResult siam = siamese_step(batch, blind, cfg, 5);
    CHECK(siam.loss == doctest::Approx(cfg.lambda).epsilon(1e-12));
    CHECK(grads_max_abs(siam.grads) == 0.0);

    const StepResult trip = triplet_step(batch, batch, blind, cfg, 5);
    CHECK(trip.loss == doctest::Approx(2.0 * cfg.lambda).epsilon(1e-12));
    CHECK(grads_max_abs(trip.grads) == 0.0);
}

TEST_CASE("siamese_step loss matches the straight-line recomputation") {
    const EncoderModel model = corpus::tiny_model(7);
    const auto batch = toy_batch(3, 200);
    TrainConfig cfg = toy_config(Framework::Siamese, 1);
    cfg.batch_size = 3;
    for (std::uint64_t step_seed : {1ull, 99ull, 12345ull}) {
        const StepResult got = siamese_step(batch, model, cfg, step_seed);
        const double expect = oracle_siamese_loss(batch, model, cfg, step_seed);
        REQUIRE(got.loss == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("triplet_step loss matches the straight-line recomputation") {
    const EncoderModel model = corpus::tiny_model(9);
    const auto all = toy_batch(4, 300);
    const std::vector<EcgRecord> batch(all.begin(), all.begin() + 2);
    const TrainConfig cfg = toy_config(Framework::Triplet, 1);
    for (std::uint64_t step_seed : {2ull, 77ull, 4242ull}) {
        const StepResult got = triplet_step(batch, all, model, cfg, step_seed);
        const double expect = oracle_triplet_loss(batch, all, model, cfg, step_seed);
        REQUIRE(got.loss == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("loss gradients match finite differences through both frameworks") {
    const auto batch = toy_batch(2, 400);
    for (const Framework fw : {Framework::Siamese, Framework::Triplet}) {
        const TrainConfig cfg = toy_config(fw, 1);
        EncoderModel model = corpus::tiny_model(13);
        const auto step = [&](const EncoderModel& m) {
            return fw == Framework::Siamese ? siamese_step(batch, m, cfg, 31)
                                            : triplet_step(batch, batch, m, cfg, 31);
        };
        const StepResult analytic = step(model);
        REQUIRE(analytic.loss > 0.0);  // hinge active, otherwise the check is vacuous

        const auto loss_eval = [&] { return step(model).loss; };
        for (std::size_t li = 0; li < model.conv.size(); ++li) {
            for (std::size_t i = 0; i < model.conv[li].w.size(); ++i) {
                const double fd =
                    oracle::central_difference(loss_eval, model.conv[li].w[i], 1e-5);
                REQUIRE(oracle::rel_error(analytic.grads.conv[li].dw[i], fd, 1e-7) < 1e-4);
            }
            for (std::size_t i = 0; i < model.conv[li].b.size(); ++i) {
                const double fd =
                    oracle::central_difference(loss_eval, model.conv[li].b[i], 1e-5);
                REQUIRE(oracle::rel_error(analytic.grads.conv[li].db[i], fd, 1e-7) < 1e-4);
            }
        }
    }
}

TEST_CASE("step losses stay within their structural bounds") {
    const EncoderModel model = corpus::tiny_model(17);
    const auto batch = toy_batch(3, 600);
    TrainConfig cfg = toy_config(Framework::Siamese, 1);
    cfg.batch_size = 3;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const double siam = siamese_step(batch, model, cfg, seed).loss;
        CHECK(siam >= 0.0);
        CHECK(siam <= 1.0 + cfg.lambda);
        const double trip = triplet_step(batch, batch, model, cfg, seed).loss;
        CHECK(trip >= 0.0);
        CHECK(trip <= 3.0 * (1.0 + cfg.lambda));
    }
}

TEST_CASE("cosine annealing endpoints") {
    CHECK(cosine_lr(0.05, 0, 100) == doctest::Approx(0.05));
    CHECK(cosine_lr(0.05, 100, 100) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(cosine_lr(0.05, 50, 100) == doctest::Approx(0.025));
}

TEST_CASE("zero epochs leave the model bit-exact") {
    const DatasetCatalog catalog = corpus::catalog(3, 55, 15.0, 0.0);
    const EncoderModel init = corpus::tiny_model(21);
    TrainConfig cfg = toy_config(Framework::Triplet, 3);
    cfg.epochs = 0;
    const TrainResult result = train(catalog, init, cfg);
    CHECK(serialize_model(result.model) == serialize_model(init));
    CHECK(result.history.empty());
}

TEST_CASE("training reduces the loss trend") {
    const DatasetCatalog catalog = corpus::catalog(8, 66, 20.0, 0.02);
    const EncoderModel init = EncoderModel::canonical(23);
    TrainConfig cfg = toy_config(Framework::Triplet, 5);
    cfg.batch_size = 8;
    cfg.epochs = 50;
    cfg.initial_lr = 0.001;
    const TrainResult result = train(catalog, init, cfg);
    REQUIRE(result.history.size() == 50);

    const auto window_mean = [&](std::size_t begin) {
        double acc = 0.0;
        for (std::size_t i = begin; i < begin + 5; ++i) acc += result.history[i].mean_loss;
        return acc / 5.0;
    };
    CHECK(window_mean(45) < window_mean(0));
}

TEST_CASE("training runs end to end under every segmentation method") {
    const DatasetCatalog catalog = corpus::catalog(4, 99, 30.0, 0.02);
    for (const SegMethod method : {SegMethod::R2R, SegMethod::P2T}) {
        TrainConfig cfg = toy_config(Framework::Triplet, 11);
        cfg.segmentation = method;
        cfg.batch_size = 4;
        cfg.epochs = 3;
        cfg.initial_lr = 0.001;
        const TrainResult result = train(catalog, corpus::tiny_model(31), cfg);
        REQUIRE(result.history.size() == 3);
        for (const auto& e : result.history) CHECK(std::isfinite(e.mean_loss));
    }
}

TEST_CASE("absurd learning rate aborts with a non-finite loss") {
    const DatasetCatalog catalog = corpus::catalog(3, 77, 15.0, 0.0);
    const EncoderModel init = EncoderModel::canonical(25);
    TrainConfig cfg = toy_config(Framework::Triplet, 7);
    cfg.batch_size = 3;
    cfg.epochs = 50;
    cfg.initial_lr = 1e200;  // first update drives activations past double range
    cfg.cosine_annealing = false;
    CHECK_THROWS_AS(train(catalog, init, cfg), NonFiniteLoss);
}

TEST_CASE("pruning during training keeps masked weights at zero") {
    const DatasetCatalog catalog = corpus::catalog(4, 88, 15.0, 0.0);
    const EncoderModel init = corpus::tiny_model(27);
    TrainConfig cfg = toy_config(Framework::Triplet, 9);
    cfg.batch_size = 4;
    cfg.epochs = 8;
    cfg.initial_lr = 0.002;
    cfg.prune_sparsity = 0.3;
    cfg.prune_milestones = {0, 4};
    const TrainResult result = train(catalog, init, cfg);

    REQUIRE(result.model.precision == PrecisionKind::Pruned);
    std::size_t total = 0;
    for (const auto& t : init.conv) total += t.w.size();
    const auto want = static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(total)));
    CHECK(result.mask.pruned_count() >= want);
    for (std::size_t li = 0; li < result.model.conv.size(); ++li)
        for (std::size_t i = 0; i < result.model.conv[li].w.size(); ++i)
            if (!result.mask.keep[li][i]) REQUIRE(result.model.conv[li].w[i] == 0.0);
}

TEST_CASE("loss history csv shape") {
    corpus::TempDir tmp;
    std::vector<EpochStats> history = {{0, 1.5, 0.05}, {1, 1.2, 0.04}};
    write_loss_csv(history, tmp.file("loss.csv"));
    std::ifstream in(tmp.file("loss.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,mean_loss,lr");
    std::getline(in, line);
    CHECK(line.substr(0, 6) == "0,1.5,");
}
