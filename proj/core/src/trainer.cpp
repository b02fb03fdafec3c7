#include "ecgauth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ecgauth/errors.hpp"
#include "ecgauth/io_util.hpp"
#include "ecgauth/metric.hpp"

namespace ecgauth {

void TrainConfig::validate() const {
    if (batch_size < 2) throw InvalidSpec("batch size must be at least 2");
    if (framework == Framework::Siamese && segments_per_record < 2)
        throw InvalidSpec("siamese training needs at least 2 segments per record");
    if (!(lambda > 0.0 && lambda < 1.0)) throw InvalidSpec("lambda must lie in (0, 1)");
    if (epochs < 0) throw InvalidSpec("epoch count must be non-negative");
    if (!(initial_lr > 0.0)) throw InvalidSpec("learning rate must be positive");
    if (!(prune_sparsity >= 0.0 && prune_sparsity < 1.0))
        throw InvalidSpec("prune sparsity must lie in [0, 1)");
}

PairCounts count_pairs(int m, int n) {
    if (m < 2 || n < 2) throw InvalidSpec("pair counting needs m >= 2 and n >= 2");
    const auto mu = static_cast<std::uint64_t>(m);
    const auto nu = static_cast<std::uint64_t>(n);
    return {mu * nu * (nu - 1) / 2, mu * (mu - 1) * nu * nu / 2};
}

PairBatch build_siamese_pairs(int m, int n, Rng& rng) {
    PairBatch batch;
    const auto seg = [n](int rec, int k) { return static_cast<std::size_t>(rec * n + k); };
    for (int rec = 0; rec < m; ++rec)
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b) batch.positives.emplace_back(seg(rec, a), seg(rec, b));

    std::vector<std::pair<std::size_t, std::size_t>> all_neg;
    const std::size_t total = static_cast<std::size_t>(m) * n;
    for (std::size_t i = 0; i < total; ++i)
        for (std::size_t j = i + 1; j < total; ++j)
            if (i / n != j / n) all_neg.emplace_back(i, j);

    const std::size_t want = std::min(batch.positives.size(), all_neg.size());
    for (std::size_t idx : sample_without_replacement(rng, all_neg.size(), want))
        batch.negatives.push_back(all_neg[idx]);
    return batch;
}

TripletHardness classify_triplet(double d_p, double d_n, double lambda) {
    if (d_n <= d_p) return TripletHardness::Hard;
    if (d_n >= d_p + lambda) return TripletHardness::Easy;
    return TripletHardness::SemiHard;
}

double contrastive_hinge(double d_p, double d_n, double lambda) {
    const double h = d_p - d_n + lambda;
    if (std::isnan(h)) return h;  // poisoned distances must surface in the loss
    return h > 0.0 ? h : 0.0;
}

double cosine_lr(double initial_lr, int epoch, int total_epochs) {
    if (total_epochs <= 0) return initial_lr;
    const double pi = 3.14159265358979323846;
    return initial_lr * (1.0 + std::cos(pi * static_cast<double>(epoch) / total_epochs)) / 2.0;
}

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

namespace {

EcgRecord preprocess(const EcgRecord& record, const TrainConfig& cfg) {
    return resample(bandpass(record, cfg.filter), cfg.target_fs);
}

std::vector<Segment> segments_or_fail(const EcgRecord& record, const TrainConfig& cfg,
                                      std::size_t count, std::uint64_t seed) {
    try {
        return make_segments(record, cfg.segmentation, count, cfg.max_piece_len_s, seed);
    } catch (const Error& e) {
        throw SegmentationFailed("record " + record.record_id + ": " + e.what());
    }
}

// d = 1 - |r|; gradients with respect to both vectors.
struct DistanceWithGrad {
    double d = 0.0;
    std::vector<double> dx, dy;
};

DistanceWithGrad distance_grad(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw DegenerateVector("zero-variance embedding in training batch");
    const double denom = std::sqrt(sxx * syy);
    const double r = sxy / denom;
    const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);

    DistanceWithGrad out;
    out.d = 1.0 - std::abs(std::clamp(r, -1.0, 1.0));
    out.dx.resize(n);
    out.dy.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double cx = x[i] - mx, cy = y[i] - my;
        const double dr_dx = (cy - (sxy / sxx) * cx) / denom;
        const double dr_dy = (cx - (sxy / syy) * cy) / denom;
        out.dx[i] = -sign * dr_dx;
        out.dy[i] = -sign * dr_dy;
    }
    return out;
}

void axpy(std::vector<double>& acc, std::span<const double> v, double scale) {
    if (acc.empty()) acc.assign(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) acc[i] += scale * v[i];
}

struct EmbeddedSegment {
    ForwardTrace trace;
    std::vector<double> upstream;  // loss gradient wrt this embedding
};

const std::vector<double>& embedding(const EmbeddedSegment& e) { return e.trace.acts.back(); }

Gradients collect_gradients(const EncoderModel& model, std::vector<EmbeddedSegment>& segs) {
    Gradients total = Gradients::zeros_like(model);
    for (auto& s : segs) {
        if (s.upstream.empty()) continue;
        bool nonzero = false;
        for (double v : s.upstream)
            if (v != 0.0) {
                nonzero = true;
                break;
            }
        if (!nonzero) continue;
        total.accumulate(backward(model, s.trace, s.upstream));
    }
    return total;
}

StepResult siamese_step_prepared(std::span<const EcgRecord> prepped, const EncoderModel& model,
                                 const TrainConfig& cfg, std::uint64_t step_seed) {
    const int m = static_cast<int>(prepped.size());
    if (m < 2) throw SegmentationFailed("siamese batch needs at least 2 records");
    const int n = cfg.segments_per_record;

    Rng rng(step_seed);
    std::vector<EmbeddedSegment> segs;
    segs.reserve(static_cast<std::size_t>(m) * n);
    for (const EcgRecord& rec : prepped) {
        const auto drawn = segments_or_fail(rec, cfg, static_cast<std::size_t>(n), rng());
        for (const Segment& s : drawn)
            segs.push_back({forward_traced(model, s.values), {}});
    }

    const PairBatch pairs = build_siamese_pairs(m, n, rng);
    std::vector<DistanceWithGrad> pos(pairs.positives.size()), neg(pairs.negatives.size());
    double dp_mean = 0.0, dn_mean = 0.0;
    for (std::size_t k = 0; k < pairs.positives.size(); ++k) {
        pos[k] = distance_grad(embedding(segs[pairs.positives[k].first]),
                               embedding(segs[pairs.positives[k].second]));
        dp_mean += pos[k].d;
    }
    for (std::size_t k = 0; k < pairs.negatives.size(); ++k) {
        neg[k] = distance_grad(embedding(segs[pairs.negatives[k].first]),
                               embedding(segs[pairs.negatives[k].second]));
        dn_mean += neg[k].d;
    }
    dp_mean /= static_cast<double>(pos.size());
    dn_mean /= static_cast<double>(neg.size());

    StepResult result;
    result.loss = contrastive_hinge(dp_mean, dn_mean, cfg.lambda);
    if (result.loss > 0.0) {
        const double wp = 1.0 / static_cast<double>(pos.size());
        const double wn = -1.0 / static_cast<double>(neg.size());
        for (std::size_t k = 0; k < pos.size(); ++k) {
            axpy(segs[pairs.positives[k].first].upstream, pos[k].dx, wp);
            axpy(segs[pairs.positives[k].second].upstream, pos[k].dy, wp);
        }
        for (std::size_t k = 0; k < neg.size(); ++k) {
            axpy(segs[pairs.negatives[k].first].upstream, neg[k].dx, wn);
            axpy(segs[pairs.negatives[k].second].upstream, neg[k].dy, wn);
        }
    }
    result.grads = collect_gradients(model, segs);
    return result;
}

StepResult triplet_step_prepared(std::span<const EcgRecord> batch,
                                 std::span<const EcgRecord> all_records,
                                 const EncoderModel& model, const TrainConfig& cfg,
                                 std::uint64_t step_seed) {
    if (batch.empty()) throw SegmentationFailed("empty triplet batch");
    if (all_records.size() < 2)
        throw SegmentationFailed("triplet training needs at least 2 records to draw negatives");

    Rng rng(step_seed);
    StepResult result;
    std::vector<EmbeddedSegment> segs;

    for (const EcgRecord& rec : batch) {
        const auto ap = segments_or_fail(rec, cfg, 2, rng());

        // Negative record: uniform over all records except the anchor's.
        const EcgRecord* neg_rec = nullptr;
        do {
            neg_rec = &all_records[static_cast<std::size_t>(uniform_index(rng, all_records.size()))];
        } while (neg_rec->record_id == rec.record_id);
        const auto nseg = segments_or_fail(*neg_rec, cfg, 1, rng());

        EmbeddedSegment anchor{forward_traced(model, ap[0].values), {}};
        EmbeddedSegment positive{forward_traced(model, ap[1].values), {}};
        EmbeddedSegment negative{forward_traced(model, nseg[0].values), {}};

        const auto dp = distance_grad(embedding(anchor), embedding(positive));
        const auto dn = distance_grad(embedding(anchor), embedding(negative));
        const double hinge = contrastive_hinge(dp.d, dn.d, cfg.lambda);
        result.loss += hinge;
        if (hinge > 0.0) {
            axpy(anchor.upstream, dp.dx, 1.0);
            axpy(anchor.upstream, dn.dx, -1.0);
            axpy(positive.upstream, dp.dy, 1.0);
            axpy(negative.upstream, dn.dy, -1.0);
        }
        segs.push_back(std::move(anchor));
        segs.push_back(std::move(positive));
        segs.push_back(std::move(negative));
    }
    result.grads = collect_gradients(model, segs);
    return result;
}

}  // namespace

StepResult siamese_step(std::span<const EcgRecord> batch, const EncoderModel& model,
                        const TrainConfig& cfg, std::uint64_t step_seed) {
    std::vector<EcgRecord> prepped;
    prepped.reserve(batch.size());
    for (const EcgRecord& r : batch) prepped.push_back(preprocess(r, cfg));
    return siamese_step_prepared(prepped, model, cfg, step_seed);
}

StepResult triplet_step(std::span<const EcgRecord> batch, std::span<const EcgRecord> all_records,
                        const EncoderModel& model, const TrainConfig& cfg,
                        std::uint64_t step_seed) {
    std::vector<EcgRecord> prepped_batch, prepped_all;
    prepped_batch.reserve(batch.size());
    prepped_all.reserve(all_records.size());
    for (const EcgRecord& r : batch) prepped_batch.push_back(preprocess(r, cfg));
    for (const EcgRecord& r : all_records) prepped_all.push_back(preprocess(r, cfg));
    return triplet_step_prepared(prepped_batch, prepped_all, model, cfg, step_seed);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

struct AdamState {
    std::vector<ConvGrad> m, v;
    std::int64_t t = 0;

    static AdamState zeros_like(const EncoderModel& model) {
        AdamState s;
        const Gradients z = Gradients::zeros_like(model);
        s.m = z.conv;
        s.v = z.conv;
        return s;
    }
};

void adam_update(EncoderModel& model, const Gradients& grads, AdamState& state, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t li = 0; li < model.conv.size(); ++li) {
        auto update = [&](std::vector<double>& w, const std::vector<double>& g,
                          std::vector<double>& m, std::vector<double>& v) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
            }
        };
        update(model.conv[li].w, grads.conv[li].dw, state.m[li].dw, state.v[li].dw);
        update(model.conv[li].b, grads.conv[li].db, state.m[li].db, state.v[li].db);
    }
}

void apply_mask(EncoderModel& model, const PruneMask& mask) {
    for (std::size_t li = 0; li < model.conv.size(); ++li)
        for (std::size_t i = 0; i < mask.keep[li].size(); ++i)
            if (!mask.keep[li][i]) model.conv[li].w[i] = 0.0;
}

void mask_gradients(Gradients& grads, const PruneMask& mask) {
    for (std::size_t li = 0; li < grads.conv.size(); ++li)
        for (std::size_t i = 0; i < mask.keep[li].size(); ++i)
            if (!mask.keep[li][i]) grads.conv[li].dw[i] = 0.0;
}

}  // namespace

TrainResult train(const DatasetCatalog& catalog, const EncoderModel& init,
                  const TrainConfig& cfg) {
    cfg.validate();
    const auto train_records = catalog.split(Split::Train);
    if (train_records.empty()) throw InvalidSpec("catalog has an empty train split");

    std::vector<EcgRecord> prepped;
    prepped.reserve(train_records.size());
    for (const EcgRecord* r : train_records) prepped.push_back(preprocess(*r, cfg));

    TrainResult result;
    result.model = init;
    if (cfg.epochs == 0) return result;

    AdamState adam = AdamState::zeros_like(result.model);
    Rng rng(cfg.rng_seed);
    const bool pruning = cfg.prune_sparsity > 0.0;
    bool mask_ready = false;

    const auto refresh_mask = [&] {
        auto [pruned, mask] = prune(result.model, cfg.prune_sparsity);
        result.model = std::move(pruned);
        result.mask = std::move(mask);
        mask_ready = true;
    };
    if (pruning && (cfg.prune_milestones.empty() ||
                    std::find(cfg.prune_milestones.begin(), cfg.prune_milestones.end(), 0) !=
                        cfg.prune_milestones.end()))
        refresh_mask();

    std::vector<std::size_t> order(prepped.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr =
            cfg.cosine_annealing ? cosine_lr(cfg.initial_lr, epoch, cfg.epochs) : cfg.initial_lr;
        if (pruning && epoch > 0 &&
            std::find(cfg.prune_milestones.begin(), cfg.prune_milestones.end(), epoch) !=
                cfg.prune_milestones.end())
            refresh_mask();

        shuffle(order, rng);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<EcgRecord> batch;
            for (std::size_t i = start; i < end; ++i) batch.push_back(prepped[order[i]]);
            if (cfg.framework == Framework::Siamese && batch.size() < 2) continue;

            StepResult step =
                cfg.framework == Framework::Siamese
                    ? siamese_step_prepared(batch, result.model, cfg, rng())
                    : triplet_step_prepared(batch, prepped, result.model, cfg, rng());
            if (!std::isfinite(step.loss) || !step.grads.finite()) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch " << batches
                    << " (lr " << lr << ")";
                throw NonFiniteLoss(msg.str());
            }
            if (mask_ready) mask_gradients(step.grads, result.mask);
            adam_update(result.model, step.grads, adam, lr);
            if (mask_ready) apply_mask(result.model, result.mask);
            loss_sum += step.loss;
            ++batches;
        }
        result.history.push_back(
            {epoch, batches > 0 ? loss_sum / batches : 0.0, lr});
    }

    if (mask_ready) {
        // Re-derive the stored mask from the final weights; any kept weight
        // that landed on exactly zero joins the mask to keep the
        // zeros-match-mask invariant intact.
        for (std::size_t li = 0; li < result.model.conv.size(); ++li) {
            for (std::size_t i = 0; i < result.mask.keep[li].size(); ++i)
                if (result.model.conv[li].w[i] == 0.0) result.mask.keep[li][i] = 0;
            result.model.conv[li].mask = result.mask.keep[li];
        }
        result.model.precision = PrecisionKind::Pruned;
    }
    return result;
}

void write_loss_csv(std::span<const EpochStats> history, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "epoch,mean_loss,lr\n";
    out.precision(12);
    for (const auto& e : history) out << e.epoch << "," << e.mean_loss << "," << e.lr << "\n";
    io::atomic_write_text(path, out.str());
}

}  // namespace ecgauth
