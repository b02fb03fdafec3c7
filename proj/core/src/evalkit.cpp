#include "ecgauth/evalkit.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "ecgauth/errors.hpp"
#include "ecgauth/io_util.hpp"
#include "ecgauth/metric.hpp"
#include "ecgauth/rng.hpp"

namespace ecgauth {

namespace {

std::vector<double> default_grid() {
    std::vector<double> taus;
    for (int i = 0; i <= 50; ++i) taus.push_back(0.02 * i);
    return taus;
}

struct SubjectMaterial {
    std::vector<EcgRecord> enroll_parts;
    std::vector<EcgRecord> probe_parts;
};

EcgRecord slice_record(const EcgRecord& rec, std::size_t begin, std::size_t end,
                       const std::string& suffix) {
    EcgRecord out = rec;
    out.record_id += suffix;
    out.samples.assign(rec.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                       rec.samples.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

// Enrollment and probe material come from disjoint record regions: explicit
// enroll-split records when present, otherwise the first half of each test
// record enrolls and the second half is probed.
std::map<std::string, SubjectMaterial> gather_material(const DatasetCatalog& catalog,
                                                       const EvalOptions& opts) {
    std::map<std::string, SubjectMaterial> subjects;
    const auto prep = [&](const EcgRecord& r) {
        return resample(bandpass(r, opts.filter), opts.target_fs);
    };
    std::set<std::string> has_enroll_records;
    for (const auto& e : catalog.entries) {
        if (e.split != Split::Enroll) continue;
        subjects[e.record.subject_id].enroll_parts.push_back(prep(e.record));
        has_enroll_records.insert(e.record.subject_id);
    }
    for (const auto& e : catalog.entries) {
        if (e.split != Split::Test) continue;
        auto& mat = subjects[e.record.subject_id];
        const EcgRecord prepped = prep(e.record);
        if (has_enroll_records.contains(e.record.subject_id)) {
            mat.probe_parts.push_back(prepped);
        } else {
            const std::size_t half = prepped.samples.size() / 2;
            mat.enroll_parts.push_back(slice_record(prepped, 0, half, "/enroll"));
            mat.probe_parts.push_back(
                slice_record(prepped, half, prepped.samples.size(), "/probe"));
        }
    }
    for (auto it = subjects.begin(); it != subjects.end();) {
        if (it->second.probe_parts.empty() || it->second.enroll_parts.empty())
            it = subjects.erase(it);
        else
            ++it;
    }
    return subjects;
}

Segment draw_probe(const std::vector<EcgRecord>& parts, const EvalOptions& opts, Rng& rng) {
    const auto& rec = parts[static_cast<std::size_t>(uniform_index(rng, parts.size()))];
    return make_segments(rec, opts.segmentation, 1, opts.max_piece_len_s, rng())[0];
}

// Per-trial score lists: genuine[subject][trial][attempt].
struct TrialScores {
    std::vector<std::vector<std::vector<double>>> genuine;
    std::vector<std::vector<std::vector<double>>> impostor;
};

TrialScores collect_scores(const DatasetCatalog& catalog, const EncoderModel& model,
                           std::uint64_t seed, const EvalOptions& opts, int attempts) {
    const auto subjects = gather_material(catalog, opts);
    if (subjects.size() < 2)
        throw InsufficientSubjects("evaluation needs at least 2 test-split subjects");

    std::vector<const SubjectMaterial*> materials;
    std::vector<std::string> names;
    for (const auto& [name, mat] : subjects) {
        names.push_back(name);
        materials.push_back(&mat);
    }

    Rng rng(seed);
    TrialScores scores;
    for (std::size_t si = 0; si < materials.size(); ++si) {
        const SubjectMaterial& mat = *materials[si];

        // Enrollment: spread the requested segment count over the subject's
        // enrollment parts.
        std::vector<std::vector<double>> templates;
        for (int k = 0; k < opts.enroll_segments; ++k) {
            const auto& rec =
                mat.enroll_parts[static_cast<std::size_t>(k) % mat.enroll_parts.size()];
            const Segment seg =
                make_segments(rec, opts.segmentation, 1, opts.max_piece_len_s, rng())[0];
            templates.push_back(forward(model, seg.values));
        }

        const auto score_against_templates = [&](const Segment& seg) {
            const std::vector<double> fv = forward(model, seg.values);
            double best = 0.0;
            for (const auto& t : templates)
                best = std::max(best, mapping_score(fv, t).value);
            return best;
        };

        std::vector<std::vector<double>> genuine;
        for (int trial = 0; trial < opts.genuine_trials; ++trial) {
            std::vector<double> per_attempt;
            for (int a = 0; a < attempts; ++a)
                per_attempt.push_back(score_against_templates(draw_probe(mat.probe_parts, opts, rng)));
            genuine.push_back(std::move(per_attempt));
        }

        std::vector<std::vector<double>> impostor;
        for (int trial = 0; trial < opts.impostor_trials; ++trial) {
            // One impostor subject per trial, uniform over the others.
            std::size_t other = static_cast<std::size_t>(uniform_index(rng, materials.size() - 1));
            if (other >= si) ++other;
            std::vector<double> per_attempt;
            for (int a = 0; a < attempts; ++a)
                per_attempt.push_back(
                    score_against_templates(draw_probe(materials[other]->probe_parts, opts, rng)));
            impostor.push_back(std::move(per_attempt));
        }
        scores.genuine.push_back(std::move(genuine));
        scores.impostor.push_back(std::move(impostor));
    }
    return scores;
}

bool any_accept(const std::vector<double>& attempts, int k, double tau) {
    for (int a = 0; a < k && a < static_cast<int>(attempts.size()); ++a)
        if (attempts[static_cast<std::size_t>(a)] > tau) return true;
    return false;
}

struct Confusion {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
};

Confusion confusion_at(const TrialScores& scores, double tau, int k) {
    Confusion c;
    for (const auto& subject : scores.genuine)
        for (const auto& trial : subject)
            any_accept(trial, k, tau) ? ++c.tp : ++c.fn;
    for (const auto& subject : scores.impostor)
        for (const auto& trial : subject)
            any_accept(trial, k, tau) ? ++c.fp : ++c.tn;
    return c;
}

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::vector<RocPoint> roc_from_scores(const TrialScores& scores,
                                      std::span<const double> taus) {
    std::vector<RocPoint> points;
    for (double tau : taus) {
        const Confusion c = confusion_at(scores, tau, 1);
        RocPoint p;
        p.tau = tau;
        p.far = ratio(c.fp, c.fp + c.tn);
        p.frr = ratio(c.fn, c.fn + c.tp);
        p.tpr = 1.0 - p.frr;
        p.fpr = p.far;
        points.push_back(p);
    }
    return points;
}

}  // namespace

EvalReport report_from_counts(std::uint64_t tp, std::uint64_t tn, std::uint64_t fp,
                              std::uint64_t fn) {
    EvalReport report;
    report.tp = tp;
    report.tn = tn;
    report.fp = fp;
    report.fn = fn;
    report.precision = ratio(tp, tp + fp);
    report.recall = ratio(tp, tp + fn);
    report.f1 = (report.precision + report.recall) > 0.0
                    ? 2.0 * report.precision * report.recall / (report.precision + report.recall)
                    : 0.0;
    report.accuracy = ratio(tp + tn, tp + tn + fp + fn);
    report.far = ratio(fp, fp + tn);
    report.frr = ratio(fn, fn + tp);
    return report;
}

EvalReport run_protocol(const DatasetCatalog& catalog, const EncoderModel& model, double tau,
                        std::uint64_t seed, const EvalOptions& opts) {
    const TrialScores scores = collect_scores(catalog, model, seed, opts, 1);
    const Confusion c = confusion_at(scores, tau, 1);
    EvalReport report = report_from_counts(c.tp, c.tn, c.fp, c.fn);
    report.roc = roc_from_scores(scores, opts.tau_grid.empty() ? default_grid() : opts.tau_grid);
    report.auc = roc_auc(report.roc);
    return report;
}

std::vector<RocPoint> sweep_threshold(const DatasetCatalog& catalog, const EncoderModel& model,
                                      std::span<const double> taus, std::uint64_t seed,
                                      const EvalOptions& opts) {
    const TrialScores scores = collect_scores(catalog, model, seed, opts, 1);
    return roc_from_scores(scores, taus);
}

double roc_auc(std::span<const RocPoint> points) {
    if (points.size() < 2) throw InvalidSpec("AUC needs at least 2 ROC points");
    std::vector<RocPoint> sorted(points.begin(), points.end());
    std::sort(sorted.begin(), sorted.end(), [](const RocPoint& a, const RocPoint& b) {
        if (a.fpr != b.fpr) return a.fpr < b.fpr;
        return a.tpr < b.tpr;
    });
    double auc = 0.0;
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
        auc += (sorted[i + 1].fpr - sorted[i].fpr) * (sorted[i].tpr + sorted[i + 1].tpr) / 2.0;
    return auc;
}

std::vector<RepeatRates> repeat_protocol(const DatasetCatalog& catalog, const EncoderModel& model,
                                         double tau, int max_attempts, std::uint64_t seed,
                                         const EvalOptions& opts) {
    if (max_attempts < 1 || max_attempts > 10)
        throw InvalidSpec("attempts must lie in [1, 10]");
    const TrialScores scores = collect_scores(catalog, model, seed, opts, max_attempts);
    std::vector<RepeatRates> rates;
    for (int k = 1; k <= max_attempts; ++k) {
        const Confusion c = confusion_at(scores, tau, k);
        rates.push_back({k, ratio(c.tp, c.tp + c.fn), ratio(c.fp, c.fp + c.tn)});
    }
    return rates;
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ostringstream out;
    out.precision(10);
    out << "tp,tn,fp,fn,precision,recall,f1,accuracy,far,frr,auc\n";
    out << report.tp << "," << report.tn << "," << report.fp << "," << report.fn << ","
        << report.precision << "," << report.recall << "," << report.f1 << "," << report.accuracy
        << "," << report.far << "," << report.frr << "," << report.auc << "\n";
    io::atomic_write_text(path, out.str());
}

void write_roc_csv(std::span<const RocPoint> points, const std::filesystem::path& path) {
    std::ostringstream out;
    out.precision(10);
    out << "tau,far,frr,tpr,fpr\n";
    for (const auto& p : points)
        out << p.tau << "," << p.far << "," << p.frr << "," << p.tpr << "," << p.fpr << "\n";
    io::atomic_write_text(path, out.str());
}

}  // namespace ecgauth
