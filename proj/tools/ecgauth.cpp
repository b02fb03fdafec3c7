#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ecgauth/authdb.hpp"
#include "ecgauth/compress.hpp"
#include "ecgauth/config.hpp"
#include "ecgauth/errors.hpp"
#include "ecgauth/evalkit.hpp"
#include "ecgauth/io_util.hpp"
#include "ecgauth/trainer.hpp"

namespace {

using namespace ecgauth;

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

AppConfig load_config(const CommonOpts& common) {
    AppConfig cfg = common.config_path.empty() ? AppConfig{}
                                               : AppConfig::from_file(common.config_path);
    if (common.seed) cfg.seed = *common.seed;
    return cfg;
}

EcgRecord prep(const EcgRecord& record, const AppConfig& cfg) {
    return resample(bandpass(record, cfg.filter_spec()), cfg.preprocess.target_fs);
}

int run_synth(const CommonOpts& common, const std::string& out_dir) {
    const AppConfig cfg = load_config(common);
    const DatasetCatalog catalog = cfg.load_dataset();
    write_catalog(catalog, out_dir, "dataset");
    std::cout << "wrote " << catalog.entries.size() << " records to " << out_dir << "\n";
    return 0;
}

int run_train(const CommonOpts& common, const std::string& model_path,
              std::string loss_csv_path) {
    const AppConfig cfg = load_config(common);
    try {
        const DatasetCatalog catalog = cfg.load_dataset();
        const EncoderModel init = EncoderModel::canonical(cfg.seed);
        const TrainResult result = train(catalog, init, cfg.train_config());
        save_model(result.model, model_path);
        if (loss_csv_path.empty()) loss_csv_path = model_path + ".loss.csv";
        write_loss_csv(result.history, loss_csv_path);
        const double last = result.history.empty() ? 0.0 : result.history.back().mean_loss;
        std::cout << "trained " << result.history.size() << " epochs, final mean loss " << last
                  << "\nmodel: " << model_path << "\nloss history: " << loss_csv_path << "\n";
        return 0;
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        std::cerr << "training failed: " << e.what() << "\n";
        return 2;
    }
}

std::vector<Segment> input_segments(const AppConfig& cfg, const std::string& input_path, int fs,
                                    std::size_t count) {
    const EcgRecord raw = load_csv(input_path, fs > 0 ? fs : cfg.dataset.csv_fs);
    return make_segments(prep(raw, cfg), cfg.seg_method(), count, cfg.preprocess.max_piece_len_s,
                         cfg.seed);
}

int run_enroll(const CommonOpts& common, const std::string& model_path,
               const std::string& db_path, const std::string& identity,
               const std::string& input_path, int fs, int count) {
    const AppConfig cfg = load_config(common);
    const EncoderModel model = load_model(model_path);
    TemplateDb db = std::filesystem::exists(db_path) ? restore(db_path)
                                                     : make_db(model, cfg.eval.tau);
    const auto segments =
        input_segments(cfg, input_path, fs,
                       static_cast<std::size_t>(count > 0 ? count : cfg.eval.enroll_segments));
    enroll(db, identity, segments, model);
    persist(db, db_path);
    std::cout << "enrolled " << segments.size() << " segments for \"" << identity << "\" ("
              << db.entries.at(identity).size() << " total)\n";
    return 0;
}

int run_auth(const CommonOpts& common, const std::string& model_path, const std::string& db_path,
             const std::string& identity, const std::string& input_path, int fs, int attempts,
             std::optional<double> tau) {
    const AppConfig cfg = load_config(common);
    const EncoderModel model = load_model(model_path);
    const TemplateDb db = restore(db_path);
    const auto segments =
        input_segments(cfg, input_path, fs, static_cast<std::size_t>(attempts));
    const AuthPolicy policy{attempts};
    const AuthResult result = authenticate_repeat(db, identity, segments, model, policy, tau);
    std::cout << (result.accepted ? "ACCEPT " : "REJECT ") << result.best_score << "\n";
    return result.accepted ? 0 : 3;
}

int run_eval(const CommonOpts& common, const std::string& model_path,
             const std::string& report_path, const std::string& roc_path,
             std::optional<double> tau) {
    const AppConfig cfg = load_config(common);
    const EncoderModel model = load_model(model_path);
    const DatasetCatalog catalog = cfg.load_dataset();
    const EvalReport report =
        run_protocol(catalog, model, tau.value_or(cfg.eval.tau), cfg.seed, cfg.eval_options());
    write_report_csv(report, report_path);
    write_roc_csv(report.roc, roc_path);

    char line[128];
    std::snprintf(line, sizeof line, "%-10s %8llu %8llu %8llu %8llu\n", "tp/tn/fp/fn",
                  static_cast<unsigned long long>(report.tp),
                  static_cast<unsigned long long>(report.tn),
                  static_cast<unsigned long long>(report.fp),
                  static_cast<unsigned long long>(report.fn));
    std::cout << line;
    const auto row = [&](const char* name, double v) {
        std::snprintf(line, sizeof line, "%-10s %8.4f\n", name, v);
        std::cout << line;
    };
    row("accuracy", report.accuracy);
    row("precision", report.precision);
    row("recall", report.recall);
    row("f1", report.f1);
    row("far", report.far);
    row("frr", report.frr);
    row("auc", report.auc);
    std::cout << "report: " << report_path << "\nroc: " << roc_path << "\n";
    return 0;
}

int run_quantize(const std::string& model_path, const std::string& out_path, int n_bits) {
    const EncoderModel model = load_model(model_path);
    save_model(quantize_model(model, n_bits), out_path);
    std::cout << "quantized to " << n_bits << " fractional bits: " << out_path << "\n";
    return 0;
}

int run_prune(const std::string& model_path, const std::string& out_path, double sparsity) {
    const EncoderModel model = load_model(model_path);
    const auto [pruned, mask] = prune(model, sparsity);
    save_model(pruned, out_path);
    std::cout << "pruned " << mask.pruned_count() << " of " << mask.total_count()
              << " weights: " << out_path << "\n";
    return 0;
}

int run_cost(const std::string& model_path, const std::string& out_path) {
    const CostReport report = cost_report(load_model(model_path));
    const std::string text = cost_csv_header() + "\n" + cost_csv_row(report) + "\n";
    std::cout << text;
    if (!out_path.empty()) io::atomic_write_text(out_path, text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ECG biometric authentication toolkit"};
    app.require_subcommand(1);

    CommonOpts common;
    int rc = 0;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", common.config_path, "JSON config file");
        cmd->add_option("--seed", common.seed, "override the config seed");
    };

    // synth
    std::string out_dir = "dataset";
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with catalog file");
    add_common(synth);
    synth->add_option("--out", out_dir, "output directory");
    synth->callback([&] { rc = run_synth(common, out_dir); });

    // train
    std::string model_path = "model.ecga", loss_csv;
    auto* train_cmd = app.add_subcommand("train", "train the encoder");
    add_common(train_cmd);
    train_cmd->add_option("--model", model_path, "output model file");
    train_cmd->add_option("--loss-csv", loss_csv, "loss history CSV (default <model>.loss.csv)");
    train_cmd->callback([&] { rc = run_train(common, model_path, loss_csv); });

    // enroll
    std::string db_path = "templates.ecgt", identity, input_path;
    int fs = 0, count = 0;
    auto* enroll_cmd = app.add_subcommand("enroll", "enroll an identity from a recording");
    add_common(enroll_cmd);
    enroll_cmd->add_option("--model", model_path)->required();
    enroll_cmd->add_option("--db", db_path)->required();
    enroll_cmd->add_option("--identity", identity)->required();
    enroll_cmd->add_option("--input", input_path, "CSV recording")->required();
    enroll_cmd->add_option("--fs", fs, "input sampling rate (default dataset.csv_fs)");
    enroll_cmd->add_option("--count", count, "segments to enroll (default eval.enroll_segments)");
    enroll_cmd->callback(
        [&] { rc = run_enroll(common, model_path, db_path, identity, input_path, fs, count); });

    // auth
    int attempts = 1;
    std::optional<double> tau;
    auto* auth_cmd = app.add_subcommand("auth", "authenticate a recording against an identity");
    add_common(auth_cmd);
    auth_cmd->add_option("--model", model_path)->required();
    auth_cmd->add_option("--db", db_path)->required();
    auth_cmd->add_option("--identity", identity)->required();
    auth_cmd->add_option("--input", input_path, "CSV recording")->required();
    auth_cmd->add_option("--fs", fs, "input sampling rate (default dataset.csv_fs)");
    auth_cmd->add_option("--attempts", attempts, "repeat attempts, any-success")
        ->check(CLI::Range(1, 10));
    auth_cmd->add_option("--tau", tau, "decision threshold (default from db)");
    auth_cmd->callback([&] {
        rc = run_auth(common, model_path, db_path, identity, input_path, fs, attempts, tau);
    });

    // eval
    std::string report_path = "report.csv", roc_path = "roc.csv";
    auto* eval_cmd = app.add_subcommand("eval", "run the verification protocol");
    add_common(eval_cmd);
    eval_cmd->add_option("--model", model_path)->required();
    eval_cmd->add_option("--report", report_path, "report CSV path");
    eval_cmd->add_option("--roc", roc_path, "ROC CSV path");
    eval_cmd->add_option("--tau", tau, "decision threshold (default eval.tau)");
    eval_cmd->callback([&] { rc = run_eval(common, model_path, report_path, roc_path, tau); });

    // quantize
    std::string out_model = "model.int8.ecga";
    int n_bits = 8;
    auto* quant_cmd = app.add_subcommand("quantize", "power-of-two weight quantization");
    quant_cmd->add_option("--model", model_path)->required();
    quant_cmd->add_option("--out", out_model)->required();
    quant_cmd->add_option("--n-bits", n_bits, "fractional bits")->check(CLI::Range(2, 24));
    quant_cmd->callback([&] { rc = run_quantize(model_path, out_model, n_bits); });

    // prune
    double sparsity = 0.2;
    auto* prune_cmd = app.add_subcommand("prune", "global magnitude pruning");
    prune_cmd->add_option("--model", model_path)->required();
    prune_cmd->add_option("--out", out_model)->required();
    prune_cmd->add_option("--sparsity", sparsity)->check(CLI::Range(0.0, 0.999));
    prune_cmd->callback([&] { rc = run_prune(model_path, out_model, sparsity); });

    // cost
    std::string cost_out;
    auto* cost_cmd = app.add_subcommand("cost", "CPU-cycle cost report");
    cost_cmd->add_option("--model", model_path)->required();
    cost_cmd->add_option("--out", cost_out, "also write the CSV here");
    cost_cmd->callback([&] { rc = run_cost(model_path, cost_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ecgauth::ModelMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const ecgauth::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
