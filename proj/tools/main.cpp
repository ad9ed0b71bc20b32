// Command-line pipeline: synth | train | score | eval.
//
// Exit codes: 0 success, 2 bad flags, 3 I/O failure, 4 non-finite training
// loss, 5 model/data dimension mismatch, 6 score/label shape mismatch.
// stdout carries a single summary line; diagnostics go to stderr.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sisvae/checkpoint.hpp"
#include "sisvae/datagen.hpp"
#include "sisvae/evalkit.hpp"
#include "sisvae/rng.hpp"
#include "sisvae/scoring.hpp"
#include "sisvae/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace sisvae;

namespace {

constexpr const char* kToolVersion = "0.1.0";

enum ExitCode {
    kOk = 0,
    kBadFlags = 2,
    kIoFailure = 3,
    kNonFiniteLoss = 4,
    kDimMismatch = 5,
    kShapeMismatch = 6,
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_file_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + tmp.string());
        out << content;
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

// One manifest per command, written next to the outputs. Re-running the
// recorded command with the recorded config reproduces the outputs.
void write_manifest(const fs::path& out_dir, const std::string& command, const json& config,
                    std::uint64_t seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, double wall_seconds) {
    json doc;
    doc["command"] = command;
    doc["config"] = config;
    doc["seed"] = seed;
    doc["inputs"] = inputs;
    doc["outputs"] = outputs;
    doc["tool_version"] = kToolVersion;
    doc["wall_time_seconds"] = wall_seconds;
    write_file_atomic(out_dir / (command + "_manifest.json"), doc.dump(2) + "\n");
}

struct SynthOptions {
    SynthConfig correlated;
    // mackey
    std::size_t n = 5000;
    double gamma = 0.1, beta = 10.0, alpha = 0.2;
    std::size_t tau = 17;
    double dt = 1.0, x0 = 1.2;
    double point_rate = 0.003;
    std::size_t subseq_count = 2, subseq_len_min = 10, subseq_len_max = 28;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
};

int cmd_synth_common(const SeriesMatrix& series, const SynthOptions& opt,
                     const std::string& preset, const json& config, const Stopwatch& watch) {
    try {
        fs::create_directories(opt.out_dir);
        const fs::path data_path = fs::path(opt.out_dir) / "data.csv";
        save_csv(series, data_path.string());
        std::size_t anomalies = 0;
        for (auto l : series.labels) anomalies += l;
        write_manifest(opt.out_dir, "synth", config, opt.seed, {},
                       {data_path.string(), label_path_for(data_path.string())},
                       watch.seconds());
        std::printf("synth %s: wrote %zux%zu series (%zu anomalous points) to %s\n",
                    preset.c_str(), series.m, series.t, anomalies, opt.out_dir.c_str());
        return kOk;
    } catch (const std::exception& e) {
        std::cerr << "synth: " << e.what() << "\n";
        return kIoFailure;
    }
}

int run_synth_correlated(SynthOptions& opt) {
    opt.correlated.seed = opt.seed;
    Stopwatch watch;
    SeriesMatrix series = gen_correlated_series(opt.correlated);
    if (opt.correlated.anomaly_prob > 0.0) {
        series = inject_point_anomalies(series, opt.correlated.anomaly_prob,
                                        derive_seed(opt.seed, 101));
    }
    json config{{"preset", "correlated"},
                {"m", opt.correlated.m},
                {"t", opt.correlated.t},
                {"anomaly_prob", opt.correlated.anomaly_prob},
                {"kernel_lengthscale", opt.correlated.kernel_lengthscale},
                {"noise_base", opt.correlated.noise_base}};
    return cmd_synth_common(series, opt, "correlated", config, watch);
}

int run_synth_mackey(SynthOptions& opt) {
    Stopwatch watch;
    SeriesMatrix series = gen_mackey_glass(opt.n, opt.gamma, opt.beta, opt.alpha, opt.tau,
                                           opt.dt, opt.x0, opt.seed);
    if (opt.subseq_count > 0) {
        series = inject_subseq_anomalies(series, opt.subseq_count, opt.subseq_len_min,
                                         opt.subseq_len_max, derive_seed(opt.seed, 102));
    }
    if (opt.point_rate > 0.0) {
        series = inject_composite_point_anomalies(series, opt.point_rate,
                                                  derive_seed(opt.seed, 103));
    }
    json config{{"preset", "mackey"},
                {"n", opt.n},
                {"gamma", opt.gamma},
                {"beta", opt.beta},
                {"alpha", opt.alpha},
                {"tau", opt.tau},
                {"dt", opt.dt},
                {"x0", opt.x0},
                {"point_rate", opt.point_rate},
                {"subseq_count", opt.subseq_count},
                {"subseq_len_min", opt.subseq_len_min},
                {"subseq_len_max", opt.subseq_len_max}};
    return cmd_synth_common(series, opt, "mackey", config, watch);
}

struct TrainOptions {
    std::string data_csv;
    std::string out_dir = ".";
    ModelConfig model;
    TrainConfig train;
    std::string regularizer = "kl";
    bool feat_dim_set = false;
    bool step_set = false;
};

int run_train(TrainOptions& opt) {
    Stopwatch watch;
    if (!opt.feat_dim_set) opt.model.feat_dim = opt.model.h_dim;
    if (!opt.step_set) opt.train.step_s = opt.train.window_w;
    try {
        opt.train.regularizer = parse_regularizer(opt.regularizer);
    } catch (const std::exception& e) {
        std::cerr << "train: " << e.what() << "\n";
        return kBadFlags;
    }

    SeriesMatrix series;
    try {
        series = load_csv(opt.data_csv);
    } catch (const std::exception& e) {
        std::cerr << "train: " << e.what() << "\n";
        return kIoFailure;
    }
    opt.model.x_dim = series.m;
    if (opt.train.window_w > series.t) {
        std::cerr << "train: window " << opt.train.window_w << " exceeds series length "
                  << series.t << "\n";
        return kBadFlags;
    }

    try {
        auto [normed, stats] = normalize(series);
        auto chunks = make_windows(normed, opt.train.window_w, opt.train.step_s);
        auto result = train(chunks, opt.train, opt.model);

        fs::create_directories(opt.out_dir);
        const fs::path ckpt_path = fs::path(opt.out_dir) / "checkpoint.json";
        const fs::path hist_path = fs::path(opt.out_dir) / "history.csv";
        TrainerState ts;
        ts.adam = result.adam;
        ts.window_w = opt.train.window_w;
        write_file_atomic(ckpt_path, checkpoint_to_json(result.params, &ts));
        write_history_csv(result.history, hist_path.string());

        json config{{"h_dim", opt.model.h_dim},
                    {"z_dim", opt.model.z_dim},
                    {"feat_dim", opt.model.feat_dim},
                    {"sigma_floor", opt.model.sigma_floor},
                    {"window", opt.train.window_w},
                    {"step", opt.train.step_s},
                    {"batch", opt.train.batch_size},
                    {"epochs", opt.train.epochs},
                    {"lr", opt.train.lr},
                    {"lambda", opt.train.lambda},
                    {"regularizer", opt.regularizer},
                    {"clip_norm", opt.train.clip_norm},
                    {"adam_beta1", opt.train.adam_beta1},
                    {"adam_beta2", opt.train.adam_beta2},
                    {"adam_eps", opt.train.adam_eps}};
        write_manifest(opt.out_dir, "train", config, opt.train.seed, {opt.data_csv},
                       {ckpt_path.string(), hist_path.string()}, watch.seconds());
        std::printf("train: %zu chunks, %zu epochs, final total loss %.6g -> %s\n",
                    chunks.size(), opt.train.epochs, result.history.back().mean_loss.total,
                    ckpt_path.string().c_str());
        return kOk;
    } catch (const TrainError& e) {
        std::cerr << "train: " << e.what() << "\n";
        return kNonFiniteLoss;
    } catch (const std::exception& e) {
        std::cerr << "train: " << e.what() << "\n";
        return kIoFailure;
    }
}

struct ScoreOptions {
    std::string checkpoint;
    std::string data_csv;
    std::string out_dir = ".";
    std::string criterion = "prob";
    std::size_t mc_passes = 128;
    std::uint64_t seed = 0;
    std::size_t window = 0;  // 0: take the checkpoint's training window
    std::optional<double> alpha;
};

int run_score(ScoreOptions& opt) {
    Stopwatch watch;
    ScoreCriterion criterion;
    try {
        criterion = parse_criterion(opt.criterion);
    } catch (const std::exception& e) {
        std::cerr << "score: " << e.what() << "\n";
        return kBadFlags;
    }

    Checkpoint ckpt;
    SeriesMatrix series;
    try {
        ckpt = load_checkpoint(opt.checkpoint);
        series = load_csv(opt.data_csv);
    } catch (const std::exception& e) {
        std::cerr << "score: " << e.what() << "\n";
        return kIoFailure;
    }

    if (series.m != ckpt.params.config.x_dim) {
        std::cerr << "score: data has " << series.m << " series but the checkpoint expects "
                  << ckpt.params.config.x_dim << "\n";
        return kDimMismatch;
    }
    std::size_t window = opt.window;
    if (window == 0) {
        if (ckpt.trainer.has_value() && ckpt.trainer->window_w > 0) {
            window = ckpt.trainer->window_w;
        } else {
            std::cerr << "score: checkpoint records no training window; pass --window\n";
            return kBadFlags;
        }
    }
    if (window > series.t) {
        std::cerr << "score: window " << window << " exceeds series length " << series.t << "\n";
        return kDimMismatch;
    }

    try {
        auto [normed, stats] = normalize(series);
        auto scores = score_series(ckpt.params, normed, criterion, opt.mc_passes, opt.seed,
                                   window);

        fs::create_directories(opt.out_dir);
        const fs::path scores_path = fs::path(opt.out_dir) / "scores.csv";
        const auto ids =
            series.series_ids.empty() ? SeriesMatrix::default_ids(series.m) : series.series_ids;
        write_scores_csv(scores, ids, scores_path.string());
        std::vector<std::string> outputs{scores_path.string()};
        if (opt.alpha.has_value()) {
            const fs::path det_path = fs::path(opt.out_dir) / "detections.csv";
            write_detections_csv(scores, ids, *opt.alpha, det_path.string());
            outputs.push_back(det_path.string());
        }

        json config{{"criterion", opt.criterion},
                    {"L", opt.mc_passes},
                    {"window", window}};
        if (opt.alpha.has_value()) config["alpha"] = *opt.alpha;
        write_manifest(opt.out_dir, "score", config, opt.seed,
                       {opt.checkpoint, opt.data_csv}, outputs, watch.seconds());
        std::printf("score %s: %zux%zu scores (L=%zu, window=%zu) -> %s\n",
                    opt.criterion.c_str(), scores.m, scores.t, opt.mc_passes, window,
                    scores_path.string().c_str());
        return kOk;
    } catch (const std::exception& e) {
        std::cerr << "score: " << e.what() << "\n";
        return kIoFailure;
    }
}

struct EvalOptions {
    std::string scores_csv;
    std::string labels_csv;
    std::string out_dir = ".";
    std::vector<std::size_t> k_values{10, 50, 200};
};

// The label file uses the synth layout (t,<ids> rows of {0,1}).
SeriesMatrix load_label_matrix(const std::string& path) {
    SeriesMatrix raw = load_csv(path);
    SeriesMatrix out = raw;
    out.labels.resize(raw.values.size());
    for (std::size_t i = 0; i < raw.values.size(); ++i) {
        if (raw.values[i] != 0.0 && raw.values[i] != 1.0) {
            throw std::runtime_error("label file " + path + " contains a value outside {0,1}");
        }
        out.labels[i] = raw.values[i] == 1.0 ? 1 : 0;
    }
    return out;
}

int run_eval(EvalOptions& opt) {
    Stopwatch watch;
    ScoreMatrix scores;
    SeriesMatrix labels;
    try {
        scores = load_scores_csv(opt.scores_csv);
        labels = load_label_matrix(opt.labels_csv);
    } catch (const std::exception& e) {
        std::cerr << "eval: " << e.what() << "\n";
        return kIoFailure;
    }
    if (scores.m != labels.m || scores.t != labels.t) {
        std::cerr << "eval: score matrix " << scores.m << "x" << scores.t
                  << " does not match labels " << labels.m << "x" << labels.t << "\n";
        return kShapeMismatch;
    }

    try {
        const auto data = collect_labeled(scores, labels);
        for (std::size_t k : opt.k_values) {
            if (k < 1 || k > data.size()) {
                std::cerr << "eval: k = " << k << " out of range [1, " << data.size() << "]\n";
                return kBadFlags;
            }
        }
        const double roc_auc = auroc(data);
        const auto pr = pr_curve_and_auprc(data);
        const auto roc = roc_curve(data);

        fs::create_directories(opt.out_dir);
        json metrics;
        metrics["auroc"] = roc_auc;
        metrics["auprc"] = pr.auprc;
        metrics["best_f1"] = pr.best_f1;
        json pk = json::object();
        for (std::size_t k : opt.k_values) {
            pk[std::to_string(k)] = precision_at_k(data, k);
        }
        metrics["precision_at_k"] = std::move(pk);

        const fs::path metrics_path = fs::path(opt.out_dir) / "metrics.json";
        const fs::path roc_path = fs::path(opt.out_dir) / "roc_curve.csv";
        const fs::path pr_path = fs::path(opt.out_dir) / "pr_curve.csv";
        write_file_atomic(metrics_path, metrics.dump(2) + "\n");
        write_roc_csv(roc, roc_path.string());
        write_pr_csv(pr.curve, pr_path.string());

        json config{{"k", opt.k_values}};
        write_manifest(opt.out_dir, "eval", config, 0, {opt.scores_csv, opt.labels_csv},
                       {metrics_path.string(), roc_path.string(), pr_path.string()},
                       watch.seconds());
        std::printf("eval: auroc=%.4f auprc=%.4f best_f1=%.4f -> %s\n", roc_auc, pr.auprc,
                    pr.best_f1, metrics_path.string().c_str());
        return kOk;
    } catch (const std::exception& e) {
        std::cerr << "eval: " << e.what() << "\n";
        return kIoFailure;
    }
}

// Expands `--config FILE` into the flags stored in FILE (one key=value per
// line, # comments). The expansion lands right after the subcommand tokens,
// so flags typed on the command line come later and win under the take-last
// policy.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (std::size_t i = 0; i < args.size();) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
            args.erase(args.begin() + i, args.begin() + i + 2);
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
            args.erase(args.begin() + i);
        } else {
            ++i;
        }
    }
    if (config_path.empty()) return args;

    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config file " + config_path);
    std::vector<std::string> expanded;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
        std::size_t start = line.find_first_not_of(' ');
        if (start == std::string::npos) continue;
        const auto eq = line.find('=', start);
        if (eq == std::string::npos) {
            throw std::runtime_error("config file line is not key=value: '" + line + "'");
        }
        expanded.push_back("--" + line.substr(start, eq - start) + "=" + line.substr(eq + 1));
    }

    // insert after the subcommand path (leading non-flag tokens naming commands)
    static const std::vector<std::string> kCommands{"synth", "correlated", "mackey",
                                                    "train", "score",      "eval"};
    std::size_t insert_at = 0;
    while (insert_at < args.size() &&
           std::find(kCommands.begin(), kCommands.end(), args[insert_at]) != kCommands.end()) {
        ++insert_at;
    }
    args.insert(args.begin() + insert_at, expanded.begin(), expanded.end());
    return args;
}

void allow_config_overrides(CLI::App* cmd) {
    for (auto* opt : cmd->get_options()) {
        if (opt->get_positional()) continue;
        opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequential variational auto-encoder for time-series anomaly detection"};
    app.require_subcommand(1);

    SynthOptions synth_opt;
    TrainOptions train_opt;
    ScoreOptions score_opt;
    EvalOptions eval_opt;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
    synth->require_subcommand(1);
    auto* correlated = synth->add_subcommand("correlated", "Correlated multi-series draw");
    correlated->add_option("--m", synth_opt.correlated.m, "number of series");
    correlated->add_option("--t", synth_opt.correlated.t, "series length");
    correlated->add_option("--anomaly-prob", synth_opt.correlated.anomaly_prob,
                           "per-position anomaly probability");
    correlated->add_option("--lengthscale", synth_opt.correlated.kernel_lengthscale,
                           "RBF kernel length-scale");
    correlated->add_option("--noise-base", synth_opt.correlated.noise_base,
                           "base observation-noise level");
    correlated->add_option("--seed", synth_opt.seed, "master seed");
    correlated->add_option("--out-dir", synth_opt.out_dir, "output directory");
    auto* mackey = synth->add_subcommand("mackey", "Delay-equation series with anomalies");
    mackey->add_option("--n", synth_opt.n, "series length");
    mackey->add_option("--gamma", synth_opt.gamma, "decay rate");
    mackey->add_option("--beta", synth_opt.beta, "nonlinearity exponent");
    mackey->add_option("--alpha", synth_opt.alpha, "delayed-feedback gain");
    mackey->add_option("--tau", synth_opt.tau, "feedback delay");
    mackey->add_option("--dt", synth_opt.dt, "integration step");
    mackey->add_option("--x0", synth_opt.x0, "initial state");
    mackey->add_option("--point-rate", synth_opt.point_rate, "composite point-anomaly rate");
    mackey->add_option("--subseq-count", synth_opt.subseq_count, "replaced sub-sequences");
    mackey->add_option("--subseq-len-min", synth_opt.subseq_len_min, "min replaced length");
    mackey->add_option("--subseq-len-max", synth_opt.subseq_len_max, "max replaced length");
    mackey->add_option("--seed", synth_opt.seed, "master seed");
    mackey->add_option("--out-dir", synth_opt.out_dir, "output directory");

    auto* train_cmd = app.add_subcommand("train", "Fit the model on a series CSV");
    train_cmd->add_option("data", train_opt.data_csv, "input data CSV")->required();
    train_cmd->add_option("--h-dim", train_opt.model.h_dim, "recurrent state size");
    train_cmd->add_option("--z-dim", train_opt.model.z_dim, "latent size");
    train_cmd->add_option("--feat-dim", train_opt.model.feat_dim, "feature width (default h-dim)")
        ->trigger_on_parse()
        ->each([&](const std::string&) { train_opt.feat_dim_set = true; });
    train_cmd->add_option("--sigma-floor", train_opt.model.sigma_floor, "stddev lower bound");
    train_cmd->add_option("--window", train_opt.train.window_w, "chunk window W");
    train_cmd->add_option("--step", train_opt.train.step_s, "window step (default W)")
        ->trigger_on_parse()
        ->each([&](const std::string&) { train_opt.step_set = true; });
    train_cmd->add_option("--batch", train_opt.train.batch_size, "minibatch size");
    train_cmd->add_option("--epochs", train_opt.train.epochs, "training epochs");
    train_cmd->add_option("--lr", train_opt.train.lr, "Adam learning rate");
    train_cmd->add_option("--lambda", train_opt.train.lambda, "smoothness weight");
    train_cmd->add_option("--regularizer", train_opt.regularizer, "kl | mean | none");
    train_cmd->add_option("--clip", train_opt.train.clip_norm, "global grad-norm clip");
    train_cmd->add_option("--seed", train_opt.train.seed, "master seed");
    train_cmd->add_option("--out-dir", train_opt.out_dir, "output directory");

    auto* score_cmd = app.add_subcommand("score", "Score a series with a trained checkpoint");
    score_cmd->add_option("checkpoint", score_opt.checkpoint, "checkpoint JSON")->required();
    score_cmd->add_option("data", score_opt.data_csv, "input data CSV")->required();
    score_cmd->add_option("--criterion", score_opt.criterion, "prob | error");
    score_cmd->add_option("--L", score_opt.mc_passes, "Monte-Carlo passes");
    score_cmd->add_option("--seed", score_opt.seed, "scoring seed");
    score_cmd->add_option("--window", score_opt.window,
                          "scoring window (default: training window)");
    double alpha_value = 0.0;
    auto* alpha_flag = score_cmd->add_option("--alpha", alpha_value,
                                             "also write detections at this threshold");
    score_cmd->add_option("--out-dir", score_opt.out_dir, "output directory");

    auto* eval_cmd = app.add_subcommand("eval", "Compute detection metrics from scores");
    eval_cmd->add_option("scores", eval_opt.scores_csv, "scores CSV")->required();
    eval_cmd->add_option("labels", eval_opt.labels_csv, "labels CSV")->required();
    eval_cmd->add_option("--k", eval_opt.k_values, "precision@K cutoffs")->delimiter(',');
    eval_cmd->add_option("--out-dir", eval_opt.out_dir, "output directory");

    for (auto* cmd : {correlated, mackey, train_cmd, score_cmd, eval_cmd}) {
        cmd->footer("Accepts --config FILE with key=value lines; explicit flags override it.");
        allow_config_overrides(cmd);
    }

    try {
        auto args = expand_config_args(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kBadFlags;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadFlags;
    }

    try {
        if (correlated->parsed()) return run_synth_correlated(synth_opt);
        if (mackey->parsed()) return run_synth_mackey(synth_opt);
        if (train_cmd->parsed()) return run_train(train_opt);
        if (score_cmd->parsed()) {
            if (alpha_flag->count() > 0) score_opt.alpha = alpha_value;
            return run_score(score_opt);
        }
        if (eval_cmd->parsed()) return run_eval(eval_opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoFailure;
    }
    return kBadFlags;
}
