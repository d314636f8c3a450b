// Command-line surface for the EEG emotion-classification pipeline:
// synth, features, train, crossval, baseline, gradcheck.
//
// Conventions: diagnostics go to standard error; the primary output path is
// echoed on standard output; every command writes a run manifest alongside
// its outputs; exit code 0 iff the command succeeded.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"
#include "tsception/baseline.hpp"
#include "tsception/data.hpp"
#include "tsception/dsp.hpp"
#include "tsception/errors.hpp"
#include "tsception/gradsuite.hpp"
#include "tsception/model.hpp"
#include "tsception/optim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tsception;

#ifndef TSCEPTION_GIT_DESCRIBE
#define TSCEPTION_GIT_DESCRIBE "unknown"
#endif

namespace {

std::string now_iso8601() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// One manifest per run, written alongside the outputs, carrying everything
// needed to reproduce the command.
struct RunManifest {
    std::string command;
    json config;
    std::uint64_t seed = 0;
    std::string started;
    std::string finished;
    std::vector<std::string> outputs;

    void write(const fs::path& path) {
        finished = now_iso8601();
        json j{{"command", command},        {"config", config},
               {"seed", seed},              {"started", started},
               {"finished", finished},      {"git_describe", TSCEPTION_GIT_DESCRIBE},
               {"outputs", outputs}};
        std::ofstream os(path);
        if (!os) throw ConfigError("cannot write run manifest " + path.string());
        os << j.dump(2) << "\n";
        outputs.push_back(path.string());
    }
};

RunManifest begin_run(const std::string& command, json config, std::uint64_t seed) {
    RunManifest m;
    m.command = command;
    m.config = std::move(config);
    m.seed = seed;
    m.started = now_iso8601();
    return m;
}

std::string resolve_data_dir(std::string data) {
    if (data.empty())
        if (const char* env = std::getenv("TSCEPTION_DATA")) data = env;
    if (data.empty())
        throw ConfigError("no data directory: pass --data or set TSCEPTION_DATA");
    return data;
}

ModelKind parse_kind(const std::string& name) {
    if (name == "tsception") return ModelKind::tsception;
    if (name == "tception") return ModelKind::tception;
    if (name == "sception") return ModelKind::sception;
    throw ConfigError("unknown model '" + name + "' (expected tsception, tception, or sception)");
}

void ensure_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string());
}

std::string list_ids(const std::vector<SubjectData>& subjects) {
    std::string s;
    for (const auto& sub : subjects) s += (s.empty() ? "" : ", ") + sub.subject_id;
    return s;
}

const SubjectData& find_subject(const std::vector<SubjectData>& subjects, const std::string& id) {
    for (const auto& sub : subjects)
        if (sub.subject_id == id) return sub;
    throw ConfigError("unknown subject '" + id + "'; available: " + list_ids(subjects));
}

// --- accuracy CSV (shared by crossval and baseline) --------------------------

struct SubjectAccuracies {
    std::string subject_id;
    std::vector<std::pair<std::string, double>> folds;  // held-out session -> accuracy

    double mean() const {
        double m = 0.0;
        for (const auto& f : folds) m += f.second;
        return m / static_cast<double>(folds.size());
    }
    double stddev() const {  // population
        const double m = mean();
        double v = 0.0;
        for (const auto& f : folds) v += (f.second - m) * (f.second - m);
        return std::sqrt(v / static_cast<double>(folds.size()));
    }
};

// Schema: subject,fold,accuracy,stddev. Fold rows leave stddev empty; each
// subject closes with a mean row; the file closes with a grand mean/std row
// over the per-subject means. Data rows = subjects x folds + subjects + 1.
void write_accuracy_csv(const fs::path& path, const std::vector<SubjectAccuracies>& all) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    os << "subject,fold,accuracy,stddev\n" << std::setprecision(10);
    double grand = 0.0, grand_var = 0.0;
    for (const auto& sub : all) {
        for (const auto& f : sub.folds)
            os << sub.subject_id << ',' << f.first << ',' << f.second << ",\n";
        os << sub.subject_id << ",mean," << sub.mean() << ',' << sub.stddev() << "\n";
        grand += sub.mean() / static_cast<double>(all.size());
    }
    for (const auto& sub : all) {
        const double d = sub.mean() - grand;
        grand_var += d * d / static_cast<double>(all.size());
    }
    os << "all,mean," << grand << ',' << std::sqrt(grand_var) << "\n";
}

// --- subcommands --------------------------------------------------------------

struct SynthOpts {
    int subjects = 18, sessions = 3, fs = 256;
    double duration = 60.0, snr = 1.0;
    std::uint64_t seed = 0;
    std::string out;
    bool force = false;
};

int cmd_synth(const SynthOpts& o) {
    const fs::path out(o.out);
    if (fs::exists(out) && !fs::is_empty(out) && !o.force)
        throw ConfigError("output directory " + o.out + " is not empty (use --force to overwrite)");
    ensure_out_dir(out);

    SynthConfig cfg;
    cfg.n_subjects = o.subjects;
    cfg.n_sessions = o.sessions;
    cfg.fs = o.fs;
    cfg.duration_s = o.duration;
    cfg.snr = o.snr;
    cfg.seed = o.seed;

    auto run = begin_run("synth",
                         json{{"subjects", o.subjects},
                              {"sessions", o.sessions},
                              {"fs", o.fs},
                              {"duration_s", o.duration},
                              {"snr", o.snr},
                              {"seed", o.seed},
                              {"out", o.out},
                              {"force", o.force}},
                         o.seed);
    const auto paths = synth_generate(cfg, o.out);
    std::cerr << "synth: wrote " << paths.size() << " recordings under " << o.out << "\n";

    const fs::path manifest = out / "manifest.json";
    run.outputs.push_back(manifest.string());
    for (const auto& p : paths) run.outputs.push_back((out / p).string());
    run.write(out / "run_manifest.json");
    std::cout << manifest.string() << "\n";
    return 0;
}

struct FeatureOpts {
    std::string data, out;
    double window_s = 4.0;
    int step = 25;
};

int cmd_features(const FeatureOpts& o) {
    const auto subjects = load_dataset(resolve_data_dir(o.data));
    const fs::path out(o.out);
    if (out.has_parent_path()) ensure_out_dir(out.parent_path());

    auto run = begin_run("features",
                         json{{"data", resolve_data_dir(o.data)},
                              {"out", o.out},
                              {"window_s", o.window_s},
                              {"step", o.step}},
                         0);

    std::ofstream os(out);
    if (!os) throw ConfigError("cannot write " + o.out);
    const int bands = static_cast<int>(filter_bank_edges().size());
    bool wrote_header = false;
    long rows = 0;
    for (const auto& subject : subjects)
        for (const auto& session : subject.sessions)
            for (const auto& rec : session.recordings) {
                const EegRecording clean = preprocess(rec);
                const SegmentSet segs = segment_seconds(clean, o.window_s, o.step);
                if (!wrote_header) {
                    write_feature_header(os, segs.channels, bands);
                    wrote_header = true;
                }
                for (long i = 0; i < segs.size(); ++i) {
                    std::vector<std::vector<double>> channels(
                        static_cast<std::size_t>(segs.channels));
                    const float* seg = segs.segment(i);
                    for (int c = 0; c < segs.channels; ++c)
                        channels[static_cast<std::size_t>(c)].assign(
                            seg + static_cast<long>(c) * segs.window,
                            seg + static_cast<long>(c + 1) * segs.window);
                    const FeatureVector fv = extract_features(channels, clean.fs,
                                                              clean.channel_names);
                    write_feature_row(os, segs.provenance[static_cast<std::size_t>(i)], fv);
                    ++rows;
                }
            }
    os.close();
    std::cerr << "features: wrote " << rows << " rows to " << o.out << "\n";

    run.outputs.push_back(o.out);
    run.write(out.string() + ".run.json");
    std::cout << o.out << "\n";
    return 0;
}

struct TrainOpts {
    std::string data, subject, model = "tsception", out;
    int fold = 0;
    TrainConfig cfg;
};

int cmd_train(const TrainOpts& o) {
    o.cfg.validate();
    const auto subjects = load_dataset(resolve_data_dir(o.data));
    const SubjectData& subject = find_subject(subjects, o.subject);
    const ModelKind kind = parse_kind(o.model);

    const EegRecording& first = subject.sessions.at(0).recordings.at(0);
    ModelConfig mc;
    mc.fs = first.fs;
    mc.num_channels = first.channels();
    mc.segment_len = static_cast<int>(std::llround(o.cfg.window_s * first.fs));

    const auto folds = build_loso_folds(subject, mc.segment_len, o.cfg.step_samples,
                                        o.cfg.val_fraction, o.cfg.seed, o.cfg.chronological);
    if (o.fold < 0 || o.fold >= static_cast<int>(folds.size())) {
        std::string available;
        for (std::size_t f = 0; f < folds.size(); ++f)
            available += (f ? ", " : "") + std::to_string(f) + " (holds out " +
                         folds[f].held_out_session + ")";
        throw ConfigError("unknown fold " + std::to_string(o.fold) + " for subject " +
                          o.subject + "; available: " + available);
    }
    const LosoFold& fold = folds[static_cast<std::size_t>(o.fold)];

    Model<float> model = build_variant<float>(kind, mc, o.cfg.seed);
    std::cerr << "model " << kind_name(kind) << ": " << model.count_parameters()
              << " parameters\n";
    std::cerr << "fold " << o.fold << " holds out " << fold.held_out_session << " (train "
              << fold.train.size() << ", val " << fold.val.size() << ", test "
              << fold.test.size() << " segments)\n";

    auto run = begin_run("train",
                         json{{"data", resolve_data_dir(o.data)},
                              {"subject", o.subject},
                              {"model", o.model},
                              {"fold", o.fold},
                              {"out", o.out},
                              {"train", o.cfg}},
                         o.cfg.seed);

    const FitReport report = fit(model, fold.train, fold.val, o.cfg, &fold.test);
    std::cerr << "best val accuracy " << report.best_val_accuracy << " at epoch "
              << report.best_epoch << "; stopped after epoch " << report.stop_epoch
              << "; test accuracy " << report.test_accuracy << "\n";

    ensure_out_dir(o.out);
    const fs::path ckpt = fs::path(o.out) / "checkpoint.ckpt";
    model.save(ckpt.string());

    json rj{{"subject", o.subject},
            {"model", o.model},
            {"fold", o.fold},
            {"held_out_session", fold.held_out_session},
            {"parameters", model.count_parameters()},
            {"segments", {{"train", fold.train.size()},
                          {"val", fold.val.size()},
                          {"test", fold.test.size()}}},
            {"report", report}};
    const fs::path report_path = fs::path(o.out) / "fit_report.json";
    std::ofstream rs(report_path);
    if (!rs) throw ConfigError("cannot write " + report_path.string());
    rs << rj.dump(2) << "\n";
    rs.close();

    run.outputs.push_back(ckpt.string());
    run.outputs.push_back(report_path.string());
    run.write(fs::path(o.out) / "run_manifest.json");
    std::cout << report_path.string() << "\n";
    return 0;
}

struct CrossvalOpts {
    std::string data, model = "tsception", out;
    int jobs = 1;
    TrainConfig cfg;
};

int cmd_crossval(const CrossvalOpts& o) {
    o.cfg.validate();
    if (o.jobs < 1) throw ConfigError("--jobs must be >= 1");
    const auto subjects = load_dataset(resolve_data_dir(o.data));
    const ModelKind kind = parse_kind(o.model);
    ensure_out_dir(o.out);

    auto run = begin_run("crossval",
                         json{{"data", resolve_data_dir(o.data)},
                              {"model", o.model},
                              {"out", o.out},
                              {"jobs", o.jobs},
                              {"train", o.cfg}},
                         o.cfg.seed);

    std::vector<SubjectAccuracies> all;
    json detail = json::array();
    for (const auto& subject : subjects) {
        const CrossvalResult result = loso_crossval<float>(subject, o.cfg, kind, o.jobs);
        SubjectAccuracies acc;
        acc.subject_id = subject.subject_id;
        json folds_json = json::array();
        for (const auto& fold : result.folds) {
            acc.folds.emplace_back(fold.held_out_session, fold.accuracy);
            folds_json.push_back(json{{"held_out_session", fold.held_out_session},
                                      {"accuracy", fold.accuracy},
                                      {"report", fold.report}});
        }
        detail.push_back(json{{"subject", subject.subject_id},
                              {"mean", result.mean},
                              {"stddev", result.stddev},
                              {"folds", folds_json}});
        std::cerr << "crossval " << subject.subject_id << ": mean " << result.mean
                  << " stddev " << result.stddev << "\n";
        all.push_back(std::move(acc));
    }

    const fs::path csv = fs::path(o.out) / "crossval.csv";
    write_accuracy_csv(csv, all);
    const fs::path dj = fs::path(o.out) / "crossval.json";
    std::ofstream ds(dj);
    if (!ds) throw ConfigError("cannot write " + dj.string());
    ds << detail.dump(2) << "\n";
    ds.close();

    run.outputs.push_back(csv.string());
    run.outputs.push_back(dj.string());
    run.write(fs::path(o.out) / "run_manifest.json");
    std::cout << csv.string() << "\n";
    return 0;
}

struct BaselineOpts {
    std::string features, kind = "de", out;
    std::uint64_t seed = 0;
    int epochs = 50;
    double lr = 0.01, reg = 1e-3;
    bool permute = false;
};

int cmd_baseline(const BaselineOpts& o) {
    const FeatureMatrix m = load_feature_csv(fs::path(o.features));
    const FeatureKind kind = feature_kind_from_name(o.kind);
    if (m.rows() == 0) throw DataError("feature CSV " + o.features + " has no rows");
    ensure_out_dir(o.out);

    auto run = begin_run("baseline",
                         json{{"features", o.features},
                              {"kind", o.kind},
                              {"seed", o.seed},
                              {"epochs", o.epochs},
                              {"lr", o.lr},
                              {"reg", o.reg},
                              {"permute", o.permute}},
                         o.seed);

    const auto rows = m.feature_rows(kind);
    // subject -> session -> row indices, in sorted order
    std::map<std::string, std::map<std::string, std::vector<std::size_t>>> groups;
    for (long i = 0; i < m.rows(); ++i) {
        const auto& prov = m.provenance[static_cast<std::size_t>(i)];
        groups[prov.subject_id][prov.session_id].push_back(static_cast<std::size_t>(i));
    }

    std::vector<SubjectAccuracies> all;
    std::uint64_t fold_counter = 0;
    for (const auto& [subject_id, sessions] : groups) {
        if (sessions.size() < 2)
            throw DataError("subject " + subject_id + " has " +
                            std::to_string(sessions.size()) +
                            " session(s); leave-one-session-out needs at least 2");
        SubjectAccuracies acc;
        acc.subject_id = subject_id;
        for (const auto& [held_out, test_idx] : sessions) {
            std::vector<std::vector<double>> train_x, test_x;
            std::vector<int> train_y, test_y;
            for (const auto& [session_id, idx] : sessions)
                for (const std::size_t i : idx) {
                    if (session_id == held_out) {
                        test_x.push_back(rows[i]);
                        test_y.push_back(m.labels[i]);
                    } else {
                        train_x.push_back(rows[i]);
                        train_y.push_back(m.labels[i]);
                    }
                }
            if (o.permute) {  // permutation-null control: decouple labels from features
                Rng rng(mix_seed(mix_seed(o.seed, 0x7065726DULL), fold_counter));
                rng.shuffle(train_y);
            }
            const LinearModel model =
                fit_linear(train_x, train_y, o.epochs, o.lr, o.reg, o.seed, kind);
            acc.folds.emplace_back(held_out, linear_accuracy(model, test_x, test_y));
            ++fold_counter;
        }
        std::cerr << "baseline " << subject_id << ": mean " << acc.mean() << " stddev "
                  << acc.stddev() << "\n";
        all.push_back(std::move(acc));
    }

    const fs::path csv = fs::path(o.out) / "baseline.csv";
    write_accuracy_csv(csv, all);
    run.outputs.push_back(csv.string());
    run.write(fs::path(o.out) / "run_manifest.json");
    std::cout << csv.string() << "\n";
    return 0;
}

struct GradcheckOpts {
    std::uint64_t seed = 0;
    std::string out;
    bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckOpts& o) {
    const GradSuiteReport r = gradcheck_suite(o.seed, o.inject_fault);
    std::cerr << "gradcheck: max relative error " << std::scientific << std::setprecision(3)
              << r.max_rel_err << " over " << r.coords_checked << " coordinates";
    if (!r.ok()) std::cerr << " — FAILED at " << r.worst;
    std::cerr << "\n";

    if (!o.out.empty()) {
        ensure_out_dir(o.out);
        auto run = begin_run("gradcheck",
                             json{{"seed", o.seed}, {"inject_grad_fault", o.inject_fault}},
                             o.seed);
        json rj{{"seed", o.seed},
                {"max_rel_err", r.max_rel_err},
                {"coords_checked", r.coords_checked},
                {"worst", r.worst},
                {"ok", r.ok()}};
        const fs::path path = fs::path(o.out) / "gradcheck.json";
        std::ofstream os(path);
        if (!os) throw ConfigError("cannot write " + path.string());
        os << rj.dump(2) << "\n";
        os.close();
        run.outputs.push_back(path.string());
        run.write(fs::path(o.out) / "run_manifest.json");
        std::cout << path.string() << "\n";
    }
    return r.ok() ? 0 : 1;
}

void add_train_flags(CLI::App* cmd, TrainConfig& cfg) {
    cmd->add_option("--lr", cfg.learning_rate, "learning rate")->capture_default_str();
    cmd->add_option("--batch", cfg.batch_size, "batch size")->capture_default_str();
    cmd->add_option("--lambda", cfg.lambda_l1, "L1 coefficient")->capture_default_str();
    cmd->add_option("--patience", cfg.patience, "early-stopping patience")->capture_default_str();
    cmd->add_option("--max-epochs", cfg.max_epochs, "epoch safety bound")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "rng seed")->capture_default_str();
    cmd->add_option("--window-s", cfg.window_s, "segment window, seconds")->capture_default_str();
    cmd->add_option("--step", cfg.step_samples, "segment step, samples")->capture_default_str();
    cmd->add_option("--val-fraction", cfg.val_fraction, "per-label validation fraction")
        ->capture_default_str();
    cmd->add_flag("--chronological", cfg.chronological,
                  "split train/val by time instead of shuffling");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EEG emotion-classification pipeline (TSception and friends)"};
    app.require_subcommand(1);
    int rc = 0;

    SynthOpts synth;
    auto* cs = app.add_subcommand("synth", "generate the synthetic dataset");
    cs->add_option("--subjects", synth.subjects)->capture_default_str();
    cs->add_option("--sessions", synth.sessions)->capture_default_str();
    cs->add_option("--fs", synth.fs, "sampling rate, Hz")->capture_default_str();
    cs->add_option("--duration", synth.duration, "seconds per recording")->capture_default_str();
    cs->add_option("--snr", synth.snr, "oscillation / noise RMS ratio")->capture_default_str();
    cs->add_option("--seed", synth.seed)->capture_default_str();
    cs->add_option("--out", synth.out, "output directory")->required();
    cs->add_flag("--force", synth.force, "overwrite a non-empty output directory");
    cs->callback([&] { rc = cmd_synth(synth); });

    FeatureOpts feat;
    auto* cf = app.add_subcommand("features",
                                  "preprocess, segment, and extract RP/DE features to CSV");
    cf->add_option("--data", feat.data, "dataset directory (or $TSCEPTION_DATA)");
    cf->add_option("--out", feat.out, "output CSV path")->required();
    cf->add_option("--window-s", feat.window_s)->capture_default_str();
    cf->add_option("--step", feat.step, "segment step, samples")->capture_default_str();
    cf->callback([&] { rc = cmd_features(feat); });

    TrainOpts train;
    auto* ct = app.add_subcommand("train", "train one model on one LOSO fold");
    ct->add_option("--data", train.data, "dataset directory (or $TSCEPTION_DATA)");
    ct->add_option("--subject", train.subject)->required();
    ct->add_option("--model", train.model, "tsception|tception|sception")->capture_default_str();
    ct->add_option("--fold", train.fold, "LOSO fold index")->capture_default_str();
    ct->add_option("--out", train.out, "output directory")->required();
    add_train_flags(ct, train.cfg);
    ct->callback([&] { rc = cmd_train(train); });

    CrossvalOpts cv;
    auto* cc = app.add_subcommand("crossval", "per-subject leave-one-session-out evaluation");
    cc->add_option("--data", cv.data, "dataset directory (or $TSCEPTION_DATA)");
    cc->add_option("--model", cv.model, "tsception|tception|sception")->capture_default_str();
    cc->add_option("--out", cv.out, "output directory")->required();
    cc->add_option("--jobs", cv.jobs, "parallel folds per subject")->capture_default_str();
    add_train_flags(cc, cv.cfg);
    cc->callback([&] { rc = cmd_crossval(cv); });

    BaselineOpts base;
    auto* cb = app.add_subcommand("baseline", "linear classifier over the feature CSV");
    cb->add_option("--features", base.features, "feature CSV path")->required();
    cb->add_option("--kind", base.kind, "rp|de|both")->capture_default_str();
    cb->add_option("--out", base.out, "output directory")->required();
    cb->add_option("--seed", base.seed)->capture_default_str();
    cb->add_option("--epochs", base.epochs)->capture_default_str();
    cb->add_option("--lr", base.lr)->capture_default_str();
    cb->add_option("--reg", base.reg)->capture_default_str();
    cb->add_flag("--permute", base.permute, "shuffle training labels (permutation-null control)");
    cb->callback([&] { rc = cmd_baseline(base); });

    GradcheckOpts gc;
    auto* cg = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    cg->add_option("--seed", gc.seed)->capture_default_str();
    cg->add_option("--out", gc.out, "optional report directory");
    cg->add_flag("--inject-grad-fault", gc.inject_fault)
        ->description("negative control: corrupt one backward on purpose")
        ->group("");  // hidden
    cg->callback([&] { rc = cmd_gradcheck(gc); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
