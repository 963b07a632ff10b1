// karmanet command line: synth, validate, fit-quantizer, build-dataset,
// train, eval, analyze, gradcheck. Every command writes a manifest beside
// its outputs and reports errors as one JSON record on stderr.
//
// Exit codes: 0 ok, 2 usage, 3 missing file, 4 bad configuration,
// 5 invalid data, 6 runtime failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "karmanet/karmanet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace karmanet;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitMissingFile = 3;
constexpr int kExitBadConfig = 4;
constexpr int kExitBadData = 5;
constexpr int kExitRuntime = 6;

struct CliError {
    int code;
    std::string kind;
    std::string message;
};

[[noreturn]] void fail(int code, const std::string& kind, const std::string& message) {
    throw CliError{code, kind, message};
}

void require_file(const std::string& path) {
    if (path.empty() || !fs::exists(path)) fail(kExitMissingFile, "missing_file", path);
}

json load_json_file(const std::string& path) {
    require_file(path);
    std::ifstream in(path, std::ios::binary);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(kExitBadConfig, "config_parse", path + ": " + e.what());
    }
    return j;
}

// exceptions raised inside `f` become CliErrors with the given code
template <typename F>
auto phase(int code, const std::string& kind, F&& f) {
    try {
        return f();
    } catch (const CliError&) {
        throw;
    } catch (const std::exception& e) {
        fail(code, kind, e.what());
    }
}

struct Stopwatch {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

// ---- shared option blocks -------------------------------------------------

struct CommonOpts {
    std::string in, out, config, model_path, quantizer_path;
    std::uint64_t seed = 1;
    bool seed_set = false;
    std::string variant, text = "gated", precision = "f64";
};

ModelConfig variant_config(const std::string& variant, const std::string& text) {
    ModelConfig cfg;
    cfg.K = 8;
    cfg.C = 32;
    cfg.D = 64;
    if (variant == "subtree" || variant == "convstruct") {
        cfg.encoder = ContextEncoder::kLinear;
        cfg.feature_mask =
            variant == "subtree" ? std::vector<int>{kSubtreeSize} : std::vector<int>{};
        cfg.text_mode = TextMode::kNone;
        cfg.D = 2;
        return cfg;
    }
    if (variant == "feedfwd1" || variant == "feedfwd2" || variant == "feedfwd3") {
        cfg.encoder = ContextEncoder::kFeedforward;
        cfg.ff_layers = variant.back() - '0';
    } else if (variant == "latent" || variant.empty()) {
        cfg.encoder = ContextEncoder::kLatentModes;
    } else {
        fail(kExitBadConfig, "config_invalid", "unknown variant '" + variant + "'");
    }
    cfg.text_mode = text_mode_from_name(text);
    return cfg;
}

TrainConfig desk_train_config() {
    TrainConfig tc;
    tc.lr_grid = {0.001, 0.003, 0.01};
    tc.max_epochs = 50;
    return tc;
}

// merged model+train configuration for the train command
struct TrainSetup {
    ModelConfig model;
    TrainConfig train;
};

TrainSetup make_train_setup(const CommonOpts& o, const DatasetBundle& bundle) {
    TrainSetup s;
    s.model = variant_config(o.variant.empty() ? "latent" : o.variant, o.text);
    s.train = desk_train_config();
    if (!o.config.empty()) {
        json j = load_json_file(o.config);
        phase(kExitBadConfig, "config_invalid", [&] {
            if (j.contains("model")) from_json(j.at("model"), s.model);
            if (j.contains("train")) from_json(j.at("train"), s.train);
            return 0;
        });
    }
    if (o.seed_set) {
        s.model.seed = o.seed;
        s.train.seed = o.seed;
    }
    s.model.precision = o.precision;
    s.model.vocab_word = bundle.vocabs.word.size();
    s.model.vocab_pos = bundle.vocabs.pos.size();
    s.model.vocab_lemma = bundle.vocabs.lemma.size();
    phase(kExitBadConfig, "config_invalid", [&] {
        s.model.validate();
        s.train.validate();
        return 0;
    });
    return s;
}

// ---- commands -------------------------------------------------------------

int cmd_synth(const CommonOpts& o, int threads, double mean_comments,
              const std::string& text_signal) {
    Stopwatch sw;
    GenConfig cfg;
    if (!o.config.empty()) {
        json j = load_json_file(o.config);
        phase(kExitBadConfig, "config_invalid", [&] {
            from_json(j, cfg);
            return 0;
        });
    }
    if (o.seed_set) cfg.seed = o.seed;
    if (threads > 0) cfg.threads = threads;
    if (mean_comments > 0) cfg.mean_comments = mean_comments;
    if (!text_signal.empty())
        phase(kExitBadConfig, "config_invalid", [&] {
            cfg.text_signal = text_signal_from_name(text_signal);
            return 0;
        });
    phase(kExitBadConfig, "config_invalid", [&] {
        cfg.validate();
        return 0;
    });

    auto corpus = generate(cfg);
    phase(kExitRuntime, "io", [&] {
        write_threads(corpus, o.out);
        return 0;
    });

    json summary;
    to_json(summary, describe(corpus));
    std::cout << summary.dump() << '\n';

    RunManifest m;
    m.command = "synth";
    to_json(m.config, cfg);
    m.seed = cfg.seed;
    m.add_output(o.out);
    m.timing_s = sw.seconds();
    m.write(o.out + ".manifest.json");
    return 0;
}

int cmd_validate(const CommonOpts& o) {
    Stopwatch sw;
    require_file(o.in);
    auto corpus = phase(kExitBadData, "data_invalid", [&] { return parse_threads(o.in); });
    json report;
    to_json(report, describe(corpus));
    report["ok"] = true;
    std::cout << report.dump() << '\n';
    if (!o.out.empty()) {
        phase(kExitRuntime, "io", [&] {
            std::ofstream f(o.out, std::ios::binary);
            f << report.dump(2) << '\n';
            return 0;
        });
        RunManifest m;
        m.command = "validate";
        m.add_input(o.in);
        m.add_output(o.out);
        m.timing_s = sw.seconds();
        m.write(o.out + ".manifest.json");
    }
    return 0;
}

int cmd_fit_quantizer(const CommonOpts& o) {
    Stopwatch sw;
    require_file(o.in);
    auto corpus = phase(kExitBadData, "data_invalid", [&] { return parse_threads(o.in); });
    auto quants = phase(kExitBadData, "data_invalid", [&] { return fit_quantizers(corpus); });
    json arr = json::array();
    for (const auto& [sub, q] : quants) arr.push_back({{"subreddit", sub}, {"cuts", q.cuts}});
    phase(kExitRuntime, "io", [&] {
        std::ofstream f(o.out, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open '" + o.out + "'");
        f << arr.dump(2) << '\n';
        return 0;
    });
    std::cout << arr.dump() << '\n';

    RunManifest m;
    m.command = "fit-quantizer";
    m.add_input(o.in);
    m.add_output(o.out);
    m.timing_s = sw.seconds();
    m.write(o.out + ".manifest.json");
    return 0;
}

std::map<std::string, QuantizerThresholds> load_quantizer_file(const std::string& path) {
    json arr = load_json_file(path);
    std::map<std::string, QuantizerThresholds> out;
    phase(kExitBadConfig, "config_invalid", [&] {
        for (const auto& q : arr) {
            QuantizerThresholds qt;
            qt.cuts = q.at("cuts").get<std::vector<double>>();
            out.emplace(q.at("subreddit").get<std::string>(), std::move(qt));
        }
        return 0;
    });
    return out;
}

int cmd_build_dataset(const CommonOpts& o, int pivot) {
    Stopwatch sw;
    require_file(o.in);
    auto corpus = phase(kExitBadData, "data_invalid", [&] { return parse_threads(o.in); });
    auto quants = o.quantizer_path.empty()
                      ? phase(kExitBadData, "data_invalid", [&] { return fit_quantizers(corpus); })
                      : load_quantizer_file(o.quantizer_path);
    auto bundle = phase(kExitBadData, "data_invalid", [&] {
        return build_dataset_bundle(corpus, quants, o.seed, pivot);
    });
    phase(kExitRuntime, "io", [&] {
        save_bundle(bundle, o.out);
        return 0;
    });

    json summary{{"train", bundle.train.size()},
                 {"val", bundle.val.size()},
                 {"test", bundle.test.size()},
                 {"vocab_word", bundle.vocabs.word.size()},
                 {"vocab_pos", bundle.vocabs.pos.size()},
                 {"vocab_lemma", bundle.vocabs.lemma.size()}};
    std::cout << summary.dump() << '\n';

    RunManifest m;
    m.command = "build-dataset";
    m.config = {{"pivot_level", pivot}};
    m.seed = o.seed;
    m.add_input(o.in);
    if (!o.quantizer_path.empty()) m.add_input(o.quantizer_path);
    m.add_output(o.out);
    m.timing_s = sw.seconds();
    m.write(o.out + ".manifest.json");
    return 0;
}

template <typename Real>
int run_train(const CommonOpts& o, const DatasetBundle& bundle, const TrainSetup& setup,
              Stopwatch& sw) {
    ModelFactory<Real> factory = [&setup]() {
        auto p = std::make_unique<ModelParams<Real>>(setup.model);
        p->init(setup.model.seed);
        return p;
    };
    auto train_ptrs = as_ptrs(bundle.train);
    auto val_ptrs = as_ptrs(bundle.val);
    std::unique_ptr<ModelParams<Real>> model;
    TrainState st = phase(kExitRuntime, "training", [&] {
        std::unique_ptr<ModelParams<Real>> m;
        auto s = select_and_train<Real>(factory, setup.train, train_ptrs, val_ptrs, m);
        model = std::move(m);
        return s;
    });

    phase(kExitRuntime, "io", [&] {
        save_checkpoint(o.out, *model, bundle.vocabs, bundle.normalizer, bundle.quantizers);
        return 0;
    });
    std::string log_path = o.out + ".log.jsonl";
    phase(kExitRuntime, "io", [&] {
        std::ofstream f(log_path, std::ios::binary);
        for (const auto& r : st.log) {
            json jr;
            to_json(jr, r);
            f << jr.dump() << '\n';
        }
        return 0;
    });

    json summary{{"selected_lr", st.selected_lr},
                 {"epochs", st.epochs_run},
                 {"best_epoch", st.best_epoch},
                 {"best_val_ll", st.best_val_ll},
                 {"parameters", parameter_count(*model)}};
    std::cout << summary.dump() << '\n';

    RunManifest m;
    m.command = "train";
    m.config = {{"model", setup.model}, {"train", setup.train}};
    m.seed = setup.model.seed;
    m.add_input(o.in);
    m.add_output(o.out);
    m.add_output(log_path);
    m.timing_s = sw.seconds();
    m.write(o.out + ".manifest.json");
    return 0;
}

int cmd_train(const CommonOpts& o) {
    Stopwatch sw;
    require_file(o.in);
    auto bundle = phase(kExitBadData, "data_invalid", [&] { return load_bundle(o.in); });
    TrainSetup setup = make_train_setup(o, bundle);
    if (o.precision == "f32") return run_train<float>(o, bundle, setup, sw);
    return run_train<double>(o, bundle, setup, sw);
}

int cmd_eval(const CommonOpts& o) {
    Stopwatch sw;
    require_file(o.in);
    auto bundle = phase(kExitBadData, "data_invalid", [&] { return load_bundle(o.in); });

    LevelF1Report rep;
    RunManifest m;
    m.command = "eval";
    m.add_input(o.in);
    if (o.variant == "prior") {
        rep = prior_baseline(bundle.train, bundle.test);
    } else if (o.variant == "subtree" || o.variant == "convstruct") {
        TrainConfig tc = desk_train_config();
        if (o.seed_set) tc.seed = o.seed;
        auto kind = o.variant == "subtree" ? BaselineKind::kSubtreeSize
                                           : BaselineKind::kConvStruct;
        rep = phase(kExitRuntime, "training", [&] {
            return run_baseline<double>(kind, bundle.train, bundle.test, tc);
        });
    } else if (o.variant.empty()) {
        require_file(o.model_path);
        rep = phase(kExitRuntime, "eval", [&] {
            if (o.precision == "f32") {
                auto ck = load_checkpoint<float>(o.model_path);
                return macro_f1(true_levels(bundle.test),
                                predict_levels(*ck.model, bundle.test), "checkpoint");
            }
            auto ck = load_checkpoint<double>(o.model_path);
            return macro_f1(true_levels(bundle.test), predict_levels(*ck.model, bundle.test),
                            "checkpoint");
        });
        m.add_input(o.model_path);
    } else {
        fail(kExitBadConfig, "config_invalid",
             "eval --variant must be prior, subtree or convstruct (trained variants are "
             "evaluated through their checkpoint)");
    }

    json jrep = report_to_json(rep);
    phase(kExitRuntime, "io", [&] {
        std::ofstream f(o.out, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open '" + o.out + "'");
        f << jrep.dump(2) << '\n';
        std::ofstream c(o.out + ".csv", std::ios::binary);
        c << report_to_csv(rep);
        return 0;
    });
    std::cout << jrep.dump() << '\n';

    m.seed = o.seed;
    m.add_output(o.out);
    m.add_output(o.out + ".csv");
    m.timing_s = sw.seconds();
    m.write(o.out + ".manifest.json");
    return 0;
}

int cmd_analyze(const CommonOpts& o) {
    Stopwatch sw;
    require_file(o.in);
    require_file(o.model_path);
    auto bundle = phase(kExitBadData, "data_invalid", [&] { return load_bundle(o.in); });
    phase(kExitRuntime, "io", [&] {
        fs::create_directories(o.out);
        return 0;
    });

    auto ck = phase(kExitBadData, "data_invalid",
                    [&] { return load_checkpoint<double>(o.model_path); });
    auto rep = phase(kExitRuntime, "analysis",
                     [&] { return build_mode_report(*ck.model, bundle.test); });
    std::optional<GateReport> gr;
    if (ck.model->cfg.text_mode == TextMode::kGated)
        gr = phase(kExitRuntime, "analysis", [&] {
            return gate_report(*ck.model, bundle.test, rep.assignment, rep.groups);
        });
    auto files = phase(kExitRuntime, "io",
                       [&] { return export_cluster_csv(rep, bundle.test, gr, o.out); });

    json summary{{"modes", rep.K}, {"comments", bundle.test.size()}, {"files", files}};
    if (gr) summary["gate_relative"] = gr->relative;
    std::cout << summary.dump() << '\n';

    RunManifest m;
    m.command = "analyze";
    m.add_input(o.in);
    m.add_input(o.model_path);
    for (const auto& f : files) m.add_output(f);
    m.timing_s = sw.seconds();
    m.write(o.out + "/manifest.json");
    return 0;
}

int cmd_gradcheck(const CommonOpts& o, double eps) {
    auto gi = make_gradcheck_instance(o.seed_set ? o.seed : 7);
    ModelParams<double> p(gi.cfg);
    p.init(gi.cfg.seed, gi.init_sigma);
    ExamplePtrs batch;
    for (const auto& ex : gi.batch) batch.push_back(&ex);
    loss_and_backward(p, batch);
    auto rep = grad_check(p.store, [&]() { return loss_only(p, batch); }, eps);
    json out{{"max_rel_error", rep.max_rel_error},
             {"worst_param", rep.worst_param},
             {"worst_index", rep.worst_index},
             {"eps", eps},
             {"parameters", parameter_count(p)}};
    std::cout << out.dump() << '\n';
    if (rep.max_rel_error >= 1e-4)
        fail(kExitRuntime, "gradcheck", "max relative error " +
                                            std::to_string(rep.max_rel_error) + " >= 1e-4");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-mode endorsement-level prediction for discussion threads"};
    app.require_subcommand(1);

    CommonOpts o;
    int threads = 0, pivot = 4;
    double mean_comments = 0.0, eps = 1e-5;
    std::string text_signal;

    auto add_seed = [&](CLI::App* c) {
        c->add_option("--seed", o.seed, "deterministic seed")
            ->each([&](const std::string&) { o.seed_set = true; });
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic thread corpus (JSONL)");
    synth->add_option("--out", o.out, "output JSONL path")->required();
    synth->add_option("--config", o.config, "generator config JSON");
    synth->add_option("--threads", threads, "thread count override");
    synth->add_option("--mean-comments", mean_comments, "mean comments per thread override");
    synth->add_option("--text-signal", text_signal, "none | global | context_conditional");
    add_seed(synth);

    auto* validate = app.add_subcommand("validate", "parse and validate a thread corpus");
    validate->add_option("--in", o.in, "JSONL corpus")->required();
    validate->add_option("--out", o.out, "optional report path");

    auto* fitq = app.add_subcommand("fit-quantizer", "fit per-subreddit karma thresholds");
    fitq->add_option("--in", o.in, "JSONL corpus")->required();
    fitq->add_option("--out", o.out, "quantizer JSON path")->required();

    auto* build = app.add_subcommand("build-dataset",
                                     "partition, subsample and tokenize a corpus");
    build->add_option("--in", o.in, "JSONL corpus")->required();
    build->add_option("--quantizer", o.quantizer_path, "quantizer JSON (refit when absent)");
    build->add_option("--out", o.out, "bundle path")->required();
    build->add_option("--pivot", pivot, "subsample pivot level");
    add_seed(build);

    auto* train = app.add_subcommand("train", "train a model on a dataset bundle");
    train->add_option("--in", o.in, "dataset bundle")->required();
    train->add_option("--out", o.out, "checkpoint path")->required();
    train->add_option("--config", o.config, "model/train config JSON");
    train->add_option("--variant", o.variant,
                      "subtree | convstruct | feedfwd1 | feedfwd2 | feedfwd3 | latent");
    train->add_option("--text", o.text, "none | ungated | gated");
    train->add_option("--precision", o.precision, "f32 | f64");
    add_seed(train);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or baseline on the test split");
    eval->add_option("--in", o.in, "dataset bundle")->required();
    eval->add_option("--model", o.model_path, "checkpoint path");
    eval->add_option("--out", o.out, "report JSON path")->required();
    eval->add_option("--variant", o.variant, "prior | subtree | convstruct");
    eval->add_option("--precision", o.precision, "f32 | f64");
    add_seed(eval);

    auto* analyze = app.add_subcommand("analyze", "mode clusters, feature means, gate values");
    analyze->add_option("--in", o.in, "dataset bundle")->required();
    analyze->add_option("--model", o.model_path, "checkpoint path")->required();
    analyze->add_option("--out", o.out, "output directory")->required();

    auto* gradcheck = app.add_subcommand("gradcheck",
                                         "finite-difference check of the full model gradients");
    gradcheck->add_option("--eps", eps, "central difference step");
    add_seed(gradcheck);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << json{{"error", "usage"}, {"message", e.what()}, {"code", kExitUsage}}.dump()
                  << '\n';
        return kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(o, threads, mean_comments, text_signal);
        if (*validate) return cmd_validate(o);
        if (*fitq) return cmd_fit_quantizer(o);
        if (*build) return cmd_build_dataset(o, pivot);
        if (*train) return cmd_train(o);
        if (*eval) return cmd_eval(o);
        if (*analyze) return cmd_analyze(o);
        if (*gradcheck) return cmd_gradcheck(o, eps);
    } catch (const CliError& e) {
        std::cerr << json{{"error", e.kind}, {"message", e.message}, {"code", e.code}}.dump()
                  << '\n';
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "internal"}, {"message", e.what()}, {"code", kExitRuntime}}
                         .dump()
                  << '\n';
        return kExitRuntime;
    }
    return 0;
}
