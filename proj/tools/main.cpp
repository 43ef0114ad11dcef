#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "twindiag/pipeline.hpp"

using namespace twindiag;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

// Every command stores the resolved options next to its outputs so a run can
// be reproduced from the artifact alone.
void write_snapshot(const fs::path& target, const std::string& command, const json& options) {
    const json snap = {{"command", command}, {"options", options}};
    const fs::path path = fs::is_directory(target)
                              ? target / "runconfig.json"
                              : fs::path(target.string() + ".runconfig.json");
    write_text(path, snap.dump(2) + "\n");
}

std::vector<faults::FaultClass> parse_classes(const std::string& spec) {
    std::vector<faults::FaultClass> out;
    if (spec == "all" || spec.empty()) return out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(faults::fault_class_from_string(item));
    return out;
}

std::vector<data::EpisodeRecord> load_nominal(const data::Dataset& ds, data::Split split) {
    std::vector<data::EpisodeRecord> out;
    for (const auto* meta : ds.runs_in(split))
        if (meta->fault_class == faults::FaultClass::nominal) out.push_back(ds.load(meta->run_id));
    return out;
}

json stats_json(const residual::FeatureStats& s) {
    return {{"mean", std::vector<float>(s.mean.data(), s.mean.data() + s.mean.size())},
            {"std", std::vector<float>(s.std.data(), s.std.data() + s.std.size())}};
}

residual::FeatureStats stats_from_json(const json& j) {
    residual::FeatureStats s;
    const auto mean = j.at("mean").get<std::vector<float>>();
    const auto std = j.at("std").get<std::vector<float>>();
    for (int c = 0; c < kNumMonitored; ++c) {
        s.mean(c) = mean.at(static_cast<std::size_t>(c));
        s.std(c) = std.at(static_cast<std::size_t>(c));
    }
    return s;
}

residual::ChannelConfig default_config_for(residual::FeatureMode mode) {
    switch (mode) {
        case residual::FeatureMode::mirror:
        case residual::FeatureMode::surrogate:
            return residual::ChannelConfig::concat46;
        case residual::FeatureMode::raw:
            return residual::ChannelConfig::raw23;
        case residual::FeatureMode::diff:
            return residual::ChannelConfig::residual23;
    }
    return residual::ChannelConfig::concat46;
}

using pipeline::diagnosis_inputs;

int run_cli(int argc, char** argv) {
    CLI::App app{"twindiag: digital-twin fault diagnosis for piston aero-engines"};
    app.require_subcommand(1);

    // ---- dataset gen ----------------------------------------------------
    auto* dataset_cmd = app.add_subcommand("dataset", "dataset operations");
    dataset_cmd->require_subcommand(1);
    auto* gen = dataset_cmd->add_subcommand("gen", "generate episodes plus paired mirrors");
    std::string gen_classes = "all", gen_out, gen_format = "csv";
    int gen_runs = 80, gen_jobs = 2;
    std::uint64_t gen_seed = 0;
    double gen_duration = 300.0, gen_inj_min = 60.0, gen_inj_max = 150.0;
    gen->add_option("--classes", gen_classes, "comma list or 'all'");
    gen->add_option("--runs-per-class", gen_runs)->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed);
    gen->add_option("--out", gen_out)->required();
    gen->add_option("--format", gen_format)->check(CLI::IsMember({"csv", "bin", "both"}));
    gen->add_option("--jobs", gen_jobs)->check(CLI::PositiveNumber);
    gen->add_option("--duration", gen_duration);
    gen->add_option("--inj-min", gen_inj_min);
    gen->add_option("--inj-max", gen_inj_max);
    gen->callback([&] {
        data::GenConfig cfg;
        cfg.out_dir = gen_out;
        cfg.classes = parse_classes(gen_classes);
        cfg.runs_per_class = gen_runs;
        cfg.seed = gen_seed;
        cfg.format = gen_format;
        cfg.episode_duration = gen_duration;
        cfg.injection_min = gen_inj_min;
        cfg.injection_max = gen_inj_max;
        cfg.jobs = gen_jobs;
        const auto manifest = data::generate_dataset(cfg);

        int train = 0, test = 0;
        for (const auto& r : manifest.runs) (r.split == data::Split::train ? train : test) += 1;
        std::cout << "dataset " << manifest.dataset_id << ": " << manifest.runs.size()
                  << " episodes + " << manifest.runs.size() << " mirrors ("
                  << 2 * manifest.runs.size() << " runs incl. mirrors), " << train << " train / "
                  << test << " test episodes\n";
        write_snapshot(gen_out, "dataset gen",
                       {{"classes", gen_classes},
                        {"runs_per_class", gen_runs},
                        {"seed", gen_seed},
                        {"format", gen_format},
                        {"duration", gen_duration},
                        {"injection", {gen_inj_min, gen_inj_max}},
                        {"jobs", gen_jobs}});
    });

    // ---- surrogate train / ablate ---------------------------------------
    auto* surrogate_cmd = app.add_subcommand("surrogate", "GRU surrogate operations");
    surrogate_cmd->require_subcommand(1);

    auto* strain = surrogate_cmd->add_subcommand("train", "train on nominal train episodes");
    std::string strain_data, strain_out;
    int strain_horizon = 10, strain_epochs = 12, strain_chunks = 512;
    std::uint64_t strain_seed = 0;
    strain->add_option("--data", strain_data)->required();
    strain->add_option("--horizon", strain_horizon)->check(CLI::PositiveNumber);
    strain->add_option("--out", strain_out)->required();
    strain->add_option("--seed", strain_seed);
    strain->add_option("--epochs", strain_epochs)->check(CLI::PositiveNumber);
    strain->add_option("--chunks-per-epoch", strain_chunks)->check(CLI::PositiveNumber);
    strain->callback([&] {
        auto ds = data::load_dataset(strain_data);
        auto episodes = load_nominal(ds, data::Split::train);
        residual::SurrogateSpec spec;
        spec.horizon = strain_horizon;
        residual::SurrogateTrainConfig cfg;
        cfg.train.seed = strain_seed;
        cfg.train.max_epochs = strain_epochs;
        cfg.max_chunks_per_epoch = strain_chunks;
        auto s = residual::train_surrogate(episodes, spec, cfg);
        residual::save_surrogate(s, strain_out);
        std::cout << "surrogate trained on " << episodes.size()
                  << " nominal episodes; held-out MAE " << s.val_mae << ", RMSE " << s.val_rmse
                  << " (raw units)\n";
        write_snapshot(strain_out, "surrogate train",
                       {{"data", strain_data},
                        {"horizon", strain_horizon},
                        {"seed", strain_seed},
                        {"epochs", strain_epochs},
                        {"chunks_per_epoch", strain_chunks}});
    });

    auto* sablate = surrogate_cmd->add_subcommand("ablate", "prediction-horizon ablation");
    std::string sabl_data, sabl_horizons = "1,3,5,10", sabl_out;
    int sabl_seeds = 1, sabl_epochs = 12;
    sablate->add_option("--data", sabl_data)->required();
    sablate->add_option("--horizons", sabl_horizons);
    sablate->add_option("--seeds", sabl_seeds)->check(CLI::PositiveNumber);
    sablate->add_option("--epochs", sabl_epochs);
    sablate->add_option("--out", sabl_out)->required();
    sablate->callback([&] {
        auto ds = data::load_dataset(sabl_data);
        auto train_eps = load_nominal(ds, data::Split::train);
        auto test_eps = load_nominal(ds, data::Split::test);

        std::vector<int> horizons;
        std::stringstream ss(sabl_horizons);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const int h = std::stoi(item);
            if (h < 1) throw InputError("horizon must be >= 1");
            horizons.push_back(h);
        }

        std::string table = "horizon\tseed\tmae\trmse\n";
        std::printf("horizon  seed  mae      rmse\n");
        for (int h : horizons) {
            for (int seed = 0; seed < sabl_seeds; ++seed) {
                residual::SurrogateSpec spec;
                spec.horizon = h;
                residual::SurrogateTrainConfig cfg;
                cfg.train.seed = static_cast<std::uint64_t>(seed);
                cfg.train.max_epochs = sabl_epochs;
                auto s = residual::train_surrogate(train_eps, spec, cfg);
                const auto eval = residual::evaluate_surrogate(s, test_eps);
                char buf[128];
                std::snprintf(buf, sizeof buf, "%d\t%d\t%.4f\t%.4f\n", h, seed, eval.mae,
                              eval.rmse);
                table += buf;
                std::printf("%-8d %-5d %-8.4f %-8.4f\n", h, seed, eval.mae, eval.rmse);
            }
        }
        write_text(sabl_out, table);
        write_snapshot(sabl_out, "surrogate ablate",
                       {{"data", sabl_data},
                        {"horizons", sabl_horizons},
                        {"seeds", sabl_seeds},
                        {"epochs", sabl_epochs}});
    });

    // ---- classify train / eval / grid -----------------------------------
    auto* classify_cmd = app.add_subcommand("classify", "classifier operations");
    classify_cmd->require_subcommand(1);

    std::string ct_data, ct_mode = "mirror", ct_channels, ct_surrogate, ct_out,
                ct_kind = "cnn1d";
    int ct_epochs = 200, ct_patience = 40;
    std::uint64_t ct_seed = 0;
    auto* ctrain = classify_cmd->add_subcommand("train", "train one classifier");
    ctrain->add_option("--data", ct_data)->required();
    ctrain->add_option("--mode", ct_mode)
        ->check(CLI::IsMember({"mirror", "surrogate", "raw", "diff"}));
    ctrain->add_option("--channels", ct_channels)
        ->check(CLI::IsMember({"concat46", "residual23", "raw23"}));
    ctrain->add_option("--surrogate", ct_surrogate);
    ctrain->add_option("--classifier", ct_kind)
        ->check(CLI::IsMember({"cnn1d", "gru_classifier", "logistic_summary"}));
    ctrain->add_option("--out", ct_out)->required();
    ctrain->add_option("--epochs", ct_epochs);
    ctrain->add_option("--patience", ct_patience);
    ctrain->add_option("--seed", ct_seed);
    ctrain->callback([&] {
        auto ds = data::load_dataset(ct_data);
        const auto mode = residual::feature_mode_from_string(ct_mode);
        const auto config = ct_channels.empty()
                                ? default_config_for(mode)
                                : residual::channel_config_from_string(ct_channels);
        std::optional<residual::Surrogate> surrogate;
        if (mode == residual::FeatureMode::surrogate) {
            if (ct_surrogate.empty()) throw InputError("surrogate mode needs --surrogate CKPT");
            surrogate = residual::load_surrogate(ct_surrogate);
        }
        auto built =
            residual::build_features(ds, mode, config, surrogate ? &*surrogate : nullptr);

        classify::ClassifierTrainConfig cfg;
        cfg.train.max_epochs = ct_epochs;
        cfg.train.early_stop_patience = ct_patience;
        cfg.train.seed = ct_seed;
        auto clf = classify::train_classifier(ct_kind, built.train, cfg);
        auto rep = classify::evaluate(clf, built.test);
        std::cout << "trained " << ct_kind << " on " << ct_mode << " features: test macro-F1 "
                  << rep.macro_f1 << ", accuracy " << rep.accuracy << "\n";

        classify::save_classifier(clf, ct_out,
                                  {{"mode", ct_mode},
                                   {"channels", residual::to_string(config)},
                                   {"raw_stats", stats_json(built.raw_stats)},
                                   {"diff_stats", stats_json(built.diff_stats)}});
        write_text(ct_out + ".eval.json", rep.to_json().dump(2) + "\n");
        write_snapshot(ct_out, "classify train",
                       {{"data", ct_data},
                        {"mode", ct_mode},
                        {"channels", residual::to_string(config)},
                        {"classifier", ct_kind},
                        {"epochs", ct_epochs},
                        {"patience", ct_patience},
                        {"seed", ct_seed}});
    });

    std::string ce_data, ce_model, ce_surrogate, ce_out;
    auto* ceval = classify_cmd->add_subcommand("eval", "evaluate a saved classifier");
    ceval->add_option("--data", ce_data)->required();
    ceval->add_option("--model", ce_model)->required();
    ceval->add_option("--surrogate", ce_surrogate);
    ceval->add_option("--out", ce_out);
    ceval->callback([&] {
        auto ds = data::load_dataset(ce_data);
        auto loaded = nn::load_checkpoint<float>(ce_model);
        const auto mode =
            residual::feature_mode_from_string(loaded.meta.at("mode").get<std::string>());
        const auto config =
            residual::channel_config_from_string(loaded.meta.at("channels").get<std::string>());
        std::optional<residual::Surrogate> surrogate;
        if (mode == residual::FeatureMode::surrogate) {
            if (ce_surrogate.empty()) throw InputError("surrogate mode needs --surrogate CKPT");
            surrogate = residual::load_surrogate(ce_surrogate);
        }
        auto built =
            residual::build_features(ds, mode, config, surrogate ? &*surrogate : nullptr);
        auto clf = classify::load_classifier(ce_model);
        auto rep = classify::evaluate(clf, built.test);
        std::cout << "macro-F1 " << rep.macro_f1 << " accuracy " << rep.accuracy << "\n";
        if (!ce_out.empty()) write_text(ce_out, rep.to_json().dump(2) + "\n");
    });

    std::string cg_data, cg_surrogate, cg_out,
        cg_classifiers = "cnn1d,gru_classifier,logistic_summary";
    int cg_epochs = 200, cg_patience = 40;
    std::uint64_t cg_seed = 0;
    auto* cgrid = classify_cmd->add_subcommand("grid", "feature-mode x classifier grid");
    cgrid->add_option("--data", cg_data)->required();
    cgrid->add_option("--surrogate", cg_surrogate)->required();
    cgrid->add_option("--out", cg_out)->required();
    cgrid->add_option("--classifiers", cg_classifiers);
    cgrid->add_option("--epochs", cg_epochs);
    cgrid->add_option("--patience", cg_patience);
    cgrid->add_option("--seed", cg_seed);
    cgrid->callback([&] {
        auto ds = data::load_dataset(cg_data);
        auto surrogate = residual::load_surrogate(cg_surrogate);

        std::map<residual::FeatureMode, residual::BuiltFeatures> built;
        built[residual::FeatureMode::mirror] = residual::build_features(
            ds, residual::FeatureMode::mirror, residual::ChannelConfig::concat46);
        built[residual::FeatureMode::surrogate] = residual::build_features(
            ds, residual::FeatureMode::surrogate, residual::ChannelConfig::concat46, &surrogate);
        built[residual::FeatureMode::raw] = residual::build_features(
            ds, residual::FeatureMode::raw, residual::ChannelConfig::raw23);
        built[residual::FeatureMode::diff] = residual::build_features(
            ds, residual::FeatureMode::diff, residual::ChannelConfig::residual23);

        std::map<residual::FeatureMode, const residual::BuiltFeatures*> refs;
        for (auto& [mode, b] : built) refs[mode] = &b;

        std::vector<std::string> kinds;
        std::stringstream ss(cg_classifiers);
        std::string item;
        while (std::getline(ss, item, ',')) kinds.push_back(item);

        classify::ClassifierTrainConfig cfg;
        cfg.train.max_epochs = cg_epochs;
        cfg.train.early_stop_patience = cg_patience;
        cfg.train.seed = cg_seed;
        const auto grid = classify::run_scheme_grid(refs, kinds, cfg);

        fs::create_directories(cg_out);
        write_text(fs::path(cg_out) / "grid.json", grid.to_json().dump(2) + "\n");
        write_text(fs::path(cg_out) / "grid.txt", grid.to_table());
        write_text(fs::path(cg_out) / "grid.tsv", grid.to_tsv());
        std::cout << grid.to_table();

        // Persist per-mode CNNs for the bench and diagnose commands.
        for (auto& [mode, b] : built) {
            auto clf = classify::train_classifier("cnn1d", b.train, cfg);
            classify::save_classifier(
                clf, fs::path(cg_out) / ("cnn_" + residual::to_string(mode) + ".ckpt"),
                {{"mode", residual::to_string(mode)},
                 {"channels", residual::to_string(b.train.config)},
                 {"raw_stats", stats_json(b.raw_stats)},
                 {"diff_stats", stats_json(b.diff_stats)}});
        }
        write_snapshot(cg_out, "classify grid",
                       {{"data", cg_data},
                        {"surrogate", cg_surrogate},
                        {"classifiers", cg_classifiers},
                        {"epochs", cg_epochs},
                        {"patience", cg_patience},
                        {"seed", cg_seed}});
    });

    // ---- bench -----------------------------------------------------------
    std::string b_data, b_run, b_models, b_surrogate, b_out;
    int b_reps = 20;
    auto* bench = app.add_subcommand("bench", "single-sample staged latency");
    bench->add_option("--data", b_data)->required();
    bench->add_option("--run", b_run)->required();
    bench->add_option("--models", b_models, "grid output directory")->required();
    bench->add_option("--surrogate", b_surrogate)->required();
    bench->add_option("--reps", b_reps);
    bench->add_option("--out", b_out);
    bench->callback([&] {
        auto ds = data::load_dataset(b_data);
        auto surrogate = residual::load_surrogate(b_surrogate);

        std::map<residual::FeatureMode, classify::TrainedClassifier> clfs;
        std::map<residual::FeatureMode, residual::BuiltFeatures> stats;
        std::map<residual::FeatureMode, classify::TrainedClassifier*> clf_refs;
        std::map<residual::FeatureMode, const residual::BuiltFeatures*> stat_refs;
        for (auto mode : {residual::FeatureMode::mirror, residual::FeatureMode::surrogate,
                          residual::FeatureMode::raw, residual::FeatureMode::diff}) {
            const auto path = fs::path(b_models) / ("cnn_" + residual::to_string(mode) + ".ckpt");
            auto loaded = nn::load_checkpoint<float>(path.string());
            clfs[mode] = classify::load_classifier(path);
            auto& b = stats[mode];
            b.raw_stats = stats_from_json(loaded.meta.at("raw_stats"));
            b.diff_stats = stats_from_json(loaded.meta.at("diff_stats"));
            clf_refs[mode] = &clfs[mode];
            stat_refs[mode] = &stats[mode];
        }
        const auto result =
            classify::bench_inference(ds, b_run, clf_refs, stat_refs, &surrogate, b_reps);
        std::cout << result.to_table();
        if (!b_out.empty()) {
            fs::create_directories(b_out);
            write_text(fs::path(b_out) / "bench.txt", result.to_table());
            write_text(fs::path(b_out) / "bench.tsv", result.to_tsv());
            write_snapshot(b_out, "bench", {{"data", b_data}, {"run", b_run}, {"reps", b_reps}});
        }
    });

    // ---- diagnose ---------------------------------------------------------
    std::string d_data, d_run, d_mode = "mirror", d_model, d_surrogate, d_report = "none", d_out;
    int d_topk = 3;
    auto* diag = app.add_subcommand("diagnose", "end-to-end diagnosis of one run");
    diag->add_option("--data", d_data)->required();
    diag->add_option("--run", d_run)->required();
    diag->add_option("--mode", d_mode)->check(CLI::IsMember({"mirror", "surrogate"}));
    diag->add_option("--model", d_model)->required();
    diag->add_option("--surrogate", d_surrogate);
    diag->add_option("--report", d_report)
        ->check(CLI::IsMember({"none", "template", "with_fmea", "no_fmea"}));
    diag->add_option("--topk", d_topk);
    diag->add_option("--out", d_out);
    diag->callback([&] {
        auto ds = data::load_dataset(d_data);
        const auto& meta = ds.run(d_run);
        auto loaded = nn::load_checkpoint<float>(d_model);
        auto clf = classify::load_classifier(d_model);
        const auto raw_stats = stats_from_json(loaded.meta.at("raw_stats"));
        const auto mode = residual::feature_mode_from_string(d_mode);

        std::optional<residual::Surrogate> surrogate;
        if (mode == residual::FeatureMode::surrogate) {
            if (d_surrogate.empty()) throw InputError("surrogate path needs --surrogate CKPT");
            surrogate = residual::load_surrogate(d_surrogate);
        }
        auto inputs =
            diagnosis_inputs(ds, meta, mode, raw_stats, surrogate ? &*surrogate : nullptr);

        const auto topk_raw = clf.predict_topk(inputs.classifier_window, d_topk);
        std::vector<report::Candidate> topk;
        std::cout << "run " << d_run << " (true class " << faults::to_string(meta.fault_class)
                  << ")\ntop-" << d_topk << ":\n";
        for (const auto& [cls, p] : topk_raw) {
            topk.push_back({static_cast<faults::FaultClass>(cls), p});
            std::cout << "  " << faults::to_string(static_cast<faults::FaultClass>(cls)) << "  "
                      << p << "\n";
        }
        std::cout << "evidence:\n";
        for (const auto& e : inputs.evidence.significant)
            std::cout << "  " << canonical_channels()[static_cast<std::size_t>(e.channel)].name
                      << " " << faults::to_string(e.direction) << " z=" << e.z_mean << "\n";

        if (d_report != "none") {
            report::DiagnosticReport rep;
            if (d_report == "template") {
                rep = report::generate_template_report(topk, inputs.evidence);
            } else {
                const auto kb_mode = d_report == "with_fmea" ? report::KbMode::with_fmea
                                                             : report::KbMode::no_fmea;
                const auto prompt = report::build_prompt(topk, inputs.evidence, kb_mode);
                report::MockChatClient mock(report::mock_llm_response);
                auto outcome = report::generate_llm_report(mock, prompt, "mock-model");
                if (outcome.status != report::LlmReportOutcome::Status::ok)
                    throw IoError("report generation failed: " + outcome.error);
                rep = *outcome.report;
            }
            std::cout << "\n" << rep.full_text();
            if (!d_out.empty()) {
                fs::create_directories(d_out);
                write_text(fs::path(d_out) / (d_run + ".report.txt"), rep.full_text());
            }
        }
    });

    // ---- report gen / score ------------------------------------------------
    auto* report_cmd = app.add_subcommand("report", "diagnostic report batches");
    report_cmd->require_subcommand(1);

    std::string rg_data, rg_model, rg_surrogate, rg_mode = "template", rg_out,
                rg_client = "mock", rg_endpoint, rg_model_name = "deepseek-chat",
                rg_api_key_env = "TWINDIAG_API_KEY";
    int rg_cases = 40, rg_topk = 3;
    auto* rgen = report_cmd->add_subcommand("gen", "generate a scored report batch");
    rgen->add_option("--data", rg_data)->required();
    rgen->add_option("--model", rg_model, "classifier checkpoint")->required();
    rgen->add_option("--surrogate", rg_surrogate);
    rgen->add_option("--mode", rg_mode)->check(CLI::IsMember({"template", "with_fmea", "no_fmea"}));
    rgen->add_option("--cases", rg_cases);
    rgen->add_option("--topk", rg_topk);
    rgen->add_option("--out", rg_out)->required();
    rgen->add_option("--client", rg_client)->check(CLI::IsMember({"mock", "http"}));
    rgen->add_option("--endpoint", rg_endpoint);
    rgen->add_option("--model-name", rg_model_name);
    rgen->add_option("--api-key-env", rg_api_key_env);
    rgen->callback([&] {
        auto ds = data::load_dataset(rg_data);
        auto loaded = nn::load_checkpoint<float>(rg_model);
        auto clf = classify::load_classifier(rg_model);
        const auto raw_stats = stats_from_json(loaded.meta.at("raw_stats"));
        const auto mode =
            residual::feature_mode_from_string(loaded.meta.at("mode").get<std::string>());

        std::optional<residual::Surrogate> surrogate;
        if (mode == residual::FeatureMode::surrogate) {
            if (rg_surrogate.empty()) throw InputError("surrogate mode needs --surrogate CKPT");
            surrogate = residual::load_surrogate(rg_surrogate);
        }

        const auto cases = pipeline::stratified_test_cases(ds, rg_cases);

        std::unique_ptr<report::ChatClient> client;
        if (rg_client == "mock") {
            client = std::make_unique<report::MockChatClient>(report::mock_llm_response);
        } else {
            report::ChatClientConfig ccfg;
            ccfg.base_url = rg_endpoint;
            ccfg.model = rg_model_name;
            ccfg.api_key_env = rg_api_key_env;
            client = std::make_unique<report::HttpChatClient>(ccfg);
        }

        fs::create_directories(rg_out);
        std::vector<std::optional<report::DiagnosticReport>> reports;
        std::vector<report::ReportTruth> truths;
        for (std::size_t i = 0; i < cases.size(); ++i) {
            const auto& meta = *cases[i];
            auto inputs =
                diagnosis_inputs(ds, meta, mode, raw_stats, surrogate ? &*surrogate : nullptr);
            const auto topk_raw = clf.predict_topk(inputs.classifier_window, rg_topk);
            std::vector<report::Candidate> topk;
            for (const auto& [cls, p] : topk_raw)
                topk.push_back({static_cast<faults::FaultClass>(cls), p});

            report::ReportTruth truth;
            truth.true_class = meta.fault_class;
            truth.classifier_top1 = topk[0].fault_class;
            truth.evidence = inputs.evidence;

            std::optional<report::DiagnosticReport> rep;
            std::string raw;
            if (rg_mode == "template") {
                rep = report::generate_template_report(topk, inputs.evidence);
                raw = rep->full_text();
            } else {
                const auto kb_mode = rg_mode == "with_fmea" ? report::KbMode::with_fmea
                                                            : report::KbMode::no_fmea;
                const auto prompt = report::build_prompt(topk, inputs.evidence, kb_mode);
                auto outcome = report::generate_llm_report(*client, prompt, rg_model_name);
                raw = outcome.raw_response;
                if (outcome.status == report::LlmReportOutcome::Status::ok) rep = outcome.report;
            }
            const std::string stem = "case_" + std::to_string(i) + "_" + meta.run_id;
            if (rep) write_text(fs::path(rg_out) / (stem + ".report.txt"), rep->full_text());
            write_text(fs::path(rg_out) / (stem + ".raw.txt"), raw);

            json tj = {{"true_class", faults::to_string(truth.true_class)},
                       {"classifier_top1", faults::to_string(truth.classifier_top1)},
                       {"evidence", json::array()}};
            for (const auto& e : truth.evidence.significant)
                tj["evidence"].push_back(
                    {{"channel", canonical_channels()[static_cast<std::size_t>(e.channel)].name},
                     {"direction", faults::to_string(e.direction)},
                     {"z", e.z_mean}});
            write_text(fs::path(rg_out) / (stem + ".truth.json"), tj.dump(2) + "\n");

            reports.push_back(std::move(rep));
            truths.push_back(std::move(truth));
        }

        const auto agg = report::score_reports(reports, truths);
        write_text(fs::path(rg_out) / "scores.json", agg.to_json().dump(2) + "\n");
        std::cout << "scored " << agg.scored << " reports (" << agg.excluded
                  << " excluded): CCC " << agg.mean.ccc << " SEC " << agg.mean.sec << " DC "
                  << agg.mean.dc << " HR " << agg.mean.hr << "\n";
        write_snapshot(rg_out, "report gen",
                       {{"data", rg_data},
                        {"model", rg_model},
                        {"mode", rg_mode},
                        {"cases", rg_cases},
                        {"client", rg_client},
                        {"api_key_env", rg_api_key_env}});
    });

    std::string rs_dir, rs_out;
    auto* rscore = report_cmd->add_subcommand("score", "re-score an archived report batch");
    rscore->add_option("--dir", rs_dir)->required();
    rscore->add_option("--out", rs_out);
    rscore->callback([&] {
        std::vector<std::optional<report::DiagnosticReport>> reports;
        std::vector<report::ReportTruth> truths;
        std::vector<fs::path> truth_files;
        for (const auto& entry : fs::directory_iterator(rs_dir)) {
            const auto s = entry.path().string();
            if (s.size() > 11 && s.substr(s.size() - 11) == ".truth.json")
                truth_files.push_back(entry.path());
        }
        std::sort(truth_files.begin(), truth_files.end());

        for (const auto& tf : truth_files) {
            std::ifstream in(tf);
            json tj;
            in >> tj;
            report::ReportTruth truth;
            truth.true_class =
                faults::fault_class_from_string(tj.at("true_class").get<std::string>());
            truth.classifier_top1 =
                faults::fault_class_from_string(tj.at("classifier_top1").get<std::string>());
            for (const auto& e : tj.at("evidence")) {
                report::EvidenceItem item;
                item.channel = channel_index(e.at("channel").get<std::string>());
                item.z_mean = e.at("z").get<double>();
                item.direction =
                    faults::direction_from_string(e.at("direction").get<std::string>());
                truth.evidence.significant.push_back(item);
            }
            truths.push_back(std::move(truth));

            auto rf = tf.string();
            rf.replace(rf.size() - std::string(".truth.json").size(), std::string::npos,
                       ".report.txt");
            if (fs::exists(rf)) {
                std::ifstream rin(rf);
                std::string text((std::istreambuf_iterator<char>(rin)), {});
                reports.push_back(report::parse_report_text(text));
            } else {
                reports.push_back(std::nullopt);
            }
        }
        const auto agg = report::score_reports(reports, truths);
        std::cout << agg.to_json().dump(2) << "\n";
        if (!rs_out.empty()) write_text(rs_out, agg.to_json().dump(2) + "\n");
    });

    // ---- kb export ----------------------------------------------------------
    auto* kb_cmd = app.add_subcommand("kb", "FMEA knowledge base");
    kb_cmd->require_subcommand(1);
    std::string kb_format = "json", kb_out;
    auto* kb_export = kb_cmd->add_subcommand("export", "export the knowledge base");
    kb_export->add_option("--format", kb_format)->check(CLI::IsMember({"json", "text"}));
    kb_export->add_option("--out", kb_out);
    kb_export->callback([&] {
        const auto text = faults::export_kb(kb_format);
        if (kb_out.empty())
            std::cout << text;
        else
            write_text(kb_out, text);
    });

    // ---- plotdata -------------------------------------------------------------
    std::string p_data, p_run, p_figure = "channels", p_out;
    auto* plot = app.add_subcommand("plotdata", "emit series for external plotting");
    plot->add_option("--data", p_data)->required();
    plot->add_option("--run", p_run)->required();
    plot->add_option("--figure", p_figure)->check(CLI::IsMember({"traj", "channels"}));
    plot->add_option("--out", p_out)->required();
    plot->callback([&] {
        auto ds = data::load_dataset(p_data);
        const auto& meta = ds.run(p_run);
        const auto episode = ds.load(p_run);
        const auto mirror = ds.load(meta.mirror_run_id);
        fs::create_directories(p_out);

        const double dt = ds.dt();
        std::string tsv;
        if (p_figure == "traj") {
            tsv = "t\taltitude\tindicated_airspeed\tclimb_rate\theading\t"
                  "mirror_altitude\tmirror_indicated_airspeed\tmirror_climb_rate\tmirror_heading\n";
            for (int t = 0; t < episode.steps(); t += 10) {
                char buf[256];
                std::snprintf(buf, sizeof buf,
                              "%.2f\t%.3f\t%.3f\t%.3f\t%.3f\t%.3f\t%.3f\t%.3f\t%.3f\n", t * dt,
                              episode.frames(kAltitude, t), episode.frames(kIndicatedAirspeed, t),
                              episode.frames(kClimbRate, t), episode.frames(kHeading, t),
                              mirror.frames(kAltitude, t), mirror.frames(kIndicatedAirspeed, t),
                              mirror.frames(kClimbRate, t), mirror.frames(kHeading, t));
                tsv += buf;
            }
        } else {
            // The six key channels: rpm, cht1, egt1, oil_temp, oil_press, altitude.
            const std::vector<int> six = {kRpm, kCht1, kEgt1, kOilTemp, kOilPress, kAltitude};
            tsv = "t";
            for (int ch : six)
                tsv += "\t" + canonical_channels()[static_cast<std::size_t>(ch)].name;
            for (int ch : six)
                tsv += "\tmirror_" + canonical_channels()[static_cast<std::size_t>(ch)].name;
            tsv += "\n";
            for (int t = 0; t < episode.steps(); t += 5) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.2f", t * dt);
                tsv += buf;
                for (int ch : six) {
                    std::snprintf(buf, sizeof buf, "\t%.4f", episode.frames(ch, t));
                    tsv += buf;
                }
                for (int ch : six) {
                    std::snprintf(buf, sizeof buf, "\t%.4f", mirror.frames(ch, t));
                    tsv += buf;
                }
                tsv += "\n";
            }
        }
        const auto path = fs::path(p_out) / (p_run + "_" + p_figure + ".tsv");
        write_text(path, tsv);
        std::cout << "wrote " << path.string() << "\n";
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}
