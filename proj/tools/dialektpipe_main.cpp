// Command-line front end: every pipeline stage, the dialect classifier, the
// TTS evaluation harness, and report rendering behind one binary.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dialektpipe/backends.hpp"
#include "dialektpipe/dialect_id.hpp"
#include "dialektpipe/errors.hpp"
#include "dialektpipe/eval.hpp"
#include "dialektpipe/ingest.hpp"
#include "dialektpipe/manifest.hpp"
#include "dialektpipe/pipeline.hpp"
#include "dialektpipe/reporting.hpp"
#include "dialektpipe/util.hpp"

namespace dp = dialektpipe;
namespace fs = std::filesystem;

namespace {

// --backends file > DIALEKTPIPE_BACKEND_CONF > in-process stubs.
dp::backends::BackendSet backend_set_for(const std::string& conf_file, std::uint64_t seed) {
    if (!conf_file.empty()) return dp::backends::load_backend_conf(conf_file);
    if (auto env = dp::env_var("DIALEKTPIPE_BACKEND_CONF")) {
        return dp::backends::load_backend_conf(*env);
    }
    return dp::backends::default_backend_set(seed);
}

void write_or_print(const std::string& content, const std::string& path) {
    if (path.empty()) {
        std::cout << content;
    } else {
        dp::atomic_write_text_file(path, content);
    }
}

int run_cli(int argc, char** argv) {
    CLI::App app{"dialektpipe: weakly labeled Swiss German speech corpus tools"};
    app.require_subcommand(1);

    // ---- pipeline ---------------------------------------------------------
    auto* cmd_pipeline =
        app.add_subcommand("pipeline", "Run the staged corpus pipeline from a config file");
    std::string pl_config, pl_stop_after, pl_workspace;
    cmd_pipeline->add_option("--config", pl_config, "pipeline config (JSON)")->required();
    cmd_pipeline->add_option("--stop-after", pl_stop_after,
                             "halt after this stage (overrides the config)");
    cmd_pipeline->add_option("--workspace", pl_workspace, "workspace override");
    cmd_pipeline->callback([&]() {
        dp::pipeline::PipelineConfig cfg = dp::pipeline::load_pipeline_config(pl_config);
        if (!pl_stop_after.empty()) {
            if (!dp::pipeline::is_stage_name(pl_stop_after)) {
                throw dp::ConfigError("--stop-after names unknown stage '" + pl_stop_after +
                                      "'");
            }
            cfg.stop_after = pl_stop_after;
        }
        if (!pl_workspace.empty()) cfg.workspace = pl_workspace;
        dp::pipeline::PipelineResult result = dp::pipeline::run_pipeline(cfg);
        for (const std::string& stage : result.stages_skipped) {
            std::cout << "stage " << stage << ": up to date\n";
        }
        for (const std::string& stage : result.stages_run) {
            std::cout << "stage " << stage << ": done\n";
        }
        std::cout << "manifest: " << result.manifest_path.string() << "\n";
    });

    // ---- ingest -----------------------------------------------------------
    auto* cmd_ingest = app.add_subcommand("ingest", "Fetch the catalog and download episodes");
    std::string in_catalog, in_out, in_overrides, in_auth;
    bool in_include_excluded = false;
    int in_max_parallel = 4;
    double in_timeout = 30.0;
    std::int64_t in_max_bytes = 0;
    cmd_ingest->add_option("--catalog", in_catalog, "http:// endpoint or local catalog dir")
        ->required();
    cmd_ingest->add_option("--out", in_out, "destination directory")->required();
    cmd_ingest->add_option("--overrides", in_overrides, "podcast language override table");
    cmd_ingest->add_flag("--include-excluded", in_include_excluded,
                         "also download unclassified podcasts");
    cmd_ingest->add_option("--max-parallel", in_max_parallel, "parallel downloads");
    cmd_ingest->add_option("--timeout-s", in_timeout, "http timeout per attempt");
    cmd_ingest->add_option("--auth", in_auth, "bearer token for the catalog and media");
    cmd_ingest->add_option("--max-bytes-per-attempt", in_max_bytes,
                           "cut each transfer after N bytes (fault injection)");
    cmd_ingest->callback([&]() {
        std::map<std::string, dp::LanguageClass> overrides;
        if (!in_overrides.empty()) overrides = dp::ingest::read_override_table(in_overrides);
        dp::ingest::IngestOptions opts;
        opts.http.timeout_s = in_timeout;
        opts.http.auth = in_auth;
        opts.download.timeout_s = in_timeout;
        opts.max_parallel = in_max_parallel;
        opts.include_excluded = in_include_excluded;
        if (in_max_bytes > 0) opts.download.max_bytes_per_attempt = in_max_bytes;
        if (in_catalog.rfind("http://", 0) != 0) opts.download.local_root = in_catalog;
        dp::ingest::IngestReport report =
            dp::ingest::run_ingest(in_catalog, overrides, in_out, opts);
        for (const std::string& warning : report.warnings) {
            std::cerr << "warning: " << warning << "\n";
        }
        std::cout << "ingested " << report.episodes.size() << " episodes from "
                  << report.catalog.size() << " catalog podcasts\n";
    });

    // ---- diarize ----------------------------------------------------------
    auto* cmd_diarize = app.add_subcommand("diarize", "Produce RTTM speaker turns per episode");
    std::string dz_episodes, dz_out, dz_backends;
    std::uint64_t dz_seed = 1;
    cmd_diarize->add_option("--episodes", dz_episodes, "episodes.jsonl from ingest")->required();
    cmd_diarize->add_option("--out", dz_out, "output directory for RTTM files")->required();
    cmd_diarize->add_option("--backends", dz_backends, "backend config file");
    cmd_diarize->add_option("--seed", dz_seed, "stub backend seed");
    cmd_diarize->callback([&]() {
        auto episodes = dp::ingest::read_episode_index(dz_episodes);
        auto set = backend_set_for(dz_backends, dz_seed);
        auto backend =
            dp::backends::make_backend(set.require(dp::backends::BackendKind::diarizer));
        dp::pipeline::run_diarize_stage(episodes, *backend, dz_out,
                                        backend->spec().max_parallel,
                                        fs::path(dz_out) / "diarize.log.jsonl");
        std::cout << "diarized " << episodes.size() << " episodes\n";
    });

    // ---- segment ----------------------------------------------------------
    auto* cmd_segment =
        app.add_subcommand("segment", "Slice episodes into single-speaker segments");
    std::string sg_episodes, sg_rttm, sg_out, sg_manifest;
    double sg_min = 2.0, sg_max = 15.0, sg_tail = 2.0, sg_tol = 0.5;
    cmd_segment->add_option("--episodes", sg_episodes, "episodes.jsonl from ingest")->required();
    cmd_segment->add_option("--rttm", sg_rttm, "directory with RTTM files")->required();
    cmd_segment->add_option("--out", sg_out, "segment audio directory")->required();
    cmd_segment->add_option("--manifest", sg_manifest,
                            "manifest path (default: <out>/segments.jsonl; audio paths are "
                            "relative to --out)");
    cmd_segment->add_option("--min-s", sg_min, "minimum segment duration");
    cmd_segment->add_option("--max-s", sg_max, "maximum segment duration");
    cmd_segment->add_option("--min-tail-s", sg_tail, "minimum kept remainder after splitting");
    cmd_segment->add_option("--tolerance-s", sg_tol, "metadata vs audio duration tolerance");
    cmd_segment->callback([&]() {
        auto episodes = dp::ingest::read_episode_index(sg_episodes);
        dp::SegmentationConfig cfg;
        cfg.min_ms = dp::seconds_to_ms(sg_min);
        cfg.max_ms = dp::seconds_to_ms(sg_max);
        cfg.min_tail_ms = dp::seconds_to_ms(sg_tail);
        cfg.audio_tolerance_ms = dp::seconds_to_ms(sg_tol);
        dp::Manifest m = dp::pipeline::run_segment_stage(episodes, sg_rttm, sg_out, cfg);
        m.header.created_utc = dp::utc_timestamp_now();
        fs::path manifest_path =
            sg_manifest.empty() ? fs::path(sg_out) / "segments.jsonl" : fs::path(sg_manifest);
        dp::write_manifest(m, manifest_path);
        std::cout << "wrote " << m.segments.size() << " segments to "
                  << manifest_path.string() << "\n";
    });

    // ---- transcribe -------------------------------------------------------
    auto* cmd_transcribe = app.add_subcommand("transcribe", "Add ASR transcripts to a manifest");
    std::string tr_manifest, tr_base, tr_out, tr_backends;
    std::uint64_t tr_seed = 1;
    cmd_transcribe->add_option("--manifest", tr_manifest, "input manifest")->required();
    cmd_transcribe->add_option("--audio-base", tr_base,
                               "base directory for audio paths (default: manifest directory)");
    cmd_transcribe->add_option("--out", tr_out, "output manifest path")->required();
    cmd_transcribe->add_option("--backends", tr_backends, "backend config file");
    cmd_transcribe->add_option("--seed", tr_seed, "stub backend seed");
    cmd_transcribe->callback([&]() {
        dp::Manifest input = dp::read_manifest(tr_manifest);
        fs::path base = tr_base.empty() ? fs::path(tr_manifest).parent_path() : fs::path(tr_base);
        auto set = backend_set_for(tr_backends, tr_seed);
        auto backend = dp::backends::make_backend(set.require(dp::backends::BackendKind::asr));
        dp::Manifest out = dp::pipeline::run_transcribe_stage(
            input, base, *backend, backend->spec().max_parallel,
            fs::path(tr_out).parent_path() / "transcribe.log.jsonl");
        out.header.created_utc = dp::utc_timestamp_now();
        dp::write_manifest(out, tr_out);
        std::cout << "transcribed " << out.segments.size() << " of " << input.segments.size()
                  << " segments\n";
    });

    // ---- did --------------------------------------------------------------
    auto* cmd_did = app.add_subcommand("did", "Dialect identification");
    cmd_did->require_subcommand(1);

    auto* did_train = cmd_did->add_subcommand("train", "Train the phoneme n-gram classifier");
    std::string dt_corpus, dt_out;
    double dt_alpha = 1.0;
    std::vector<int> dt_orders = {1, 2, 3};
    did_train->add_option("--corpus", dt_corpus, "labeled corpus (label<TAB>phonemes)")
        ->required();
    did_train->add_option("--out", dt_out, "model output path")->required();
    did_train->add_option("--alpha", dt_alpha, "additive smoothing strength");
    did_train->add_option("--orders", dt_orders, "n-gram orders")->delimiter(',');
    did_train->callback([&]() {
        auto corpus = dp::did::read_labeled_corpus(dt_corpus);
        dp::did::NBModel model = dp::did::train_nb(corpus, {}, dt_orders, dt_alpha);
        dp::did::save_model(model, dt_out);
        std::cout << "trained on " << corpus.size() << " examples, " << model.classes.size()
                  << " classes, vocabulary " << model.vocab_list.size() << "\n";
    });

    auto* did_predict =
        cmd_did->add_subcommand("predict", "Classify phoneme sequences, one per input line");
    std::string dpr_model, dpr_input;
    did_predict->add_option("--model", dpr_model, "model file")->required();
    did_predict->add_option("--input", dpr_input, "file with one phoneme sequence per line")
        ->required();
    did_predict->callback([&]() {
        dp::did::NBModel model = dp::did::load_model(dpr_model);
        std::istringstream in(dp::read_text_file(dpr_input));
        std::string line;
        while (std::getline(in, line)) {
            if (dp::trim(line).empty()) continue;
            auto prediction = dp::did::predict(model, dp::split_whitespace(line));
            std::cout << dp::region_name(prediction.region) << "\n";
        }
    });

    auto* did_eval = cmd_did->add_subcommand("eval", "Score the classifier on a labeled corpus");
    std::string de_model, de_corpus;
    did_eval->add_option("--model", de_model, "model file")->required();
    did_eval->add_option("--corpus", de_corpus, "labeled test corpus")->required();
    did_eval->callback([&]() {
        dp::did::NBModel model = dp::did::load_model(de_model);
        auto corpus = dp::did::read_labeled_corpus(de_corpus);
        dp::did::DidEvalReport report = dp::did::evaluate(model, corpus);
        std::cout << "macro F1: " << dp::format_fixed(report.macro_f1, 4) << "\n";
        std::cout << "confusion (rows: truth, columns: prediction):\n";
        for (std::size_t t = 0; t < report.confusion.classes.size(); ++t) {
            std::cout << dp::region_name(report.confusion.classes[t]);
            for (std::size_t p = 0; p < report.confusion.classes.size(); ++p) {
                std::cout << ' ' << report.confusion.counts[t][p];
            }
            std::cout << "\n";
        }
    });

    auto* did_apply =
        cmd_did->add_subcommand("apply", "Label a manifest's speakers with dialect regions");
    std::string da_manifest, da_base, da_model, da_out, da_backends;
    std::uint64_t da_seed = 1;
    did_apply->add_option("--manifest", da_manifest, "transcribed manifest")->required();
    did_apply->add_option("--audio-base", da_base,
                          "base directory for audio paths (default: manifest directory)");
    did_apply->add_option("--model", da_model, "classifier model file")->required();
    did_apply->add_option("--out", da_out, "output manifest path")->required();
    did_apply->add_option("--backends", da_backends, "backend config file");
    did_apply->add_option("--seed", da_seed, "stub backend seed");
    did_apply->callback([&]() {
        dp::Manifest input = dp::read_manifest(da_manifest);
        fs::path base = da_base.empty() ? fs::path(da_manifest).parent_path() : fs::path(da_base);
        dp::did::NBModel model = dp::did::load_model(da_model);
        auto set = backend_set_for(da_backends, da_seed);
        auto backend =
            dp::backends::make_backend(set.require(dp::backends::BackendKind::phonemizer));
        dp::Manifest out = dp::pipeline::run_did_stage(
            input, base, model, *backend, backend->spec().max_parallel,
            fs::path(da_out).parent_path() / "phonemize.log.jsonl");
        out.header.created_utc = dp::utc_timestamp_now();
        dp::write_manifest(out, da_out);
        std::cout << "labeled " << out.segments.size() << " of " << input.segments.size()
                  << " segments\n";
    });

    // ---- stats ------------------------------------------------------------
    auto* cmd_stats = app.add_subcommand("stats", "Corpus statistics by dialect");
    std::string st_manifest, st_text, st_csv;
    cmd_stats->add_option("--manifest", st_manifest, "manifest file")->required();
    cmd_stats->add_option("--text", st_text, "write the aligned table here instead of stdout");
    cmd_stats->add_option("--csv", st_csv, "also write CSV here");
    cmd_stats->callback([&]() {
        dp::Manifest manifest = dp::read_manifest(st_manifest);
        dp::reporting::CorpusStats stats = dp::reporting::corpus_stats(manifest);
        write_or_print(dp::reporting::render_corpus_stats_text(stats), st_text);
        if (!st_csv.empty()) {
            dp::atomic_write_text_file(st_csv, dp::reporting::render_corpus_stats_csv(stats));
        }
    });

    // ---- eval -------------------------------------------------------------
    auto* cmd_eval = app.add_subcommand("eval", "TTS evaluation harness");
    cmd_eval->require_subcommand(1);

    auto* eval_build = cmd_eval->add_subcommand("build", "Sample the evaluation item set");
    std::string eb_scenario, eb_texts, eb_speakers, eb_out, eb_model_tag = "model";
    std::uint64_t eb_seed = 1;
    bool eb_german = false;
    eval_build->add_option("--scenario", eb_scenario, "short or long")->required();
    eval_build->add_option("--texts", eb_texts, "input texts, one per line")->required();
    eval_build->add_option("--speakers", eb_speakers, "speaker table (JSON)")->required();
    eval_build->add_option("--out", eb_out, "items output (JSON lines)")->required();
    eval_build->add_option("--model-tag", eb_model_tag, "system name for the items");
    eval_build->add_option("--seed", eb_seed, "sampling seed");
    eval_build->add_flag("--include-standard-german", eb_german,
                         "add a Standard German block");
    eval_build->callback([&]() {
        dp::eval::EvalScenario scenario =
            dp::eval::make_scenario(eb_scenario, dp::eval::read_texts(eb_texts));
        auto speakers = dp::eval::read_speaker_table(eb_speakers);
        dp::eval::BuildOptions options;
        options.model_tag = eb_model_tag;
        options.include_standard_german = eb_german;
        auto items = dp::eval::build_eval_set(scenario, speakers, eb_seed, options);
        dp::eval::write_eval_items(items, eb_out);
        std::cout << "wrote " << items.size() << " items to " << eb_out << "\n";
    });

    auto* eval_auto = cmd_eval->add_subcommand(
        "auto", "Synthesize every item and score WER/BLEU/SIM/DID per region");
    std::string ea_items, ea_work, ea_did_model, ea_backends, ea_text, ea_csv, ea_items_out;
    std::uint64_t ea_seed = 1;
    eval_auto->add_option("--items", ea_items, "items file from eval build")->required();
    eval_auto->add_option("--work-dir", ea_work, "generated audio and completion logs")
        ->required();
    eval_auto->add_option("--did-model", ea_did_model, "dialect classifier model")->required();
    eval_auto->add_option("--backends", ea_backends, "backend config file");
    eval_auto->add_option("--seed", ea_seed, "stub backend seed");
    eval_auto->add_option("--text", ea_text, "write the report table here instead of stdout");
    eval_auto->add_option("--csv", ea_csv, "also write CSV here");
    eval_auto->add_option("--items-out", ea_items_out,
                          "write items incl. generated audio paths (for human sheets)");
    eval_auto->callback([&]() {
        auto items = dp::eval::read_eval_items(ea_items);
        auto set = backend_set_for(ea_backends, ea_seed);
        dp::did::NBModel model = dp::did::load_model(ea_did_model);
        dp::eval::AutoEvalOptions options;
        options.work_dir = ea_work;
        dp::eval::AutoEvalResult result = dp::eval::run_auto_eval(items, set, model, options);
        write_or_print(dp::reporting::render_metric_report_text(result.report), ea_text);
        if (!ea_csv.empty()) {
            dp::atomic_write_text_file(
                ea_csv, dp::reporting::render_metric_report_csv(result.report));
        }
        if (!ea_items_out.empty()) dp::eval::write_eval_items(result.items, ea_items_out);
    });

    auto* eval_prepare =
        cmd_eval->add_subcommand("human-prepare", "Write per-rater MOS rating sheets");
    std::string ep_items, ep_scenario, ep_out;
    std::vector<std::string> ep_raters;
    std::uint64_t ep_seed = 1;
    int ep_per_dialect = 6;
    eval_prepare->add_option("--items", ep_items, "items file with generated audio")->required();
    eval_prepare->add_option("--scenario", ep_scenario, "scenario name for the sheets")
        ->required();
    eval_prepare->add_option("--raters", ep_raters, "rater ids")->required()->delimiter(',');
    eval_prepare->add_option("--out-dir", ep_out, "sheet output directory")->required();
    eval_prepare->add_option("--seed", ep_seed, "sampling seed");
    eval_prepare->add_option("--per-dialect", ep_per_dialect, "items sampled per dialect");
    eval_prepare->callback([&]() {
        auto items = dp::eval::read_eval_items(ep_items);
        dp::eval::HumanPrepOptions options;
        options.out_dir = ep_out;
        options.per_dialect = ep_per_dialect;
        dp::eval::HumanSheets sheets =
            dp::eval::prepare_human_sheets(items, ep_scenario, ep_raters, ep_seed, options);
        std::cout << "index: " << sheets.index_file.string() << "\n";
        for (const auto& sheet : sheets.sheet_files) {
            std::cout << "sheet: " << sheet.string() << "\n";
        }
    });

    auto* eval_aggregate =
        cmd_eval->add_subcommand("human-aggregate", "Aggregate completed MOS sheets");
    std::vector<std::string> eg_indexes;
    std::string eg_baseline, eg_text, eg_csv;
    double eg_alpha = 0.05;
    eval_aggregate->add_option("--index", eg_indexes, "items index file (repeatable)")
        ->required();
    eval_aggregate->add_option("--baseline", eg_baseline, "baseline system tag")->required();
    eval_aggregate->add_option("--alpha", eg_alpha, "significance level");
    eval_aggregate->add_option("--text", eg_text,
                               "write the MOS table here instead of stdout");
    eval_aggregate->add_option("--csv", eg_csv, "also write CSV here");
    eval_aggregate->callback([&]() {
        std::vector<fs::path> index_files(eg_indexes.begin(), eg_indexes.end());
        dp::eval::MosReport report =
            dp::eval::aggregate_human(index_files, eg_baseline, eg_alpha);
        write_or_print(dp::reporting::render_mos_report_text(report), eg_text);
        if (!eg_csv.empty()) {
            dp::atomic_write_text_file(eg_csv, dp::reporting::render_mos_report_csv(report));
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? dp::kExitOk : dp::kExitConfigError;
    }
    return dp::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const dp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return dp::kExitConfigError;
    } catch (const dp::BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return dp::kExitBackendError;
    } catch (const dp::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return dp::kExitDataError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return dp::kExitDataError;
    }
}
