#include "dialektpipe/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dialektpipe/errors.hpp"
#include "dialektpipe/util.hpp"

namespace dialektpipe::eval {

using nlohmann::json;

namespace {

// std::shuffle has implementation-defined output; this stays stable.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng() % i]);
    }
}

std::string quote(std::string_view s) { return json(s).dump(); }

}  // namespace

EvalScenario make_scenario(std::string name, std::vector<std::string> texts) {
    EvalScenario scenario;
    scenario.name = std::move(name);
    scenario.texts = std::move(texts);
    if (scenario.name == "short") {
        scenario.expected_duration_lo_s = 5.0;
        scenario.expected_duration_hi_s = 7.0;
    } else if (scenario.name == "long") {
        scenario.expected_duration_lo_s = 10.0;
        scenario.expected_duration_hi_s = 15.0;
    } else {
        throw ConfigError("unknown evaluation scenario '" + scenario.name +
                          "', expected short or long");
    }
    return scenario;
}

std::vector<EvalItem> build_eval_set(const EvalScenario& scenario,
                                     const std::vector<SpeakerInfo>& speakers,
                                     std::uint64_t seed, const BuildOptions& options) {
    if (static_cast<int>(scenario.texts.size()) < options.texts_per_scenario) {
        throw DataError("scenario '" + scenario.name + "' provides " +
                        std::to_string(scenario.texts.size()) + " texts, need " +
                        std::to_string(options.texts_per_scenario));
    }

    std::map<DialectRegion, std::vector<const SpeakerInfo*>> by_region;
    {
        std::set<std::string> ids;
        for (const SpeakerInfo& s : speakers) {
            if (!ids.insert(s.speaker_id).second) {
                throw DataError("duplicate speaker_id '" + s.speaker_id + "'");
            }
            by_region[s.dialect].push_back(&s);
        }
        for (auto& [region, list] : by_region) {
            std::sort(list.begin(), list.end(), [](const SpeakerInfo* a, const SpeakerInfo* b) {
                return a->speaker_id < b->speaker_id;
            });
        }
    }

    std::mt19937_64 rng(seed);

    std::vector<std::size_t> text_order(scenario.texts.size());
    for (std::size_t i = 0; i < text_order.size(); ++i) text_order[i] = i;
    deterministic_shuffle(text_order, rng);
    text_order.resize(static_cast<std::size_t>(options.texts_per_scenario));

    std::vector<DialectRegion> regions;
    for (DialectRegion r : kAllRegions) {
        if (r == DialectRegion::German && !options.include_standard_german) continue;
        regions.push_back(r);
    }

    std::vector<EvalItem> items;
    for (DialectRegion region : regions) {
        auto pool = by_region[region];
        if (static_cast<int>(pool.size()) < options.speakers_per_dialect) {
            throw DataError("dialect " + std::string(region_name(region)) + " has " +
                            std::to_string(pool.size()) + " speakers, need " +
                            std::to_string(options.speakers_per_dialect));
        }
        deterministic_shuffle(pool, rng);
        pool.resize(static_cast<std::size_t>(options.speakers_per_dialect));

        for (const SpeakerInfo* speaker : pool) {
            if (static_cast<int>(speaker->reference_clips.size()) < options.clips_per_speaker) {
                throw DataError("dialect " + std::string(region_name(region)) + " speaker '" +
                                speaker->speaker_id + "' has " +
                                std::to_string(speaker->reference_clips.size()) +
                                " reference clips, need " +
                                std::to_string(options.clips_per_speaker));
            }
            auto clips = speaker->reference_clips;
            deterministic_shuffle(clips, rng);
            clips.resize(static_cast<std::size_t>(options.clips_per_speaker));

            for (std::size_t t = 0; t < text_order.size(); ++t) {
                EvalItem item;
                char ordinal[32];
                std::snprintf(ordinal, sizeof ordinal, "t%02u", static_cast<unsigned>(t));
                item.item_id = scenario.name + "-" + std::string(region_name(region)) + "-" +
                               speaker->speaker_id + "-" + ordinal;
                item.model_tag = options.model_tag;
                item.dialect = region;
                item.speaker_id = speaker->speaker_id;
                item.text = scenario.texts[text_order[t]];
                item.reference_clips = clips;
                items.push_back(std::move(item));
            }
        }
    }
    return items;
}

// ---------------------------------------------------------------------------
// Automated evaluation

namespace {

struct ItemOutcome {
    bool synth_ok = false;
    bool asr_ok = false;
    bool embed_ok = false;
    bool phonemes_ok = false;
    double duration_s = 0;
    double sim = 0;
    std::vector<std::string> phonemes;

    bool scored() const { return synth_ok && asr_ok && embed_ok && phonemes_ok; }
};

std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    double sum = 0;
    for (double x : v) sum += x;
    return sum / static_cast<double>(v.size());
}

}  // namespace

AutoEvalResult run_auto_eval(const std::vector<EvalItem>& items,
                             const backends::BackendSet& backend_set,
                             const did::NBModel& did_model, const AutoEvalOptions& options) {
    if (options.work_dir.empty()) throw ConfigError("run_auto_eval: work_dir must be set");
    std::filesystem::create_directories(options.work_dir / "generated");

    auto tts = backends::make_backend(backend_set.require(backends::BackendKind::tts));
    auto asr = backends::make_backend(backend_set.require(backends::BackendKind::asr));
    auto embedder = backends::make_backend(backend_set.require(backends::BackendKind::embedder));
    auto phonemizer =
        backends::make_backend(backend_set.require(backends::BackendKind::phonemizer));

    AutoEvalResult result;
    result.items = items;
    std::vector<EvalItem>& work = result.items;

    std::vector<std::string> ids;
    ids.reserve(work.size());
    for (const EvalItem& item : work) ids.push_back(item.item_id);

    std::vector<ItemOutcome> outcomes(work.size());

    // Synthesis.
    {
        backends::CompletionLog log(options.work_dir / "synth.log.jsonl");
        auto results = backends::run_batch(
            ids,
            [&](std::size_t i, const std::string& id) {
                auto res = backends::synthesize(
                    *tts, id, work[i].text, work[i].reference_clips, work[i].dialect,
                    options.work_dir / "generated" / (id + ".wav"));
                return json{{"audio_path", res.audio_path.string()},
                            {"duration_s", res.duration_s},
                            {"failed", res.failed},
                            {"error", res.error}};
            },
            tts->spec().max_parallel, &log);
        for (std::size_t i = 0; i < work.size(); ++i) {
            if (!results[i].value("failed", true)) {
                outcomes[i].synth_ok = true;
                outcomes[i].duration_s = results[i].value("duration_s", 0.0);
                work[i].generated_audio = results[i].value("audio_path", "");
            }
        }
    }

    // Back-transcription of the generated audio.
    {
        backends::CompletionLog log(options.work_dir / "asr.log.jsonl");
        auto results = backends::run_batch(
            ids,
            [&](std::size_t i, const std::string& id) {
                if (!outcomes[i].synth_ok) {
                    return json{{"failed", true}, {"error", "synthesis failed"}};
                }
                auto res = backends::transcribe(*asr, id, *work[i].generated_audio);
                return json{{"text", res.text.value_or("")},
                            {"failed", res.failed},
                            {"error", res.error}};
            },
            asr->spec().max_parallel, &log);
        for (std::size_t i = 0; i < work.size(); ++i) {
            if (outcomes[i].synth_ok && !results[i].value("failed", true)) {
                outcomes[i].asr_ok = true;
                work[i].back_translation = results[i].value("text", "");
            }
        }
    }

    // Speaker similarity: generated embedding vs the centroid of the five
    // reference-clip embeddings.
    {
        std::vector<std::string> ref_paths;
        {
            std::set<std::string> seen;
            for (const EvalItem& item : work) {
                for (const auto& clip : item.reference_clips) {
                    if (seen.insert(clip.string()).second) ref_paths.push_back(clip.string());
                }
            }
        }
        backends::CompletionLog ref_log(options.work_dir / "embed_refs.log.jsonl");
        auto ref_results = backends::run_batch(
            ref_paths,
            [&](std::size_t, const std::string& id) {
                auto res = backends::embed_speaker(*embedder, id, id);
                return json{{"embedding", res.embedding},
                            {"failed", res.failed},
                            {"error", res.error}};
            },
            embedder->spec().max_parallel, &ref_log);

        std::map<std::string, std::vector<double>> ref_embeddings;
        std::size_t embed_dim = 0;
        for (std::size_t i = 0; i < ref_paths.size(); ++i) {
            if (ref_results[i].value("failed", true)) continue;
            auto emb = ref_results[i]["embedding"].get<std::vector<double>>();
            if (embed_dim == 0) embed_dim = emb.size();
            if (emb.size() != embed_dim) {
                throw BackendError("embedding dimension mismatch across the batch");
            }
            ref_embeddings[ref_paths[i]] = std::move(emb);
        }

        backends::CompletionLog gen_log(options.work_dir / "embed_gen.log.jsonl");
        auto gen_results = backends::run_batch(
            ids,
            [&](std::size_t i, const std::string& id) {
                if (!outcomes[i].synth_ok) {
                    return json{{"failed", true}, {"error", "synthesis failed"}};
                }
                auto res = backends::embed_speaker(*embedder, id, *work[i].generated_audio);
                return json{{"embedding", res.embedding},
                            {"failed", res.failed},
                            {"error", res.error}};
            },
            embedder->spec().max_parallel, &gen_log);

        for (std::size_t i = 0; i < work.size(); ++i) {
            if (!outcomes[i].synth_ok || gen_results[i].value("failed", true)) continue;
            auto emb = gen_results[i]["embedding"].get<std::vector<double>>();
            if (embed_dim == 0) embed_dim = emb.size();
            if (emb.size() != embed_dim) {
                throw BackendError("embedding dimension mismatch across the batch");
            }
            std::vector<double> centroid(embed_dim, 0.0);
            bool refs_ok = true;
            for (const auto& clip : work[i].reference_clips) {
                auto it = ref_embeddings.find(clip.string());
                if (it == ref_embeddings.end()) {
                    refs_ok = false;
                    break;
                }
                for (std::size_t d = 0; d < embed_dim; ++d) centroid[d] += it->second[d];
            }
            if (!refs_ok) continue;
            for (double& x : centroid) x /= static_cast<double>(work[i].reference_clips.size());
            try {
                outcomes[i].sim = metrics::cosine_sim(emb, centroid);
                outcomes[i].embed_ok = true;
            } catch (const DataError&) {
                // zero centroid: leave the item unscored
            }
        }
    }

    // Phonemization of the generated audio, for the dialect classifier.
    {
        backends::CompletionLog log(options.work_dir / "phonemize.log.jsonl");
        auto results = backends::run_batch(
            ids,
            [&](std::size_t i, const std::string& id) {
                if (!outcomes[i].synth_ok) {
                    return json{{"failed", true}, {"error", "synthesis failed"}};
                }
                auto res = backends::phonemize(*phonemizer, id, *work[i].generated_audio);
                return json{{"phonemes", res.phonemes},
                            {"failed", res.failed},
                            {"error", res.error}};
            },
            phonemizer->spec().max_parallel, &log);
        for (std::size_t i = 0; i < work.size(); ++i) {
            if (outcomes[i].synth_ok && !results[i].value("failed", true)) {
                outcomes[i].phonemes_ok = true;
                outcomes[i].phonemes = split_whitespace(results[i].value("phonemes", ""));
            }
        }
    }

    // Aggregate rows: one per region plus the pooled Total.
    auto build_row = [&](const std::string& label, const std::vector<std::size_t>& members) {
        AutoEvalRow row;
        row.label = label;
        row.items_total = static_cast<int>(members.size());
        std::vector<std::vector<std::string>> refs;
        std::vector<std::vector<std::string>> hyps;
        std::vector<double> sims;
        std::map<std::string, std::vector<std::size_t>> by_speaker;
        std::map<std::string, DialectRegion> speaker_region;
        for (std::size_t i : members) {
            by_speaker[work[i].speaker_id];  // count every speaker in the row
            speaker_region[work[i].speaker_id] = work[i].dialect;
            if (!outcomes[i].scored()) {
                ++row.items_failed;
                continue;
            }
            ++row.items_scored;
            refs.push_back(metrics::normalize_text(work[i].text, options.norm));
            hyps.push_back(metrics::normalize_text(*work[i].back_translation, options.norm));
            sims.push_back(outcomes[i].sim);
            by_speaker[work[i].speaker_id].push_back(i);
        }
        bool have_ref_tokens = false;
        for (const auto& r : refs) {
            if (!r.empty()) have_ref_tokens = true;
        }
        if (!refs.empty() && have_ref_tokens) {
            double wer_num = 0;
            double wer_den = 0;
            for (std::size_t k = 0; k < refs.size(); ++k) {
                wer_num += static_cast<double>(metrics::edit_distance(refs[k], hyps[k]));
                wer_den += static_cast<double>(refs[k].size());
            }
            row.wer = wer_num / wer_den;
            row.bleu = metrics::bleu(refs, hyps);
        }
        row.sim = mean_of(sims);

        for (const auto& [speaker, item_indices] : by_speaker) {
            if (item_indices.empty()) continue;  // no scored utterances to classify
            std::vector<std::vector<std::string>> seqs;
            std::vector<double> durations;
            for (std::size_t i : item_indices) {
                if (static_cast<int>(seqs.size()) >= options.did_utterances_per_speaker) break;
                seqs.push_back(outcomes[i].phonemes);
                durations.push_back(outcomes[i].duration_s);
            }
            auto cls = did::classify_speaker(did_model, seqs, durations, options.did_min_total_s);
            ++row.did_speakers;
            if (cls.region == speaker_region[speaker]) ++row.did_correct;
        }
        if (row.did_speakers > 0) {
            row.did = static_cast<double>(row.did_correct) / row.did_speakers;
        }
        return row;
    };

    std::map<DialectRegion, std::vector<std::size_t>> by_region;
    std::vector<std::size_t> all;
    for (std::size_t i = 0; i < work.size(); ++i) {
        by_region[work[i].dialect].push_back(i);
        all.push_back(i);
    }
    result.report.scenario = work.empty() ? "" : ids.front().substr(0, ids.front().find('-'));
    result.report.model_tag = work.empty() ? "" : work.front().model_tag;
    for (DialectRegion region : kAllRegions) {
        result.report.rows.push_back(
            build_row(std::string(region_display(region)), by_region[region]));
    }
    result.report.rows.push_back(build_row("Total", all));
    return result;
}

// ---------------------------------------------------------------------------
// Human evaluation sheets

HumanSheets prepare_human_sheets(const std::vector<EvalItem>& items, const std::string& scenario,
                                 const std::vector<std::string>& raters, std::uint64_t seed,
                                 const HumanPrepOptions& options) {
    if (options.raters_per_sample < 1) {
        throw ConfigError("prepare_human_sheets: raters_per_sample must be >= 1");
    }
    std::vector<std::string> rater_ids = raters;
    std::sort(rater_ids.begin(), rater_ids.end());
    rater_ids.erase(std::unique(rater_ids.begin(), rater_ids.end()), rater_ids.end());
    if (static_cast<int>(rater_ids.size()) < std::max(2, options.raters_per_sample)) {
        throw DataError("prepare_human_sheets: need at least " +
                        std::to_string(std::max(2, options.raters_per_sample)) +
                        " distinct raters, got " + std::to_string(rater_ids.size()));
    }
    if (options.out_dir.empty()) throw ConfigError("prepare_human_sheets: out_dir must be set");

    std::string model_tag;
    for (const EvalItem& item : items) {
        if (model_tag.empty()) model_tag = item.model_tag;
        if (item.model_tag != model_tag) {
            throw DataError("prepare_human_sheets: items mix model tags '" + model_tag +
                            "' and '" + item.model_tag + "'");
        }
    }

    std::mt19937_64 rng(seed);
    std::vector<const EvalItem*> selected;
    for (DialectRegion region : kDialectRegions) {
        std::vector<const EvalItem*> pool;
        for (const EvalItem& item : items) {
            if (item.dialect == region && item.generated_audio) pool.push_back(&item);
        }
        if (static_cast<int>(pool.size()) < options.per_dialect) {
            throw DataError("dialect " + std::string(region_name(region)) + " has " +
                            std::to_string(pool.size()) + " rateable items, need " +
                            std::to_string(options.per_dialect));
        }
        std::sort(pool.begin(), pool.end(), [](const EvalItem* a, const EvalItem* b) {
            return a->item_id < b->item_id;
        });
        deterministic_shuffle(pool, rng);
        pool.resize(static_cast<std::size_t>(options.per_dialect));
        selected.insert(selected.end(), pool.begin(), pool.end());
    }

    // Least-loaded assignment keeps every rater within one item of the rest.
    deterministic_shuffle(selected, rng);
    std::map<std::string, int> load;
    for (const std::string& r : rater_ids) load[r] = 0;
    std::map<std::string, std::vector<const EvalItem*>> per_rater;
    std::map<std::string, std::vector<std::string>> assignment;  // item -> raters
    for (const EvalItem* item : selected) {
        std::vector<std::string> order = rater_ids;
        std::stable_sort(order.begin(), order.end(),
                         [&load](const std::string& a, const std::string& b) {
                             return load[a] < load[b];
                         });
        for (int k = 0; k < options.raters_per_sample; ++k) {
            const std::string& rater = order[static_cast<std::size_t>(k)];
            ++load[rater];
            per_rater[rater].push_back(item);
            assignment[item->item_id].push_back(rater);
        }
    }
    {
        int lo = selected.empty() ? 0 : load.begin()->second;
        int hi = lo;
        for (const auto& [rater, n] : load) {
            lo = std::min(lo, n);
            hi = std::max(hi, n);
        }
        if (hi - lo > 1) {
            throw DataError("prepare_human_sheets: could not balance rater load within 1");
        }
    }

    std::filesystem::create_directories(options.out_dir);
    HumanSheets sheets;
    json index;
    index["scenario"] = scenario;
    index["model_tag"] = model_tag;
    index["items"] = json::object();
    for (const EvalItem* item : selected) {
        index["items"][item->item_id] = {
            {"dialect", std::string(region_name(item->dialect))},
            {"speaker_id", item->speaker_id},
        };
    }
    index["assignment"] = assignment;
    index["sheets"] = json::array();

    for (const std::string& rater : rater_ids) {
        auto items_for_rater = per_rater[rater];
        std::sort(items_for_rater.begin(), items_for_rater.end(),
                  [](const EvalItem* a, const EvalItem* b) { return a->item_id < b->item_id; });
        std::string filename = scenario + "_" + model_tag + "_" + rater + ".csv";
        std::ostringstream out;
        out << "item_id,audio_path,reference_audio_path,text,smos,cmos,intelligibility\n";
        for (const EvalItem* item : items_for_rater) {
            out << csv_quote(item->item_id) << ','
                << csv_quote(item->generated_audio->string()) << ','
                << csv_quote(item->reference_clips.front().string()) << ','
                << csv_quote(item->text) << ",,,\n";
        }
        std::filesystem::path sheet_path = options.out_dir / filename;
        atomic_write_text_file(sheet_path, out.str());
        sheets.sheet_files.push_back(sheet_path);
        index["sheets"].push_back({{"file", filename}, {"rater_id", rater}});
    }

    sheets.index_file = options.out_dir / (scenario + "_" + model_tag + "_items_index.json");
    atomic_write_text_file(sheets.index_file, index.dump(2) + "\n");
    return sheets;
}

namespace {

// "" and NA are missing; anything else must be an in-range integer.
std::optional<int> parse_rating_cell(const std::string& raw, int lo, int hi,
                                     const std::string& where) {
    std::string t = trim(raw);
    if (t.empty() || t == "NA" || t == "na") return std::nullopt;
    char* end = nullptr;
    long v = std::strtol(t.c_str(), &end, 10);
    if (end == t.c_str() || *end != '\0') {
        throw DataError(where + ": rating '" + raw + "' is not an integer");
    }
    if (v < lo || v > hi) {
        throw DataError(where + ": rating " + std::to_string(v) + " outside scale [" +
                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return static_cast<int>(v);
}

struct RatingBucket {
    std::vector<double> smos;
    std::vector<double> cmos;
    std::vector<double> intelligibility;
};

metrics::MosAggregate aggregate_or_empty(const std::vector<double>& values) {
    if (values.empty()) return {};
    return metrics::aggregate_values(values);
}

bool flag_significant(const std::vector<double>& a, const std::vector<double>& b, double alpha) {
    if (a.size() < 3 || b.size() < 3) return false;
    return metrics::significance(a, b, alpha).significant;
}

}  // namespace

MosReport aggregate_human(const std::vector<std::filesystem::path>& index_files,
                          const std::string& baseline_tag, double alpha) {
    std::map<std::pair<std::string, std::string>, RatingBucket> buckets;  // (scenario, model)

    for (const auto& index_path : index_files) {
        json index = json::parse(read_text_file(index_path), nullptr, false);
        if (index.is_discarded() || !index.is_object()) {
            throw DataError("items index " + index_path.string() + " is not valid JSON");
        }
        std::string scenario = index.value("scenario", "");
        std::string model_tag = index.value("model_tag", "");
        if (scenario.empty() || model_tag.empty()) {
            throw DataError("items index " + index_path.string() +
                            " is missing scenario or model_tag");
        }
        std::set<std::string> known_items;
        for (const auto& [item_id, info] : index.at("items").items()) known_items.insert(item_id);

        RatingBucket& bucket = buckets[{scenario, model_tag}];
        std::filesystem::path dir = index_path.parent_path();
        for (const auto& sheet : index.at("sheets")) {
            std::string file = sheet.at("file").get<std::string>();
            std::string rater = sheet.at("rater_id").get<std::string>();
            std::filesystem::path sheet_path = dir / file;
            std::istringstream in(read_text_file(sheet_path));
            std::string line;
            if (!std::getline(in, line)) {
                throw DataError("sheet " + sheet_path.string() + " is empty");
            }
            auto header = parse_csv_line(line);
            if (header.size() != 7 || header[0] != "item_id" || header[4] != "smos" ||
                header[5] != "cmos" || header[6] != "intelligibility") {
                throw DataError("sheet " + sheet_path.string() + " has an unexpected header");
            }
            std::size_t row_no = 1;
            std::set<std::string> seen_items;
            while (std::getline(in, line)) {
                ++row_no;
                if (trim(line).empty()) continue;
                auto fields = parse_csv_line(line);
                std::string where =
                    "sheet " + sheet_path.string() + " row " + std::to_string(row_no);
                if (fields.size() != 7) {
                    throw DataError(where + ": expected 7 columns, got " +
                                    std::to_string(fields.size()));
                }
                const std::string& item_id = fields[0];
                if (!known_items.count(item_id)) {
                    throw DataError(where + ": item '" + item_id + "' is not in the index");
                }
                if (!seen_items.insert(item_id).second) {
                    throw DataError(where + ": duplicate rating for item '" + item_id + "'");
                }
                auto smos = parse_rating_cell(fields[4], 1, 5, where);
                auto cmos = parse_rating_cell(fields[5], -3, 3, where);
                auto intel = parse_rating_cell(fields[6], 1, 5, where);
                (void)rater;
                if (smos) bucket.smos.push_back(*smos);
                if (cmos) bucket.cmos.push_back(*cmos);
                if (intel) bucket.intelligibility.push_back(*intel);
            }
        }
    }

    MosReport report;
    report.baseline_tag = baseline_tag;
    report.alpha = alpha;
    for (const auto& [key, bucket] : buckets) {
        MosRow row;
        row.scenario = key.first;
        row.model_tag = key.second;
        row.smos = aggregate_or_empty(bucket.smos);
        row.cmos = aggregate_or_empty(bucket.cmos);
        row.intelligibility = aggregate_or_empty(bucket.intelligibility);

        if (row.model_tag != baseline_tag) {
            auto base = buckets.find({row.scenario, baseline_tag});
            if (base != buckets.end()) {
                row.smos_sig_baseline = flag_significant(bucket.smos, base->second.smos, alpha);
                row.cmos_sig_baseline = flag_significant(bucket.cmos, base->second.cmos, alpha);
                row.intel_sig_baseline =
                    flag_significant(bucket.intelligibility, base->second.intelligibility, alpha);
            }
            for (const auto& [other_key, other] : buckets) {
                if (other_key.first != row.scenario) continue;
                if (other_key.second == row.model_tag || other_key.second == baseline_tag) {
                    continue;
                }
                row.smos_sig_peer =
                    row.smos_sig_peer || flag_significant(bucket.smos, other.smos, alpha);
                row.cmos_sig_peer =
                    row.cmos_sig_peer || flag_significant(bucket.cmos, other.cmos, alpha);
                row.intel_sig_peer =
                    row.intel_sig_peer ||
                    flag_significant(bucket.intelligibility, other.intelligibility, alpha);
            }
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Staging files

void write_eval_items(const std::vector<EvalItem>& items, const std::filesystem::path& path) {
    std::ostringstream out;
    for (const EvalItem& item : items) {
        out << "{\"item_id\":" << quote(item.item_id)
            << ",\"model_tag\":" << quote(item.model_tag)
            << ",\"dialect\":" << quote(region_name(item.dialect))
            << ",\"speaker_id\":" << quote(item.speaker_id) << ",\"text\":" << quote(item.text)
            << ",\"reference_clips\":[";
        for (std::size_t i = 0; i < item.reference_clips.size(); ++i) {
            if (i > 0) out << ',';
            out << quote(item.reference_clips[i].string());
        }
        out << "],\"generated_audio\":"
            << (item.generated_audio ? quote(item.generated_audio->string()) : "null")
            << ",\"back_translation\":"
            << (item.back_translation ? quote(*item.back_translation) : "null") << "}\n";
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    atomic_write_text_file(path, out.str());
}

std::vector<EvalItem> read_eval_items(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::vector<EvalItem> items;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json obj = json::parse(line, nullptr, false);
        std::string where = "eval items " + path.string() + " line " + std::to_string(line_no);
        if (obj.is_discarded() || !obj.is_object()) throw DataError(where + ": invalid JSON");
        try {
            EvalItem item;
            item.item_id = obj.at("item_id").get<std::string>();
            item.model_tag = obj.at("model_tag").get<std::string>();
            auto region = parse_region(obj.at("dialect").get<std::string>());
            if (!region) throw DataError(where + ": unknown dialect");
            item.dialect = *region;
            item.speaker_id = obj.at("speaker_id").get<std::string>();
            item.text = obj.at("text").get<std::string>();
            for (const auto& clip : obj.at("reference_clips")) {
                item.reference_clips.emplace_back(clip.get<std::string>());
            }
            if (obj.contains("generated_audio") && !obj["generated_audio"].is_null()) {
                item.generated_audio = obj["generated_audio"].get<std::string>();
            }
            if (obj.contains("back_translation") && !obj["back_translation"].is_null()) {
                item.back_translation = obj["back_translation"].get<std::string>();
            }
            items.push_back(std::move(item));
        } catch (const json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return items;
}

std::vector<SpeakerInfo> read_speaker_table(const std::filesystem::path& path) {
    json root = json::parse(read_text_file(path), nullptr, false);
    if (root.is_discarded() || !root.is_array()) {
        throw DataError("speaker table " + path.string() + " is not a JSON array");
    }
    std::filesystem::path base = path.parent_path();
    std::vector<SpeakerInfo> speakers;
    for (std::size_t i = 0; i < root.size(); ++i) {
        const json& entry = root[i];
        std::string where = "speaker table entry " + std::to_string(i);
        try {
            SpeakerInfo s;
            s.speaker_id = entry.at("speaker_id").get<std::string>();
            auto region = parse_region(entry.at("dialect").get<std::string>());
            if (!region) throw DataError(where + ": unknown dialect");
            s.dialect = *region;
            for (const auto& clip : entry.at("reference_clips")) {
                std::filesystem::path p = clip.get<std::string>();
                s.reference_clips.push_back(p.is_absolute() ? p : base / p);
            }
            speakers.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return speakers;
}

void write_speaker_table(const std::vector<SpeakerInfo>& speakers,
                         const std::filesystem::path& path) {
    json root = json::array();
    for (const SpeakerInfo& s : speakers) {
        json clips = json::array();
        for (const auto& clip : s.reference_clips) clips.push_back(clip.string());
        root.push_back({{"speaker_id", s.speaker_id},
                        {"dialect", std::string(region_name(s.dialect))},
                        {"reference_clips", clips}});
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    atomic_write_text_file(path, root.dump(2) + "\n");
}

std::vector<std::string> read_texts(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::vector<std::string> texts;
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (!t.empty()) texts.push_back(t);
    }
    return texts;
}

}  // namespace dialektpipe::eval
