#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>

#include "compfreeze/checkpoint.hpp"
#include "compfreeze/cli.hpp"
#include "compfreeze/errors.hpp"
#include "compfreeze/label_forge.hpp"

namespace compfreeze::cli {

namespace fs = std::filesystem;

namespace {

TaskKind task_kind(const std::string& task) {
    return task == "cti" ? TaskKind::token_classification : TaskKind::sequence_classification;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::invalid_argument("cannot open " + p.string());
    return nlohmann::json::parse(in);
}

llm::PromptTemplate task_template(const RunConfig& cfg) {
    return cfg.task == "cti" ? llm::template_by_name(cfg.llm.cti_template) : llm::template_by_name(cfg.task);
}

nlohmann::json envelope(const std::string& command, const RunConfig& cfg) {
    return {{"command", command}, {"config", cfg.to_json()}, {"seed", cfg.seed}};
}

struct Trained {
    LoadedDelta delta;
    Tokenizer tokenizer{TokenMode::characters, 1};
    std::vector<std::string> label_set;
};

Trained load_trained(const RunConfig& cfg) {
    if (cfg.checkpoint.empty()) throw std::invalid_argument("--checkpoint (run.checkpoint) is required");
    fs::path dir = cfg.checkpoint;
    if (!fs::exists(dir / "delta.json") && fs::exists(dir / "delta" / "delta.json")) dir /= "delta";
    const auto manifest = read_json(dir / "delta.json");
    const auto& extra = manifest.at("extra");
    if (extra.value("task", "") != cfg.task)
        throw std::invalid_argument("checkpoint was trained for task '" + extra.value("task", "") + "', config says '" +
                                    cfg.task + "'");
    std::string base_dir = cfg.encoder.base_dir.empty() ? extra.value("base_dir", "") : cfg.encoder.base_dir;
    if (base_dir.empty()) throw std::invalid_argument("checkpoint does not name its base encoder");
    auto base = load_base(base_dir);
    Trained t{load_delta(dir.string(), *base), Tokenizer::from_json(extra.at("tokenizer")),
              extra.at("label_set").get<std::vector<std::string>>()};
    return t;
}

EncodedDataset encode_split(const RunConfig& cfg, const PreparedSplit& sp, const Tokenizer& tok, bool test) {
    if (cfg.task == "cti") return encode_sentences(test ? sp.tokens.test : sp.tokens.train, tok);
    return encode_text(test ? sp.text.test : sp.text.train, tok, sp.label_set);
}

template <class T>
std::vector<T> limited(std::vector<T> v, std::size_t limit) {
    if (limit && v.size() > limit) v.resize(limit);
    return v;
}

void write_predictions(const fs::path& path, const RunConfig& cfg, const PreparedSplit& sp,
                       const std::vector<Prediction>& preds) {
    std::ofstream out(path);
    if (cfg.task == "cti") {
        out << "sentence,position,token,gold,predicted\n";
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const auto& s = sp.tokens.test[i];
            for (std::size_t k = 0; k < preds[i].labels.size(); ++k)
                out << i << ',' << k << ',' << csv_quote(s.tokens[k]) << ',' << s.tags[k] << ','
                    << sp.label_set[std::size_t(preds[i].labels[k])] << '\n';
        }
        return;
    }
    out << "text,gold,predicted\n";
    for (std::size_t i = 0; i < preds.size(); ++i)
        out << csv_quote(sp.text.test[i].text) << ',' << sp.text.test[i].label << ','
            << sp.label_set[std::size_t(preds[i].labels[0])] << '\n';
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TaskData load_task_data(const RunConfig& cfg) {
    TaskData d;
    const std::size_t n = cfg.data.synthetic_per_class;
    if (cfg.task == "spam") {
        if (!cfg.data.spam_path.empty()) {
            auto r = load_spam(cfg.data.spam_path);
            d.texts = std::move(r.items);
            d.provenance = {{"source", cfg.data.spam_path}, {"rows", r.input_rows}, {"rejected", r.rejected.size()},
                            {"qc", r.qc}};
        } else {
            d.texts = synth_spam(n, n, cfg.seed);
            d.provenance = {{"source", "synthetic"}, {"per_class", n}};
        }
    } else if (cfg.task == "dga") {
        if (!cfg.data.benign_path.empty()) {
            auto r = load_dga(cfg.data.benign_path, cfg.data.dga_path, 0, 0, cfg.seed);
            d.texts = std::move(r.items);
            d.provenance = {{"source", {cfg.data.benign_path, cfg.data.dga_path}}, {"rows", r.input_rows},
                            {"rejected", r.rejected.size()}, {"qc", r.qc}};
        } else {
            d.texts = synth_dga(n, n, cfg.seed);
            d.provenance = {{"source", "synthetic"}, {"per_class", n}};
        }
    } else {
        if (!cfg.data.aptner_path.empty()) {
            auto r = load_aptner(cfg.data.aptner_path);
            d.sentences = std::move(r.items);
            d.provenance = {{"source", cfg.data.aptner_path}, {"sentences", r.input_rows},
                            {"quarantined", r.rejected.size()}, {"qc", r.qc}};
        } else {
            d.sentences = synth_aptner(2 * n, cfg.seed);
            d.provenance = {{"source", "synthetic"}, {"sentences", 2 * n}};
        }
    }
    if (d.texts.empty() && d.sentences.empty()) throw InvalidData("no usable examples for task " + cfg.task);
    return d;
}

PreparedSplit prepare(const RunConfig& cfg, const TaskData& data) {
    PreparedSplit sp;
    sp.label_set = label_names(cfg.task);
    const std::size_t max_len = cfg.train.max_seq_len;
    if (cfg.task == "cti") {
        sp.tokens = random_split(data.sentences, cfg.data.test_fraction, cfg.seed);
        std::vector<std::vector<std::string>> corpus;
        for (const auto& s : sp.tokens.train) corpus.push_back(s.tokens);
        sp.tokenizer = Tokenizer::build_from_tokens(corpus, max_len);
    } else {
        sp.text = stratified_split(data.texts, cfg.data.test_fraction, cfg.seed);
        std::vector<std::string> corpus;
        for (const auto& e : sp.text.train) corpus.push_back(e.text);
        sp.tokenizer = Tokenizer::build(cfg.task == "dga" ? TokenMode::characters : TokenMode::words, corpus, max_len);
    }
    sp.train = encode_split(cfg, sp, sp.tokenizer, false);
    sp.test = encode_split(cfg, sp, sp.tokenizer, true);
    if (sp.train.empty() || sp.test.empty()) throw InvalidData("split produced an empty train or test set");
    return sp;
}

std::shared_ptr<Encoder> build_base(const RunConfig& cfg, std::size_t vocab_size) {
    if (!cfg.encoder.base_dir.empty()) {
        auto enc = load_base(cfg.encoder.base_dir);
        if (enc->desc.vocab_size < vocab_size)
            throw std::invalid_argument("base encoder vocabulary is smaller than the tokenizer's");
        return enc;
    }
    auto desc = EncoderDescriptor::toy(cfg.encoder.hidden, vocab_size, cfg.train.max_seq_len,
                                       cfg.encoder.head_style == "dense_projection" ? HeadStyle::dense_projection
                                                                                    : HeadStyle::pooled_linear);
    desc.num_layers = cfg.encoder.layers;
    return Encoder::random(desc, cfg.seed, cfg.encoder.init_std);
}

std::shared_ptr<llm::ChatBackend> make_backend(const RunConfig& cfg, const llm::PromptTemplate& tpl,
                                                const TaskData& gold) {
    std::shared_ptr<llm::ChatBackend> backend;
    const std::string& mock = cfg.llm.mock;
    if (!cfg.llm.replay_log.empty()) {
        backend = std::make_shared<llm::ReplayBackend>(cfg.llm.replay_log);
    } else if (mock.empty()) {
        backend = std::make_shared<llm::HttpBackend>(cfg.llm.endpoint);
    } else if (mock == "scripted") {
        if (cfg.llm.script_path.empty()) throw std::invalid_argument("scripted mock needs llm.script_path");
        backend = std::make_shared<llm::ScriptedBackend>(read_json(cfg.llm.script_path).get<std::vector<std::string>>());
    } else {
        llm::OracleMode mode = llm::OracleMode::exact;
        double p = 0.0;
        if (mock == "adversarial") {
            mode = llm::OracleMode::adversarial;
        } else if (mock.rfind("noisy:", 0) == 0) {
            mode = llm::OracleMode::noisy;
            try {
                p = std::stod(mock.substr(6));
            } catch (const std::exception&) {
                throw std::invalid_argument("bad noisy mock rate in '" + mock + "'");
            }
        } else if (mock != "oracle") {
            throw std::invalid_argument("unknown mock '" + mock + "' (scripted, oracle, noisy:p, adversarial)");
        }
        llm::OracleBackend::Gold g;
        for (const auto& e : gold.texts) g.labels[e.text] = e.label;
        for (const auto& s : gold.sentences) g.tags[llm::OracleBackend::sentence_key(s.tokens)] = s.tags;
        backend = std::make_shared<llm::OracleBackend>(tpl, std::move(g), label_names(cfg.task), mode, p, cfg.seed);
    }
    if (!cfg.llm.record_log.empty()) backend = std::make_shared<llm::RecordingBackend>(backend, cfg.llm.record_log);
    return backend;
}

int cmd_train(const RunConfig& cfg_in, std::ostream& log) {
    RunConfig cfg = cfg_in;
    cfg.resolve();
    const auto data = load_task_data(cfg);
    const auto sp = prepare(cfg, data);
    const auto base = build_base(cfg, sp.tokenizer.vocab_size());
    const fs::path out(cfg.out);
    fs::create_directories(out);
    std::string base_dir = cfg.encoder.base_dir;
    if (base_dir.empty()) {
        base_dir = fs::absolute(out / "base").string();
        save_base(*base, base_dir);
    }

    const TaskHead head{task_kind(cfg.task), sp.label_set.size()};
    const auto plan = parse_plan(cfg.strategy, base->desc.num_layers);
    auto fresh = [&](const PlacementPlan& p) { return insert_compacters(base->clone(), head, p, cfg.compacter, cfg.seed); };

    AdaptedModel model = fresh(plan);
    log << "training " << plan.name() << " on " << cfg.task << ": " << sp.train.size() << " train / "
        << sp.test.size() << " test, trainable " << model.mask.trainable_count << " of " << model.mask.total_count
        << '\n';
    MetricsReport train_report = train(model, sp.train, cfg.train);
    MetricsReport test_report = evaluate(model, sp.test, 1);
    test_report.wall_time_seconds = train_report.wall_time_seconds;

    nlohmann::json timing;
    if (cfg.compare_full && plan.strategy != Strategy::full_finetune) {
        const auto full_plan = plan_for_strategy(Strategy::full_finetune, base->desc.num_layers);
        std::vector<double> ours{train_report.wall_time_seconds}, full;
        for (int r = 0; r < cfg.timing_repeats; ++r) {
            if (r > 0) {
                auto m = fresh(plan);
                ours.push_back(train(m, sp.train, cfg.train).wall_time_seconds);
            }
            auto f = fresh(full_plan);
            full.push_back(train(f, sp.train, cfg.train).wall_time_seconds);
        }
        const double rel = relative_time(median(ours), median(full));
        train_report.relative_time_vs_full = test_report.relative_time_vs_full = rel;
        timing = {{"strategy_seconds", ours}, {"full_finetune_seconds", full}, {"relative_time_vs_full", rel}};
    }

    save_delta(model, (out / "delta").string(),
               {{"task", cfg.task}, {"tokenizer", sp.tokenizer.to_json()}, {"base_dir", base_dir},
                {"label_set", sp.label_set}});
    write_predictions(out / "predictions.csv", cfg, sp, predict(model, sp.test));

    auto report = envelope("train", cfg);
    report["plan"] = plan.name();
    report["data"] = data.provenance;
    report["split"] = cfg.task == "cti" ? sp.tokens.provenance : sp.text.provenance;
    report["train"] = train_report.to_json();
    report["test"] = test_report.to_json();
    report["mask"] = model.mask.summary();
    report["base_hash"] = hash_hex(model.base_hash);
    if (!timing.is_null()) report["timing"] = timing;
    write_json(out / "report.json", report);
    log << "test F1 " << test_report.f1 << ", trainable " << 100.0 * train_report.trainable_fraction << "%, "
        << train_report.wall_time_seconds << " s; wrote " << (out / "report.json").string() << '\n';
    return 0;
}

int cmd_eval(const RunConfig& cfg_in, std::ostream& log) {
    RunConfig cfg = cfg_in;
    cfg.resolve();
    auto trained = load_trained(cfg);
    const auto data = load_task_data(cfg);
    const auto sp = prepare(cfg, data);
    const auto test = encode_split(cfg, sp, trained.tokenizer, true);
    const auto r = evaluate(trained.delta.model, test, 1);
    auto report = envelope("eval", cfg);
    report["plan"] = trained.delta.model.plan.name();
    report["test"] = r.to_json();
    write_json(fs::path(cfg.out) / "eval.json", report);
    log << "test F1 " << r.f1 << " on " << test.size() << " examples\n";
    return 0;
}

int cmd_label(const RunConfig& cfg_in, std::ostream& log) {
    RunConfig cfg = cfg_in;
    cfg.resolve();
    const auto data = load_task_data(cfg);
    const auto sp = prepare(cfg, data);
    const auto tpl = task_template(cfg);
    const llm::LLMClient client(make_backend(cfg, tpl, data), cfg.llm.endpoint);
    const fs::path out(cfg.out);
    fs::create_directories(out);
    auto report = envelope("label", cfg);
    report["backend"] = client.describe();
    if (cfg.task == "cti") {
        const auto gold = limited(sp.tokens.train, cfg.data.limit);
        std::vector<std::vector<std::string>> inputs;
        for (const auto& s : gold) inputs.push_back(s.tokens);
        const auto labelled = label_sentences(inputs, tpl, client, llm::default_entity_catalog());
        std::ofstream f(out / "labelled.conll");
        write_aptner(f, labelled.examples);
        report["qc"] = labelled.qc.to_json();
        report["source"] = labelled.source;
        report["agreement"] = agreement_report(labelled, gold).to_json();
        report["outputs"] = {(out / "labelled.conll").string()};
        log << "labelled " << labelled.qc.labelled << " of " << labelled.qc.total << " sentences\n";
    } else {
        const auto gold = limited(sp.text.train, cfg.data.limit);
        std::vector<std::string> inputs;
        for (const auto& e : gold) inputs.push_back(e.text);
        const auto labelled = label_texts(inputs, tpl, client, sp.label_set);
        if (cfg.task == "spam") {
            std::ofstream f(out / "labelled.csv");
            write_spam_csv(f, labelled.examples);
            report["outputs"] = {(out / "labelled.csv").string()};
        } else {
            std::ofstream b(out / "labelled_benign.txt"), d(out / "labelled_dga.txt");
            write_domains(b, labelled.examples, labels::non_dga);
            write_domains(d, labelled.examples, labels::dga);
            report["outputs"] = {(out / "labelled_benign.txt").string(), (out / "labelled_dga.txt").string()};
        }
        report["qc"] = labelled.qc.to_json();
        report["source"] = labelled.source;
        report["agreement"] = agreement_report(labelled, gold).to_json();
        log << "labelled " << labelled.qc.labelled << " of " << labelled.qc.total << " inputs\n";
    }
    write_json(out / "label_report.json", report);
    return 0;
}

int cmd_route(const RunConfig& cfg_in, std::ostream& log) {
    RunConfig cfg = cfg_in;
    cfg.resolve();
    auto trained = load_trained(cfg);
    const auto data = load_task_data(cfg);
    const auto sp = prepare(cfg, data);
    std::vector<TokenIds> ids;
    std::vector<std::string> texts;
    std::vector<std::vector<std::string>> tokens, gold;
    if (cfg.task == "cti") {
        for (const auto& s : limited(sp.tokens.test, cfg.data.limit)) {
            ids.push_back(trained.tokenizer.encode_tokens(s.tokens));
            tokens.push_back(s.tokens);
            gold.push_back(s.tags);
        }
    } else {
        for (const auto& e : limited(sp.text.test, cfg.data.limit)) {
            ids.push_back(trained.tokenizer.encode(e.text));
            texts.push_back(e.text);
            gold.push_back({e.label});
        }
    }
    const auto preds =
        local_predictions(trained.delta.model, ids, texts, tokens, gold, trained.label_set, cfg.router.measure);
    const auto tpl = task_template(cfg);
    const llm::LLMClient client(make_backend(cfg, tpl, data), cfg.llm.endpoint);
    const auto catalog = llm::default_entity_catalog();
    const auto routed = route_and_merge(preds, cfg.router, client, tpl, trained.label_set, &catalog);

    const fs::path out(cfg.out);
    fs::create_directories(out);
    std::ofstream jl(out / "routing.jsonl");
    write_jsonl(jl, routed.records);
    auto report = envelope("route", cfg);
    report["backend"] = client.describe();
    report["result"] = routed.to_json(cfg.task);
    write_json(out / "route_report.json", report);
    log << "routed " << routed.routed << " of " << routed.records.size() << "; F1 " << routed.f1_before.value_or(0.0)
        << " -> " << routed.f1_after.value_or(0.0) << '\n';
    return 0;
}

int cmd_bench(const RunConfig& cfg_in, std::ostream& log) {
    RunConfig cfg = cfg_in;
    cfg.resolve();
    const auto data = load_task_data(cfg);
    const auto sp = prepare(cfg, data);
    const auto base = build_base(cfg, sp.tokenizer.vocab_size());
    std::vector<TokenIds> inputs;
    for (const auto& ex : sp.test.examples) inputs.push_back(ex.ids);
    const TaskHead head{task_kind(cfg.task), sp.label_set.size()};
    const fs::path out(cfg.out);
    fs::create_directories(out / "logs");
    std::vector<ModelBenchRow> rows;
    for (const auto& name : cfg.bench_plans) {
        const auto plan = parse_plan(name, base->desc.num_layers);
        const auto model = insert_compacters(base, head, plan, cfg.compacter, cfg.seed);
        auto row = bench_model(model, inputs, cfg.bench, cfg.bench_repetitions,
                               "toy-h" + std::to_string(cfg.encoder.hidden));
        for (std::size_t r = 0; r < row.latency_logs.size(); ++r) {
            std::string stem = plan.name();
            std::replace_if(stem.begin(), stem.end(), [](char c) { return c == '(' || c == ')' || c == ','; }, '_');
            std::ofstream l(out / "logs" / (stem + "_rep" + std::to_string(r) + "_latency.log"));
            write_log(l, row.latency_logs[r]);
            std::ofstream t(out / "logs" / (stem + "_rep" + std::to_string(r) + "_throughput.log"));
            write_log(t, row.throughput_logs[r]);
        }
        log << plan.name() << ": " << row.mean_latency_ms() << " ms/sample, " << row.mean_throughput()
            << " samples/s\n";
        rows.push_back(std::move(row));
    }
    auto report = envelope("bench", cfg);
    report["rows"] = bench_table(rows);
    nlohmann::json directions = nlohmann::json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows.size(); ++j) {
            const auto a = parse_plan(rows[i].plan, base->desc.num_layers), b = parse_plan(rows[j].plan, base->desc.num_layers);
            if (a.has_compacters() && a.layers.size() < b.layers.size())
                directions.push_back(direction_check(rows[i], rows[j]).to_json());
        }
    }
    report["directions"] = directions;
    write_json(out / "bench.json", report);
    return 0;
}

nlohmann::json merge_reports(const std::vector<nlohmann::json>& reports) {
    nlohmann::json rows = nlohmann::json::array();
    std::map<std::string, double> full_time;
    for (const auto& r : reports) {
        if (r.value("command", "") == "train" && r.value("plan", "") == "full_finetune")
            full_time[r["config"]["task"]] = r["train"]["wall_time_seconds"];
    }
    for (const auto& r : reports) {
        const std::string cmd = r.value("command", "");
        const std::string task = r.contains("config") ? r["config"].value("task", "") : "";
        if (cmd == "train" || cmd == "eval") {
            nlohmann::json row = {{"kind", cmd}, {"task", task}, {"plan", r.value("plan", "")},
                                  {"f1", r["test"]["f1"]}, {"trainable_percent", 100.0 * r["test"]["trainable_fraction"].get<double>()}};
            if (cmd == "train") {
                const double t = r["train"]["wall_time_seconds"];
                row["wall_time_seconds"] = t;
                if (full_time.count(task) && full_time[task] > 0.0)
                    row["relative_time_vs_full"] = relative_time(t, full_time[task]);
                else if (!r["train"]["relative_time_vs_full"].is_null())
                    row["relative_time_vs_full"] = r["train"]["relative_time_vs_full"];
            }
            rows.push_back(row);
        } else if (cmd == "route") {
            rows.push_back({{"kind", cmd}, {"task", task}, {"f1_before", r["result"]["f1_before"]},
                            {"f1_after", r["result"]["f1_after"]}, {"routed", r["result"]["routed"]}});
        } else if (cmd == "label") {
            rows.push_back({{"kind", cmd}, {"task", task}, {"coverage", r["qc"]["coverage"]},
                            {"agreement", r["agreement"]["agreement"]}, {"source", r["source"]}});
        } else if (cmd == "bench") {
            for (const auto& b : r["rows"])
                rows.push_back({{"kind", cmd}, {"task", task}, {"plan", b["plan"]},
                                {"inference_time_ms", b["inference_time_ms"]},
                                {"throughput_samples_per_s", b["throughput_samples_per_s"]}});
        } else {
            throw std::invalid_argument("report: unrecognised report (command '" + cmd + "')");
        }
    }
    return rows;
}

int cmd_report(const RunConfig& cfg, std::ostream& log) {
    if (cfg.reports.empty()) throw std::invalid_argument("report: no input reports given");
    std::vector<nlohmann::json> reports;
    for (const auto& p : cfg.reports) reports.push_back(read_json(p));
    const auto rows = merge_reports(reports);
    nlohmann::json out = {{"command", "report"}, {"inputs", cfg.reports}, {"rows", rows}};
    write_json(fs::path(cfg.out) / "comparison.json", out);
    log << rows.size() << " row(s) written to " << (fs::path(cfg.out) / "comparison.json").string() << '\n';
    return 0;
}

}  // namespace compfreeze::cli
