#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "compfreeze/cli.hpp"

namespace compfreeze::cli {

namespace pt = boost::property_tree;

namespace {

template <class T>
void read(const pt::ptree& tree, const std::string& key, T& field) {
    if (auto v = tree.get_optional<T>(key)) field = *v;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char c : s) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == sep && depth == 0) {
            if (!trim(cur).empty()) out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

}  // namespace

void apply_ini(RunConfig& cfg, std::istream& in) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    static const std::set<std::string> sections = {"run", "encoder", "compacter", "train",
                                                   "data", "llm",     "router",    "bench"};
    for (const auto& [name, sub] : tree) {
        if (!sections.count(name)) throw std::invalid_argument("config: unknown section [" + name + "]");
    }

    read(tree, "run.task", cfg.task);
    read(tree, "run.strategy", cfg.strategy);
    read(tree, "run.seed", cfg.seed);
    read(tree, "run.out", cfg.out);
    read(tree, "run.checkpoint", cfg.checkpoint);

    read(tree, "encoder.base_dir", cfg.encoder.base_dir);
    read(tree, "encoder.hidden", cfg.encoder.hidden);
    read(tree, "encoder.layers", cfg.encoder.layers);
    read(tree, "encoder.init_std", cfg.encoder.init_std);
    read(tree, "encoder.head_style", cfg.encoder.head_style);

    nlohmann::json cj = cfg.compacter.to_json();
    for (const char* key : {"reduction_factor", "phm_n", "phm_rank"})
        if (auto v = tree.get_optional<std::size_t>(std::string("compacter.") + key)) cj[key] = *v;
    if (auto v = tree.get_optional<double>("compacter.init_range")) cj["init_range"] = *v;
    for (const char* key : {"nonlinearity", "placement", "a_sharing"})
        if (auto v = tree.get_optional<std::string>(std::string("compacter.") + key)) cj[key] = *v;
    cfg.compacter = CompacterConfig::from_json(cj);

    read(tree, "train.learning_rate", cfg.train.learning_rate);
    read(tree, "train.epochs", cfg.train.epochs);
    read(tree, "train.batch_size", cfg.train.batch_size);
    read(tree, "train.weight_decay", cfg.train.weight_decay);
    if (auto v = tree.get_optional<std::size_t>("train.max_seq_len")) {
        cfg.train.max_seq_len = *v;
        cfg.max_seq_len_set = true;
    }
    read(tree, "train.compare_full", cfg.compare_full);
    read(tree, "train.timing_repeats", cfg.timing_repeats);

    read(tree, "data.spam_path", cfg.data.spam_path);
    read(tree, "data.benign_path", cfg.data.benign_path);
    read(tree, "data.dga_path", cfg.data.dga_path);
    read(tree, "data.aptner_path", cfg.data.aptner_path);
    read(tree, "data.synthetic_per_class", cfg.data.synthetic_per_class);
    read(tree, "data.test_fraction", cfg.data.test_fraction);
    read(tree, "data.limit", cfg.data.limit);

    auto& ep = cfg.llm.endpoint;
    read(tree, "llm.base_url", ep.base_url);
    read(tree, "llm.path", ep.path);
    read(tree, "llm.model", ep.model);
    read(tree, "llm.credential_env", ep.credential_env);
    read(tree, "llm.timeout_seconds", ep.timeout_seconds);
    read(tree, "llm.max_retries", ep.max_retries);
    read(tree, "llm.backoff_base_seconds", ep.backoff_base_seconds);
    read(tree, "llm.temperature", ep.temperature);
    read(tree, "llm.max_concurrency", ep.max_concurrency);
    read(tree, "llm.mock", cfg.llm.mock);
    read(tree, "llm.script_path", cfg.llm.script_path);
    read(tree, "llm.record_log", cfg.llm.record_log);
    read(tree, "llm.replay_log", cfg.llm.replay_log);
    read(tree, "llm.cti_template", cfg.llm.cti_template);

    read(tree, "router.threshold", cfg.router.threshold);
    read(tree, "router.batch_size", cfg.router.batch_size);
    if (auto v = tree.get_optional<std::string>("router.measure")) cfg.router.measure = parse_measure(*v);

    read(tree, "bench.samples", cfg.bench.samples);
    read(tree, "bench.warmup", cfg.bench.warmup);
    read(tree, "bench.batches", cfg.bench.batches);
    read(tree, "bench.batch_size", cfg.bench.batch_size);
    read(tree, "bench.repetitions", cfg.bench_repetitions);
    if (auto v = tree.get_optional<std::string>("bench.plans")) cfg.bench_plans = split_list(*v, ',');
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path);
    RunConfig cfg;
    apply_ini(cfg, in);
    return cfg;
}

void RunConfig::resolve() {
    if (task != "spam" && task != "dga" && task != "cti")
        throw std::invalid_argument("task must be spam, dga or cti (got '" + task + "')");
    (void)parse_plan(strategy, encoder.layers);
    for (const auto& p : bench_plans) (void)parse_plan(p, encoder.layers);
    if (!max_seq_len_set) train.max_seq_len = task == "spam" ? 512 : 128;
    if (encoder.init_std == 0.0) encoder.init_std = 1.0 / std::sqrt(double(encoder.hidden));
    if (!(encoder.init_std > 0.0)) throw std::invalid_argument("encoder.init_std must be positive");
    if (encoder.head_style != "pooled_linear" && encoder.head_style != "dense_projection")
        throw std::invalid_argument("encoder.head_style must be pooled_linear or dense_projection");
    compacter.hidden_dim = encoder.hidden;
    compacter.validate();
    train.seed = seed;
    train.validate();
    if (timing_repeats < 1) throw std::invalid_argument("train.timing_repeats must be >= 1");
    if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0))
        throw std::invalid_argument("data.test_fraction must be in (0, 1)");
    if (data.synthetic_per_class == 0) throw std::invalid_argument("data.synthetic_per_class must be positive");
    if (task == "dga" && (data.benign_path.empty() != data.dga_path.empty()))
        throw std::invalid_argument("data.benign_path and data.dga_path must be given together");
    llm.endpoint.validate();
    (void)llm::template_by_name(llm.cti_template);
    if (llm.cti_template.rfind("cti", 0) != 0) throw std::invalid_argument("llm.cti_template must be a CTI template");
    router.task = task == "cti" ? TaskKind::token_classification : TaskKind::sequence_classification;
    router.validate();
    bench.validate();
    if (bench_repetitions == 0) throw std::invalid_argument("bench.repetitions must be positive");
}

nlohmann::json RunConfig::to_json() const {
    return {{"task", task},
            {"strategy", strategy},
            {"seed", seed},
            {"out", out},
            {"checkpoint", checkpoint},
            {"encoder",
             {{"base_dir", encoder.base_dir},
              {"hidden", encoder.hidden},
              {"layers", encoder.layers},
              {"init_std", encoder.init_std},
              {"head_style", encoder.head_style}}},
            {"compacter", compacter.to_json()},
            {"train", train.to_json()},
            {"compare_full", compare_full},
            {"timing_repeats", timing_repeats},
            {"data",
             {{"spam_path", data.spam_path},
              {"benign_path", data.benign_path},
              {"dga_path", data.dga_path},
              {"aptner_path", data.aptner_path},
              {"synthetic_per_class", data.synthetic_per_class},
              {"test_fraction", data.test_fraction},
              {"limit", data.limit}}},
            {"llm",
             {{"endpoint", llm.endpoint.to_json()},
              {"mock", llm.mock},
              {"script_path", llm.script_path},
              {"record_log", llm.record_log},
              {"replay_log", llm.replay_log},
              {"cti_template", llm.cti_template}}},
            {"router", router.to_json()},
            {"bench", bench.to_json()},
            {"bench_repetitions", bench_repetitions},
            {"bench_plans", bench_plans}};
}

}  // namespace compfreeze::cli
