#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "compfreeze/bench.hpp"
#include "compfreeze/compacter.hpp"
#include "compfreeze/confidence_router.hpp"
#include "compfreeze/data_pipeline.hpp"
#include "compfreeze/llm_gateway.hpp"
#include "compfreeze/trainer.hpp"

namespace compfreeze::cli {

struct DataConfig {
    std::string spam_path;
    std::string benign_path;
    std::string dga_path;
    std::string aptner_path;
    std::size_t synthetic_per_class = 500;  // used when no path is given
    double test_fraction = 0.2;
    std::size_t limit = 0;  // label/route: cap on inputs, 0 = all
};

struct EncoderConfig {
    std::string base_dir;  // empty = deterministic toy encoder
    std::size_t hidden = 64;
    int layers = 12;
    double init_std = 0.0;  // 0 = 1 / sqrt(hidden)
    std::string head_style = "pooled_linear";
};

struct LlmConfig {
    llm::LLMEndpointConfig endpoint;
    std::string mock;  // "" = live HTTP; scripted | oracle | noisy:p | adversarial
    std::string script_path;
    std::string record_log;
    std::string replay_log;
    std::string cti_template = "cti_detailed";
};

struct RunConfig {
    std::string task = "dga";
    std::string strategy = "even_lc";
    std::uint64_t seed = 0;
    std::string out = "runs/latest";
    EncoderConfig encoder;
    CompacterConfig compacter;
    TrainConfig train;
    bool max_seq_len_set = false;
    bool compare_full = false;
    int timing_repeats = 3;
    DataConfig data;
    LlmConfig llm;
    RouterConfig router;
    BenchConfig bench;
    std::size_t bench_repetitions = 3;
    std::vector<std::string> bench_plans = {"single(1)", "triple(4,5,6)", "even_lc", "full_finetune"};
    std::string checkpoint;            // eval / route
    std::vector<std::string> reports;  // report

    /// Fills task-dependent defaults and checks every field.
    void resolve();
    nlohmann::json to_json() const;
};

/// INI file: sections run, encoder, compacter, train, data, llm, router, bench.
RunConfig load_config(const std::string& path);
void apply_ini(RunConfig& cfg, std::istream& in);

struct TaskData {
    std::vector<TextExample> texts;
    std::vector<TokenSentence> sentences;
    nlohmann::json provenance;
};

TaskData load_task_data(const RunConfig& cfg);

struct PreparedSplit {
    DatasetSplit<TextExample> text;
    DatasetSplit<TokenSentence> tokens;
    Tokenizer tokenizer{TokenMode::characters, 1};
    EncodedDataset train;
    EncodedDataset test;
    std::vector<std::string> label_set;
};

PreparedSplit prepare(const RunConfig& cfg, const TaskData& data);

std::shared_ptr<Encoder> build_base(const RunConfig& cfg, std::size_t vocab_size);

std::shared_ptr<llm::ChatBackend> make_backend(const RunConfig& cfg, const llm::PromptTemplate& tpl,
                                                const TaskData& gold);

int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_eval(const RunConfig& cfg, std::ostream& log);
int cmd_label(const RunConfig& cfg, std::ostream& log);
int cmd_route(const RunConfig& cfg, std::ostream& log);
int cmd_bench(const RunConfig& cfg, std::ostream& log);
int cmd_report(const RunConfig& cfg, std::ostream& log);

/// Merges run reports into one comparison table.
nlohmann::json merge_reports(const std::vector<nlohmann::json>& reports);

}  // namespace compfreeze::cli
