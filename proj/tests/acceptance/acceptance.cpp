// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Usage: acceptance [criterion numbers...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "../unit/helpers.hpp"
#include "compfreeze/bench.hpp"
#include "compfreeze/compacter.hpp"
#include "compfreeze/confidence_router.hpp"
#include "compfreeze/data_pipeline.hpp"
#include "compfreeze/encoder.hpp"
#include "compfreeze/label_forge.hpp"
#include "compfreeze/llm_gateway.hpp"
#include "compfreeze/trainer.hpp"

using namespace compfreeze;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

FactorSet random_factors(const PhmSpec& spec, std::mt19937_64& rng) {
    auto a = make_shared_a(spec.n, 1.0, rng, "A");
    auto f = make_factors(spec, a, rng, "f", 1.0, 1.0);
    std::normal_distribution<double> d(0.0, 1.0);
    for (double& v : f.bias->value.values) v = d(rng);
    return f;
}

// W = sum_i A_i (x) (s_i t_i) with nested loops only.
Matrix compose_oracle(const PhmSpec& spec, const FactorSet& f) {
    Matrix w(spec.in_dim, spec.out_dim);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const Matrix k = testing::kron_oracle(f.shared_a[i]->value, testing::matmul_oracle(f.s[i]->value, f.t[i]->value));
        for (std::size_t e = 0; e < w.values.size(); ++e) w.values[e] += k.values[e];
    }
    return w;
}

double max_rel_err(const Matrix& got, const Matrix& want) {
    double scale = 0.0, err = 0.0;
    for (std::size_t i = 0; i < want.values.size(); ++i) {
        scale = std::max(scale, std::abs(want.values[i]));
        err = std::max(err, std::abs(got.values[i] - want.values[i]));
    }
    return scale > 0.0 ? err / scale : err;
}

PhmSpec random_spec(std::mt19937_64& rng) {
    const std::size_t ns[] = {1, 2, 4};
    PhmSpec s;
    s.n = ns[std::uniform_int_distribution<int>(0, 2)(rng)];
    std::uniform_int_distribution<std::size_t> blocks(1, 32 / s.n);
    s.in_dim = s.n * blocks(rng);
    s.out_dim = s.n * blocks(rng);
    s.rank = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    return s;
}

Outcome kron_equivalence() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const auto spec = random_spec(rng);
        const auto f = random_factors(spec, rng);
        worst = std::max(worst, max_rel_err(phm_compose(spec, f), compose_oracle(spec, f)));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 10.0, fmt("500 specs, max rel err %.2e, %.2f s", worst, secs)};
}

Outcome forward_equivalence() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(202);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto spec = random_spec(rng);
        const auto f = random_factors(spec, rng);
        const Matrix x = testing::random_matrix(std::uniform_int_distribution<std::size_t>(1, 8)(rng), spec.in_dim, rng);
        Matrix want = testing::matmul_oracle(x, compose_oracle(spec, f));
        for (std::size_t r = 0; r < want.rows; ++r)
            for (std::size_t c = 0; c < want.cols; ++c) want.values[r * want.cols + c] += f.bias->value.values[c];
        worst = std::max(worst, max_rel_err(phm_forward(x, spec, f), want));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-6 && secs < 10.0, fmt("200 draws, max rel err %.2e, %.2f s", worst, secs)};
}

Outcome block_gradients() {
    std::mt19937_64 rng(303);
    double worst = 0.0;
    for (int point = 0; point < 50; ++point) {
        CompacterConfig cfg;
        cfg.hidden_dim = 8;
        cfg.reduction_factor = 2;
        cfg.phm.n = point % 2 ? 4 : 2;
        cfg.nonlinearity = point % 3 ? Nonlinearity::gelu : Nonlinearity::relu;
        SharedFactorRegistry registry(rng());
        auto block = init_block(cfg, registry, rng, "b");
        std::vector<ParamPtr> all = block.owned_parameters();
        all.insert(all.end(), block.down.shared_a.begin(), block.down.shared_a.end());
        std::normal_distribution<double> d(0.0, 0.5);
        for (auto& p : all)
            for (double& v : p->value.values) v = d(rng);
        const Matrix x = testing::random_matrix(4, 8, rng);
        const Matrix w = testing::random_matrix(4, 8, rng);
        for (auto& p : all) p->zero_grad();
        BlockCache cache;
        block_forward(x, block, &cache);
        const Matrix dx = block_backward(w, block, cache);
        auto loss = [&] { return testing::weighted_sum(block_forward(x, block), w); };
        for (auto& p : all) worst = std::max(worst, testing::worst_fd_error(*p, loss, 1e-5));
        Parameter xp("x", 4, 8, ParamRole::weight);
        xp.value = x;
        xp.grad = dx;
        auto loss_x = [&] { return testing::weighted_sum(block_forward(xp.value, block), w); };
        worst = std::max(worst, testing::worst_fd_error(xp, loss_x, 1e-5));
    }
    return {worst <= 1e-4, fmt("50 points on hidden 8 / bottleneck 4, worst rel err %.2e", worst)};
}

// Parameter names and shapes as a Hugging Face checkpoint of the same model
// would list them, with compacter tensors named after the adapter layout.
struct HfModel {
    std::string family;  // bert | roberta
    std::size_t vocab, positions, types;
};

std::vector<std::pair<std::string, std::size_t>> hf_parameters(const HfModel& m, bool token_head, std::size_t labels,
                                                               const std::set<int>& adapter_layers) {
    const std::size_t h = 768, f = 3072, n = 4, b = h / 16;
    const std::string p = m.family;
    std::vector<std::pair<std::string, std::size_t>> out;
    out.emplace_back(p + ".embeddings.word_embeddings.weight", m.vocab * h);
    out.emplace_back(p + ".embeddings.position_embeddings.weight", m.positions * h);
    out.emplace_back(p + ".embeddings.token_type_embeddings.weight", m.types * h);
    out.emplace_back(p + ".embeddings.LayerNorm.weight", h);
    out.emplace_back(p + ".embeddings.LayerNorm.bias", h);
    for (int i = 0; i < 12; ++i) {
        const std::string l = p + ".encoder.layer." + std::to_string(i) + ".";
        for (const char* qkv : {"query", "key", "value"}) {
            out.emplace_back(l + "attention.self." + qkv + ".weight", h * h);
            out.emplace_back(l + "attention.self." + qkv + ".bias", h);
        }
        out.emplace_back(l + "attention.output.dense.weight", h * h);
        out.emplace_back(l + "attention.output.dense.bias", h);
        out.emplace_back(l + "attention.output.LayerNorm.weight", h);
        out.emplace_back(l + "attention.output.LayerNorm.bias", h);
        out.emplace_back(l + "intermediate.dense.weight", f * h);
        out.emplace_back(l + "intermediate.dense.bias", f);
        out.emplace_back(l + "output.dense.weight", h * f);
        out.emplace_back(l + "output.dense.bias", h);
        out.emplace_back(l + "output.LayerNorm.weight", h);
        out.emplace_back(l + "output.LayerNorm.bias", h);
        if (adapter_layers.count(i + 1)) {
            const std::string a = l + "output.adapters.compacter.";
            out.emplace_back(a + "phm_rule", n * n * n);
            out.emplace_back(a + "down.W_left", n * (h / n));
            out.emplace_back(a + "down.W_right", n * (b / n));
            out.emplace_back(a + "down.b", b);
            out.emplace_back(a + "up.W_left", n * (b / n));
            out.emplace_back(a + "up.W_right", n * (h / n));
            out.emplace_back(a + "up.b", h);
        }
    }
    if (token_head) {
        out.emplace_back("classifier.weight", labels * h);
        out.emplace_back("classifier.bias", labels);
    } else if (p == "roberta") {
        out.emplace_back("classifier.dense.weight", h * h);
        out.emplace_back("classifier.dense.bias", h);
        out.emplace_back("classifier.out_proj.weight", labels * h);
        out.emplace_back("classifier.out_proj.bias", labels);
    } else {
        out.emplace_back(p + ".pooler.dense.weight", h * h);
        out.emplace_back(p + ".pooler.dense.bias", h);
        out.emplace_back("classifier.weight", labels * h);
        out.emplace_back("classifier.bias", labels);
    }
    return out;
}

double hf_trainable_percent(const HfModel& m, bool token_head, std::size_t labels, const std::set<int>& layers) {
    std::size_t total = 0, trainable = 0;
    for (const auto& [name, count] : hf_parameters(m, token_head, labels, layers)) {
        total += count;
        if (name.find("LayerNorm") != std::string::npos || name.rfind("classifier.", 0) == 0 ||
            name.find(".adapters.") != std::string::npos)
            trainable += count;
    }
    return 100.0 * double(trainable) / double(total);
}

Outcome table2_fractions() {
    const auto t0 = Clock::now();
    struct Row {
        const char* name;
        HfModel hf;
        EncoderDescriptor desc;
        bool token;
        std::size_t labels;
        double expect, tol;
    };
    const HfModel bert{"bert", 30522, 512, 2}, roberta{"roberta", 50265, 514, 1};
    const std::vector<Row> rows = {
        {"BERT 2-label", bert, EncoderDescriptor::bert_base(), false, 2, 0.06, 0.01},
        {"BERT 85-tag", bert, EncoderDescriptor::bert_base(), true, 85, 0.11, 0.01},
        {"RoBERTa 2-label", roberta, EncoderDescriptor::roberta_base(), false, 2, 0.53, 0.03},
        {"RoBERTa 85-tag", roberta, EncoderDescriptor::roberta_base(), true, 85, 0.09, 0.01},
    };
    bool pass = true;
    std::string detail;
    for (const auto& r : rows) {
        for (auto s : {Strategy::odd_lc, Strategy::even_lc, Strategy::upper_lc, Strategy::lower_lc}) {
            const auto plan = plan_for_strategy(s);
            CompacterConfig c;
            c.hidden_dim = 768;
            const TaskHead head{r.token ? TaskKind::token_classification : TaskKind::sequence_classification, r.labels};
            const double ours = 100.0 * build_trainable_mask(describe_model(r.desc, head, plan, c), plan).fraction();
            const double oracle = hf_trainable_percent(r.hf, r.token, r.labels, plan.layers);
            pass = pass && std::abs(ours - oracle) <= 1e-12 && std::abs(ours - r.expect) <= r.tol;
            if (s == Strategy::odd_lc)
                detail += fmt("%s %.4f%% (paper %.2f%%); ", r.name, ours, r.expect);
        }
    }
    const double secs = seconds_since(t0);
    return {pass && secs < 5.0, detail + fmt("%.2f s", secs)};
}

constexpr std::size_t kToyVocab = 24;

std::shared_ptr<Encoder> toy_encoder(int layers = 4, std::size_t hidden = 16) {
    auto d = EncoderDescriptor::toy(hidden, kToyVocab, 32);
    d.num_layers = layers;
    return Encoder::random(d, 11, 1.0 / std::sqrt(double(hidden)));
}

CompacterConfig toy_compacter(std::size_t hidden = 16) {
    CompacterConfig c;
    c.hidden_dim = hidden;
    c.reduction_factor = 4;
    c.phm.n = 2;
    return c;
}

Outcome freeze_invariant() {
    const auto t0 = Clock::now();
    EncodedDataset data;
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> tok(3, int(kToyVocab) - 1);
    for (int i = 0; i < 80; ++i) data.examples.push_back({{2, tok(rng), tok(rng), tok(rng)}, {i % 2}});
    bool pass = true;
    std::string detail;
    for (auto s : {Strategy::odd_lc, Strategy::even_lc, Strategy::upper_lc, Strategy::lower_lc}) {
        auto model = insert_compacters(toy_encoder(), {TaskKind::sequence_classification, 2}, plan_for_strategy(s, 4),
                                       toy_compacter(), 1);
        std::map<std::string, std::vector<double>> before;
        for (const auto& p : model.parameters()) before[p->path] = p->value.values;
        TrainConfig cfg;
        cfg.learning_rate = 1e-3;
        cfg.epochs = 1;
        const auto report = train(model, data, cfg);
        std::size_t frozen_changed = 0, compacter_changed = 0;
        for (const auto& p : model.parameters()) {
            const bool changed = p->value.values != before.at(p->path);
            if (!model.mask.is_trainable(p->path) && changed) ++frozen_changed;
            if (changed && p->path.rfind("compacter.", 0) == 0) ++compacter_changed;
        }
        pass = pass && report.steps == 10 && frozen_changed == 0 && compacter_changed > 0;
        detail += fmt("%s: %zu frozen changed, %zu compacter tensors moved; ", plan_for_strategy(s, 4).name().c_str(),
                      frozen_changed, compacter_changed);
    }
    const double secs = seconds_since(t0);
    return {pass && secs < 60.0, detail + fmt("%.2f s", secs)};
}

Outcome identity_at_init() {
    std::mt19937_64 rng(606);
    auto enc = Encoder::random(EncoderDescriptor::toy(64, 50, 32), 8, 0.125);
    CompacterConfig c;
    c.hidden_dim = 64;
    std::vector<PlacementPlan> plans;
    for (auto s : {Strategy::odd_lc, Strategy::even_lc, Strategy::upper_lc, Strategy::lower_lc})
        plans.push_back(plan_for_strategy(s));
    for (int l = 1; l <= 12; ++l) plans.push_back(plan_single(l));
    for (int g = 1; g <= 4; ++g) plans.push_back(plan_triple(g));
    std::vector<TokenIds> inputs;
    std::uniform_int_distribution<int> tok(0, 49), len(1, 20);
    for (int i = 0; i < 20; ++i) {
        TokenIds ids(std::size_t(len(rng)));
        for (int& t : ids) t = tok(rng);
        inputs.push_back(ids);
    }
    std::size_t mismatches = 0;
    for (const TaskHead head : {TaskHead{TaskKind::sequence_classification, 2}, TaskHead{TaskKind::token_classification, 85}}) {
        const auto base = insert_compacters(enc, head, plan_for_strategy(Strategy::full_finetune), c, 9);
        for (const auto& plan : plans) {
            const auto adapted = insert_compacters(enc, head, plan, c, 9);
            if (head.kind == TaskKind::sequence_classification) {
                mismatches += forward_sequence(adapted, inputs).values != forward_sequence(base, inputs).values;
            } else {
                const auto a = forward_tokens(adapted, inputs), b = forward_tokens(base, inputs);
                for (std::size_t i = 0; i < a.size(); ++i) mismatches += a[i].values != b[i].values;
            }
        }
    }
    return {mismatches == 0, fmt("%zu plans x 2 heads x 20 inputs, %zu mismatches", plans.size(), mismatches)};
}

Outcome dga_training() {
    const auto t0 = Clock::now();
    const std::uint64_t seed = 0;
    const auto split = stratified_split(synth_dga(2000, 2000, seed), 0.2, seed);
    std::vector<std::string> corpus;
    for (const auto& e : split.train) corpus.push_back(e.text);
    const std::size_t max_len = 128;
    const auto tok = Tokenizer::build(TokenMode::characters, corpus, max_len);
    const auto names = label_names("dga");
    const auto train_set = encode_text(split.train, tok, names);
    const auto test_set = encode_text(split.test, tok, names);

    auto desc = EncoderDescriptor::toy(64, tok.vocab_size(), max_len);
    desc.num_layers = 12;
    const auto base = Encoder::random(desc, seed, 1.0 / std::sqrt(64.0));
    CompacterConfig c;
    c.hidden_dim = 64;
    TrainConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.max_seq_len = max_len;
    cfg.seed = seed;

    auto run = [&](Strategy s) {
        auto model = insert_compacters(base->clone(), {TaskKind::sequence_classification, 2}, plan_for_strategy(s), c, seed);
        const auto r = train(model, train_set, cfg);
        return std::make_pair(evaluate(model, test_set).f1, r.wall_time_seconds);
    };
    const auto [f1_cf, t_cf] = run(Strategy::even_lc);
    const auto [f1_full, t_full] = run(Strategy::full_finetune);
    const double secs = seconds_since(t0);
    const bool pass = f1_cf >= 0.85 && f1_full >= 0.85 && t_cf < t_full && secs < 600.0;
    return {pass, fmt("even_lc F1 %.3f in %.1f s; full F1 %.3f in %.1f s; relative time %+.1f%%; total %.0f s", f1_cf,
                      t_cf, f1_full, t_full, 100.0 * relative_time(t_cf, t_full), secs)};
}

llm::LLMEndpointConfig mock_endpoint() {
    llm::LLMEndpointConfig c;
    c.credential_env = "";
    c.backoff_base_seconds = 0.0;
    c.max_retries = 0;
    return c;
}

Outcome router_properties() {
    const std::vector<std::string> labels{"ham", "spam"};
    bool pass = true;
    std::size_t runs = 0, partition_errors = 0, oracle_worse = 0, adversarial_better = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed, ++runs) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<LocalPrediction> preds;
        std::set<std::size_t> planted;
        llm::OracleBackend::Gold gold;
        for (std::size_t i = 0; i < 500; ++i) {
            LocalPrediction p;
            p.id = i;
            p.text = "sample " + std::to_string(i);
            const std::string g = u(rng) < 0.4 ? "spam" : "ham";
            const bool wrong = u(rng) < 0.15;
            p.gold = {g};
            p.predicted = {wrong ? (g == "ham" ? "spam" : "ham") : g};
            const bool low = u(rng) < (wrong ? 0.7 : 0.05);
            p.confidence = low ? 0.5 + 0.2499 * u(rng) : 0.75 + 0.25 * u(rng);
            if (low) planted.insert(i);
            gold.labels[p.text] = g;
            preds.push_back(p);
        }
        const auto tpl = llm::spam_template();
        RouterConfig rc;
        auto oracle = std::make_shared<llm::OracleBackend>(tpl, gold, labels);
        const auto good = route_and_merge(preds, rc, llm::LLMClient(oracle, mock_endpoint()), tpl, labels);
        std::set<std::size_t> routed;
        for (const auto& r : good.records) {
            if (r.routed) routed.insert(r.id);
            const auto& expect = r.routed ? preds[r.id].gold : preds[r.id].predicted;
            if (r.final_labels != expect) ++partition_errors;
        }
        if (routed != planted) ++partition_errors;
        if (!(*good.f1_after >= *good.f1_before)) ++oracle_worse;
        auto adv = std::make_shared<llm::OracleBackend>(tpl, gold, labels, llm::OracleMode::adversarial);
        const auto bad = route_and_merge(preds, rc, llm::LLMClient(adv, mock_endpoint()), tpl, labels);
        if (!(*bad.f1_after <= *bad.f1_before)) ++adversarial_better;
    }
    pass = partition_errors == 0 && oracle_worse == 0 && adversarial_better == 0;
    return {pass, fmt("%zu seeded runs of 500: partition errors %zu, oracle runs with lower F1 %zu, adversarial "
                      "runs with higher F1 %zu",
                      runs, partition_errors, oracle_worse, adversarial_better)};
}

Outcome label_calibration() {
    const std::vector<std::string> labels{"Non-DGA", "DGA"};
    const auto data = synth_dga(500, 500, 77);
    llm::OracleBackend::Gold gold;
    std::vector<std::string> inputs;
    std::vector<TextExample> unique;
    for (const auto& e : data) {
        if (gold.labels.count(e.text)) continue;
        gold.labels[e.text] = e.label;
        inputs.push_back(e.text);
        unique.push_back(e);
    }
    for (std::size_t k = 0; unique.size() < 1000; ++k) {
        const TextExample e{"filler-" + std::to_string(k) + ".com", k % 2 ? "DGA" : "Non-DGA"};
        gold.labels[e.text] = e.label;
        inputs.push_back(e.text);
        unique.push_back(e);
    }
    const auto tpl = llm::dga_template();
    auto noisy = std::make_shared<llm::OracleBackend>(tpl, gold, labels, llm::OracleMode::noisy, 0.10, 2024);
    const auto out = label_texts(inputs, tpl, llm::LLMClient(noisy, mock_endpoint()), labels);
    const auto agree = agreement_report(out, unique);
    const auto& qc = out.qc;
    std::size_t per_class = 0;
    for (const auto& [l, n] : qc.per_class) per_class += n;
    const bool sums = qc.labelled + qc.invalid + qc.transport_failed == qc.total && qc.total == 1000 &&
                      per_class == qc.labelled && out.examples.size() == qc.labelled;
    return {sums && std::abs(agree.agreement - 0.90) <= 0.02,
            fmt("agreement %.3f over %zu (band 0.88-0.92); labelled %zu + invalid %zu + failed %zu = %zu", agree.agreement,
                agree.compared, qc.labelled, qc.invalid, qc.transport_failed, qc.total)};
}

// Two-state BIOES automaton: outside, or inside a span of a given type.
bool bioes_dfa(const std::vector<std::string>& tags) {
    std::string inside;
    for (const auto& t : tags) {
        if (t.size() < 3 && t != "O") return false;
        const std::string type = t == "O" ? "" : t.substr(2);
        if (inside.empty()) {
            if (t == "O" || t[0] == 'S') continue;
            if (t[0] == 'B') inside = type;
            else return false;
        } else {
            if (type != inside || (t[0] != 'I' && t[0] != 'E')) return false;
            if (t[0] == 'E') inside.clear();
        }
    }
    return inside.empty();
}

Outcome bioes_validator() {
    const std::vector<std::string> alphabet{"O", "B-APT", "I-APT", "E-APT", "S-APT", "B-MAL", "I-MAL", "E-MAL", "S-MAL"};
    std::size_t checked = 0, disagreements = 0;
    std::vector<std::string> seq;
    std::function<void(std::size_t)> walk = [&](std::size_t left) {
        ++checked;
        if (validate_bioes(seq).empty() != bioes_dfa(seq)) ++disagreements;
        if (left == 0) return;
        for (const auto& t : alphabet) {
            seq.push_back(t);
            walk(left - 1);
            seq.pop_back();
        }
    };
    walk(4);

    std::istringstream fixtures("evil.com S-DOM\n\nFancy B-APT\nBear E-APT\n\nBear I-APT\n");
    const auto loaded = parse_aptner(fixtures);
    const bool fixtures_ok = loaded.items.size() == 2 && loaded.rejected.size() == 1 && loaded.rejected[0].line == 6 &&
                             loaded.items[0].tags == std::vector<std::string>{"S-DOM"} &&
                             loaded.items[1].tags == std::vector<std::string>{"B-APT", "E-APT"};
    return {disagreements == 0 && fixtures_ok,
            fmt("%zu sequences, %zu disagreements; fixtures S-DOM / B-APT E-APT accepted, I-APT quarantined: %s", checked,
                disagreements, fixtures_ok ? "yes" : "no")};
}

Outcome prompt_and_csv() {
    const auto catalog = llm::default_entity_catalog();
    const auto spam = llm::render_prompt(llm::spam_template(), {"win money now"});
    const auto dga = llm::render_prompt(llm::dga_template(), {"example.com"});
    const auto cti = llm::render_prompt(llm::cti_detailed_template(), {"APT28"}, &catalog);
    const bool prompts =
        spam.back().content.find("Classify the following input sentences as `ham' or `spam'") != std::string::npos &&
        dga.back().content.find("`DGA' or `Non-DGA'") != std::string::npos &&
        cti.front().content.find("expert Named Entity Recognition (NER) system") != std::string::npos &&
        cti.back().content.find("Only output the labeled entities in BIOES format") != std::string::npos;

    std::mt19937_64 rng(1111);
    const std::string pool = "abcdefghij KLMNOP 0123456789,\"'.-_/:;!?";
    const std::vector<std::string> labels{"ham", "spam"};
    std::string reply;
    std::vector<std::pair<std::string, std::string>> want;
    for (int i = 0; i < 1000; ++i) {
        std::string s;
        const std::size_t len = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
        for (std::size_t k = 0; k < len; ++k) s.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
        s = trim(s);
        if (s.empty()) s = "x";
        const std::string& l = labels[i % 2];
        want.emplace_back(s, l);
        reply += csv_quote(s) + "," + l + "\n";
    }
    const auto parsed = llm::parse_csv_labels(reply, labels);
    const bool round_trip = parsed.failures.empty() && parsed.rows == want;

    const std::vector<std::string> malformed = {
        "\"unterminated quote,ham", "no label column", "text,banana", "```csv", "text,", "\"a\"\"b,spam",
        ",", "text,hamm", "\"x\",\"ham", "text;spam"};
    std::size_t flagged = 0;
    for (const auto& line : malformed) {
        const auto p = llm::parse_csv_labels("first,ham\n" + line + "\n", labels);
        if (p.rows.size() == 1 && p.failures.size() == 1) ++flagged;
    }
    return {prompts && round_trip && flagged == malformed.size(),
            fmt("instruction strings present: %s; 1000 lines, %zu failures, exact: %s; malformed flagged %zu/%zu",
                prompts ? "yes" : "no", parsed.failures.size(), round_trip ? "yes" : "no", flagged, malformed.size())};
}

Outcome bench_protocol() {
    BenchConfig cfg;
    std::size_t calls = 0;
    const auto count_lat = measure_latency([&](std::size_t) { ++calls; }, 10000, cfg);
    const auto count_thr = measure_throughput([&](std::size_t) { ++calls; }, cfg);
    const bool counts = count_lat.durations_ms.size() == 300 && count_thr.durations_ms.size() == 100 &&
                        count_thr.batch_size == 32;

    using namespace std::chrono_literals;
    cfg.warmup = 2;
    const auto lat = measure_latency([](std::size_t) { std::this_thread::sleep_for(5ms); }, 300, cfg);
    const auto thr = measure_throughput([](std::size_t) { std::this_thread::sleep_for(10ms); }, cfg);
    const auto ls = summarize(lat), ts = summarize(thr);
    const bool bands = ls.mean_ms >= 4.5 && ls.mean_ms <= 7.0 && std::abs(ts.samples_per_second - 3200.0) <= 0.2 * 3200.0;

    bool exact = true;
    for (const auto* log : {&lat, &thr}) {
        std::stringstream ss;
        write_log(ss, *log);
        exact = exact && summarize(read_log(ss)).to_json().dump() == summarize(*log).to_json().dump();
    }
    return {counts && bands && exact,
            fmt("%zu latency samples, %zu batches of %zu; 5 ms stub mean %.2f ms; 10 ms/batch stub %.0f samples/s; "
                "recompute exact: %s",
                count_lat.durations_ms.size(), count_thr.durations_ms.size(), count_thr.batch_size, ls.mean_ms,
                ts.samples_per_second, exact ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"Kronecker/PHM oracle equivalence", kron_equivalence},
        {"materialization-free forward", forward_equivalence},
        {"compacter block gradients", block_gradients},
        {"Table 2 trainable-parameter fractions", table2_fractions},
        {"freeze invariant", freeze_invariant},
        {"identity at initialization", identity_at_init},
        {"desk-scale DGA training", dga_training},
        {"router properties", router_properties},
        {"label pipeline calibration", label_calibration},
        {"BIOES validator", bioes_validator},
        {"prompt fidelity and CSV parsing", prompt_and_csv},
        {"bench protocol", bench_protocol},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = int(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
