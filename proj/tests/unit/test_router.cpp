#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "compfreeze/confidence_router.hpp"
#include "compfreeze/data_pipeline.hpp"

using namespace compfreeze;
using namespace compfreeze::llm;

namespace {

LLMEndpointConfig cfg() {
    LLMEndpointConfig c;
    c.credential_env = "";
    c.backoff_base_seconds = 0.0;
    c.max_retries = 0;
    return c;
}

const std::vector<std::string> kLabels{"ham", "spam"};

struct Planted {
    std::vector<LocalPrediction> preds;
    std::set<std::size_t> low;
    OracleBackend::Gold gold;
};

// Wrong local predictions are planted at low confidence with probability 0.8.
Planted plant(std::size_t n, std::uint64_t seed, double threshold = 0.75) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Planted p;
    for (std::size_t i = 0; i < n; ++i) {
        LocalPrediction lp;
        lp.id = i;
        lp.text = "input " + std::to_string(i);
        const std::string g = u(rng) < 0.4 ? "spam" : "ham";
        const bool wrong = u(rng) < 0.2;
        lp.gold = {g};
        lp.predicted = {wrong ? (g == "ham" ? "spam" : "ham") : g};
        const bool low = wrong ? u(rng) < 0.8 : u(rng) < 0.1;
        lp.confidence = low ? 0.5 + (threshold - 0.5) * u(rng) * 0.999 : threshold + (1.0 - threshold) * u(rng);
        if (low) p.low.insert(i);
        p.gold.labels[lp.text] = g;
        p.preds.push_back(lp);
    }
    return p;
}

}  // namespace

TEST_CASE("sequence confidence") {
    CHECK(confidence_sequence(std::vector<double>{0.0, 0.0}) == doctest::Approx(0.5));
    CHECK(confidence_sequence(std::vector<double>{std::log(3.0), 0.0}) == doctest::Approx(0.75));
    CHECK(confidence_sequence(std::vector<double>{10.0, -10.0}) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(confidence_sequence(std::vector<double>{std::log(3.0), 0.0}, ConfidenceMeasure::margin) == doctest::Approx(0.5));
    CHECK(confidence_sequence(std::vector<double>{0.0, 0.0, 0.0}, ConfidenceMeasure::entropy) == doctest::Approx(0.0));
    CHECK(confidence_sequence(std::vector<double>{1000.0, 0.0}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(confidence_sequence(std::vector<double>{1.0}), std::invalid_argument);
    CHECK_THROWS_AS(confidence_sequence(std::vector<double>{NAN, 0.0}), std::invalid_argument);
    CHECK(parse_measure("margin") == ConfidenceMeasure::margin);
    CHECK_THROWS_AS(parse_measure("vibes"), std::invalid_argument);
}

TEST_CASE("sentence confidence averages unpadded tokens") {
    // Two-class logits with p = 0.6 and p = 0.8.
    Matrix m(3, 2);
    m.values = {std::log(0.6 / 0.4), 0.0, std::log(0.8 / 0.2), 0.0, 50.0, 0.0};
    CHECK(confidence_sentence(m, {false, false, true}) == doctest::Approx(0.7));
    CHECK(confidence_sentence(m, {false, true, true}) == doctest::Approx(0.6));
    CHECK(confidence_sentence(m, {false, false, false}) == doctest::Approx((0.6 + 0.8 + 1.0) / 3.0));
    CHECK_THROWS_AS(confidence_sentence(m, {true, true, true}), std::invalid_argument);
    CHECK_THROWS_AS(confidence_sentence(m, {false}), std::invalid_argument);
}

TEST_CASE("routing partitions by threshold and merges oracle answers") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        CAPTURE(seed);
        const auto p = plant(500, seed);
        auto oracle = std::make_shared<OracleBackend>(spam_template(), p.gold, kLabels);
        RouterConfig rc;
        const auto rep = route_and_merge(p.preds, rc, LLMClient(oracle, cfg()), spam_template(), kLabels);
        CHECK(rep.routed == p.low.size());
        for (const auto& r : rep.records) {
            CHECK(r.routed == (p.low.count(r.id) == 1));
            if (r.routed) {
                CHECK(r.source == FinalSource::llm);
                CHECK(r.final_labels == p.preds[r.id].gold);
            } else {
                CHECK(r.final_labels == p.preds[r.id].predicted);
                CHECK(!r.llm);
            }
        }
        CHECK(*rep.f1_after >= *rep.f1_before);

        auto adv = std::make_shared<OracleBackend>(spam_template(), p.gold, kLabels, OracleMode::adversarial);
        const auto bad = route_and_merge(p.preds, rc, LLMClient(adv, cfg()), spam_template(), kLabels);
        CHECK(*bad.f1_after <= *bad.f1_before);
    }
}

TEST_CASE("threshold extremes") {
    const auto p = plant(60, 9);
    auto oracle = std::make_shared<OracleBackend>(spam_template(), p.gold, kLabels);
    RouterConfig rc;
    rc.threshold = 0.0;
    auto rep = route_and_merge(p.preds, rc, LLMClient(oracle, cfg()), spam_template(), kLabels);
    CHECK(rep.routed == 0);
    CHECK(*rep.f1_after == *rep.f1_before);
    rc.threshold = 1.0;
    rep = route_and_merge(p.preds, rc, LLMClient(oracle, cfg()), spam_template(), kLabels);
    CHECK(rep.routed == 60);
    CHECK(*rep.f1_after == 1.0);
    rc.threshold = 1.5;
    CHECK_THROWS_AS(route_and_merge(p.preds, rc, LLMClient(oracle, cfg()), spam_template(), kLabels),
                    std::invalid_argument);
}

TEST_CASE("failed or unusable replies fall back to the local prediction") {
    const auto p = plant(30, 4);
    RouterConfig rc;
    rc.batch_size = 100;
    auto dead = std::make_shared<ScriptedBackend>(std::vector<std::string>{});
    auto rep = route_and_merge(p.preds, rc, LLMClient(dead, cfg()), spam_template(), kLabels);
    CHECK(rep.fallbacks == rep.routed);
    for (const auto& r : rep.records) {
        CHECK(r.final_labels == p.preds[r.id].predicted);
        if (r.routed) {
            CHECK(r.source == FinalSource::local_fallback);
            CHECK(r.fallback_reason.find("transport") == 0);
        }
    }
    CHECK(*rep.f1_after == *rep.f1_before);

    auto garbage = std::make_shared<ScriptedBackend>(std::vector<std::string>{"I cannot help with that."});
    rep = route_and_merge(p.preds, rc, LLMClient(garbage, cfg()), spam_template(), kLabels);
    CHECK(rep.fallbacks == rep.routed);

    std::ostringstream out;
    write_jsonl(out, rep.records);
    std::istringstream in(out.str());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("decision"));
        CHECK(j.contains("explanation"));
        ++n;
    }
    CHECK(n == 30);
    CHECK(rep.to_json("spam")["routed"] == rep.routed);
}

TEST_CASE("token routing") {
    const auto sents = synth_aptner(20, 6);
    OracleBackend::Gold g;
    std::vector<LocalPrediction> preds;
    for (std::size_t i = 0; i < sents.size(); ++i) {
        g.tags[OracleBackend::sentence_key(sents[i].tokens)] = sents[i].tags;
        LocalPrediction lp;
        lp.id = i;
        lp.tokens = sents[i].tokens;
        lp.gold = sents[i].tags;
        lp.predicted = std::vector<std::string>(sents[i].tags.size(), "O");
        lp.confidence = i % 2 ? 0.5 : 0.9;
        preds.push_back(lp);
    }
    const auto catalog = default_entity_catalog();
    RouterConfig rc;
    rc.task = TaskKind::token_classification;
    auto oracle = std::make_shared<OracleBackend>(cti_detailed_template(), g, tag_vocabulary());
    const auto rep = route_and_merge(preds, rc, LLMClient(oracle, cfg()), cti_detailed_template(), tag_vocabulary(), &catalog);
    CHECK(rep.routed == 10);
    CHECK(rep.fallbacks == 0);
    CHECK(*rep.f1_after > *rep.f1_before);
    for (const auto& r : rep.records)
        if (r.routed) CHECK(r.final_labels == sents[r.id].tags);

    auto misaligned = std::make_shared<ScriptedBackend>(std::vector<std::string>(10, "x, O\n"));
    const auto fb = route_and_merge(preds, rc, LLMClient(misaligned, cfg()), cti_detailed_template(), tag_vocabulary(), &catalog);
    CHECK(fb.fallbacks == 10);
}
