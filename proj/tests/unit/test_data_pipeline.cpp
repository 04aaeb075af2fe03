#include <doctest.h>

#include <regex>
#include <set>
#include <sstream>

#include "compfreeze/data_pipeline.hpp"
#include "compfreeze/errors.hpp"

using namespace compfreeze;

namespace {

// Well-formed BIOES as a regular language over single-letter symbols.
bool bioes_regex_oracle(const std::vector<std::string>& tags) {
    std::string s;
    for (const auto& t : tags) {
        if (t == "O") s += "o";
        else s += std::string(1, char(std::tolower(t[0]))) + (t.substr(2) == "APT" ? "1" : "2");
    }
    static const std::regex ok(R"(^(o|s1|s2|b1(i1)*e1|b2(i2)*e2)*$)");
    return std::regex_match(s, ok);
}

}  // namespace

TEST_CASE("tag vocabulary") {
    CHECK(entity_types().size() == 21);
    CHECK(tag_vocabulary().size() == 85);
    CHECK(tag_vocabulary()[0] == "O");
    CHECK(tag_index("S-DOM") > 0);
    CHECK(tag_index("URL") == -1);
    CHECK(tag_index("s-dom") == -1);
}

TEST_CASE("validate_bioes agrees with a regular-language oracle on every short sequence") {
    const std::vector<std::string> alphabet{"O",     "B-APT", "I-APT", "E-APT", "S-APT",
                                            "B-DOM", "I-DOM", "E-DOM", "S-DOM"};
    std::size_t checked = 0;
    for (std::size_t len = 0; len <= 4; ++len) {
        std::size_t total = 1;
        for (std::size_t i = 0; i < len; ++i) total *= alphabet.size();
        for (std::size_t code = 0; code < total; ++code) {
            std::vector<std::string> tags;
            for (std::size_t i = 0, c = code; i < len; ++i, c /= alphabet.size()) tags.push_back(alphabet[c % alphabet.size()]);
            const bool valid = validate_bioes(tags).empty();
            if (valid != bioes_regex_oracle(tags)) FAIL_CHECK("disagreement on sequence " << code << " of length " << len);
            ++checked;
        }
    }
    CHECK(checked == 1 + 9 + 81 + 729 + 6561);
}

TEST_CASE("validate_bioes fixtures and positions") {
    CHECK(validate_bioes({"S-DOM"}).empty());
    CHECK(validate_bioes({"B-APT", "E-APT"}).empty());
    CHECK(validate_bioes({"B-APT", "I-APT", "I-APT", "E-APT", "O"}).empty());
    auto v = validate_bioes({"I-APT"});
    REQUIRE(v.size() == 1);
    CHECK(v[0].position == 0);
    v = validate_bioes({"O", "B-APT", "E-MAL"});
    REQUIRE(!v.empty());
    CHECK(v[0].position == 2);
    v = validate_bioes({"B-APT", "I-APT"});
    REQUIRE(v.size() == 1);
    CHECK(v[0].position == 2);
    CHECK(!validate_bioes({"B-APT", "O", "E-APT"}).empty());
    CHECK(!validate_bioes({"X-APT"}).empty());
}

TEST_CASE("csv reader and quoting") {
    std::istringstream in("a,\"b, c\"\r\n\"he said \"\"hi\"\"\",x\n\"multi\nline\",y\n");
    const auto rows = read_csv(in);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == std::vector<std::string>{"a", "b, c"});
    CHECK(rows[1] == std::vector<std::string>{"he said \"hi\"", "x"});
    CHECK(rows[2] == std::vector<std::string>{"multi\nline", "y"});
    CHECK(csv_quote("plain") == "plain");
    CHECK(csv_quote("a,b") == "\"a,b\"");
    CHECK(csv_quote("") == "\"\"");
    CHECK(csv_quote(" pad") == "\" pad\"");
    CHECK(csv_quote("q\"") == "\"q\"\"\"");
}

TEST_CASE("spam loader") {
    SUBCASE("header, normalisation and rejects") {
        std::istringstream in("text,label\nhello there,ham\nWIN NOW,Spam \n\"a, quoted\",spam\nbad row\nx,eggs\n,ham\n");
        const auto r = parse_spam(in);
        CHECK(r.input_rows == 6);
        REQUIRE(r.items.size() == 3);
        CHECK(r.items[1].label == "spam");
        CHECK(r.items[2].text == "a, quoted");
        REQUIRE(r.rejected.size() == 3);
        CHECK(r.rejected[0].line == 5);
        CHECK(r.rejected[0].reason.find("2 columns") != std::string::npos);
        CHECK(r.rejected[1].reason.find("eggs") != std::string::npos);
        CHECK(r.rejected[2].reason == "empty text");
        CHECK(r.items.size() + r.rejected.size() == r.input_rows);
        CHECK(r.qc["rejected"] == 3);
    }
    SUBCASE("no header") {
        std::istringstream in("hello,ham\n");
        CHECK(parse_spam(in).items.size() == 1);
    }
    SUBCASE("empty inputs") {
        std::istringstream empty("");
        CHECK_THROWS_AS(parse_spam(empty), InvalidData);
        std::istringstream header_only("text,label\n");
        CHECK_THROWS_AS(parse_spam(header_only), InvalidData);
    }
    CHECK_THROWS_AS(load_spam("/nonexistent/spam.csv"), std::invalid_argument);
}

TEST_CASE("spam csv round trip") {
    const auto data = synth_spam(30, 30, 4);
    std::vector<TextExample> tricky = data;
    tricky.push_back({"comma, inside", "ham"});
    tricky.push_back({"a \"quoted\" word", "spam"});
    tricky.push_back({"line\nbreak", "ham"});
    std::stringstream ss;
    write_spam_csv(ss, tricky);
    const auto back = parse_spam(ss);
    REQUIRE(back.items.size() == tricky.size());
    for (std::size_t i = 0; i < tricky.size(); ++i) {
        CHECK(back.items[i].text == tricky[i].text);
        CHECK(back.items[i].label == tricky[i].label);
    }
}

TEST_CASE("dga loader") {
    std::istringstream benign("google.com\nExample.org\r\n\nyoutube.com\ngoogle.com\n");
    std::istringstream dga("xkqjzpwv.net\nbad domain.com\n");
    const auto r = parse_dga(benign, dga);
    CHECK(r.input_rows == 7);
    CHECK(r.items.size() == 5);
    CHECK(r.rejected.size() == 2);
    CHECK(r.rejected[0].line == 3);
    CHECK(r.items[1].text == "example.org");
    CHECK(r.items.back().label == "DGA");
    CHECK(r.qc["duplicates"].size() == 1);
    CHECK(r.qc["duplicates"][0]["text"] == "google.com");

    std::stringstream b2, d2;
    const auto synth = synth_dga(50, 50, 3);
    write_domains(b2, synth, labels::non_dga);
    write_domains(d2, synth, labels::dga);
    std::stringstream b3(b2.str()), d3(d2.str());
    const auto s1 = parse_dga(b2, d2, 10, 20, 7);
    const auto s2 = parse_dga(b3, d3, 10, 20, 7);
    CHECK(s1.items.size() == 30);
    CHECK(s1.qc["label_counts"]["DGA"] == 20);
    for (std::size_t i = 0; i < s1.items.size(); ++i) CHECK(s1.items[i].text == s2.items[i].text);
}

TEST_CASE("conflicting labels are reported") {
    const auto qc = qc_report(std::vector<TextExample>{{"a", "ham"}, {"a", "spam"}, {"b", "ham"}});
    CHECK(qc["conflicting_labels"].size() == 1);
    CHECK(qc["duplicates"].size() == 1);
}

TEST_CASE("aptner loader quarantines bad sentences") {
    std::istringstream in(
        "evil.com S-DOM\n\n"
        "APT 28 extra\n\n"
        "Fancy B-APT\nBear E-APT\nused O\n\n"
        "Bear I-APT\n\n"
        "http://x.com/a O\n\n"
        "foo URL\n");
    const auto r = parse_aptner(in);
    CHECK(r.input_rows == 6);
    REQUIRE(r.items.size() == 3);
    CHECK(r.items[1].tokens == std::vector<std::string>{"Fancy", "Bear", "used"});
    REQUIRE(r.rejected.size() == 3);
    CHECK(r.rejected[0].line == 3);
    CHECK(r.rejected[0].reason.find("columns") != std::string::npos);
    CHECK(r.rejected[1].reason.find("BIOES") != std::string::npos);
    CHECK(r.rejected[2].reason.find("URL") != std::string::npos);
    CHECK(r.qc["quarantined"] == 3);
    CHECK(r.qc["entities"] == 2);
    CHECK(r.qc["url_shaped_tokens_tagged_O"].size() == 1);

    std::istringstream empty("\n\n");
    CHECK_THROWS_AS(parse_aptner(empty), InvalidData);
}

TEST_CASE("aptner write and reload is lossless") {
    const auto data = synth_aptner(40, 8);
    for (const auto& s : data) CHECK(validate_bioes(s.tags).empty());
    std::stringstream ss;
    write_aptner(ss, data);
    const auto back = parse_aptner(ss);
    CHECK(back.rejected.empty());
    REQUIRE(back.items.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back.items[i].tokens == data[i].tokens);
        CHECK(back.items[i].tags == data[i].tags);
    }
}

TEST_CASE("balanced sampling") {
    const auto data = synth_spam(300, 150, 1);
    auto s = balanced_sample(data, 200, 9);
    CHECK(s.items.size() == 200);
    CHECK(s.counts["ham"] == 100);
    CHECK(s.counts["spam"] == 100);
    CHECK(s.balanced);
    s = balanced_sample(data, 208, 9);
    CHECK(s.counts["ham"] == 104);
    CHECK(s.counts["spam"] == 104);

    const auto small = synth_spam(3, 3, 1);
    s = balanced_sample(small, 4, 2);
    CHECK(s.counts["ham"] == 2);
    CHECK(s.counts["spam"] == 2);

    const auto skewed = synth_spam(10, 2, 1);
    s = balanced_sample(skewed, 8, 2);
    CHECK(s.items.size() == 8);
    CHECK(s.counts["spam"] == 2);
    CHECK(!s.balanced);
    CHECK_THROWS_AS(balanced_sample(skewed, 13, 2), std::invalid_argument);

    const auto a = balanced_sample(data, 50, 3), b = balanced_sample(data, 50, 3);
    for (std::size_t i = 0; i < 50; ++i) CHECK(a.items[i].text == b.items[i].text);
}

TEST_CASE("stratified split keeps label proportions and loses nothing") {
    const auto data = synth_dga(100, 50, 2);
    const auto s = stratified_split(data, 0.2, 5);
    CHECK(s.train.size() == 120);
    CHECK(s.test.size() == 30);
    const auto qc = qc_report(s.test);
    CHECK(qc["label_counts"]["DGA"] == 10);
    CHECK(qc["label_counts"]["Non-DGA"] == 20);
    std::multiset<std::string> all, parts;
    for (const auto& e : data) all.insert(e.text + "|" + e.label);
    for (const auto* v : {&s.train, &s.test})
        for (const auto& e : *v) parts.insert(e.text + "|" + e.label);
    CHECK(all == parts);
    CHECK(s.provenance.find("seed 5") != std::string::npos);
    CHECK_THROWS_AS(stratified_split(data, 1.0, 5), std::invalid_argument);

    const auto sents = synth_aptner(50, 1);
    const auto rs = random_split(sents, 0.2, 1);
    CHECK(rs.train.size() == 40);
    CHECK(rs.test.size() == 10);
}

TEST_CASE("encoding to ids") {
    const auto data = synth_spam(5, 5, 1);
    const auto tok = Tokenizer::build(TokenMode::words, {"hello world"}, 32);
    const auto enc = encode_text(data, tok, label_names("spam"));
    CHECK(enc.num_labels == 2);
    for (std::size_t i = 0; i < data.size(); ++i) CHECK(enc.examples[i].labels[0] == (data[i].label == "spam" ? 1 : 0));
    CHECK_THROWS_AS(encode_text({{"x", "eggs"}}, tok, label_names("spam")), InvalidData);
    CHECK(label_names("dga")[1] == "DGA");
    CHECK(label_names("cti").size() == 85);
    CHECK_THROWS_AS(label_names("nope"), std::invalid_argument);

    const auto sents = synth_aptner(3, 2);
    std::vector<std::vector<std::string>> toks;
    for (const auto& s : sents) toks.push_back(s.tokens);
    const auto es = encode_sentences(sents, Tokenizer::build_from_tokens(toks, 64));
    CHECK(es.num_labels == 85);
    CHECK(es.examples[0].ids.size() == sents[0].tokens.size());
    CHECK(es.examples[0].labels[0] == tag_index(sents[0].tags[0]));
}
