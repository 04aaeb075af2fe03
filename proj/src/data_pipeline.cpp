#include "compfreeze/data_pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

#include "compfreeze/errors.hpp"
#include "compfreeze/rng.hpp"

namespace compfreeze {

const std::vector<std::pair<std::string, std::string>>& entity_types() {
    static const std::vector<std::pair<std::string, std::string>> types = {
        {"APT", "APT"},
        {"SECTEAM", "Security Team"},
        {"IDTY", "Authentication Identity"},
        {"OS", "Operating System"},
        {"EMAIL", "Email"},
        {"LOC", "Location"},
        {"TIME", "Time"},
        {"IP", "IP"},
        {"DOM", "Domain"},
        {"URL", "URL"},
        {"PROT", "Protocol"},
        {"FILE", "File Names"},
        {"TOOL", "Tool"},
        {"MD5", "MD5"},
        {"SHA1", "SHA1"},
        {"SHA2", "SHA2"},
        {"MAL", "Malware"},
        {"ENCR", "Encryption Algo"},
        {"ACT", "Attack Action"},
        {"VULNAME", "Vulnerability Names"},
        {"VULID", "Vulnerability Number"},
    };
    return types;
}

const std::vector<std::string>& tag_vocabulary() {
    static const std::vector<std::string> tags = [] {
        std::vector<std::string> t{"O"};
        for (const auto& [code, name] : entity_types())
            for (const char* p : {"B-", "I-", "E-", "S-"}) t.push_back(p + code);
        return t;
    }();
    return tags;
}

int tag_index(const std::string& tag) {
    static const std::map<std::string, int> index = [] {
        std::map<std::string, int> m;
        const auto& v = tag_vocabulary();
        for (std::size_t i = 0; i < v.size(); ++i) m[v[i]] = int(i);
        return m;
    }();
    auto it = index.find(tag);
    return it == index.end() ? -1 : it->second;
}

std::vector<BioesViolation> validate_bioes(const std::vector<std::string>& tags) {
    std::vector<BioesViolation> out;
    std::optional<std::string> open;
    std::size_t opened_at = 0;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const std::string& t = tags[i];
        if (tag_index(t) < 0) {
            out.push_back({i, "unknown tag '" + t + "'"});
            open.reset();
            continue;
        }
        const char prefix = t[0];
        const std::string type = t == "O" ? "" : t.substr(2);
        if (open) {
            if ((prefix == 'I' || prefix == 'E') && type == *open) {
                if (prefix == 'E') open.reset();
                continue;
            }
            if (prefix == 'I' || prefix == 'E')
                out.push_back({i, "type switch mid-span: " + t + " inside " + *open + " span opened at " +
                                      std::to_string(opened_at)});
            else
                out.push_back({i, *open + " span opened at " + std::to_string(opened_at) + " not closed before " + t});
            open.reset();
            if (prefix == 'I' || prefix == 'E') continue;
        } else if (prefix == 'I' || prefix == 'E') {
            out.push_back({i, t + " without a preceding B-" + type});
            continue;
        }
        if (prefix == 'B') {
            open = type;
            opened_at = i;
        }
    }
    if (open) out.push_back({tags.size(), *open + " span opened at " + std::to_string(opened_at) + " never closed"});
    return out;
}

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, field_started = false, any = false;
    char c;
    auto end_field = [&] {
        record.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
        any = false;
    };
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r' && in.peek() == '\n') {
            continue;
        } else if (c == '\n') {
            end_record();
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (any) end_record();
    return records;
}

std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos && field == trim(field) && !field.empty()) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

namespace {

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path);
    return in;
}

std::string join_record(const std::vector<std::string>& rec) {
    std::string out;
    for (std::size_t i = 0; i < rec.size(); ++i) out += (i ? "," : "") + csv_quote(rec[i]);
    return out;
}

template <class T>
std::vector<T> seeded_take(std::vector<T> items, std::size_t n, std::mt19937_64& rng) {
    if (n == 0 || n >= items.size()) return items;
    std::shuffle(items.begin(), items.end(), rng);
    items.resize(n);
    return items;
}

bool valid_domain(const std::string& d) {
    if (d.empty()) return false;
    return std::none_of(d.begin(), d.end(), [](unsigned char c) { return std::isspace(c) || c == ','; });
}

}  // namespace

LoadResult<TextExample> parse_spam(std::istream& in) {
    const auto records = read_csv(in);
    if (records.empty()) throw InvalidData("spam file is empty");
    LoadResult<TextExample> r;
    std::size_t first = 0;
    if (records[0].size() == 2 && to_lower(trim(records[0][0])) == "text" && to_lower(trim(records[0][1])) == "label")
        first = 1;
    for (std::size_t i = first; i < records.size(); ++i) {
        const auto& rec = records[i];
        ++r.input_rows;
        if (rec.size() != 2) {
            r.rejected.push_back({i + 1, join_record(rec), "expected 2 columns, got " + std::to_string(rec.size())});
            continue;
        }
        const std::string label = to_lower(trim(rec[1]));
        if (label != labels::ham && label != labels::spam) {
            r.rejected.push_back({i + 1, join_record(rec), "unknown label '" + rec[1] + "'"});
            continue;
        }
        if (trim(rec[0]).empty()) {
            r.rejected.push_back({i + 1, join_record(rec), "empty text"});
            continue;
        }
        r.items.push_back({rec[0], label});
    }
    if (r.input_rows == 0) throw InvalidData("spam file has a header but no rows");
    r.qc = qc_report(r.items);
    r.qc["rejected"] = r.rejected.size();
    return r;
}

LoadResult<TextExample> load_spam(const std::string& path) {
    auto in = open_input(path);
    return parse_spam(in);
}

LoadResult<TextExample> parse_dga(std::istream& benign, std::istream& dga, std::size_t benign_n, std::size_t dga_n,
                                  std::uint64_t seed) {
    LoadResult<TextExample> r;
    auto rng = substream(seed, "dga-sample");
    std::size_t line_base = 0;
    auto read_list = [&](std::istream& in, const char* label, const char* source) {
        std::vector<TextExample> items;
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            ++r.input_rows;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!valid_domain(line)) {
                r.rejected.push_back({line_base + n, line, std::string("malformed domain in ") + source + " list"});
                continue;
            }
            items.push_back({to_lower(line), label});
        }
        line_base += n;
        return items;
    };
    auto benign_items = seeded_take(read_list(benign, labels::non_dga, "benign"), benign_n, rng);
    auto dga_items = seeded_take(read_list(dga, labels::dga, "DGA"), dga_n, rng);
    r.items = std::move(benign_items);
    r.items.insert(r.items.end(), dga_items.begin(), dga_items.end());
    if (r.input_rows == 0) throw InvalidData("DGA inputs are empty");
    r.qc = qc_report(r.items);
    r.qc["rejected"] = r.rejected.size();
    return r;
}

LoadResult<TextExample> load_dga(const std::string& benign_path, const std::string& dga_path, std::size_t benign_n,
                                 std::size_t dga_n, std::uint64_t seed) {
    auto b = open_input(benign_path);
    auto d = open_input(dga_path);
    return parse_dga(b, d, benign_n, dga_n, seed);
}

LoadResult<TokenSentence> parse_aptner(std::istream& in) {
    LoadResult<TokenSentence> r;
    TokenSentence cur;
    std::string raw, reason;
    std::size_t start_line = 0, line_no = 0;
    auto flush = [&] {
        if (cur.tokens.empty() && reason.empty()) return;
        ++r.input_rows;
        if (reason.empty()) {
            for (const auto& t : cur.tags)
                if (tag_index(t) < 0) {
                    reason = "tag '" + t + "' outside the tag vocabulary";
                    break;
                }
        }
        if (reason.empty()) {
            const auto v = validate_bioes(cur.tags);
            if (!v.empty()) reason = "BIOES violation at " + std::to_string(v[0].position) + ": " + v[0].rule;
        }
        if (reason.empty()) r.items.push_back(std::move(cur));
        else r.rejected.push_back({start_line, raw, reason});
        cur = {};
        raw.clear();
        reason.clear();
    };
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) {
            flush();
            continue;
        }
        if (cur.tokens.empty() && raw.empty()) start_line = line_no;
        raw += line + "\n";
        const auto cols = split_whitespace(line);
        if (cols.size() != 2) {
            if (reason.empty())
                reason = "line " + std::to_string(line_no) + " has " + std::to_string(cols.size()) +
                         " columns (token/tag length mismatch)";
            continue;
        }
        cur.tokens.push_back(cols[0]);
        cur.tags.push_back(cols[1]);
    }
    flush();
    if (r.input_rows == 0) throw InvalidData("APTNER file is empty");
    r.qc = qc_report(r.items);
    r.qc["quarantined"] = r.rejected.size();
    return r;
}

LoadResult<TokenSentence> load_aptner(const std::string& path) {
    auto in = open_input(path);
    return parse_aptner(in);
}

BalancedSample balanced_sample(const std::vector<TextExample>& data, std::size_t n, std::uint64_t seed) {
    if (n > data.size()) throw std::invalid_argument("balanced_sample: n exceeds dataset size");
    auto rng = substream(seed, "balanced-sample");
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < data.size(); ++i) by_label[data[i].label].push_back(i);
    for (auto& [label, idx] : by_label) std::shuffle(idx.begin(), idx.end(), rng);

    const std::size_t k = by_label.size();
    std::map<std::string, std::size_t> quota;
    std::size_t assigned = 0, slot = 0;
    for (const auto& [label, idx] : by_label) {
        quota[label] = std::min(idx.size(), n / k + (slot++ < n % k ? 1 : 0));
        assigned += quota[label];
    }
    // Classes too small for their share hand the remainder to the others.
    while (assigned < n) {
        for (auto& [label, q] : quota) {
            if (assigned < n && q < by_label[label].size()) {
                ++q;
                ++assigned;
            }
        }
    }
    BalancedSample out;
    for (const auto& [label, q] : quota) {
        for (std::size_t j = 0; j < q; ++j) out.items.push_back(data[by_label[label][j]]);
        out.counts[label] = q;
    }
    std::shuffle(out.items.begin(), out.items.end(), rng);
    for (const auto& [label, q] : quota) {
        const double ideal = double(n) / double(k);
        if (std::abs(double(q) - ideal) >= 1.0) out.balanced = false;
    }
    return out;
}

std::vector<TokenSentence> random_sample(const std::vector<TokenSentence>& data, std::size_t n, std::uint64_t seed) {
    if (n > data.size()) throw std::invalid_argument("random_sample: n exceeds dataset size");
    auto rng = substream(seed, "random-sample");
    return seeded_take(data, n, rng);
}

DatasetSplit<TextExample> stratified_split(const std::vector<TextExample>& data, double test_fraction,
                                          std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("stratified_split: test_fraction must be in (0, 1)");
    auto rng = substream(seed, "split");
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < data.size(); ++i) by_label[data[i].label].push_back(i);
    DatasetSplit<TextExample> s;
    for (auto& [label, idx] : by_label) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_test = std::size_t(std::llround(test_fraction * double(idx.size())));
        for (std::size_t j = 0; j < idx.size(); ++j) (j < n_test ? s.test : s.train).push_back(data[idx[j]]);
    }
    std::shuffle(s.train.begin(), s.train.end(), rng);
    std::shuffle(s.test.begin(), s.test.end(), rng);
    std::ostringstream prov;
    prov << "stratified " << test_fraction << " test split, seed " << seed << ", " << s.train.size() << " train / "
         << s.test.size() << " test";
    s.provenance = prov.str();
    return s;
}

DatasetSplit<TokenSentence> random_split(const std::vector<TokenSentence>& data, double test_fraction,
                                         std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("random_split: test_fraction must be in (0, 1)");
    auto rng = substream(seed, "split");
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_test = std::size_t(std::llround(test_fraction * double(idx.size())));
    DatasetSplit<TokenSentence> s;
    for (std::size_t j = 0; j < idx.size(); ++j) (j < n_test ? s.test : s.train).push_back(data[idx[j]]);
    std::ostringstream prov;
    prov << "random " << test_fraction << " test split, seed " << seed << ", " << s.train.size() << " train / "
         << s.test.size() << " test";
    s.provenance = prov.str();
    return s;
}

namespace {

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

const std::vector<std::string> kWords = {
    "alpha",  "blue",   "cloud",  "data",   "east",   "fast",   "green",  "house",  "info",   "jet",
    "king",   "light",  "media",  "news",   "open",   "park",   "quick",  "river",  "shop",   "tech",
    "union",  "video",  "web",    "world",  "yellow", "zone",   "bank",   "city",   "daily",  "energy",
    "food",   "game",   "health", "image",  "joy",    "kids",   "life",   "music",  "net",    "online",
    "photo",  "radio",  "search", "travel", "view",   "water",  "book",   "car",    "store",  "sport",
    "star",   "home",   "school", "market", "mobile", "smart",  "social", "global", "north",  "south",
    "apple",  "office", "learn",  "cook",   "garden", "hotel",  "money",  "power",  "space",  "time"};

const std::vector<std::string> kTlds = {"com", "net", "org", "io", "de", "co.uk", "info"};

}  // namespace

std::vector<TextExample> synth_spam(std::size_t n_ham, std::size_t n_spam, std::uint64_t seed) {
    auto rng = substream(seed, "synth-spam");
    const std::vector<std::string> ham_subj = {"the meeting", "our budget review", "the project plan", "the report",
                                               "the schedule", "your expense claim", "the contract draft"};
    const std::vector<std::string> ham_verb = {"is moved to", "needs review before", "was updated on",
                                               "will be discussed on", "is attached for"};
    const std::vector<std::string> ham_when = {"monday", "tuesday", "friday", "next week", "tomorrow morning",
                                               "the end of the month"};
    const std::vector<std::string> ham_tail = {"thanks", "regards", "let me know", "see you there", "best"};
    const std::vector<std::string> spam_hook = {"win", "claim", "get", "earn", "receive"};
    const std::vector<std::string> spam_prize = {"free money", "a cash prize", "cheap meds", "a free vacation",
                                                 "guaranteed income", "a lottery reward"};
    const std::vector<std::string> spam_push = {"click here now", "act now", "limited offer", "reply immediately",
                                                "call this number", "visit our site today"};
    const std::vector<std::string> spam_tail = {"unsubscribe", "no risk", "100% guaranteed", "exclusive deal"};
    std::vector<TextExample> out;
    for (std::size_t i = 0; i < n_ham; ++i)
        out.push_back({pick(ham_subj, rng) + " " + pick(ham_verb, rng) + " " + pick(ham_when, rng) + " " +
                           pick(ham_tail, rng),
                       labels::ham});
    for (std::size_t i = 0; i < n_spam; ++i)
        out.push_back({pick(spam_hook, rng) + " " + pick(spam_prize, rng) + " " + pick(spam_push, rng) + " " +
                           pick(spam_tail, rng),
                       labels::spam});
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

std::vector<TextExample> synth_dga(std::size_t n_benign, std::size_t n_dga, std::uint64_t seed) {
    auto rng = substream(seed, "synth-dga");
    const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::uniform_int_distribution<std::size_t> len(10, 20), ch(0, alphabet.size() - 1);
    std::uniform_int_distribution<int> parts(1, 2);
    std::vector<TextExample> out;
    for (std::size_t i = 0; i < n_benign; ++i) {
        std::string name = pick(kWords, rng);
        if (parts(rng) == 2) name += pick(kWords, rng);
        out.push_back({name + "." + pick(kTlds, rng), labels::non_dga});
    }
    for (std::size_t i = 0; i < n_dga; ++i) {
        std::string name;
        const std::size_t n = len(rng);
        for (std::size_t j = 0; j < n; ++j) name.push_back(alphabet[ch(rng)]);
        out.push_back({name + "." + pick(kTlds, rng), labels::dga});
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

std::vector<TokenSentence> synth_aptner(std::size_t n, std::uint64_t seed) {
    auto rng = substream(seed, "synth-aptner");
    const std::map<std::string, std::vector<std::string>> entities = {
        {"APT", {"APT28", "Lazarus Group", "Fancy Bear", "OceanLotus", "APT 41"}},
        {"SECTEAM", {"Kaspersky", "FireEye", "Unit 42", "Talos"}},
        {"MAL", {"Emotet", "PlugX", "Cobalt Strike beacon", "TrickBot", "njRAT"}},
        {"LOC", {"Vietnam", "South Korea", "Eastern Europe", "Germany"}},
        {"TIME", {"2019", "March 2020", "last year"}},
        {"IP", {"192.168.10.4", "45.77.12.9", "103.15.28.1"}},
        {"DOM", {"evil.com", "update-check.net", "cdn-sync.org"}},
        {"URL", {"http://evil.com/a.php", "https://cdn-sync.org/payload"}},
        {"PROT", {"HTTP", "DNS", "SMB", "TLS"}},
        {"FILE", {"invoice.doc", "setup.exe", "svchost.dll"}},
        {"TOOL", {"Mimikatz", "PowerShell", "PsExec"}},
        {"MD5", {"d41d8cd98f00b204e9800998ecf8427e"}},
        {"SHA1", {"da39a3ee5e6b4b0d3255bfef95601890afd80709"}},
        {"SHA2", {"e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"}},
        {"OS", {"Windows", "Linux", "Android"}},
        {"EMAIL", {"admin@evil.com", "hr@cdn-sync.org"}},
        {"IDTY", {"administrator credentials", "domain accounts"}},
        {"ENCR", {"AES", "RC4", "RSA"}},
        {"ACT", {"spear phishing", "lateral movement", "credential dumping"}},
        {"VULNAME", {"EternalBlue", "Log4Shell"}},
        {"VULID", {"CVE-2017-0144", "CVE-2021-44228"}},
    };
    const std::vector<std::vector<std::string>> templates = {
        {"{APT}", "used", "{MAL}", "against", "targets", "in", "{LOC}", "."},
        {"{SECTEAM}", "observed", "{MAL}", "contacting", "{DOM}", "over", "{PROT}", "."},
        {"The", "attackers", "dropped", "{FILE}", "with", "MD5", "{MD5}", "."},
        {"In", "{TIME}", ",", "{APT}", "exploited", "{VULID}", "on", "{OS}", "hosts", "."},
        {"The", "payload", "was", "encrypted", "with", "{ENCR}", "and", "sent", "to", "{IP}", "."},
        {"Operators", "relied", "on", "{TOOL}", "for", "{ACT}", "."},
        {"Victims", "received", "mail", "from", "{EMAIL}", "linking", "to", "{URL}", "."},
        {"The", "sample", "{SHA2}", "abused", "{VULNAME}", "to", "steal", "{IDTY}", "."},
        {"Its", "SHA1", "is", "{SHA1}", "according", "to", "{SECTEAM}", "."},
    };
    std::vector<TokenSentence> out;
    for (std::size_t i = 0; i < n; ++i) {
        TokenSentence s;
        for (const auto& piece : pick(templates, rng)) {
            if (piece.size() > 2 && piece.front() == '{') {
                const std::string type = piece.substr(1, piece.size() - 2);
                const auto words = split_whitespace(pick(entities.at(type), rng));
                for (std::size_t w = 0; w < words.size(); ++w) {
                    s.tokens.push_back(words[w]);
                    std::string prefix = words.size() == 1 ? "S-" : w == 0 ? "B-" : w + 1 == words.size() ? "E-" : "I-";
                    s.tags.push_back(prefix + type);
                }
            } else {
                s.tokens.push_back(piece);
                s.tags.push_back("O");
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

void write_spam_csv(std::ostream& out, const std::vector<TextExample>& data) {
    out << "text,label\n";
    for (const auto& e : data) out << csv_quote(e.text) << ',' << csv_quote(e.label) << '\n';
}

void write_domains(std::ostream& out, const std::vector<TextExample>& data, const std::string& label) {
    for (const auto& e : data)
        if (e.label == label) out << e.text << '\n';
}

void write_aptner(std::ostream& out, const std::vector<TokenSentence>& data) {
    for (const auto& s : data) {
        for (std::size_t i = 0; i < s.tokens.size(); ++i) out << s.tokens[i] << ' ' << s.tags[i] << '\n';
        out << '\n';
    }
}

bool url_shaped(const std::string& token) {
    static const std::regex url(R"(^(https?://|www\.)\S+$|^[a-z0-9-]+(\.[a-z0-9-]+)*\.(com|net|org|io|ru|cn|info|biz)(/\S*)?$)",
                                std::regex::icase);
    return std::regex_match(token, url);
}

nlohmann::json qc_report(const std::vector<TextExample>& data) {
    std::map<std::string, std::size_t> counts;
    std::map<std::string, std::set<std::string>> labels_of;
    for (const auto& e : data) {
        ++counts[e.label];
        labels_of[e.text].insert(e.label);
    }
    nlohmann::json dup = nlohmann::json::array();
    nlohmann::json conflicting = nlohmann::json::array();
    std::map<std::string, std::size_t> seen;
    for (const auto& e : data) ++seen[e.text];
    for (const auto& [text, n] : seen) {
        if (n > 1) dup.push_back({{"text", text}, {"count", n}});
        if (labels_of[text].size() > 1) conflicting.push_back({{"text", text}, {"labels", labels_of[text]}});
    }
    return {{"rows", data.size()}, {"label_counts", counts}, {"duplicates", dup}, {"conflicting_labels", conflicting}};
}

nlohmann::json qc_report(const std::vector<TokenSentence>& data) {
    std::size_t tokens = 0, entities = 0;
    std::map<std::string, std::size_t> per_type;
    nlohmann::json suspicious = nlohmann::json::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& s = data[i];
        tokens += s.tokens.size();
        for (std::size_t j = 0; j < s.tags.size(); ++j) {
            const auto& t = s.tags[j];
            if (t[0] == 'B' || t[0] == 'S') {
                ++entities;
                ++per_type[t.substr(2)];
            }
            if (t == "O" && url_shaped(s.tokens[j]))
                suspicious.push_back({{"sentence", i}, {"position", j}, {"token", s.tokens[j]}});
        }
    }
    return {{"sentences", data.size()},
            {"tokens", tokens},
            {"entities", entities},
            {"entities_per_type", per_type},
            {"url_shaped_tokens_tagged_O", suspicious}};
}

std::vector<std::string> label_names(const std::string& task) {
    if (task == "spam") return {labels::ham, labels::spam};
    if (task == "dga") return {labels::non_dga, labels::dga};
    if (task == "cti") return tag_vocabulary();
    throw std::invalid_argument("unknown task '" + task + "' (expected spam, dga or cti)");
}

EncodedDataset encode_text(const std::vector<TextExample>& data, const Tokenizer& tok,
                           const std::vector<std::string>& names) {
    EncodedDataset d;
    d.kind = TaskKind::sequence_classification;
    d.num_labels = names.size();
    for (const auto& e : data) {
        const auto it = std::find(names.begin(), names.end(), e.label);
        if (it == names.end()) throw InvalidData("label '" + e.label + "' outside the task vocabulary");
        d.examples.push_back({tok.encode(e.text), {int(it - names.begin())}});
    }
    return d;
}

EncodedDataset encode_sentences(const std::vector<TokenSentence>& data, const Tokenizer& tok) {
    EncodedDataset d;
    d.kind = TaskKind::token_classification;
    d.num_labels = tag_vocabulary().size();
    for (const auto& s : data) {
        if (s.tokens.size() != s.tags.size()) throw InvalidData("token/tag length mismatch");
        EncodedExample ex{tok.encode_tokens(s.tokens), {}};
        for (std::size_t i = 0; i < ex.ids.size(); ++i) {
            const int t = tag_index(s.tags[i]);
            if (t < 0) throw InvalidData("tag '" + s.tags[i] + "' outside the tag vocabulary");
            ex.labels.push_back(t);
        }
        d.examples.push_back(std::move(ex));
    }
    return d;
}

}  // namespace compfreeze
