#include "compfreeze/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "compfreeze/errors.hpp"

namespace compfreeze {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian doubles");

namespace fs = std::filesystem;

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

nlohmann::json write_tensors(const std::vector<ParamPtr>& params, const fs::path& bin) {
    std::ofstream out(bin, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + bin.string());
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& p : params) {
        tensors.push_back({{"path", p->path}, {"rows", p->value.rows}, {"cols", p->value.cols}, {"offset", offset}});
        out.write(reinterpret_cast<const char*>(p->value.values.data()),
                  std::streamsize(p->value.values.size() * sizeof(double)));
        offset += p->value.values.size();
    }
    if (!out) throw std::runtime_error("short write to " + bin.string());
    return tensors;
}

void read_tensors(const nlohmann::json& tensors, const fs::path& bin, const std::map<std::string, ParamPtr>& by_path) {
    std::ifstream in(bin, std::ios::binary);
    if (!in) throw InvalidData("missing " + bin.string());
    for (const auto& t : tensors) {
        const std::string path = t.at("path");
        auto it = by_path.find(path);
        if (it == by_path.end()) throw InvalidData("checkpoint tensor '" + path + "' not in model");
        auto& v = it->second->value;
        if (v.rows != t.at("rows").get<std::size_t>() || v.cols != t.at("cols").get<std::size_t>())
            throw InvalidData("checkpoint tensor '" + path + "' shape differs from model");
        in.seekg(std::streamoff(t.at("offset").get<std::size_t>() * sizeof(double)));
        in.read(reinterpret_cast<char*>(v.values.data()), std::streamsize(v.values.size() * sizeof(double)));
        if (!in) throw InvalidData("checkpoint data truncated at '" + path + "'");
    }
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw InvalidData("missing " + p.string());
    return nlohmann::json::parse(in);
}

void write_json(const fs::path& p, const nlohmann::json& j) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

}  // namespace

void save_base(const Encoder& encoder, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json manifest = {{"format", "compfreeze-base-1"},
                               {"descriptor", encoder.desc.to_json()},
                               {"hash", hash_hex(encoder.hash())}};
    manifest["tensors"] = write_tensors(encoder.parameters(), fs::path(dir) / "weights.bin");
    write_json(fs::path(dir) / "manifest.json", manifest);
}

std::shared_ptr<Encoder> load_base(const std::string& dir) {
    const auto manifest = read_json(fs::path(dir) / "manifest.json");
    auto enc = std::make_shared<Encoder>(EncoderDescriptor::from_json(manifest.at("descriptor")));
    std::map<std::string, ParamPtr> by_path;
    for (const auto& p : enc->parameters()) by_path[p->path] = p;
    if (manifest.at("tensors").size() != by_path.size()) throw InvalidData("base manifest tensor count mismatch");
    read_tensors(manifest.at("tensors"), fs::path(dir) / "weights.bin", by_path);
    if (hash_hex(enc->hash()) != manifest.at("hash").get<std::string>())
        throw InvalidData("base checkpoint hash mismatch in " + dir);
    return enc;
}

void save_delta(const AdaptedModel& model, const std::string& dir, const nlohmann::json& extra) {
    fs::create_directories(dir);
    std::vector<ParamPtr> trainable;
    for (const auto& p : model.parameters())
        if (model.mask.is_trainable(p->path)) trainable.push_back(p);
    nlohmann::json manifest = {
        {"format", "compfreeze-delta-1"},
        {"base_hash", hash_hex(model.base_hash)},
        {"plan", {{"name", model.plan.name()}, {"layers", model.plan.layers}, {"num_layers", model.plan.num_layers}}},
        {"compacter", model.compacter_config.to_json()},
        {"head", {{"kind", model.head.kind == TaskKind::sequence_classification ? "sequence" : "token"},
                  {"num_labels", model.head.num_labels}}},
        {"seed", model.seed},
        {"mask", model.mask.summary()},
        {"extra", extra}};
    manifest["tensors"] = write_tensors(trainable, fs::path(dir) / "delta.bin");
    write_json(fs::path(dir) / "delta.json", manifest);
}

LoadedDelta load_delta(const std::string& dir, const Encoder& base) {
    const auto manifest = read_json(fs::path(dir) / "delta.json");
    const std::string want = manifest.at("base_hash");
    if (hash_hex(base.hash()) != want)
        throw InvalidData("delta expects base " + want + " but got " + hash_hex(base.hash()));
    const auto& plan_j = manifest.at("plan");
    const PlacementPlan plan = parse_plan(plan_j.at("name"), plan_j.at("num_layers"));
    const TaskHead head{manifest.at("head").at("kind") == "sequence" ? TaskKind::sequence_classification
                                                                      : TaskKind::token_classification,
                        manifest.at("head").at("num_labels")};
    LoadedDelta out{insert_compacters(base.clone(), head, plan, CompacterConfig::from_json(manifest.at("compacter")),
                                      manifest.at("seed")),
                    manifest.value("extra", nlohmann::json::object())};
    std::map<std::string, ParamPtr> by_path;
    for (const auto& p : out.model.parameters()) by_path[p->path] = p;
    read_tensors(manifest.at("tensors"), fs::path(dir) / "delta.bin", by_path);
    return out;
}

}  // namespace compfreeze
