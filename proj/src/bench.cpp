#include "compfreeze/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace compfreeze {

void BenchConfig::validate() const {
    if (samples == 0 || batches == 0 || batch_size == 0)
        throw std::invalid_argument("BenchConfig: samples, batches and batch_size must be positive");
}

nlohmann::json BenchConfig::to_json() const {
    return {{"samples", samples}, {"warmup", warmup}, {"batches", batches}, {"batch_size", batch_size}};
}

void write_log(std::ostream& out, const TimingLog& log) {
    out << "# kind=" << log.kind << " batch_size=" << log.batch_size << " requested=" << log.requested << '\n';
    char buf[40];
    for (double d : log.durations_ms) {
        std::snprintf(buf, sizeof buf, "%.17g", d);
        out << buf << '\n';
    }
}

TimingLog read_log(std::istream& in) {
    TimingLog log;
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("timing log is empty");
    char kind[32] = {};
    if (std::sscanf(line.c_str(), "# kind=%31s batch_size=%zu requested=%zu", kind, &log.batch_size, &log.requested) != 3)
        throw std::invalid_argument("timing log header is malformed: " + line);
    log.kind = kind;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        log.durations_ms.push_back(std::strtod(line.c_str(), nullptr));
    }
    return log;
}

nlohmann::json TimingSummary::to_json() const {
    nlohmann::json j = {{"kind", kind},         {"count", count},         {"requested", requested},
                        {"batch_size", batch_size}, {"mean_ms", mean_ms}, {"std_ms", std_ms},
                        {"total_ms", total_ms}, {"samples_per_second", samples_per_second}};
    if (!warning.empty()) j["warning"] = warning;
    return j;
}

TimingSummary summarize(const TimingLog& log) {
    TimingSummary s;
    s.kind = log.kind;
    s.count = log.durations_ms.size();
    s.requested = log.requested;
    s.batch_size = log.batch_size;
    if (s.count == 0) throw std::invalid_argument("summarize: no timings");
    for (double d : log.durations_ms) s.total_ms += d;
    s.mean_ms = s.total_ms / double(s.count);
    double ss = 0.0;
    for (double d : log.durations_ms) ss += (d - s.mean_ms) * (d - s.mean_ms);
    s.std_ms = s.count > 1 ? std::sqrt(ss / double(s.count - 1)) : 0.0;
    s.samples_per_second = s.total_ms > 0.0 ? double(s.batch_size * s.count) / (s.total_ms / 1000.0) : 0.0;
    if (s.count < s.requested)
        s.warning = "timed " + std::to_string(s.count) + " of " + std::to_string(s.requested) + " requested";
    return s;
}

namespace {

double timed(const std::function<void(std::size_t)>& f, std::size_t i, const SyncHook& sync) {
    const auto t0 = std::chrono::steady_clock::now();
    f(i);
    if (sync) sync();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TimingLog measure_latency(const std::function<void(std::size_t)>& infer, std::size_t available,
                          const BenchConfig& cfg, const SyncHook& sync) {
    cfg.validate();
    if (available == 0) throw std::invalid_argument("measure_latency: no samples available");
    for (std::size_t w = 0; w < cfg.warmup; ++w) {
        infer(w % available);
        if (sync) sync();
    }
    TimingLog log{"latency", 1, cfg.samples, {}};
    const std::size_t n = std::min(cfg.samples, available);
    log.durations_ms.reserve(n);
    for (std::size_t i = 0; i < n; ++i) log.durations_ms.push_back(timed(infer, i, sync));
    return log;
}

TimingLog measure_throughput(const std::function<void(std::size_t)>& infer_batch, const BenchConfig& cfg,
                             const SyncHook& sync) {
    cfg.validate();
    for (std::size_t w = 0; w < cfg.warmup; ++w) {
        infer_batch(w);
        if (sync) sync();
    }
    TimingLog log{"throughput", cfg.batch_size, cfg.batches, {}};
    log.durations_ms.reserve(cfg.batches);
    for (std::size_t b = 0; b < cfg.batches; ++b) log.durations_ms.push_back(timed(infer_batch, b, sync));
    return log;
}

double ModelBenchRow::mean_latency_ms() const {
    double s = 0.0;
    for (const auto& l : latency) s += l.mean_ms;
    return latency.empty() ? 0.0 : s / double(latency.size());
}

double ModelBenchRow::mean_throughput() const {
    double s = 0.0;
    for (const auto& t : throughput) s += t.samples_per_second;
    return throughput.empty() ? 0.0 : s / double(throughput.size());
}

nlohmann::json ModelBenchRow::to_json() const {
    nlohmann::json lat = nlohmann::json::array(), tp = nlohmann::json::array();
    for (const auto& l : latency) lat.push_back(l.to_json());
    for (const auto& t : throughput) tp.push_back(t.to_json());
    return {{"variant", variant},
            {"plan", plan},
            {"repetitions", latency.size()},
            {"inference_time_ms", mean_latency_ms()},
            {"throughput_samples_per_s", mean_throughput()},
            {"latency_runs", lat},
            {"throughput_runs", tp}};
}

ModelBenchRow bench_model(const AdaptedModel& model, const std::vector<TokenIds>& inputs, const BenchConfig& cfg,
                          std::size_t repetitions, const std::string& variant) {
    if (inputs.empty()) throw std::invalid_argument("bench_model: no inputs");
    if (repetitions == 0) throw std::invalid_argument("bench_model: repetitions must be positive");
    const bool seq = model.head.kind == TaskKind::sequence_classification;
    auto run = [&](const std::vector<TokenIds>& batch) {
        if (seq) (void)forward_sequence(model, batch);
        else (void)forward_tokens(model, batch);
    };
    auto one = [&](std::size_t i) { run({inputs[i % inputs.size()]}); };
    auto batch = [&](std::size_t b) {
        std::vector<TokenIds> xs;
        xs.reserve(cfg.batch_size);
        for (std::size_t k = 0; k < cfg.batch_size; ++k) xs.push_back(inputs[(b * cfg.batch_size + k) % inputs.size()]);
        run(xs);
    };
    ModelBenchRow row{variant, model.plan.name(), {}, {}, {}, {}};
    const std::size_t available = std::max(cfg.samples, inputs.size());
    for (std::size_t r = 0; r < repetitions; ++r) {
        row.latency_logs.push_back(measure_latency(one, available, cfg));
        row.throughput_logs.push_back(measure_throughput(batch, cfg));
        row.latency.push_back(summarize(row.latency_logs.back()));
        row.throughput.push_back(summarize(row.throughput_logs.back()));
    }
    return row;
}

nlohmann::json bench_table(const std::vector<ModelBenchRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) out.push_back(r.to_json());
    return out;
}

DirectionCheck direction_check(const ModelBenchRow& fewer, const ModelBenchRow& more) {
    if (fewer.latency.size() != more.latency.size() || fewer.throughput.size() != more.throughput.size() ||
        fewer.latency.size() != fewer.throughput.size() || fewer.latency.empty())
        throw std::invalid_argument("direction_check: rows need the same non-zero number of repetitions");
    DirectionCheck d{fewer.plan, more.plan, fewer.latency.size(), 0, 0, false};
    for (std::size_t r = 0; r < d.repetitions; ++r) {
        d.latency_not_lower += more.latency[r].mean_ms >= fewer.latency[r].mean_ms;
        d.throughput_not_higher += more.throughput[r].samples_per_second <= fewer.throughput[r].samples_per_second;
    }
    d.holds = 3 * d.latency_not_lower >= 2 * d.repetitions && 3 * d.throughput_not_higher >= 2 * d.repetitions;
    return d;
}

nlohmann::json DirectionCheck::to_json() const {
    return {{"fewer", fewer},
            {"more", more},
            {"repetitions", repetitions},
            {"latency_not_lower", latency_not_lower},
            {"throughput_not_higher", throughput_not_higher},
            {"holds", holds}};
}

}  // namespace compfreeze
