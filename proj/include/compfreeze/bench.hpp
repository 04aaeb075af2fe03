#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "compfreeze/encoder.hpp"

namespace compfreeze {

struct BenchConfig {
    std::size_t samples = 300;
    std::size_t warmup = 10;
    std::size_t batches = 100;
    std::size_t batch_size = 32;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Raw per-item timings; reports are pure functions of this log.
struct TimingLog {
    std::string kind;  // latency | throughput
    std::size_t batch_size = 1;
    std::size_t requested = 0;
    std::vector<double> durations_ms;
};

void write_log(std::ostream& out, const TimingLog& log);
TimingLog read_log(std::istream& in);

struct TimingSummary {
    std::string kind;
    std::size_t count = 0;      // samples or batches actually timed
    std::size_t requested = 0;
    std::size_t batch_size = 1;
    double mean_ms = 0.0;
    double std_ms = 0.0;
    double total_ms = 0.0;
    double samples_per_second = 0.0;  // batch_size * count / total time
    std::string warning;

    nlohmann::json to_json() const;
};

TimingSummary summarize(const TimingLog& log);

/// Called after each timed unit, before the clock stops.
using SyncHook = std::function<void()>;

/// Runs `infer(i)` on samples i = 0..n-1 with n = min(samples, available).
TimingLog measure_latency(const std::function<void(std::size_t)>& infer, std::size_t available,
                          const BenchConfig& cfg, const SyncHook& sync = {});
/// Runs `infer_batch(b)` for b = 0..batches-1.
TimingLog measure_throughput(const std::function<void(std::size_t)>& infer_batch, const BenchConfig& cfg,
                             const SyncHook& sync = {});

struct ModelBenchRow {
    std::string variant;
    std::string plan;
    std::vector<TimingSummary> latency;     // one per repetition
    std::vector<TimingSummary> throughput;  // one per repetition
    std::vector<TimingLog> latency_logs;
    std::vector<TimingLog> throughput_logs;

    double mean_latency_ms() const;
    double mean_throughput() const;
    nlohmann::json to_json() const;
};

/// Latency on single inputs and throughput on batches drawn cyclically from `inputs`.
ModelBenchRow bench_model(const AdaptedModel& model, const std::vector<TokenIds>& inputs, const BenchConfig& cfg,
                          std::size_t repetitions, const std::string& variant);

nlohmann::json bench_table(const std::vector<ModelBenchRow>& rows);

/// Per repetition, does the plan with more compacters have latency >= and
/// throughput <= the plan with fewer? `holds` needs both in >= 2/3 of them.
struct DirectionCheck {
    std::string fewer, more;
    std::size_t repetitions = 0;
    std::size_t latency_not_lower = 0;
    std::size_t throughput_not_higher = 0;
    bool holds = false;

    nlohmann::json to_json() const;
};

DirectionCheck direction_check(const ModelBenchRow& fewer, const ModelBenchRow& more);

}  // namespace compfreeze
