#include <doctest.h>

#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "compfreeze/bench.hpp"

using namespace compfreeze;
using namespace std::chrono_literals;

TEST_CASE("latency harness times exactly the requested samples") {
    BenchConfig cfg;
    std::size_t calls = 0, last = 0;
    const auto log = measure_latency([&](std::size_t i) { ++calls, last = i; }, 1000, cfg);
    CHECK(log.durations_ms.size() == 300);
    CHECK(calls == 310);
    CHECK(last == 299);
    CHECK(log.kind == "latency");

    cfg.warmup = 0;
    calls = 0;
    const auto short_log = measure_latency([&](std::size_t) { ++calls; }, 120, cfg);
    CHECK(short_log.durations_ms.size() == 120);
    CHECK(calls == 120);
    const auto s = summarize(short_log);
    CHECK(s.count == 120);
    CHECK(s.requested == 300);
    CHECK(!s.warning.empty());
    CHECK(summarize(log).warning.empty());
}

TEST_CASE("throughput harness runs exactly 100 batches") {
    BenchConfig cfg;
    std::size_t calls = 0, syncs = 0;
    const auto log = measure_throughput([&](std::size_t) { ++calls; }, cfg, [&] { ++syncs; });
    CHECK(log.durations_ms.size() == 100);
    CHECK(log.batch_size == 32);
    CHECK(calls == 110);
    CHECK(syncs == 110);
}

TEST_CASE("stub timings") {
    BenchConfig cfg;
    cfg.samples = 40;
    cfg.batches = 20;
    cfg.warmup = 2;
    const auto lat = summarize(measure_latency([](std::size_t) { std::this_thread::sleep_for(5ms); }, 100, cfg));
    CHECK(lat.mean_ms >= 4.5);
    CHECK(lat.mean_ms <= 7.0);

    const auto thr = summarize(measure_throughput([](std::size_t) { std::this_thread::sleep_for(10ms); }, cfg));
    CHECK(thr.samples_per_second == doctest::Approx(3200.0).epsilon(0.20));

    cfg.batch_size = 1;
    const auto one = summarize(measure_throughput([](std::size_t) { std::this_thread::sleep_for(4ms); }, cfg));
    CHECK(one.samples_per_second == doctest::Approx(1000.0 / one.mean_ms).epsilon(0.05));
}

TEST_CASE("summary is recomputable from the raw log bit for bit") {
    TimingLog log{"throughput", 32, 5, {1.25, 3.0000000000000004, 0.1, 2.5e-3, 7.0}};
    std::stringstream ss;
    write_log(ss, log);
    const auto back = read_log(ss);
    CHECK(back.durations_ms == log.durations_ms);
    const auto a = summarize(log), b = summarize(back);
    CHECK(a.to_json().dump() == b.to_json().dump());
    CHECK(a.count == 5);
    double total = 0.0;
    for (double d : log.durations_ms) total += d;
    CHECK(a.total_ms == total);
    CHECK(a.samples_per_second == doctest::Approx(32.0 * 5.0 / (total / 1000.0)));

    std::istringstream bad("no header\n1.0\n");
    CHECK_THROWS_AS(read_log(bad), std::invalid_argument);
    CHECK_THROWS_AS(summarize(TimingLog{}), std::invalid_argument);
    BenchConfig zero;
    zero.batches = 0;
    CHECK_THROWS_AS(zero.validate(), std::invalid_argument);
}

TEST_CASE("direction check counts repetitions") {
    auto row = [](const char* plan, std::vector<double> lat, std::vector<double> thr) {
        ModelBenchRow r;
        r.plan = plan;
        for (double l : lat) r.latency.push_back(TimingSummary{.mean_ms = l});
        for (double t : thr) r.throughput.push_back(TimingSummary{.samples_per_second = t});
        return r;
    };
    const auto single = row("single(1)", {1.0, 1.0, 1.0}, {100, 100, 100});
    auto six = row("even_lc", {1.2, 0.9, 1.1}, {95, 96, 101});
    auto d = direction_check(single, six);
    CHECK(d.latency_not_lower == 2);
    CHECK(d.throughput_not_higher == 2);
    CHECK(d.holds);
    six = row("even_lc", {1.2, 0.9, 0.8}, {95, 96, 97});
    d = direction_check(single, six);
    CHECK(d.latency_not_lower == 1);
    CHECK(!d.holds);
    CHECK(d.to_json()["more"] == "even_lc");
    CHECK_THROWS_AS(direction_check(single, row("x", {1.0}, {1.0})), std::invalid_argument);
}
