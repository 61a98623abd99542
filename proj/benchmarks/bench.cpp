// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "splitinfer/allocator.hpp"
#include "splitinfer/optimize.hpp"
#include "splitinfer/oracle.hpp"
#include "splitinfer/planner.hpp"
#include "splitinfer/routing.hpp"
#include "splitinfer/runtime.hpp"
#include "splitinfer/synthetic.hpp"

namespace {

using namespace splitinfer;

void BM_SplitRanges(benchmark::State& state) {
    const std::vector<double> ratings(static_cast<std::size_t>(state.range(0)), 1.5);
    for (auto _ : state) benchmark::DoNotOptimize(split_ranges(ratings, 1'000'000));
}
BENCHMARK(BM_SplitRanges)->Arg(3)->Arg(8)->Arg(120);

void BM_BuildAssignMap(benchmark::State& state) {
    const Model m = make_mobilenet_v2_like(1);
    const std::vector<double> ratings(static_cast<std::size_t>(state.range(0)), 1.0);
    const Layer& next = m.layer(1);
    for (auto _ : state) benchmark::DoNotOptimize(build_assign_map(next, ratings));
}
BENCHMARK(BM_BuildAssignMap)->Arg(3)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_MobileNetAccounting(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Model m = quantize(make_mobilenet_v2_like(1), random_input({3, 112, 112}, 3));
    const Fleet fleet = homogeneous_fleet(n);
    PlannerOptions po;
    po.build_maps = false;
    const PlanResult pr = plan_for_fleet(m, fleet, Strategy::optimized, po);
    RuntimeOptions ro;
    ro.compute_values = false;
    ro.enforce_ram_limit = false;
    ro.record_events = false;
    const std::vector<float> x(m.input_shape().neuron_count(), 0.0f);
    for (auto _ : state) benchmark::DoNotOptimize(execute_inference(pr.plan, m, x, fleet, {}, ro));
}
BENCHMARK(BM_MobileNetAccounting)->Arg(3)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_TinyReferenceForward(benchmark::State& state) {
    const Model m = fuse_conv_bn_relu(make_tiny_cnn(42));
    const auto x = random_input(m.input_shape(), 1);
    for (auto _ : state) benchmark::DoNotOptimize(oracle::reference_forward(m, x));
}
BENCHMARK(BM_TinyReferenceForward);

}  // namespace

BENCHMARK_MAIN();
