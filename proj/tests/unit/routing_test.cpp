// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <memory>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "splitinfer/error.hpp"
#include "splitinfer/oracle.hpp"
#include "splitinfer/routing.hpp"
#include "splitinfer/synthetic.hpp"
#include "test_util.hpp"

namespace splitinfer {
namespace {

using testing::make_conv;
using testing::make_linear;
using testing::random_ratings;

TEST(Bitset, WideWorkerCounts) {
    DynamicBitset b(120);
    EXPECT_EQ(b.words().size(), 2u);
    b.set(119);
    b.set(3);
    EXPECT_TRUE(b.test(119));
    EXPECT_FALSE(b.test(118));
    EXPECT_EQ(b.count(), 2u);
    EXPECT_EQ(b.members(), (std::vector<std::size_t>{3, 119}));
    EXPECT_THROW(b.set(120), BoundsError);
}

TEST(AssignMap, PointwiseSingleWorker) {
    const Layer next = make_conv({3, 4, 4}, 2, 1, 1, 0);
    const AssignMap m = build_assign_map(next, std::vector<double>{1});
    ASSERT_EQ(m.neurons, 48u);
    for (std::size_t i = 0; i < m.neurons; ++i) {
        EXPECT_TRUE(m.test(i, 0));
        EXPECT_EQ(m.popcount(i), 1u);
    }
}

TEST(AssignMap, OverlappingRows) {
    const Layer next = make_conv({1, 4, 4}, 1, 3, 1, 1);
    const AssignMap m = build_assign_map(next, std::vector<double>{1, 1});
    const TensorShape s{1, 4, 4};
    for (std::size_t w = 0; w < 4; ++w) {
        EXPECT_TRUE(m.test(s.index(0, 0, w), 0));
        EXPECT_FALSE(m.test(s.index(0, 0, w), 1));
        EXPECT_TRUE(m.test(s.index(0, 1, w), 0));
        EXPECT_TRUE(m.test(s.index(0, 1, w), 1));
        EXPECT_FALSE(m.test(s.index(0, 3, w), 0));
        EXPECT_TRUE(m.test(s.index(0, 3, w), 1));
    }
}

TEST(AssignMap, LinearClaimsEverything) {
    const Layer next = make_linear({2, 3, 3}, 7);
    const AssignMap m = build_assign_map(next, std::vector<double>{1, 2, 3});
    for (std::size_t i = 0; i < m.neurons; ++i) EXPECT_EQ(m.entry(i).members(), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(AssignMap, PartitionMismatchIsCaught) {
    const Layer next = make_conv({1, 4, 4}, 1, 3, 1, 1);
    const LayerPartition p = split_layer(next, std::vector<double>{1, 3}, Precision::float32, 0);
    EXPECT_THROW(build_assign_map(next, std::vector<double>{1, 1}, &p), ConsistencyError);
}

TEST(RouteMap, SingleProducerSingleConsumer) {
    const Layer layer = make_conv({1, 3, 3}, 2, 1, 1, 0);
    const Layer next = make_conv({2, 3, 3}, 2, 1, 1, 0);
    auto assign = std::make_shared<const AssignMap>(build_assign_map(next, std::vector<double>{1}));
    const RouteMap r = build_route_map(layer, std::vector<double>{1}, assign);
    ASSERT_EQ(r.size(), 18u);
    for (std::size_t i = 0; i < r.size(); ++i) {
        const RouteEntry e = r.entry(i);
        EXPECT_EQ(e.producer, 0);
        EXPECT_EQ(e.consumers.members(), (std::vector<std::size_t>{0}));
    }
    EXPECT_EQ(r.runs().size(), 1u);
}

TEST(RouteMap, TwoByTwo) {
    const Layer layer = make_conv({1, 4, 4}, 1, 3, 1, 1);
    const Layer next = make_conv({1, 4, 4}, 1, 3, 1, 1, false, 2);
    auto assign = std::make_shared<const AssignMap>(build_assign_map(next, std::vector<double>{1, 1}));
    const RouteMap r = build_route_map(layer, std::vector<double>{1, 1}, assign);
    const TensorShape s{1, 4, 4};
    for (std::size_t w = 0; w < 4; ++w) {
        const RouteEntry e = r.entry(s.index(0, 1, w));
        EXPECT_EQ(e.producer, 0);
        EXPECT_EQ(e.consumers.members(), (std::vector<std::size_t>{0, 1}));
        EXPECT_EQ(r.entry(s.index(0, 3, w)).producer, 1);
    }
}

TEST(RouteMap, ProducersMustTile) {
    auto assign = std::make_shared<const AssignMap>(4, 1);
    const std::vector<IndexRange> gap{{0, 2}, {3, 4}};
    EXPECT_THROW(build_route_map(gap, assign), ConsistencyError);
}

TEST(Plan, OneLayerModel) {
    const Model m({1, 4, 4}, {make_conv({1, 4, 4}, 2, 3, 1, 1)});
    const PartitionPlan p = plan_all_boundaries(m, std::vector<double>{1, 1});
    ASSERT_EQ(p.boundaries.size(), 2u);
    EXPECT_TRUE(p.boundaries[0].producer_ranges.empty());
    EXPECT_EQ(p.boundaries[0].route->producer(0), kCoordinator);
    const Boundary& out = p.boundaries[1];
    EXPECT_FALSE(out.consumer_layer.has_value());
    EXPECT_TRUE(out.coordinator_keeps);
    EXPECT_EQ(out.assign->consumers, 0u);
    ASSERT_TRUE(out.route);
    EXPECT_EQ(out.route->size(), 32u);
    for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(out.route->entry(i).consumers.count(), 0u);
}

TEST(Plan, ResidualSourcesAndGlueAreKept) {
    const Model m = make_custom("conv:4:3:1:1:relu,conv:4:3:1:1,residual:0,gap,linear:3", {2, 6, 6}, 9);
    const PartitionPlan p = plan_all_boundaries(m, std::vector<double>{1, 2});
    EXPECT_TRUE(p.boundary_for_tensor(0).coordinator_keeps);   // skip source
    EXPECT_TRUE(p.boundary_for_tensor(1).coordinator_keeps);   // feeds the add
    EXPECT_TRUE(p.boundary_for_tensor(2).coordinator_keeps);   // feeds GAP
    EXPECT_FALSE(p.partitions[2].has_value());
    EXPECT_FALSE(p.partitions[3].has_value());
    EXPECT_TRUE(p.boundary_for_tensor(3).route->producer(0) == kCoordinator);
}

TEST(Plan, WideFleet) {
    const Model m = make_custom("conv:8:3:1:1:relu,linear:130", {2, 8, 8}, 4);
    const std::vector<double> ratings(120, 1.0);
    const PartitionPlan p = plan_all_boundaries(m, ratings);
    const AssignMap& a = *p.boundary_for_tensor(0).assign;
    EXPECT_EQ(a.consumers, 120u);
    EXPECT_EQ(a.words, 2u);
    for (std::size_t i = 0; i < a.neurons; ++i) EXPECT_TRUE(a.test(i, 119));
}

TEST(Plan, RequiresFusion) {
    EXPECT_THROW(plan_all_boundaries(make_tiny_cnn(1), std::vector<double>{1}), UnsupportedOperatorError);
}

// Brute-force perturbation dependencies against the maps, exhaustively over neurons.
void check_routing_exact(const Model& m, std::span<const double> ratings) {
    const PartitionPlan p = plan_all_boundaries(m, ratings);
    for (std::size_t l = 0; l < m.size(); ++l) {
        if (!p.partitions[l]) continue;
        const Boundary& b = p.boundaries[l];
        const auto deps = oracle::brute_force_dependency_sets(m.layer(l));
        const auto& workers = p.partitions[l]->workers;
        ASSERT_EQ(b.route->size(), b.shape.neuron_count());
        for (std::size_t r = 0; r < workers.size(); ++r) {
            std::set<std::size_t> need;
            for (std::size_t n = workers[r].range.begin; n < workers[r].range.end; ++n)
                need.insert(deps[n].begin(), deps[n].end());
            for (std::size_t i = 0; i < b.assign->neurons; ++i)
                ASSERT_EQ(b.assign->test(i, r), need.count(i) == 1) << "layer " << l << " worker " << r << " input " << i;
        }
        // Demand counts equal the map, split by producer.
        for (std::size_t r = 0; r < workers.size(); ++r) {
            std::vector<std::size_t> by_producer(b.demand.producers, 0);
            for (std::size_t i = 0; i < b.assign->neurons; ++i) {
                if (!b.assign->test(i, r)) continue;
                const int prod = b.route->producer(i);
                ++by_producer[prod == kCoordinator ? 0 : static_cast<std::size_t>(prod)];
            }
            for (std::size_t q = 0; q < b.demand.producers; ++q) ASSERT_EQ(b.demand.from(q, r), by_producer[q]);
        }
        // Producers recorded in the route are the owners in the previous partition.
        if (!b.producer_ranges.empty()) {
            for (std::size_t q = 0; q < b.producer_ranges.size(); ++q)
                for (std::size_t i = b.producer_ranges[q].begin; i < b.producer_ranges[q].end; ++i)
                    ASSERT_EQ(b.route->producer(i), static_cast<int>(q));
        }
    }
}

TEST(RoutingProperty, CompleteAndMinimal) {
    std::mt19937_64 rng(21);
    RandomCnnLimits lim;
    lim.max_channels = 8;
    lim.max_spatial = 8;
    for (int trial = 0; trial < 60; ++trial) {
        const Model m = make_random_cnn(rng, lim);
        for (std::size_t n : {1u, 2u, 3u, 5u}) {
            const auto ratings = random_ratings(rng, n);
            ASSERT_NO_FATAL_FAILURE(check_routing_exact(m, ratings)) << "trial " << trial;
        }
    }
}

TEST(RoutingProperty, DemandMatchesMapOnMobileNetPrefix) {
    const Model m = make_custom(
        "conv:8:3:2:1:relu6,dwconv:3:1:1:relu6,conv:4:1:1:0,conv:12:1:1:0:relu6,dwconv:3:2:1:relu6,conv:6:1:1:0",
        {3, 16, 16}, 2);
    ASSERT_NO_FATAL_FAILURE(check_routing_exact(m, std::vector<double>{1, 2, 3, 1.5, 0.7, 2.2, 0.9}));
}

TEST(RoutingProperty, Deterministic) {
    const Model m = make_custom("conv:6:3:1:1:relu,dwconv:3:1:1,linear:9", {3, 7, 7}, 5);
    const std::vector<double> r{1.0, 2.5, 0.7};
    const PartitionPlan a = plan_all_boundaries(m, r);
    const PartitionPlan b = plan_all_boundaries(m, r);
    for (std::size_t t = 0; t < a.boundaries.size(); ++t) {
        EXPECT_EQ(a.boundaries[t].assign->bits, b.boundaries[t].assign->bits);
        EXPECT_EQ(a.boundaries[t].demand.counts, b.boundaries[t].demand.counts);
    }
}

}  // namespace
}  // namespace splitinfer
