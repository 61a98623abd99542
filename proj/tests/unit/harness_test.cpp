// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include "splitinfer/error.hpp"
#include "splitinfer/harness.hpp"
#include "splitinfer/model_io.hpp"
#include "splitinfer/optimize.hpp"
#include "splitinfer/synthetic.hpp"

namespace splitinfer {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("splitinfer_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

constexpr const char* kTableRows =
    "frequency_mhz,workload_kb,time_s\n"
    "600,510.29,6.41\n450,510.29,7.52\n150,510.29,16.11\n"
    "600,421.50,5.51\n450,421.50,6.21\n150,421.50,13.80\n"
    "600,730.39,7.40\n450,730.39,9.06\n150,730.39,21.34\n";

TEST(Flags, Lists) {
    EXPECT_EQ(parse_sweep("1-3,5"), (std::vector<std::size_t>{1, 2, 3, 5}));
    EXPECT_THROW(parse_sweep("0"), ParseError);
    EXPECT_THROW(parse_sweep("4-2"), ParseError);
    EXPECT_THROW(parse_sweep("x"), ParseError);
    EXPECT_EQ(parse_delay_list("20/5/10"), (std::vector<double>{20, 5, 10}));
    EXPECT_THROW(parse_delay_list("20/-5"), ParseError);
    EXPECT_EQ(parse_precision("i8"), Precision::int8);
    EXPECT_THROW(parse_precision("f16"), ParseError);
}

TEST(Config, MirrorsFlags) {
    const json doc = {{"strategy", "freq_only"}, {"precision", "i8"},  {"workers", 5},
                      {"emulate-table2", "20/5/10"}, {"sweep", "1-3"}, {"serialize-coordinator-sends", true},
                      {"seed", 7}};
    const ExperimentConfig c = parse_config(doc);
    EXPECT_EQ(c.strategy, Strategy::freq_only);
    EXPECT_EQ(c.precision, Precision::int8);
    EXPECT_EQ(c.workers, 5u);
    EXPECT_EQ(c.packet_delay_ms, (std::vector<double>{20, 5, 10}));
    EXPECT_EQ(c.sweep, (std::vector<std::size_t>{1, 2, 3}));
    EXPECT_TRUE(c.serialize_coordinator_sends);
    EXPECT_EQ(c.seed, 7u);
    const ExperimentConfig back = parse_config(config_to_json(c));
    EXPECT_EQ(config_to_json(back), config_to_json(c));
    EXPECT_THROW(parse_config({{"colour", "blue"}}), ParseError);
    EXPECT_THROW(parse_config({{"workers", 0}}), ParseError);
    EXPECT_THROW(parse_config({{"sweep", {1, 0}}}), ParseError);
}

TEST(Config, DelaysCycleOverFleet) {
    ExperimentConfig c;
    c.workers = 4;
    c.packet_delay_ms = {20, 5};
    const Fleet f = load_fleet(c);
    EXPECT_DOUBLE_EQ(f.workers[2].packet_delay_s, 0.020);
    EXPECT_DOUBLE_EQ(f.workers[3].packet_delay_s, 0.005);
}

TEST(ExitCodes, DistinctPerFailure) {
    const std::set<int> codes{kExitOk, kExitParse, kExitInfeasible, kExitOutOfMemory, kExitEquivalence, kExitModel};
    EXPECT_EQ(codes.size(), 6u);
    EXPECT_EQ(exit_code_for(ParseError("x")), kExitParse);
    EXPECT_EQ(exit_code_for(InfeasibleCapacityError(1, 2)), kExitInfeasible);
    EXPECT_EQ(exit_code_for(OutOfMemoryFault(0, 0, 2, 1)), kExitOutOfMemory);
    EXPECT_EQ(exit_code_for(StructuralError(0, "x")), kExitModel);
    EXPECT_EQ(exit_code_for(UnsupportedOperatorError("x")), kExitModel);
}

TEST(Plan, TinyCnnFragmentsAddUp) {
    ExperimentConfig c;
    c.out = scratch("plan");
    c.strategy = Strategy::evenly;
    std::ostringstream log;
    ASSERT_EQ(cmd_plan(c, log), kExitOk);
    const Model m = load_model(c);
    // Every kernel or column counted once per worker that owns it.
    std::size_t expected = 0;
    const json plan = json::parse(slurp(c.out / "plan.json"));
    for (const auto& l : plan["layers"]) {
        const Layer& layer = m.layer(l["layer"].get<std::size_t>());
        for (const auto& w : l["workers"])
            expected += w["units"].size() * weight_unit_bytes(layer, m.precision());
    }
    std::size_t total = 0;
    for (int w = 0; w < 3; ++w) {
        const fs::path f = c.out / "fragments" / ("worker_" + std::to_string(w) + ".json");
        ASSERT_TRUE(fs::exists(f));
        total += json::parse(slurp(f))["fragment_bytes"].get<std::size_t>();
    }
    EXPECT_FALSE(fs::exists(c.out / "fragments" / "worker_3.json"));
    EXPECT_EQ(total, expected);
    EXPECT_GE(total, m.weight_bytes());
    EXPECT_EQ(plan["ratings"], json({1.0, 1.0, 1.0}));
}

TEST(Plan, ByteIdenticalReruns) {
    ExperimentConfig c;
    c.out = scratch("plan_a");
    c.precision = Precision::int8;
    std::ostringstream log;
    ASSERT_EQ(cmd_plan(c, log), kExitOk);
    ExperimentConfig d = c;
    d.out = scratch("plan_b");
    ASSERT_EQ(cmd_plan(d, log), kExitOk);
    EXPECT_EQ(slurp(c.out / "plan.json"), slurp(d.out / "plan.json"));
    EXPECT_EQ(slurp(c.out / "fragments/worker_1.json"), slurp(d.out / "fragments/worker_1.json"));
}

TEST(Run, SingleWorkerHasNoCommunication) {
    ExperimentConfig c;
    c.workers = 1;
    c.out = scratch("run1");
    std::ostringstream log;
    ASSERT_EQ(cmd_run(c, log), kExitOk);
    const json s = json::parse(slurp(c.out / "summary.json"));
    EXPECT_EQ(s["trace"]["comm_s"], 0.0);
    EXPECT_EQ(s["trace"]["total_traffic_bytes"], 0);
    EXPECT_TRUE(s["equivalence"]["pass"].get<bool>());
    EXPECT_TRUE(fs::exists(c.out / "trace.csv"));
}

TEST(Run, TraceIsDeterministic) {
    ExperimentConfig c;
    c.workers = 3;
    c.packet_delay_ms = {2, 0, 1};
    c.out = scratch("run_a");
    std::ostringstream log;
    ASSERT_EQ(cmd_run(c, log), kExitOk);
    ExperimentConfig d = c;
    d.out = scratch("run_b");
    ASSERT_EQ(cmd_run(d, log), kExitOk);
    EXPECT_EQ(slurp(c.out / "trace.csv"), slurp(d.out / "trace.csv"));
    json a = json::parse(slurp(c.out / "summary.json")), b = json::parse(slurp(d.out / "summary.json"));
    a.erase("config");
    b.erase("config");
    EXPECT_EQ(a, b);
}

TEST(Run, Int8PassesBothChecks) {
    ExperimentConfig c;
    c.workers = 5;
    c.precision = Precision::int8;
    const Model m = load_model(c);
    const auto out = run_experiment(m, load_fleet(c), load_input(c, m), c);
    EXPECT_EQ(out.exit_code, kExitOk);
    // Integer arithmetic matches exactly; only the final float rounding of the dequantized output remains.
    EXPECT_LT(out.summary["equivalence"]["max_error"].get<double>(), 1e-6);
    EXPECT_TRUE(out.summary["equivalence"]["float_reference"]["pass"].get<bool>());
}

TEST(Run, OutOfMemoryIsRecorded) {
    ExperimentConfig c;
    c.preset = "mobilenet_v2_like";
    c.precision = Precision::int8;
    c.workers = 1;
    c.timing_only = true;
    c.out = scratch("oom");
    std::ostringstream log;
    EXPECT_EQ(cmd_run(c, log), kExitOutOfMemory);
    const json s = json::parse(slurp(c.out / "summary.json"));
    EXPECT_EQ(s["fault"]["kind"], "out_of_memory");
    EXPECT_EQ(s["fault"]["worker"], 0);
    EXPECT_TRUE(s["fault"].contains("layer"));
}

TEST(Run, CaseOneTie) {
    ExperimentConfig c;
    c.preset = "mobilenet_v2_like";
    c.precision = Precision::int8;
    c.timing_only = true;
    const Model m = load_model(c);
    const Fleet f = load_fleet(c);
    const auto x = load_input(c, m);
    std::vector<double> t;
    for (Strategy s : {Strategy::evenly, Strategy::freq_only, Strategy::optimized}) {
        c.strategy = s;
        const auto o = run_experiment(m, f, x, c);
        ASSERT_EQ(o.exit_code, kExitOk);
        t.push_back(o.summary["trace"]["makespan_s"].get<double>());
    }
    EXPECT_EQ(t[0], t[1]);
    EXPECT_EQ(t[1], t[2]);
}

TEST(SweepMemory, CsvShape) {
    ExperimentConfig c;
    c.sweep = {1, 2, 4};
    c.out = scratch("sweep");
    std::ostringstream log;
    ASSERT_EQ(cmd_sweep_memory(c, log), kExitOk);
    const std::string csv = slurp(c.out / "memory_sweep.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "workers,max_peak_kb,ram_budget_kb,over_budget,compute_s,makespan_s,total_bytes");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Calibrate, TableRows) {
    const fs::path dir = scratch("cal");
    std::ofstream(dir / "rows.csv") << kTableRows;
    ExperimentConfig c;
    c.records = dir / "rows.csv";
    c.out = dir;
    std::ostringstream log;
    ASSERT_EQ(cmd_calibrate(c, log), kExitOk);
    const K1Table t = parse_k1_table(read_json_file(dir / "k1_table.json"));
    ASSERT_EQ(t.entries().size(), 3u);
    for (const auto& e : t.entries()) {
        EXPECT_GE(e.k1, 0.127);
        EXPECT_LE(e.k1, 0.228);
        EXPECT_EQ(e.samples, 3u);
    }
}

TEST(Calibrate, SingleRecordAndFallback) {
    const fs::path dir = scratch("cal1");
    std::ofstream(dir / "one.csv") << "600,510.29,6.41\n";
    ExperimentConfig c;
    c.records = dir / "one.csv";
    c.out = dir;
    std::ostringstream log;
    ASSERT_EQ(cmd_calibrate(c, log), kExitOk);
    const K1Table t = parse_k1_table(read_json_file(dir / "k1_table.json"));
    ASSERT_EQ(t.entries().size(), 1u);
    const auto at150 = t.lookup(150);
    EXPECT_FALSE(at150.exact);
    EXPECT_EQ(at150.source_frequency_mhz, 600);
    std::ofstream(dir / "bad.csv") << "600,510.29,6.41\n600,oops,1\n";
    c.records = dir / "bad.csv";
    try {
        cmd_calibrate(c, log);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(GenModel, DeterministicAndPresets) {
    ExperimentConfig c;
    c.out = scratch("gen_a");
    std::ostringstream log;
    ASSERT_EQ(cmd_gen_model(c, log), kExitOk);
    ExperimentConfig d = c;
    d.out = scratch("gen_b");
    ASSERT_EQ(cmd_gen_model(d, log), kExitOk);
    EXPECT_EQ(slurp(c.out / "model.json"), slurp(d.out / "model.json"));
    c.preset = "resnet";
    EXPECT_THROW(cmd_gen_model(c, log), ParseError);
    c.preset = "custom";
    c.custom_layers = "conv:4:3:1:1:relu";
    c.custom_input = {2, 5, 5};
    ASSERT_EQ(cmd_gen_model(c, log), kExitOk);
    EXPECT_EQ(read_model(c.out / "model.json").output_shape(), (TensorShape{4, 5, 5}));
}

TEST(Oracle, WritesOutput) {
    ExperimentConfig c;
    c.out = scratch("oracle");
    std::ostringstream log;
    ASSERT_EQ(cmd_oracle(c, log), kExitOk);
    const json doc = json::parse(slurp(c.out / "oracle_output.json"));
    EXPECT_EQ(doc["output"].size(), load_model(c).output_shape().neuron_count());
}

#ifdef SPLITINFER_CLI
int cli(const std::string& args) {
    const int rc = std::system((std::string(SPLITINFER_CLI) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("cli");
    const std::string out = " --out " + dir.string();
    EXPECT_EQ(cli("run --workers 2" + out), kExitOk);
    EXPECT_EQ(cli("run --strategy fastest" + out), kExitParse);
    EXPECT_EQ(cli("run --precision f16" + out), kExitParse);
    EXPECT_EQ(cli("frobnicate"), kExitParse);
    std::ofstream(dir / "small.json") << R"([{"id":0,"flash_limit_kb":1},{"id":1,"flash_limit_kb":1}])";
    EXPECT_EQ(cli("plan --fleet " + (dir / "small.json").string() + out), kExitInfeasible);
    EXPECT_EQ(cli("run --preset mobilenet_v2_like --precision i8 --workers 1 --timing-only" + out),
              kExitOutOfMemory);
    std::ofstream(dir / "broken.json") << R"({"input_shape":[1,4,4],"layers":[{"kind":"conv","kernel":[3,3],
        "stride":1,"padding":0,"out_channels":1,"out_shape":[1,4,4],"weights":[1,1,1,1,1,1,1,1,1],"bias":[0]}]})";
    EXPECT_EQ(cli("run --model " + (dir / "broken.json").string() + out), kExitModel);
    std::ofstream(dir / "cfg.json") << R"({"workers": 3, "strategy": "evenly"})";
    EXPECT_EQ(cli("plan --config " + (dir / "cfg.json").string() + out), kExitOk);
    EXPECT_EQ(json::parse(slurp(dir / "plan.json"))["strategy"], "evenly");
    EXPECT_EQ(cli("plan --config " + (dir / "cfg.json").string() + " --strategy freq_only" + out), kExitOk);
    EXPECT_EQ(json::parse(slurp(dir / "plan.json"))["strategy"], "freq_only");
}
#endif

}  // namespace
}  // namespace splitinfer
