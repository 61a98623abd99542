// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include "splitinfer/harness.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "splitinfer/error.hpp"
#include "splitinfer/model_io.hpp"
#include "splitinfer/optimize.hpp"
#include "splitinfer/synthetic.hpp"

namespace splitinfer {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const json::exception*>(&e) ||
        dynamic_cast<const std::invalid_argument*>(&e) || dynamic_cast<const std::out_of_range*>(&e))
        return kExitParse;
    if (dynamic_cast<const InfeasibleCapacityError*>(&e)) return kExitInfeasible;
    if (dynamic_cast<const OutOfMemoryFault*>(&e) || dynamic_cast<const DeploymentFault*>(&e))
        return kExitOutOfMemory;
    if (dynamic_cast<const Error*>(&e)) return kExitModel;
    return 1;
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(sep, pos);
        out.push_back(trim(s.substr(pos, next - pos)));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

template <typename T>
T parse_number(const std::string& text, std::string_view what) {
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (text.empty() || ec != std::errc{} || ptr != end)
        throw ParseError(fmt::format("bad {} '{}'", what, text));
    return value;
}

std::string normalized_key(std::string key) {
    std::replace(key.begin(), key.end(), '-', '_');
    return key;
}

void ensure_dir(const fs::path& dir) {
    if (!dir.empty()) fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
    ensure_dir(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << text;
}

std::string precision_flag(Precision p) { return p == Precision::int8 ? "i8" : "f32"; }

}  // namespace

Precision parse_precision(std::string_view s) {
    if (s == "f32" || s == "float32") return Precision::float32;
    if (s == "i8" || s == "int8") return Precision::int8;
    throw ParseError(fmt::format("unknown precision '{}' (f32 or i8)", s));
}

std::vector<double> parse_delay_list(std::string_view s) {
    std::vector<double> out;
    for (const auto& item : split(s, '/')) {
        const double v = parse_number<double>(item, "delay");
        if (!(v >= 0.0)) throw ParseError(fmt::format("negative delay '{}'", item));
        out.push_back(v);
    }
    return out;
}

std::vector<std::size_t> parse_sweep(std::string_view s) {
    std::vector<std::size_t> out;
    for (const auto& item : split(s, ',')) {
        const auto dash = item.find('-');
        std::size_t lo, hi;
        if (dash == std::string::npos) {
            lo = hi = parse_number<std::size_t>(item, "worker count");
        } else {
            lo = parse_number<std::size_t>(trim(item.substr(0, dash)), "worker count");
            hi = parse_number<std::size_t>(trim(item.substr(dash + 1)), "worker count");
        }
        if (lo == 0 || hi < lo) throw ParseError(fmt::format("bad sweep item '{}'", item));
        for (std::size_t n = lo; n <= hi; ++n) out.push_back(n);
    }
    return out;
}

ExperimentConfig parse_config(const json& doc, ExperimentConfig c) {
    if (!doc.is_object()) throw ParseError("config must be a JSON object");
    for (const auto& [raw_key, v] : doc.items()) {
        const std::string key = normalized_key(raw_key);
        if (key == "model") c.model = v.get<std::string>();
        else if (key == "preset") c.preset = v.get<std::string>();
        else if (key == "custom_layers") c.custom_layers = v.get<std::string>();
        else if (key == "custom_input") {
            const auto dims = v.get<std::vector<std::size_t>>();
            if (dims.size() != 3) throw ParseError("custom_input needs [channels, height, width]");
            c.custom_input = {dims[0], dims[1], dims[2]};
        } else if (key == "fleet") c.fleet = v.get<std::string>();
        else if (key == "k1_table") c.k1_table = v.get<std::string>();
        else if (key == "records") c.records = v.get<std::string>();
        else if (key == "input") c.input = v.get<std::string>();
        else if (key == "strategy") c.strategy = parse_strategy(v.get<std::string>());
        else if (key == "precision") c.precision = parse_precision(v.get<std::string>());
        else if (key == "workers") c.workers = v.get<std::size_t>();
        else if (key == "sweep") {
            c.sweep = v.is_string() ? parse_sweep(v.get<std::string>()) : v.get<std::vector<std::size_t>>();
        } else if (key == "emulate_table2") {
            c.packet_delay_ms =
                v.is_string() ? parse_delay_list(v.get<std::string>()) : v.get<std::vector<double>>();
        } else if (key == "out") c.out = v.get<std::string>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "serialize_coordinator_sends") c.serialize_coordinator_sends = v.get<bool>();
        else if (key == "timing_only") c.timing_only = v.get<bool>();
        else throw ParseError(fmt::format("unknown config key '{}'", raw_key));
    }
    if (c.workers == 0) throw ParseError("workers must be at least 1");
    for (std::size_t n : c.sweep)
        if (n == 0) throw ParseError("sweep values must be at least 1");
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["model"] = c.model.string();
    j["preset"] = c.preset;
    if (!c.custom_layers.empty()) {
        j["custom_layers"] = c.custom_layers;
        j["custom_input"] = {c.custom_input.channels, c.custom_input.height, c.custom_input.width};
    }
    j["fleet"] = c.fleet.string();
    j["k1_table"] = c.k1_table.string();
    j["input"] = c.input.string();
    j["strategy"] = std::string(to_string(c.strategy));
    if (c.precision) j["precision"] = precision_flag(*c.precision);
    j["workers"] = c.workers;
    j["sweep"] = c.sweep;
    j["emulate_table2"] = c.packet_delay_ms;
    j["out"] = c.out.string();
    j["seed"] = c.seed;
    j["serialize_coordinator_sends"] = c.serialize_coordinator_sends;
    j["timing_only"] = c.timing_only;
    return j;
}

namespace {

Model preset_model(const ExperimentConfig& c) {
    if (c.preset == "tiny_cnn") return make_tiny_cnn(c.seed);
    if (c.preset == "mobilenet_v2_like") return make_mobilenet_v2_like(c.seed);
    if (c.preset == "custom") {
        if (c.custom_layers.empty()) throw ParseError("custom preset needs a layer list");
        return make_custom(c.custom_layers, c.custom_input, c.seed);
    }
    throw ParseError(fmt::format("unknown preset '{}' (tiny_cnn, mobilenet_v2_like, custom)", c.preset));
}

std::vector<float> input_for(const ExperimentConfig& c, const TensorShape& shape) {
    if (c.input.empty()) return random_input(shape, c.seed);
    auto x = read_tensor(c.input);
    if (x.size() != shape.neuron_count())
        throw BoundsError(fmt::format("input has {} values, model expects {}", x.size(), shape.neuron_count()));
    return x;
}

}  // namespace

Model load_model(const ExperimentConfig& c) {
    Model m = c.model.empty() ? preset_model(c) : read_model(c.model);
    if (m.needs_fusion()) m = fuse_conv_bn_relu(m);
    if (c.precision && *c.precision != m.precision()) {
        if (*c.precision == Precision::int8) {
            m = quantize(m, input_for(c, m.input_shape()));
        } else {
            // int8 models keep their float weights; drop the codes back to them.
            m = Model(m.input_shape(), m.layers(), Precision::float32);
        }
    }
    return m;
}

std::vector<float> load_input(const ExperimentConfig& c, const Model& model) {
    return input_for(c, model.input_shape());
}

Fleet load_fleet(const ExperimentConfig& c) {
    Fleet fleet = c.fleet.empty() ? homogeneous_fleet(c.workers) : read_fleet(c.fleet);
    if (!c.k1_table.empty() && fleet.k1_table.empty()) fleet.k1_table = parse_k1_table(read_json_file(c.k1_table));
    if (!c.packet_delay_ms.empty()) {
        for (std::size_t r = 0; r < fleet.size(); ++r)
            fleet.workers[r].packet_delay_s = c.packet_delay_ms[r % c.packet_delay_ms.size()] / 1000.0;
    }
    for (const auto& w : fleet.workers) validate_profile(w);
    return fleet;
}

int cmd_plan(const ExperimentConfig& c, std::ostream& log) {
    const Model model = load_model(c);
    const Fleet fleet = load_fleet(c);
    const PlanResult pr = plan_for_fleet(model, fleet, c.strategy);
    write_text(c.out / "plan.json", plan_to_json(pr).dump(1) + "\n");
    const auto bytes = pr.plan.fragment_bytes();
    fmt::print(log, "{} plan, {} workers, {} redistribution iteration(s)\n", to_string(c.strategy), fleet.size(),
               pr.redistribution_iterations);
    fmt::print(log, "{:>6} {:>12} {:>12} {:>14}\n", "worker", "rating", "predicted_kb", "fragment_bytes");
    for (std::size_t r = 0; r < fleet.size(); ++r) {
        write_text(c.out / "fragments" / fmt::format("worker_{}.json", r),
                   worker_fragment_json(model, pr.plan, r).dump() + "\n");
        fmt::print(log, "{:>6} {:>12.6g} {:>12.2f} {:>14}\n", r, pr.ratings[r], pr.predicted_sizes_kb[r], bytes[r]);
    }
    return kExitOk;
}

RunOutcome run_experiment(const Model& model, const Fleet& fleet, std::span<const float> input,
                          const ExperimentConfig& c) {
    RunOutcome out;
    PlannerOptions popt;
    popt.build_maps = !c.timing_only;
    const PlanResult pr = plan_for_fleet(model, fleet, c.strategy, popt);

    TimingModel timing;
    timing.serialize_coordinator_sends = c.serialize_coordinator_sends;
    RuntimeOptions ropt;
    ropt.compute_values = !c.timing_only;
    ropt.record_events = false;

    json& s = out.summary;
    s["config"] = config_to_json(c);
    s["strategy"] = std::string(to_string(c.strategy));
    s["precision"] = precision_flag(model.precision());
    s["ratings"] = pr.ratings;
    s["k1"] = pr.k1;
    s["kc"] = pr.kc;

    try {
        out.result = execute_inference(pr.plan, model, input, fleet, timing, ropt);
    } catch (const OutOfMemoryFault& e) {
        out.fault = {{"kind", "out_of_memory"}, {"worker", e.worker()}, {"layer", e.layer()},
                     {"bytes", e.bytes()},       {"limit", e.limit()},   {"message", e.what()}};
    } catch (const DeploymentFault& e) {
        out.fault = {{"kind", "deployment"}, {"worker", e.worker()}, {"message", e.what()}};
    }
    if (!out.fault.is_null()) {
        s["fault"] = out.fault;
        s["equivalence"] = nullptr;
        out.exit_code = kExitOutOfMemory;
        return out;
    }

    const Trace& trace = out.result->trace;
    s["trace"] = trace_summary(trace);
    const TimingReport rep = simulate_timing(trace, fleet, timing);
    s["barrier_total_s"] = rep.total_s;
    s["barrier_compute_s"] = rep.compute_s;
    s["barrier_comm_s"] = rep.comm_s;

    std::size_t layer_worker_max = 0;
    for (const auto& st : trace.stats) layer_worker_max = std::max(layer_worker_max, st.bytes_in + st.bytes_out);
    s["activation_traffic_mb"] = static_cast<double>(trace.total_bytes()) / 1e6;
    s["max_layer_worker_traffic_kb"] = static_cast<double>(layer_worker_max) / 1024.0;

    if (c.timing_only) {
        s["equivalence"] = nullptr;
        return out;
    }

    const std::vector<float> split(out.result->output.begin(), out.result->output.end());
    json eq;
    bool pass = true;
    if (model.precision() == Precision::float32) {
        const auto ref = oracle::reference_forward(model, input);
        out.verdict = oracle::check_equivalence(split, ref.output, oracle::EquivalenceMode::float32);
        pass = out.verdict->pass;
        eq["oracle"] = "reference_forward";
    } else {
        const auto ref = oracle::reference_forward_quantized(model, input);
        out.verdict = oracle::check_equivalence(split, ref.output, oracle::EquivalenceMode::float32);
        // Against the float network the int8 run must stay inside the propagated rounding bound.
        const auto fref = oracle::reference_forward(model, input);
        const auto bound = oracle::quantization_error_bound(model, input);
        const auto fv = oracle::check_equivalence(split, fref.output, oracle::EquivalenceMode::int8, bound);
        eq["oracle"] = "reference_forward_quantized";
        eq["float_reference"] = {{"pass", fv.pass}, {"max_error", fv.max_error}, {"message", fv.message}};
        pass = out.verdict->pass && fv.pass;
    }
    eq["pass"] = pass;
    eq["max_error"] = out.verdict->max_error;
    eq["relative_error"] = out.verdict->relative_error;
    eq["message"] = out.verdict->message;
    s["equivalence"] = eq;
    if (!pass) out.exit_code = kExitEquivalence;
    return out;
}

int cmd_run(const ExperimentConfig& c, std::ostream& log) {
    const Model model = load_model(c);
    const Fleet fleet = load_fleet(c);
    const auto input = load_input(c, model);
    RunOutcome o = run_experiment(model, fleet, input, c);
    write_text(c.out / "summary.json", o.summary.dump(1) + "\n");
    if (o.result) {
        ensure_dir(c.out);
        std::ofstream csv(c.out / "trace.csv", std::ios::binary);
        write_trace_csv(o.result->trace, csv);
    }
    if (!o.fault.is_null()) {
        fmt::print(log, "fault: {}\n", o.fault["message"].get<std::string>());
        return o.exit_code;
    }
    const json& t = o.summary["trace"];
    fmt::print(log, "makespan {:.6f} s, compute {:.6f} s, comm {:.6f} s, traffic {} B, max peak {:.2f} KB\n",
               t["makespan_s"].get<double>(), t["compute_s"].get<double>(), t["comm_s"].get<double>(),
               t["total_traffic_bytes"].get<std::size_t>(), t["max_peak_kb"].get<double>());
    if (o.verdict) {
        const json& eq = o.summary["equivalence"];
        fmt::print(log, "equivalence {} (max error {:.3g})\n", eq["pass"].get<bool>() ? "pass" : "FAIL",
                   o.verdict->max_error);
    }
    return o.exit_code;
}

std::vector<MemoryPoint> sweep_memory(const Model& model, std::span<const std::size_t> counts,
                                      const WorkerProfile& prototype, Strategy strategy, const TimingModel& timing) {
    const std::vector<float> input(model.input_shape().neuron_count(), 0.0f);
    PlannerOptions popt;
    popt.build_maps = false;
    popt.cost = timing.cost;
    RuntimeOptions ropt;
    ropt.compute_values = false;
    ropt.enforce_ram_limit = false;
    ropt.enforce_flash_limit = false;
    ropt.record_events = false;

    std::vector<MemoryPoint> points;
    for (std::size_t n : counts) {
        if (n == 0) throw DomainError("sweep counts start at 1");
        const Fleet fleet = homogeneous_fleet(n, prototype);
        const PlanResult pr = plan_for_fleet(model, fleet, strategy, popt);
        const auto res = execute_inference(pr.plan, model, input, fleet, timing, ropt);
        MemoryPoint p;
        p.workers = n;
        p.max_peak_kb = static_cast<double>(res.trace.max_peak_bytes()) / 1024.0;
        p.ram_budget_kb = prototype.ram_limit_kb;
        p.compute_s = simulate_timing(res.trace, fleet, timing).compute_s;
        p.makespan_s = res.trace.makespan_s;
        p.total_bytes = res.trace.total_bytes();
        points.push_back(p);
    }
    return points;
}

void write_memory_csv(std::span<const MemoryPoint> points, std::ostream& out) {
    out << "workers,max_peak_kb,ram_budget_kb,over_budget,compute_s,makespan_s,total_bytes\n";
    for (const auto& p : points)
        fmt::print(out, "{},{:.3f},{:.3f},{},{:.9f},{:.9f},{}\n", p.workers, p.max_peak_kb, p.ram_budget_kb,
                   p.over_budget() ? 1 : 0, p.compute_s, p.makespan_s, p.total_bytes);
}

int cmd_sweep_memory(const ExperimentConfig& c, std::ostream& log) {
    const Model model = load_model(c);
    std::vector<std::size_t> counts = c.sweep;
    if (counts.empty())
        for (std::size_t n = 1; n <= c.workers; ++n) counts.push_back(n);
    WorkerProfile proto;
    if (!c.fleet.empty() || !c.packet_delay_ms.empty()) {
        const Fleet f = load_fleet(c);
        if (!f.workers.empty()) proto = f.workers.front();
        if (!proto.k1 && !f.k1_table.empty()) proto.k1 = worker_k1(proto, f.k1_table);
    }
    TimingModel timing;
    timing.serialize_coordinator_sends = c.serialize_coordinator_sends;
    const auto points = sweep_memory(model, counts, proto, c.strategy, timing);
    ensure_dir(c.out);
    std::ofstream csv(c.out / "memory_sweep.csv", std::ios::binary);
    write_memory_csv(points, csv);
    write_memory_csv(points, log);
    return kExitOk;
}

int cmd_calibrate(const ExperimentConfig& c, std::ostream& log) {
    if (c.records.empty()) throw ParseError("calibrate needs a records file");
    const auto records = parse_calibration_csv(read_text_file(c.records));
    fmt::print(log, "{:>14} {:>12} {:>10} {:>10}\n", "frequency_mhz", "workload_kb", "time_s", "k1");
    for (const auto& r : records)
        fmt::print(log, "{:>14.6g} {:>12.6g} {:>10.6g} {:>10.4f}\n", r.frequency_mhz, r.workload_kb, r.time_s,
                   calibrate_k1(r));
    const K1Table table = K1Table::from_records(records);
    write_text(c.out / "k1_table.json", k1_table_to_json(table).dump(1) + "\n");
    for (const auto& e : table.entries())
        fmt::print(log, "K1({} MHz) = {:.4f} over {} record(s)\n", e.frequency_mhz, e.k1, e.samples);
    return kExitOk;
}

int cmd_gen_model(const ExperimentConfig& c, std::ostream& log) {
    Model m = preset_model(c);
    if (c.precision == Precision::int8) {
        m = fuse_conv_bn_relu(m);
        m = quantize(m, input_for(c, m.input_shape()));
    }
    const fs::path path = c.out / "model.json";
    ensure_dir(c.out);
    write_model(m, path);
    fmt::print(log, "{}: {} layers, {} weight bytes, {} MACs -> {}\n", c.preset, m.size(), m.weight_bytes(),
               m.total_macs(), path.string());
    return kExitOk;
}

int cmd_oracle(const ExperimentConfig& c, std::ostream& log) {
    const Model model = load_model(c);
    const auto input = load_input(c, model);
    const auto res = model.precision() == Precision::int8 ? oracle::reference_forward_quantized(model, input)
                                                          : oracle::reference_forward(model, input);
    const TensorShape shape = model.output_shape();
    json doc;
    doc["precision"] = precision_flag(model.precision());
    doc["shape"] = {shape.channels, shape.height, shape.width};
    doc["output"] = res.output;
    write_text(c.out / "oracle_output.json", doc.dump() + "\n");
    const auto top = std::max_element(res.output.begin(), res.output.end());
    fmt::print(log, "{} outputs, argmax {} ({:.6g})\n", res.output.size(),
               top == res.output.end() ? 0 : static_cast<std::size_t>(top - res.output.begin()),
               top == res.output.end() ? 0.0 : *top);
    return kExitOk;
}

}  // namespace splitinfer
