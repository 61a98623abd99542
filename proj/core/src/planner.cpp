// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include "splitinfer/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <string>

#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include "splitinfer/error.hpp"
#include "splitinfer/model_io.hpp"

namespace splitinfer {

using nlohmann::json;

double neuron_cycles(const Layer& layer, const CostModel& cost, double k1) {
    if (!is_split_layer(layer)) return 0.0;
    return static_cast<double>(macs_per_neuron(layer)) * cost.cycles_per_mac * (cost.reference_k1 / k1);
}

Fleet homogeneous_fleet(std::size_t count, const WorkerProfile& prototype) {
    Fleet fleet;
    for (std::size_t r = 0; r < count; ++r) {
        WorkerProfile p = prototype;
        p.id = r;
        fleet.workers.push_back(p);
    }
    return fleet;
}

double worker_k1(const WorkerProfile& profile, const K1Table& table) {
    if (profile.k1) return *profile.k1;
    if (table.empty()) return kReferenceK1;
    const K1Lookup hit = table.lookup(profile.frequency_mhz);
    if (!hit.exact) {
        spdlog::warn("no K1 calibrated at {} MHz for worker {}; using the {} MHz value {:.4f}",
                     profile.frequency_mhz, profile.id, hit.source_frequency_mhz, hit.k1);
    }
    return hit.k1;
}

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::evenly: return "evenly";
        case Strategy::freq_only: return "freq_only";
        case Strategy::optimized: return "optimized";
    }
    return "?";
}

Strategy parse_strategy(std::string_view s) {
    if (s == "evenly") return Strategy::evenly;
    if (s == "freq_only" || s == "freq-only") return Strategy::freq_only;
    if (s == "optimized") return Strategy::optimized;
    throw ParseError("unknown strategy '" + std::string(s) + "' (expected evenly, freq_only or optimized)");
}

TrafficEstimate dry_run_traffic(const Model& model, const PartitionPlan& plan, const Fleet& fleet,
                                const CostModel& cost) {
    const std::size_t n = fleet.size();
    const std::size_t eb = element_bytes(model.precision());
    TrafficEstimate t{std::vector<std::size_t>(n, 0), std::vector<std::size_t>(n, 0), std::vector<double>(n, 0.0)};
    std::vector<double> k1(n);
    for (std::size_t r = 0; r < n; ++r) k1[r] = worker_k1(fleet.workers[r], fleet.k1_table);

    for (const Boundary& b : plan.boundaries) {
        if (!b.consumer_split) continue;
        for (std::size_t r = 0; r < b.demand.consumers && r < n; ++r) t.bytes_in[r] += b.demand.need(r) * eb;
    }
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& part = plan.partitions[i];
        if (!part) continue;
        for (std::size_t r = 0; r < part->workers.size() && r < n; ++r) {
            const std::size_t count = part->workers[r].range.size();
            t.bytes_out[r] += count * eb;
            t.mcycles[r] += static_cast<double>(count) * neuron_cycles(model.layer(i), cost, k1[r]) / 1e6;
        }
    }
    return t;
}

std::vector<double> estimate_kc(const Model& model, const PartitionPlan& plan, const Fleet& fleet,
                                const CostModel& cost) {
    std::vector<double> kc(fleet.size(), 0.0);
    if (fleet.size() <= 1) return kc;
    const TrafficEstimate t = dry_run_traffic(model, plan, fleet, cost);
    for (std::size_t r = 0; r < fleet.size(); ++r) {
        const double work = worker_k1(fleet.workers[r], fleet.k1_table) * t.mcycles[r];
        if (work <= 0.0) continue;
        kc[r] = static_cast<double>(t.bytes_in[r] + t.bytes_out[r]) / 1024.0 / work;
    }
    return kc;
}

PlanResult plan_for_fleet(const Model& model, const Fleet& fleet, Strategy strategy, const PlannerOptions& options) {
    if (fleet.workers.empty()) throw AllocationError("fleet has no workers");
    for (const auto& p : fleet.workers) validate_profile(p);
    const std::size_t n = fleet.size();

    PlanResult result;
    result.strategy = strategy;
    result.k1.resize(n);
    result.kc.assign(n, 0.0);
    std::vector<double> limits(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto& p = fleet.workers[r];
        result.k1[r] = worker_k1(p, fleet.k1_table);
        if (p.k_c) result.kc[r] = *p.k_c;
        limits[r] = p.flash_limit_kb;
    }
    const double model_kb = static_cast<double>(model.weight_bytes()) / 1024.0;

    auto rate = [&]() {
        std::vector<double> ratings(n);
        for (std::size_t r = 0; r < n; ++r) {
            const auto& p = fleet.workers[r];
            switch (strategy) {
                case Strategy::evenly: ratings[r] = 1.0; break;
                case Strategy::freq_only: ratings[r] = p.frequency_mhz * options.cost.reference_k1; break;
                case Strategy::optimized:
                    ratings[r] = rating_value(p.frequency_mhz, result.k1[r], p.effective_delay_per_kb_s(),
                                              p.bandwidth_kb_s, result.kc[r]);
                    break;
            }
        }
        Redistribution red = redistribute_overflow(ratings, limits, model_kb);
        result.ratings = std::move(red.ratings);
        result.predicted_sizes_kb = std::move(red.sizes_kb);
        result.redistribution_iterations = red.iterations;
    };

    rate();
    const bool estimate = strategy == Strategy::optimized &&
                          std::any_of(fleet.workers.begin(), fleet.workers.end(), [](const auto& p) { return !p.k_c; });
    if (estimate) {
        for (std::size_t round = 0; round < options.kc_rounds; ++round) {
            const PartitionPlan dry = plan_all_boundaries(model, result.ratings, {.build_maps = false});
            const std::vector<double> kc = estimate_kc(model, dry, fleet, options.cost);
            for (std::size_t r = 0; r < n; ++r) {
                if (!fleet.workers[r].k_c) result.kc[r] = kc[r];
            }
            spdlog::debug("K_c round {}: {}", round + 1, fmt::join(result.kc, ", "));
            rate();
        }
    }
    result.plan = plan_all_boundaries(model, result.ratings, {.build_maps = options.build_maps});
    result.plan.workers = n;
    return result;
}

// ---- fleet and calibration files ----

namespace {

double number_or(const json& obj, const char* key, double fallback) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return fallback;
    if (!it->is_number()) throw ParseError(std::string("field '") + key + "' must be a number");
    return it->get<double>();
}

std::optional<double> optional_number(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw ParseError(std::string("field '") + key + "' must be a number or null");
    return it->get<double>();
}

std::string words_b64(std::span<const std::uint64_t> words) {
    std::vector<std::uint8_t> bytes(words.size() * 8);
    for (std::size_t i = 0; i < words.size(); ++i)
        for (std::size_t b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<std::uint8_t>(words[i] >> (8 * b));
    return encode_base64(bytes);
}

std::vector<std::uint64_t> b64_words(const std::string& text) {
    const auto bytes = decode_base64(text);
    if (bytes.size() % 8 != 0) throw ParseError("bitset block length is not a multiple of 8 bytes");
    std::vector<std::uint64_t> words(bytes.size() / 8, 0);
    for (std::size_t i = 0; i < words.size(); ++i)
        for (std::size_t b = 0; b < 8; ++b) words[i] |= std::uint64_t{bytes[i * 8 + b]} << (8 * b);
    return words;
}

json shape_json(const TensorShape& s) {
    return json::array({s.channels, s.height, s.width});
}

}  // namespace

Fleet parse_fleet(const json& doc) {
    try {
        Fleet fleet;
        const json* workers = &doc;
        if (doc.is_object()) {
            workers = &doc.at("workers");
            if (doc.contains("k1_table")) fleet.k1_table = parse_k1_table(doc["k1_table"]);
        }
        if (!workers->is_array() || workers->empty()) throw ParseError("fleet must be a non-empty array of workers");
        for (std::size_t i = 0; i < workers->size(); ++i) {
            const json& w = (*workers)[i];
            if (!w.is_object()) throw ParseError("fleet entry " + std::to_string(i) + " is not an object");
            WorkerProfile p;
            p.id = static_cast<std::size_t>(number_or(w, "id", static_cast<double>(i)));
            p.frequency_mhz = number_or(w, "frequency_mhz", p.frequency_mhz);
            p.delay_per_kb_s = number_or(w, "delay_ms_per_kb", 0.0) / 1000.0;
            p.bandwidth_kb_s = number_or(w, "bandwidth_kb_s", p.bandwidth_kb_s);
            p.flash_limit_kb = number_or(w, "flash_limit_kb", p.flash_limit_kb);
            p.ram_limit_kb = number_or(w, "ram_limit_kb", p.ram_limit_kb);
            p.k_c = optional_number(w, "k_c");
            p.packet_delay_s = number_or(w, "packet_delay_ms", 0.0) / 1000.0;
            p.k1 = optional_number(w, "k1");
            validate_profile(p);
            fleet.workers.push_back(p);
        }
        return fleet;
    } catch (const json::exception& e) {
        throw ParseError(std::string("fleet: ") + e.what());
    }
}

Fleet read_fleet(const std::filesystem::path& path) {
    return parse_fleet(read_json_file(path));
}

json fleet_to_json(const Fleet& fleet) {
    json arr = json::array();
    for (const auto& p : fleet.workers) {
        json w = {{"id", p.id},
                  {"frequency_mhz", p.frequency_mhz},
                  {"delay_ms_per_kb", p.delay_per_kb_s * 1000.0},
                  {"bandwidth_kb_s", p.bandwidth_kb_s},
                  {"flash_limit_kb", p.flash_limit_kb},
                  {"ram_limit_kb", p.ram_limit_kb},
                  {"k_c", p.k_c ? json(*p.k_c) : json(nullptr)}};
        if (p.packet_delay_s > 0.0) w["packet_delay_ms"] = p.packet_delay_s * 1000.0;
        if (p.k1) w["k1"] = *p.k1;
        arr.push_back(std::move(w));
    }
    if (fleet.k1_table.empty()) return arr;
    return {{"workers", arr}, {"k1_table", k1_table_to_json(fleet.k1_table)}};
}

std::vector<CalibrationRecord> parse_calibration_csv(std::string_view text) {
    std::vector<CalibrationRecord> records;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (records.empty() && line_no == 1 && !fields.empty() &&
            fields[0].find_first_of("0123456789.") == std::string::npos) {
            continue;  // header
        }
        if (fields.size() != 3) throw ParseError("expected frequency_mhz,workload_kb,time_s", line_no);
        CalibrationRecord rec;
        double* slots[] = {&rec.frequency_mhz, &rec.workload_kb, &rec.time_s};
        for (std::size_t k = 0; k < 3; ++k) {
            std::size_t used = 0;
            try {
                *slots[k] = std::stod(fields[k], &used);
            } catch (const std::exception&) {
                throw ParseError("field " + std::to_string(k + 1) + " is not a number", line_no);
            }
            if (fields[k].find_first_not_of(" \t", used) != std::string::npos) {
                throw ParseError("field " + std::to_string(k + 1) + " is not a number", line_no);
            }
        }
        try {
            calibrate_k1(rec);
        } catch (const DomainError& e) {
            throw ParseError(e.what(), line_no);
        }
        records.push_back(rec);
    }
    if (records.empty()) throw ParseError("no calibration records");
    return records;
}

json k1_table_to_json(const K1Table& table) {
    json entries = json::array();
    for (const auto& e : table.entries()) {
        entries.push_back({{"frequency_mhz", e.frequency_mhz}, {"k1", e.k1}, {"samples", e.samples}});
    }
    return {{"entries", entries}};
}

K1Table parse_k1_table(const json& doc) {
    try {
        std::vector<K1Entry> entries;
        for (const auto& e : doc.at("entries")) {
            K1Entry k{e.at("frequency_mhz").get<double>(), e.at("k1").get<double>(), e.value("samples", std::size_t{1})};
            if (!(k.frequency_mhz > 0.0) || !(k.k1 > 0.0)) throw ParseError("K1 table entries must be positive");
            entries.push_back(k);
        }
        return K1Table(std::move(entries));
    } catch (const json::exception& e) {
        throw ParseError(std::string("K1 table: ") + e.what());
    }
}

// ---- plan files ----

json plan_to_json(const PlanResult& result) {
    const PartitionPlan& plan = result.plan;
    json doc;
    doc["format"] = "splitinfer-plan/1";
    doc["strategy"] = std::string(to_string(result.strategy));
    doc["precision"] = std::string(to_string(plan.precision));
    doc["workers"] = plan.workers;
    doc["k1"] = result.k1;
    doc["kc"] = result.kc;
    doc["ratings"] = result.ratings;
    doc["predicted_sizes_kb"] = result.predicted_sizes_kb;
    doc["redistribution_iterations"] = result.redistribution_iterations;
    doc["fragment_bytes"] = plan.fragment_bytes();

    json layers = json::array();
    for (const auto& part : plan.partitions) {
        if (!part) continue;
        json workers = json::array();
        for (const auto& w : part->workers) {
            json units = json::array();
            for (const auto& [unit, usage] : w.units) units.push_back({unit, usage});
            workers.push_back({{"range", {w.range.begin, w.range.end}},
                               {"units", units},
                               {"fragment_bytes", w.fragment_bytes}});
        }
        layers.push_back({{"layer", part->layer},
                          {"neurons", part->neuron_count},
                          {"ratings", plan.layer_ratings[part->layer]},
                          {"workers", workers}});
    }
    doc["layers"] = layers;

    json boundaries = json::array();
    for (const auto& b : plan.boundaries) {
        json jb = {{"tensor", b.tensor},
                   {"shape", shape_json(b.shape)},
                   {"consumer_layer", b.consumer_layer ? json(*b.consumer_layer) : json(nullptr)},
                   {"coordinator_keeps", b.coordinator_keeps}};
        if (b.assign) {
            jb["assign"] = {{"width", b.assign->consumers}, {"words", b.assign->words}, {"b64", words_b64(b.assign->bits)}};
            json runs = json::array();
            for (const auto& run : b.route->runs()) {
                runs.push_back({run.producer, run.count, words_b64(run.consumers.words())});
            }
            jb["route"] = runs;
        }
        boundaries.push_back(std::move(jb));
    }
    doc["boundaries"] = boundaries;
    return doc;
}

std::vector<RouteMap> parse_plan_routes(const json& doc) {
    try {
        std::vector<RouteMap> routes;
        for (const auto& jb : doc.at("boundaries")) {
            const json& ja = jb.at("assign");
            const auto width = ja.at("width").get<std::size_t>();
            const auto shape = jb.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 3) throw ParseError("boundary shape must be [c, h, w]");
            const std::size_t neurons = shape[0] * shape[1] * shape[2];
            AssignMap map(neurons, width);
            map.bits = b64_words(ja.at("b64").get<std::string>());
            if (map.bits.size() != neurons * map.words) throw ParseError("AssignM block has the wrong length");
            map.coordinator_keeps = jb.value("coordinator_keeps", false);

            std::vector<int> producers;
            producers.reserve(neurons);
            for (const auto& run : jb.at("route")) {
                const int producer = run.at(0).get<int>();
                const auto count = run.at(1).get<std::size_t>();
                const DynamicBitset consumers(width, b64_words(run.at(2).get<std::string>()));
                for (std::size_t k = 0; k < count; ++k) {
                    if (producers.size() >= neurons || map.entry(producers.size()) != consumers) {
                        throw ConsistencyError("RouteM run disagrees with AssignM at neuron " +
                                               std::to_string(producers.size()));
                    }
                    producers.push_back(producer);
                }
            }
            if (producers.size() != neurons) throw ConsistencyError("RouteM does not cover the tensor");
            routes.emplace_back(std::move(producers), std::make_shared<const AssignMap>(std::move(map)));
        }
        return routes;
    } catch (const json::exception& e) {
        throw ParseError(std::string("plan: ") + e.what());
    }
}

json worker_fragment_json(const Model& model, const PartitionPlan& plan, std::size_t worker) {
    const bool int8 = model.precision() == Precision::int8;
    json layers = json::array();
    std::size_t total = 0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& part = plan.partitions[i];
        if (!part || worker >= part->workers.size()) continue;
        const WorkerShare& share = part->workers[worker];
        if (share.range.empty()) continue;
        json units = json::array();
        const Layer& layer = model.layer(i);
        for (const auto& [unit, usage] : share.units) {
            json u = {{"index", unit}, {"usage", usage}};
            if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
                const std::size_t k = conv->kernel_elements();
                if (int8) {
                    u["weights"] = int8_tensor_json(std::span(conv->quant.weights).subspan(unit * k, k));
                } else {
                    u["weights"] = float_tensor_json(std::span(conv->weights).subspan(unit * k, k));
                }
                u["bias"] = conv->bias[unit];
            } else if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
                const std::size_t rows = lin->in_features();
                if (int8) {
                    std::vector<std::int8_t> col(rows);
                    for (std::size_t r = 0; r < rows; ++r) col[r] = lin->quant.weights[r * lin->out_features + unit];
                    u["weights"] = int8_tensor_json(col);
                } else {
                    std::vector<float> col(rows);
                    for (std::size_t r = 0; r < rows; ++r) col[r] = lin->weight(r, unit);
                    u["weights"] = float_tensor_json(col);
                }
                u["bias"] = lin->bias[unit];
            }
            units.push_back(std::move(u));
        }
        json jl = {{"layer", i},
                   {"kind", std::string(kind_name(layer))},
                   {"range", {share.range.begin, share.range.end}},
                   {"fragment_bytes", share.fragment_bytes},
                   {std::holds_alternative<ConvLayer>(layer) ? "kernels" : "columns", units}};
        if (int8) {
            std::visit(
                [&](const auto& l) {
                    if constexpr (requires { l.quant; }) {
                        jl["weight_scale"] = l.quant.weight_scale;
                        jl["output_scale"] = l.quant.output_scale;
                    }
                },
                layer);
        }
        total += share.fragment_bytes;
        layers.push_back(std::move(jl));
    }
    return {{"worker", worker},
            {"precision", std::string(to_string(model.precision()))},
            {"fragment_bytes", total},
            {"layers", layers}};
}

}  // namespace splitinfer
