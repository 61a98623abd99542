// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include "splitinfer/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "splitinfer/error.hpp"

namespace splitinfer {

double packet_seconds(const WorkerProfile& link, std::size_t bytes) noexcept {
    return (link.delay_per_kb_s + 1.0 / link.bandwidth_kb_s) * (static_cast<double>(bytes) / 1024.0) +
           link.packet_delay_s;
}

std::vector<std::size_t> round_robin_schedule(std::span<const LinkTask> tasks) {
    std::vector<LinkTask> active;
    for (const auto& t : tasks) {
        if (t.packets > 0) active.push_back(t);
    }
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    while (!active.empty()) {
        LinkTask& t = active[cursor];
        order.push_back(t.id);
        if (--t.packets == 0) {
            active.erase(active.begin() + static_cast<long>(cursor));
        } else {
            ++cursor;
        }
        if (cursor >= active.size()) cursor = 0;
    }
    return order;
}

std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::recv_start: return "recv_start";
        case EventKind::recv_end: return "recv_end";
        case EventKind::compute_start: return "compute_start";
        case EventKind::compute_end: return "compute_end";
        case EventKind::send_start: return "send_start";
        case EventKind::send_end: return "send_end";
        case EventKind::layer_done: return "layer_done";
    }
    return "?";
}

std::size_t Trace::max_peak_bytes() const {
    return worker_peak_bytes.empty() ? 0 : *std::max_element(worker_peak_bytes.begin(), worker_peak_bytes.end());
}

namespace {

double tensor_scale(const Model& model, long t) {
    if (t < 0) return model.input_scale();
    return std::visit(
        [](const auto& l) -> double {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, ConvLayer> || std::is_same_v<T, LinearLayer>) {
                return l.quant.output_scale;
            } else if constexpr (std::is_same_v<T, ResidualAddLayer> || std::is_same_v<T, GapLayer>) {
                return l.output_scale;
            } else {
                throw UnsupportedOperatorError("int8 models must be fused");
            }
        },
        model.layer(static_cast<std::size_t>(t)));
}

double requantize(double v, double scale) {
    return std::clamp(std::round(v / scale), -127.0, 127.0);
}

}  // namespace

std::vector<double> compute_assigned(const Model& model, std::size_t layer_index, IndexRange range,
                                     std::span<const double> input, const std::vector<bool>& present) {
    const Layer& layer = model.layer(layer_index);
    const bool int8 = model.precision() == Precision::int8;
    auto read = [&](std::size_t i) {
        if (i >= present.size() || !present[i]) {
            throw ProtocolError(fmt::format("layer {}: input neuron {} was never delivered", layer_index, i));
        }
        return input[i];
    };
    const double in_scale = int8 ? tensor_scale(model, static_cast<long>(layer_index) - 1) : 1.0;
    const double out_scale = int8 ? tensor_scale(model, static_cast<long>(layer_index)) : 1.0;
    auto finish = [&](double pre, Activation act) {
        const double y = apply_activation(act, pre);
        return int8 ? requantize(y, out_scale) : y;
    };

    std::vector<double> out;
    out.reserve(range.size());
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
        const TensorShape& is = conv->in_shape;
        const std::size_t kin = conv->kernel_in_channels();
        for (std::size_t i = range.begin; i < range.end; ++i) {
            const auto [oc, oh, ow] = conv->out_shape.coords(i);
            const IndexRange rows = conv_window(oh, conv->stride, conv->padding, conv->kernel_h, is.height);
            const IndexRange cols = conv_window(ow, conv->stride, conv->padding, conv->kernel_w, is.width);
            std::int32_t iacc = 0;
            double facc = conv->bias[oc];
            for (std::size_t k = 0; k < kin; ++k) {
                const std::size_t ic = conv->depthwise ? oc : k;
                for (std::size_t h = rows.begin; h < rows.end; ++h) {
                    const std::size_t kh = h + conv->padding - oh * conv->stride;
                    for (std::size_t w = cols.begin; w < cols.end; ++w) {
                        const std::size_t kw = w + conv->padding - ow * conv->stride;
                        const std::size_t wi = ((oc * kin + k) * conv->kernel_h + kh) * conv->kernel_w + kw;
                        const double x = read(is.index(ic, h, w));
                        if (int8) {
                            iacc += static_cast<std::int32_t>(conv->quant.weights[wi]) * static_cast<std::int32_t>(x);
                        } else {
                            facc += static_cast<double>(conv->weights[wi]) * x;
                        }
                    }
                }
            }
            const double pre = int8 ? static_cast<double>(iacc) * static_cast<double>(conv->quant.weight_scale) *
                                              in_scale +
                                          static_cast<double>(conv->bias[oc])
                                    : facc;
            out.push_back(finish(pre, conv->activation));
        }
        return out;
    }
    if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
        const std::size_t rows = lin->in_features();
        for (std::size_t j = range.begin; j < range.end; ++j) {
            std::int32_t iacc = 0;
            double facc = lin->bias[j];
            for (std::size_t r = 0; r < rows; ++r) {
                const double x = read(r);
                if (int8) {
                    iacc += static_cast<std::int32_t>(lin->quant.weights[r * lin->out_features + j]) *
                            static_cast<std::int32_t>(x);
                } else {
                    facc += static_cast<double>(lin->weight(r, j)) * x;
                }
            }
            const double pre = int8 ? static_cast<double>(iacc) * static_cast<double>(lin->quant.weight_scale) *
                                              in_scale +
                                          static_cast<double>(lin->bias[j])
                                    : facc;
            out.push_back(finish(pre, lin->activation));
        }
        return out;
    }
    throw UnsupportedOperatorError(fmt::format("layer {} ({}) is not computed by workers", layer_index,
                                               kind_name(layer)));
}

namespace {

// Min-heap of timed callbacks; equal times run in scheduling order.
class EventQueue {
public:
    void at(double t, std::function<void()> fn) {
        heap_.push_back({t, seq_++, std::move(fn)});
        std::push_heap(heap_.begin(), heap_.end(), later);
    }

    void run() {
        while (!heap_.empty()) {
            std::pop_heap(heap_.begin(), heap_.end(), later);
            Event ev = std::move(heap_.back());
            heap_.pop_back();
            now_ = ev.time;
            ev.fn();
        }
    }

    double now() const noexcept { return now_; }

private:
    struct Event {
        double time;
        std::uint64_t seq;
        std::function<void()> fn;
    };
    static bool later(const Event& a, const Event& b) {
        return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }

    std::vector<Event> heap_;
    std::uint64_t seq_ = 0;
    double now_ = 0.0;
};

class Simulation {
public:
    Simulation(const PartitionPlan& plan, const Model& model, const Fleet& fleet, const TimingModel& timing,
               const RuntimeOptions& options)
        : plan_(plan), model_(model), fleet_(fleet), timing_(timing), options_(options),
          eb_(element_bytes(model.precision())), int8_(model.precision() == Precision::int8),
          standalone_(fleet.size() == 1) {
        const std::size_t n = fleet.size();
        const std::size_t layers = model.size();
        if (plan.partitions.size() != layers || plan.boundaries.size() != layers + 1) {
            throw ConsistencyError("plan does not cover the model");
        }
        for (const auto& part : plan.partitions) {
            if (part && part->workers.size() > n) throw ConsistencyError("plan uses more workers than the fleet has");
        }
        if (options.compute_values && !plan.has_maps()) {
            throw ConsistencyError("value execution needs a plan with routing maps");
        }
        trace_.workers = n;
        trace_.layers = layers;
        trace_.stats.assign(layers * n, {});
        trace_.worker_peak_bytes.assign(n, 0);
        trace_.fragment_bytes = plan.fragment_bytes();
        trace_.fragment_bytes.resize(n, 0);
        workers_.resize(n);
        for (auto& w : workers_) {
            w.live.assign(layers, 0);
            w.inputs.resize(layers);
            w.present.resize(layers);
            w.in_bytes.assign(layers, 0);
        }
        k1_.resize(n);
        for (std::size_t r = 0; r < n; ++r) k1_[r] = worker_k1(fleet.workers[r], fleet.k1_table);

        tensors_.resize(layers + 1);
        delivered_.assign(layers, 0);
        dispatched_.resize(layers);
        waiting_.resize(layers);
        for (std::size_t l = 0; l < layers; ++l) {
            if (!plan.partitions[l]) continue;
            const auto& part = *plan.partitions[l];
            dispatched_[l].assign(part.workers.size(), false);
            waiting_[l].assign(part.workers.size(), 0);
            const Boundary& in = plan.boundaries[l];
            if (in.producer_ranges.empty()) continue;
            for (std::size_t r = 0; r < part.workers.size(); ++r) {
                for (std::size_t p = 0; p < in.demand.producers; ++p) waiting_[l][r] += in.demand.from(p, r) > 0;
            }
        }
    }

    InferenceResult run(std::span<const float> input) {
        if (input.size() != model_.input_shape().neuron_count()) {
            throw BoundsError(fmt::format("input has {} elements, model expects {}", input.size(),
                                          model_.input_shape().neuron_count()));
        }
        if (options_.enforce_flash_limit) {
            for (std::size_t r = 0; r < workers_.size(); ++r) {
                const auto limit = static_cast<std::size_t>(fleet_.workers[r].flash_limit_kb * 1024.0);
                if (trace_.fragment_bytes[r] > limit) throw DeploymentFault(r, trace_.fragment_bytes[r], limit);
            }
        }
        if (options_.compute_values) {
            auto& x = tensor(-1);
            x.assign(input.begin(), input.end());
            if (int8_) {
                const double s = model_.input_scale();
                for (auto& v : x) v = requantize(v, s) * s;
            }
        }
        queue_.at(0.0, [this] { tensor_complete(-1); });
        queue_.run();
        if (!finished_) throw ProtocolError("simulation stalled before the model output was assembled");
        trace_.makespan_s = finish_time_;
        InferenceResult result;
        if (options_.compute_values) result.output = tensor(static_cast<long>(model_.size()) - 1);
        result.trace = std::move(trace_);
        return result;
    }

private:
    struct Stream {
        std::size_t layer;
        std::size_t remaining;
        bool inbound;
        std::function<void()> done;
    };

    struct Worker {
        std::vector<Stream> streams;
        std::size_t cursor = 0;
        bool link_busy = false;
        std::deque<std::size_t> cpu_queue;
        bool cpu_busy = false;
        std::size_t gauge = 0;
        std::vector<int> live;
        std::vector<std::size_t> live_layers;
        std::vector<std::vector<double>> inputs;
        std::vector<std::vector<bool>> present;
        std::vector<std::size_t> in_bytes;
    };

    std::vector<double>& tensor(long t) { return tensors_[static_cast<std::size_t>(t + 1)]; }

    void record(int entity, EventKind kind, std::size_t layer, std::size_t bytes, double cycles = 0.0) {
        if (options_.record_events) trace_.events.push_back({queue_.now(), entity, kind, layer, bytes, cycles});
    }

    // ---- memory gauge ----

    void allocate(std::size_t r, std::size_t layer, std::size_t bytes) {
        Worker& w = workers_[r];
        w.gauge += bytes;
        if (w.live[layer]++ == 0) w.live_layers.push_back(layer);
        for (std::size_t l : w.live_layers) {
            auto& peak = trace_.at(l, r).peak_bytes;
            peak = std::max(peak, w.gauge);
        }
        trace_.worker_peak_bytes[r] = std::max(trace_.worker_peak_bytes[r], w.gauge);
        const auto limit = static_cast<std::size_t>(fleet_.workers[r].ram_limit_kb * 1024.0);
        if (options_.enforce_ram_limit && w.gauge > limit) throw OutOfMemoryFault(r, layer, w.gauge, limit);
    }

    void release(std::size_t r, std::size_t layer, std::size_t bytes) {
        Worker& w = workers_[r];
        w.gauge -= bytes;
        if (--w.live[layer] == 0) std::erase(w.live_layers, layer);
    }

    // ---- worker link: one packet at a time, round-robin over open streams ----

    void open_stream(std::size_t r, Stream s) {
        Worker& w = workers_[r];
        // A lone worker runs the whole model itself: nothing crosses a link.
        if (s.remaining == 0 || standalone_) {
            queue_.at(queue_.now(), std::move(s.done));
            return;
        }
        w.streams.push_back(std::move(s));
        if (!w.link_busy) next_packet(r);
    }

    void next_packet(std::size_t r) {
        Worker& w = workers_[r];
        if (w.streams.empty()) {
            w.link_busy = false;
            return;
        }
        w.link_busy = true;
        if (w.cursor >= w.streams.size()) w.cursor = 0;
        Stream& s = w.streams[w.cursor];
        const std::size_t bytes = std::min(s.remaining, kPacketBytes);
        const double dt = packet_seconds(fleet_.workers[r], bytes);
        auto& st = trace_.at(s.layer, r);
        st.comm_s += dt;
        st.packets += 1;
        trace_.packets += 1;
        queue_.at(queue_.now() + dt, [this, r, bytes] {
            Worker& w = workers_[r];
            Stream& s = w.streams[w.cursor];
            s.remaining -= bytes;
            if (s.remaining == 0) {
                auto done = std::move(s.done);
                w.streams.erase(w.streams.begin() + static_cast<long>(w.cursor));
                done();
            } else {
                ++w.cursor;
            }
            next_packet(r);
        });
    }

    // ---- coordinator ----

    void tensor_complete(long t) {
        const std::size_t layers = model_.size();
        if (options_.record_events && t >= 0) record(kCoordinatorId, EventKind::layer_done, static_cast<std::size_t>(t), 0);
        if (t + 1 == static_cast<long>(layers)) {
            finished_ = true;
            finish_time_ = queue_.now();
            return;
        }
        const auto next = static_cast<std::size_t>(t + 1);
        if (!plan_.partitions[next]) {
            run_glue(next);
            tensor_complete(static_cast<long>(next));
            return;
        }
        const auto& part = *plan_.partitions[next];
        std::size_t active = 0;
        for (std::size_t r = 0; r < part.workers.size(); ++r) {
            if (part.workers[r].range.empty()) continue;
            ++active;
            if (!dispatched_[next][r]) dispatch(next, r);
        }
        if (active == 0) throw ConsistencyError(fmt::format("layer {} has no worker with output neurons", next));
    }

    void run_glue(std::size_t l) {
        if (!options_.compute_values) return;
        const Layer& layer = model_.layer(l);
        const auto& x = tensor(static_cast<long>(l) - 1);
        std::vector<double> y;
        if (const auto* add = std::get_if<ResidualAddLayer>(&layer)) {
            const auto& skip = tensor(static_cast<long>(add->from));
            y = x;
            for (std::size_t k = 0; k < y.size(); ++k) y[k] += skip[k];
        } else if (const auto* gap = std::get_if<GapLayer>(&layer)) {
            const std::size_t plane = gap->in_shape.plane();
            y.assign(gap->in_shape.channels, 0.0);
            for (std::size_t c = 0; c < gap->in_shape.channels; ++c) {
                double sum = 0.0;
                for (std::size_t p = 0; p < plane; ++p) sum += x[c * plane + p];
                y[c] = sum / static_cast<double>(plane);
            }
        } else {
            throw UnsupportedOperatorError(fmt::format("layer {} ({}) cannot run on the coordinator", l, kind_name(layer)));
        }
        if (int8_) {
            const double s = tensor_scale(model_, static_cast<long>(l));
            for (auto& v : y) v = requantize(v, s) * s;
        } else {
            for (auto& v : y) v = static_cast<double>(static_cast<float>(v));
        }
        tensor(static_cast<long>(l)) = std::move(y);
    }

    void dispatch(std::size_t l, std::size_t r) {
        dispatched_[l][r] = true;
        const Boundary& in = plan_.boundaries[l];
        const std::size_t bytes = in.demand.need(r) * eb_;
        std::vector<double> payload;
        if (options_.compute_values) {
            const AssignMap& map = *in.assign;
            const auto& x = tensor(static_cast<long>(l) - 1);
            const double s = int8_ ? tensor_scale(model_, static_cast<long>(l) - 1) : 1.0;
            payload.reserve(in.demand.need(r));
            for (std::size_t i = 0; i < map.neurons; ++i) {
                if (map.test(i, r)) payload.push_back(int8_ ? std::round(x[i] / s) : x[i]);
            }
        }
        if (!standalone_) trace_.coordinator_bytes_sent += bytes;
        outbox_.push_back({l, r, bytes, std::move(payload)});
        if (!timing_.serialize_coordinator_sends || !coordinator_busy_) send_next();
    }

    struct Outgoing {
        std::size_t layer;
        std::size_t worker;
        std::size_t bytes;
        std::vector<double> payload;
    };

    void send_next() {
        if (outbox_.empty()) {
            coordinator_busy_ = false;
            return;
        }
        coordinator_busy_ = true;
        Outgoing m = std::move(outbox_.front());
        outbox_.pop_front();
        const std::size_t l = m.layer, r = m.worker;
        if (!standalone_) {
            auto& st = trace_.at(l, r);
            st.bytes_in += m.bytes;
            st.messages += 1;
            trace_.messages += 1;
        }
        workers_[r].in_bytes[l] += m.bytes;
        allocate(r, l, m.bytes);
        record(static_cast<int>(r), EventKind::recv_start, l, m.bytes);
        auto payload = std::make_shared<std::vector<double>>(std::move(m.payload));
        open_stream(r, {l, m.bytes, true, [this, l, r, payload] {
                            record(static_cast<int>(r), EventKind::recv_end, l, payload->size() * eb_);
                            unpack(l, r, *payload);
                            workers_[r].cpu_queue.push_back(l);
                            if (!workers_[r].cpu_busy) start_compute(r);
                            if (timing_.serialize_coordinator_sends) send_next();
                        }});
        if (!timing_.serialize_coordinator_sends) send_next();
    }

    void unpack(std::size_t l, std::size_t r, const std::vector<double>& payload) {
        if (!options_.compute_values) return;
        const AssignMap& map = *plan_.boundaries[l].assign;
        auto& in = workers_[r].inputs[l];
        auto& present = workers_[r].present[l];
        in.assign(map.neurons, 0.0);
        present.assign(map.neurons, false);
        std::size_t k = 0;
        for (std::size_t i = 0; i < map.neurons; ++i) {
            if (!map.test(i, r)) continue;
            in[i] = payload.at(k++);
            present[i] = true;
        }
    }

    // ---- worker CPU ----

    void start_compute(std::size_t r) {
        Worker& w = workers_[r];
        if (w.cpu_queue.empty()) {
            w.cpu_busy = false;
            return;
        }
        w.cpu_busy = true;
        const std::size_t l = w.cpu_queue.front();
        w.cpu_queue.pop_front();
        const WorkerShare& share = plan_.partitions[l]->workers[r];
        const std::size_t out_bytes = share.range.size() * eb_;
        allocate(r, l, share.fragment_bytes);
        allocate(r, l, out_bytes);
        const double cycles = static_cast<double>(share.range.size()) *
                              neuron_cycles(model_.layer(l), timing_.cost, k1_[r]);
        const double dt = cycles / (fleet_.workers[r].frequency_mhz * 1e6);
        auto& st = trace_.at(l, r);
        st.compute_s += dt;
        st.cycles += cycles;
        record(static_cast<int>(r), EventKind::compute_start, l, 0, cycles);
        queue_.at(queue_.now() + dt, [this, r, l, out_bytes] {
            Worker& w = workers_[r];
            const WorkerShare& share = plan_.partitions[l]->workers[r];
            record(static_cast<int>(r), EventKind::compute_end, l, 0);
            auto values = std::make_shared<std::vector<double>>();
            if (options_.compute_values) {
                *values = compute_assigned(model_, l, share.range, w.inputs[l], w.present[l]);
                if (!int8_) {
                    for (auto& v : *values) v = static_cast<double>(static_cast<float>(v));
                }
                std::vector<double>().swap(w.inputs[l]);
                std::vector<bool>().swap(w.present[l]);
            }
            release(r, l, w.in_bytes[l]);
            release(r, l, share.fragment_bytes);
            if (!standalone_) {
                trace_.at(l, r).bytes_out += out_bytes;
                trace_.at(l, r).messages += 1;
                trace_.messages += 1;
            }
            record(static_cast<int>(r), EventKind::send_start, l, out_bytes);
            open_stream(r, {l, out_bytes, false, [this, r, l, out_bytes, values] {
                                record(static_cast<int>(r), EventKind::send_end, l, out_bytes);
                                release(r, l, out_bytes);
                                if (!standalone_) trace_.coordinator_bytes_received += out_bytes;
                                deliver(l, r, *values);
                            }});
            start_compute(r);
        });
    }

    void deliver(std::size_t l, std::size_t r, const std::vector<double>& values) {
        const auto& part = *plan_.partitions[l];
        const IndexRange range = part.workers[r].range;
        if (options_.compute_values) {
            auto& out = tensor(static_cast<long>(l));
            if (out.empty()) out.assign(part.neuron_count, 0.0);
            const double s = int8_ ? tensor_scale(model_, static_cast<long>(l)) : 1.0;
            for (std::size_t k = 0; k < range.size(); ++k) out[range.begin + k] = int8_ ? values[k] * s : values[k];
        }
        const std::size_t next = l + 1;
        if (next < model_.size() && plan_.partitions[next]) {
            const Boundary& b = plan_.boundaries[next];
            for (std::size_t c = 0; c < b.demand.consumers; ++c) {
                if (b.demand.from(r, c) == 0 || dispatched_[next][c]) continue;
                if (--waiting_[next][c] == 0) dispatch(next, c);
            }
        }
        std::size_t producers = 0;
        for (const auto& w : part.workers) producers += !w.range.empty();
        if (++delivered_[l] == producers) tensor_complete(static_cast<long>(l));
    }

    const PartitionPlan& plan_;
    const Model& model_;
    const Fleet& fleet_;
    const TimingModel& timing_;
    const RuntimeOptions& options_;
    const std::size_t eb_;
    const bool int8_;
    const bool standalone_;

    EventQueue queue_;
    Trace trace_;
    std::vector<Worker> workers_;
    std::vector<double> k1_;
    std::vector<std::vector<double>> tensors_;
    std::vector<std::size_t> delivered_;
    std::vector<std::vector<bool>> dispatched_;
    std::vector<std::vector<std::size_t>> waiting_;
    std::deque<Outgoing> outbox_;
    bool coordinator_busy_ = false;
    bool finished_ = false;
    double finish_time_ = 0.0;
};

}  // namespace

InferenceResult execute_inference(const PartitionPlan& plan, const Model& model, std::span<const float> input,
                                  const Fleet& fleet, const TimingModel& timing, const RuntimeOptions& options) {
    if (model.needs_fusion()) throw UnsupportedOperatorError("model must be fused before split execution");
    Simulation sim(plan, model, fleet, timing, options);
    return sim.run(input);
}

TimingReport simulate_timing(const Trace& trace, const Fleet& fleet, const TimingModel&) {
    TimingReport rep;
    rep.layer_s.assign(trace.layers, 0.0);
    rep.worker_compute_s.assign(trace.workers, 0.0);
    rep.worker_comm_s.assign(trace.workers, 0.0);
    for (std::size_t l = 0; l < trace.layers; ++l) {
        double max_compute = 0.0, max_comm = 0.0;
        for (std::size_t r = 0; r < trace.workers; ++r) {
            const LayerWorkerStats& st = trace.at(l, r);
            const WorkerProfile& p = fleet.workers.at(r);
            const double compute = st.cycles / (p.frequency_mhz * 1e6);
            const double kb = static_cast<double>(st.bytes_in + st.bytes_out) / 1024.0;
            const double comm = (p.delay_per_kb_s + 1.0 / p.bandwidth_kb_s) * kb +
                                p.packet_delay_s * static_cast<double>(st.packets);
            rep.worker_compute_s[r] += compute;
            rep.worker_comm_s[r] += comm;
            rep.layer_s[l] = std::max(rep.layer_s[l], compute + comm);
            max_compute = std::max(max_compute, compute);
            max_comm = std::max(max_comm, comm);
        }
        rep.compute_s += max_compute;
        rep.comm_s += max_comm;
        rep.total_s += rep.layer_s[l];
    }
    return rep;
}

std::vector<std::vector<double>> track_peak_memory(const Trace& trace) {
    std::vector<std::vector<double>> peaks(trace.workers, std::vector<double>(trace.layers, 0.0));
    for (std::size_t r = 0; r < trace.workers; ++r)
        for (std::size_t l = 0; l < trace.layers; ++l)
            peaks[r][l] = static_cast<double>(trace.at(l, r).peak_bytes) / 1024.0;
    return peaks;
}

void write_trace_csv(const Trace& trace, std::ostream& out) {
    out << "layer,worker,compute_s,comm_s,peak_kb,bytes_in,bytes_out\n";
    for (std::size_t l = 0; l < trace.layers; ++l) {
        for (std::size_t r = 0; r < trace.workers; ++r) {
            const LayerWorkerStats& st = trace.at(l, r);
            out << fmt::format("{},{},{:.9g},{:.9g},{:.6g},{},{}\n", l, r, st.compute_s, st.comm_s,
                               static_cast<double>(st.peak_bytes) / 1024.0, st.bytes_in, st.bytes_out);
        }
    }
}

nlohmann::json trace_summary(const Trace& trace) {
    nlohmann::json peaks = nlohmann::json::array();
    for (auto b : trace.worker_peak_bytes) peaks.push_back(static_cast<double>(b) / 1024.0);
    double compute = 0.0, comm = 0.0;
    for (std::size_t l = 0; l < trace.layers; ++l) {
        double c = 0.0, m = 0.0;
        for (std::size_t r = 0; r < trace.workers; ++r) {
            c = std::max(c, trace.at(l, r).compute_s);
            m = std::max(m, trace.at(l, r).comm_s);
        }
        compute += c;
        comm += m;
    }
    return {{"workers", trace.workers},
            {"layers", trace.layers},
            {"makespan_s", trace.makespan_s},
            {"compute_s", compute},
            {"comm_s", comm},
            {"peak_kb_per_worker", peaks},
            {"max_peak_kb", static_cast<double>(trace.max_peak_bytes()) / 1024.0},
            {"fragment_bytes", trace.fragment_bytes},
            {"bytes_sent_by_coordinator", trace.coordinator_bytes_sent},
            {"bytes_received_by_coordinator", trace.coordinator_bytes_received},
            {"total_traffic_bytes", trace.total_bytes()},
            {"messages", trace.messages},
            {"packets", trace.packets}};
}

}  // namespace splitinfer
