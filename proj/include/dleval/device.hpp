#pragma once

// Evaluation backends and static multi-device scheduling.
//
// Every device is probed once with the same dummy hypothesis (a conjunction
// of the first five concepts). Its share of any later batch is proportional
// to the inverse of its probe time. Batches are split into one contiguous
// index range per device and all devices run concurrently; small batches go
// to the fastest device alone.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dleval/dl_ops.hpp"
#include "dleval/error.hpp"
#include "dleval/hypothesis.hpp"
#include "dleval/kb.hpp"
#include "dleval/kb_text.hpp"
#include "dleval/parallel.hpp"

namespace dleval {

struct PlannedHypothesis {
  Hypothesis hypothesis;
  EvaluationPlan plan;
};

class Device {
 public:
  Device(std::size_t id, std::shared_ptr<const KnowledgeBase> kb) : id_(id), kb_(std::move(kb)) {
    if (!kb_) throw InvalidArgument("device needs a knowledge base");
  }
  virtual ~Device() = default;

  std::size_t id() const noexcept { return id_; }
  const KnowledgeBase& kb() const noexcept { return *kb_; }

  virtual std::string kind() const = 0;

  // Evaluates hyps[k] into out[k]. Both spans have the same length.
  virtual void evaluate_batch(std::span<const PlannedHypothesis> hyps,
                              std::span<CoverageResult> out) const = 0;

  std::vector<CoverageResult> evaluate_batch(std::span<const PlannedHypothesis> hyps) const {
    std::vector<CoverageResult> out(hyps.size());
    evaluate_batch(hyps, out);
    return out;
  }

 private:
  std::size_t id_;
  std::shared_ptr<const KnowledgeBase> kb_;
};

enum class BackendKind { ScalarPool, VectorPool, EmulatedParallel };

inline std::string_view to_string(BackendKind b) noexcept {
  switch (b) {
    case BackendKind::ScalarPool: return "scalar-pool";
    case BackendKind::VectorPool: return "vector-pool";
    case BackendKind::EmulatedParallel: return "emulated";
  }
  return "?";
}

// A CPU worker pool evaluating one hypothesis at a time with a fixed
// strategy. `slowdown` > 1 repeats every evaluation that many times, giving a
// deterministic, proportional slowdown for simulated heterogeneity.
class PoolDevice final : public Device {
 public:
  PoolDevice(std::size_t id, std::shared_ptr<const KnowledgeBase> kb, BackendKind backend,
             unsigned workers, unsigned slowdown = 1)
      : Device(id, std::move(kb)), backend_(backend), workers_(workers), slowdown_(slowdown) {
    if (slowdown_ == 0) throw InvalidArgument("slowdown factor must be at least 1");
  }

  BackendKind backend() const noexcept { return backend_; }
  unsigned workers() const noexcept { return parallel::resolve_workers(workers_); }
  unsigned slowdown() const noexcept { return slowdown_; }

  std::string kind() const override {
    std::string k(to_string(backend_));
    if (slowdown_ > 1) k += " x" + std::to_string(slowdown_);
    return k;
  }

  Execution execution() const {
    switch (backend_) {
      case BackendKind::ScalarPool: return {ExecutionStrategy::ParallelScalar, workers_};
      case BackendKind::VectorPool: return {ExecutionStrategy::ParallelVector, workers_};
      case BackendKind::EmulatedParallel:
        return {ExecutionStrategy::EmulatedDeviceParallel, workers_};
    }
    return {};
  }

  using Device::evaluate_batch;

  void evaluate_batch(std::span<const PlannedHypothesis> hyps,
                      std::span<CoverageResult> out) const override {
    if (hyps.size() != out.size()) throw InvalidArgument("batch and output sizes differ");
    const Execution exec = execution();
    Workspace ws;
    for (std::size_t k = 0; k < hyps.size(); ++k) {
      for (unsigned rep = 0; rep < slowdown_; ++rep) {
        RowView root = execute_plan_into(hyps[k].plan, hyps[k].hypothesis, kb(), exec, ws);
        out[k] = count_coverage(root, kb(), exec);
      }
    }
  }

 private:
  BackendKind backend_;
  unsigned workers_;
  unsigned slowdown_;
};

// ---------------------------------------------------------------------------
// Configuration.

struct DeviceConfig {
  bool vector_pool = true;
  unsigned vector_workers = 0;
  bool scalar_pool = false;
  unsigned scalar_workers = 0;
  unsigned emulated_pools = 0;
  unsigned emulated_workers = 0;
  std::vector<unsigned> simulated_slowdowns;  // one vector-pool device per factor
  std::size_t small_batch_threshold = 10;
  bool chunk_batches = false;
  std::size_t chunk_size = 1000;
};

namespace detail {

inline bool parse_bool(std::string_view v, bool& out) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") {
    out = true;
    return true;
  }
  if (v == "0" || v == "false" || v == "off" || v == "no") {
    out = false;
    return true;
  }
  return false;
}

template <class Int>
bool parse_uint(std::string_view v, Int& out) {
  if (v.empty()) return false;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc{} && end == v.data() + v.size();
}

}  // namespace detail

// Key-value text, one `key = value` per line, ';' or '#' comments.
//
//   vector_pool = on             vector_workers = 0 (0: all hardware threads)
//   scalar_pool = off            scalar_workers = 0
//   emulated_pools = 2           emulated_workers = 0
//   simulated_slowdowns = 1,2,4
//   small_batch_threshold = 10
//   chunk_batches = off          chunk_size = 1000
inline DeviceConfig parse_device_config(std::string_view document) {
  DeviceConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= document.size()) {
    std::size_t nl = document.find('\n', pos);
    if (nl == std::string_view::npos) nl = document.size();
    std::string_view line = text::trim(document.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == ';' || line.front() == '#') continue;

    auto fail = [&](const std::string& msg) -> void {
      throw ParseError("config line " + std::to_string(line_no) + ": " + msg, line_no);
    };
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) fail("expected 'key = value'");
    const std::string_view key = text::trim(line.substr(0, eq));
    const std::string_view value = text::trim(line.substr(eq + 1));
    bool ok = true;
    if (key == "vector_pool") {
      ok = detail::parse_bool(value, cfg.vector_pool);
    } else if (key == "vector_workers") {
      ok = detail::parse_uint(value, cfg.vector_workers);
    } else if (key == "scalar_pool") {
      ok = detail::parse_bool(value, cfg.scalar_pool);
    } else if (key == "scalar_workers") {
      ok = detail::parse_uint(value, cfg.scalar_workers);
    } else if (key == "emulated_pools") {
      ok = detail::parse_uint(value, cfg.emulated_pools);
    } else if (key == "emulated_workers") {
      ok = detail::parse_uint(value, cfg.emulated_workers);
    } else if (key == "simulated_slowdowns") {
      cfg.simulated_slowdowns.clear();
      std::string_view rest = value;
      while (ok && !rest.empty()) {
        const std::size_t comma = rest.find(',');
        std::string_view item = text::trim(rest.substr(0, comma));
        unsigned f = 0;
        ok = detail::parse_uint(item, f) && f >= 1;
        cfg.simulated_slowdowns.push_back(f);
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      }
    } else if (key == "small_batch_threshold") {
      ok = detail::parse_uint(value, cfg.small_batch_threshold);
    } else if (key == "chunk_batches") {
      ok = detail::parse_bool(value, cfg.chunk_batches);
    } else if (key == "chunk_size") {
      ok = detail::parse_uint(value, cfg.chunk_size) && cfg.chunk_size > 0;
    } else {
      fail("unknown key '" + std::string(key) + "'");
    }
    if (!ok) fail("invalid value '" + std::string(value) + "' for '" + std::string(key) + "'");
  }
  return cfg;
}

inline DeviceConfig load_device_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open device config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_device_config(ss.str());
}

// Builds the enabled devices in a fixed order: vector pool, scalar pool,
// emulated pools, simulated devices.
inline std::vector<std::unique_ptr<Device>> detect_devices(
    const DeviceConfig& cfg, const std::shared_ptr<const KnowledgeBase>& kb) {
  std::vector<std::unique_ptr<Device>> devices;
  auto next_id = [&] { return devices.size(); };
  if (cfg.vector_pool) {
    devices.push_back(std::make_unique<PoolDevice>(next_id(), kb, BackendKind::VectorPool,
                                                   cfg.vector_workers));
  }
  if (cfg.scalar_pool) {
    devices.push_back(std::make_unique<PoolDevice>(next_id(), kb, BackendKind::ScalarPool,
                                                   cfg.scalar_workers));
  }
  for (unsigned e = 0; e < cfg.emulated_pools; ++e) {
    devices.push_back(std::make_unique<PoolDevice>(next_id(), kb, BackendKind::EmulatedParallel,
                                                   cfg.emulated_workers));
  }
  for (unsigned f : cfg.simulated_slowdowns) {
    devices.push_back(std::make_unique<PoolDevice>(next_id(), kb, BackendKind::VectorPool,
                                                   cfg.vector_workers, f));
  }
  if (devices.empty()) throw DeviceError("no evaluation devices enabled", 0);
  return devices;
}

// ---------------------------------------------------------------------------
// Probing and ratios.

inline std::string probe_hypothesis_text(const KnowledgeBase& kb) {
  const NameTable& concepts = kb.names().concepts;
  if (concepts.size() == 0) throw InvalidArgument("probing needs at least one concept");
  std::string text = "(AND";
  for (std::uint32_t c = 0; c < std::min<std::size_t>(5, concepts.size()); ++c) {
    text += ' ';
    text += concepts.name(c);
  }
  text += ')';
  return text;
}

// Median of three timed runs after one warm-up, in microseconds.
inline double probe(const Device& device) {
  const KnowledgeBase& kb = device.kb();
  PlannedHypothesis h;
  h.hypothesis = parse_hypothesis(probe_hypothesis_text(kb), kb);
  h.plan = plan(h.hypothesis);
  std::span<const PlannedHypothesis> one(&h, 1);
  CoverageResult sink;
  std::span<CoverageResult> out(&sink, 1);

  device.evaluate_batch(one, out);
  double times[3];
  for (double& t : times) {
    const auto start = std::chrono::steady_clock::now();
    device.evaluate_batch(one, out);
    const auto stop = std::chrono::steady_clock::now();
    t = std::chrono::duration<double, std::micro>(stop - start).count();
  }
  std::sort(std::begin(times), std::end(times));
  // Keep the time strictly positive so ratios stay defined on trivial KBs.
  return std::max(times[1], 1e-3);
}

// ratio_d = (1/t_d) / sum_e(1/t_e), evaluated as 1 / sum_e(t_d/t_e).
inline std::vector<double> compute_ratios(std::span<const double> probe_times_us) {
  if (probe_times_us.empty()) throw InvalidArgument("no probe times");
  for (double t : probe_times_us) {
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw InvalidArgument("probe times must be positive and finite");
    }
  }
  std::vector<double> ratios(probe_times_us.size());
  for (std::size_t d = 0; d < ratios.size(); ++d) {
    double sum = 0.0;
    for (double t : probe_times_us) sum += probe_times_us[d] / t;
    ratios[d] = 1.0 / sum;
  }
  return ratios;
}

struct BatchRange {
  std::size_t start = 0;
  std::size_t count = 0;

  friend bool operator==(const BatchRange&, const BatchRange&) = default;
};

struct BatchAssignment {
  std::vector<BatchRange> ranges;  // one per device, in device order

  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> c;
    for (const BatchRange& r : ranges) c.push_back(r.count);
    return c;
  }
};

inline constexpr std::size_t kDefaultSmallBatchThreshold = 10;

// Device with the largest ratio; the lowest index wins ties.
inline std::size_t fastest_device(std::span<const double> ratios) {
  return static_cast<std::size_t>(std::max_element(ratios.begin(), ratios.end()) - ratios.begin());
}

// Each device first gets floor(batch_size * ratio). The remaining units (fewer
// than the device count) go one each to the devices in descending ratio order.
// Batches of at most `small_batch_threshold` go entirely to the fastest device.
inline BatchAssignment partition(std::size_t batch_size, std::span<const double> ratios,
                                 std::size_t small_batch_threshold = kDefaultSmallBatchThreshold) {
  if (ratios.empty()) throw InvalidArgument("no devices to partition over");
  BatchAssignment a;
  a.ranges.assign(ratios.size(), BatchRange{});
  if (batch_size == 0) return a;

  std::vector<std::size_t> counts(ratios.size(), 0);
  if (batch_size <= small_batch_threshold) {
    counts[fastest_device(ratios)] = batch_size;
  } else {
    std::size_t assigned = 0;
    for (std::size_t d = 0; d < ratios.size(); ++d) {
      counts[d] = static_cast<std::size_t>(std::floor(static_cast<double>(batch_size) * ratios[d]));
      counts[d] = std::min(counts[d], batch_size - assigned);
      assigned += counts[d];
    }
    std::vector<std::size_t> by_speed(ratios.size());
    std::iota(by_speed.begin(), by_speed.end(), std::size_t{0});
    std::stable_sort(by_speed.begin(), by_speed.end(),
                     [&](std::size_t x, std::size_t y) { return ratios[x] > ratios[y]; });
    for (std::size_t k = 0; assigned < batch_size; k = (k + 1) % by_speed.size()) {
      ++counts[by_speed[k]];
      ++assigned;
    }
  }

  std::size_t start = 0;
  for (std::size_t d = 0; d < counts.size(); ++d) {
    a.ranges[d] = BatchRange{start, counts[d]};
    start += counts[d];
  }
  return a;
}

// ---------------------------------------------------------------------------
// Scheduler.

struct DeviceProfile {
  std::size_t device_id = 0;
  double probe_us = 0.0;
  double ratio = 0.0;
};

struct ProbeFailure {
  std::size_t device_id = 0;
  std::string message;
};

struct SchedulerOptions {
  std::size_t small_batch_threshold = kDefaultSmallBatchThreshold;
  bool chunk_batches = false;
  std::size_t chunk_size = 1000;
};

inline SchedulerOptions scheduler_options(const DeviceConfig& cfg) {
  return {cfg.small_batch_threshold, cfg.chunk_batches, cfg.chunk_size};
}

// Owns the probed devices and their static ratios.
class Scheduler {
 public:
  // Probes every device; devices whose probe throws are dropped and listed in
  // failures(). Throws DeviceError when no device survives.
  static Scheduler probe_devices(std::vector<std::unique_ptr<Device>> devices,
                                 SchedulerOptions options = {}) {
    std::vector<std::unique_ptr<Device>> healthy;
    std::vector<double> times;
    std::vector<ProbeFailure> failures;
    for (auto& d : devices) {
      try {
        times.push_back(probe(*d));
        healthy.push_back(std::move(d));
      } catch (const std::exception& e) {
        failures.push_back({d->id(), e.what()});
      }
    }
    if (healthy.empty()) throw DeviceError("every device failed its probe", 0);
    Scheduler s(std::move(healthy), std::move(times), options);
    s.failures_ = std::move(failures);
    return s;
  }

  // Uses the given probe times instead of measuring.
  Scheduler(std::vector<std::unique_ptr<Device>> devices, std::vector<double> probe_times_us,
            SchedulerOptions options = {})
      : devices_(std::move(devices)), options_(options) {
    if (devices_.empty()) throw DeviceError("no evaluation devices", 0);
    if (probe_times_us.size() != devices_.size()) {
      throw InvalidArgument("one probe time per device is required");
    }
    std::vector<double> ratios = compute_ratios(probe_times_us);
    for (std::size_t d = 0; d < devices_.size(); ++d) {
      profiles_.push_back({devices_[d]->id(), probe_times_us[d], ratios[d]});
    }
  }

  std::span<const std::unique_ptr<Device>> devices() const noexcept { return devices_; }
  std::span<const DeviceProfile> profiles() const noexcept { return profiles_; }
  std::span<const ProbeFailure> failures() const noexcept { return failures_; }
  const SchedulerOptions& options() const noexcept { return options_; }

  std::vector<double> ratios() const {
    std::vector<double> r;
    for (const DeviceProfile& p : profiles_) r.push_back(p.ratio);
    return r;
  }

  BatchAssignment assign(std::size_t batch_size) const {
    return partition(batch_size, ratios(), options_.small_batch_threshold);
  }

  // Evaluates already-planned hypotheses; results are positional.
  std::vector<CoverageResult> run(std::span<const PlannedHypothesis> hyps) const {
    std::vector<CoverageResult> out(hyps.size());
    const std::size_t chunk = options_.chunk_batches ? options_.chunk_size : hyps.size();
    for (std::size_t begin = 0; begin < hyps.size(); begin += std::max<std::size_t>(chunk, 1)) {
      const std::size_t len = std::min(chunk, hyps.size() - begin);
      dispatch(hyps.subspan(begin, len), std::span<CoverageResult>(out).subspan(begin, len));
    }
    return out;
  }

 private:
  void dispatch(std::span<const PlannedHypothesis> hyps, std::span<CoverageResult> out) const {
    const BatchAssignment a = assign(hyps.size());
    std::vector<std::exception_ptr> errors(devices_.size());
    auto work = [&](std::size_t d) {
      const BatchRange& r = a.ranges[d];
      try {
        devices_[d]->evaluate_batch(hyps.subspan(r.start, r.count), out.subspan(r.start, r.count));
      } catch (...) {
        errors[d] = std::current_exception();
      }
    };

    std::vector<std::size_t> busy;
    for (std::size_t d = 0; d < devices_.size(); ++d) {
      if (a.ranges[d].count > 0) busy.push_back(d);
    }
    if (busy.size() == 1) {
      work(busy.front());
    } else {
      std::vector<std::jthread> threads;
      threads.reserve(busy.size());
      for (std::size_t d : busy) threads.emplace_back(work, d);
    }

    for (std::size_t d = 0; d < devices_.size(); ++d) {
      if (!errors[d]) continue;
      std::string msg = "device " + std::to_string(devices_[d]->id()) + " (" +
                        devices_[d]->kind() + ") failed: ";
      try {
        std::rethrow_exception(errors[d]);
      } catch (const std::exception& e) {
        msg += e.what();
      } catch (...) {
        msg += "unknown error";
      }
      throw DeviceError(msg, devices_[d]->id());
    }
  }

  std::vector<std::unique_ptr<Device>> devices_;
  std::vector<DeviceProfile> profiles_;
  std::vector<ProbeFailure> failures_;
  SchedulerOptions options_;
};

// Parses and plans every hypothesis in parallel; the first failing index
// aborts the whole batch.
inline std::vector<PlannedHypothesis> plan_batch(std::span<const std::string> texts,
                                                 const KnowledgeBase& kb, unsigned workers = 0) {
  std::vector<PlannedHypothesis> planned(texts.size());
  std::vector<std::exception_ptr> errors(texts.size());
  parallel::for_each_index(texts.size(), workers, [&](std::size_t k) {
    try {
      planned[k].hypothesis = parse_hypothesis(texts[k], kb);
      planned[k].plan = plan(planned[k].hypothesis);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  });
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const std::exception& e) {
      throw BatchError("hypothesis " + std::to_string(k) + ": " + e.what(), k);
    }
  }
  return planned;
}

// Every device must be evaluating against `kb` itself.
inline std::vector<CoverageResult> evaluate_batch(std::span<const std::string> texts,
                                                  const KnowledgeBase& kb,
                                                  const Scheduler& scheduler) {
  for (const auto& d : scheduler.devices()) {
    if (&d->kb() != &kb) throw InvalidArgument("devices hold a different knowledge base");
  }
  std::vector<PlannedHypothesis> planned = plan_batch(texts, kb);
  return scheduler.run(planned);
}

}  // namespace dleval
