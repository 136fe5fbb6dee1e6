// dleval command-line front end.
//
// Exit status: 0 success, 1 usage error, 2 data error (I/O, parse, infeasible
// input, device failure).

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bench.hpp"
#include "dleval/dleval.hpp"

namespace {

using namespace dleval;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string kb_path;
  std::string config_path;
  std::uint64_t seed = 1;
  std::string strategy = "vector";
  std::string devices;
  std::string format = "csv";
  bool chunk_batches = false;
  std::size_t chunk_size = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
  if (!out.flush()) throw Error("write failed for '" + path + "'");
}

std::shared_ptr<const KnowledgeBase> require_kb(const GlobalOptions& g) {
  if (g.kb_path.empty()) throw UsageError("--kb is required");
  return std::make_shared<const KnowledgeBase>(load_kb_file(g.kb_path));
}

// `vector,scalar,emulated,slow:2` replaces the configured device list.
void apply_device_list(const std::string& list, DeviceConfig& cfg) {
  cfg.vector_pool = false;
  cfg.scalar_pool = false;
  cfg.emulated_pools = 0;
  cfg.simulated_slowdowns.clear();
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string_view it = text::trim(item);
    if (it == "vector") {
      cfg.vector_pool = true;
    } else if (it == "scalar") {
      cfg.scalar_pool = true;
    } else if (it == "emulated") {
      ++cfg.emulated_pools;
    } else if (it.starts_with("slow:")) {
      unsigned f = 0;
      const std::string_view num = it.substr(5);
      auto [end, ec] = std::from_chars(num.data(), num.data() + num.size(), f);
      if (ec != std::errc{} || end != num.data() + num.size() || f == 0) {
        throw UsageError("bad slowdown in --devices: '" + std::string(it) + "'");
      }
      cfg.simulated_slowdowns.push_back(f);
    } else {
      throw UsageError("unknown device '" + std::string(it) +
                       "' (expected vector, scalar, emulated or slow:<factor>)");
    }
  }
}

DeviceConfig device_config(const GlobalOptions& g) {
  DeviceConfig cfg = g.config_path.empty() ? DeviceConfig{} : load_device_config(g.config_path);
  if (!g.devices.empty()) apply_device_list(g.devices, cfg);
  if (g.chunk_batches) cfg.chunk_batches = true;
  if (g.chunk_size > 0) cfg.chunk_size = g.chunk_size;
  return cfg;
}

Scheduler make_scheduler(const GlobalOptions& g, const std::shared_ptr<const KnowledgeBase>& kb) {
  const DeviceConfig cfg = device_config(g);
  Scheduler s = Scheduler::probe_devices(detect_devices(cfg, kb), scheduler_options(cfg));
  for (const ProbeFailure& f : s.failures()) {
    std::cerr << "warning: device " << f.device_id << " dropped: " << f.message << '\n';
  }
  return s;
}

// One hypothesis per line; blank lines and ';' comments are skipped.
std::vector<std::string> read_hypotheses(const std::string& path) {
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const std::string_view t = text::trim(line);
    if (t.empty() || t.front() == ';') continue;
    out.emplace_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct GenOptions {
  std::string regime = "single-subject";
  std::size_t assertions = 0;
  std::optional<std::size_t> individuals;
  std::size_t concepts = 8;
  double density = 0.5;
  std::size_t hypotheses = 100;
  std::string hypothesis_template = "conj5";
  std::string out = "kb.txt";
  std::string hypotheses_out;
};

int cmd_gen(const GlobalOptions& g, const GenOptions& o) {
  DatasetSpec spec;
  spec.regime = o.regime == "unique-subject" ? Regime::UniqueSubject : Regime::SingleSubject;
  spec.num_assertions = o.assertions;
  spec.num_individuals = o.individuals;
  if (!o.individuals && o.assertions == 0) spec.num_individuals = 1000;
  spec.num_concepts = o.concepts;
  spec.density = o.density;
  spec.seed = g.seed;

  const KnowledgeBase kb = build_dataset(spec);
  write_file(o.out, write_kb(kb));
  std::cout << "wrote " << o.out << ": " << kb.num_individuals() << " individuals, "
            << kb.concepts().rows() << " concepts, " << kb.roles().assertions().size()
            << " role assertions (" << to_string(spec.regime) << ")\n";

  if (!o.hypotheses_out.empty()) {
    const auto tmpl =
        o.hypothesis_template == "mixed" ? HypothesisTemplate::RandomMixed : HypothesisTemplate::Conj5;
    const auto batch = gen_hypothesis_batch(o.hypotheses, tmpl, kb, g.seed);
    std::string body;
    for (const std::string& h : batch) body += h + '\n';
    write_file(o.hypotheses_out, body);
    std::cout << "wrote " << o.hypotheses_out << ": " << batch.size() << " hypotheses\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  std::vector<std::string> hypotheses;
  std::string file;
};

int cmd_eval(const GlobalOptions& g, const EvalOptions& o) {
  if (o.hypotheses.empty() == o.file.empty()) {
    throw UsageError("eval needs either --hypothesis or --file");
  }
  auto kb = require_kb(g);
  using clock = std::chrono::steady_clock;

  if (!o.file.empty()) {
    const std::vector<std::string> texts = read_hypotheses(o.file);
    const Scheduler scheduler = make_scheduler(g, kb);
    const auto start = clock::now();
    const std::vector<CoverageResult> results = evaluate_batch(texts, *kb, scheduler);
    const auto stop = clock::now();
    std::string out;
    for (const CoverageResult& r : results) {
      out += "pos=" + std::to_string(r.pos) + " neg=" + std::to_string(r.neg) + '\n';
    }
    std::cout << out;
    std::cerr << "time_us=" << std::chrono::duration_cast<std::chrono::microseconds>(stop - start).count()
              << " assignment=" << bench::join_counts(scheduler.assign(texts.size()).counts())
              << '\n';
    return 0;
  }

  const Execution exec(*parse_strategy(g.strategy));
  for (const std::string& h : o.hypotheses) {
    const auto start = clock::now();
    const CoverageResult r = evaluate(h, *kb, exec);
    const auto stop = clock::now();
    std::cout << "pos=" << r.pos << " neg=" << r.neg << '\n';
    std::cerr << "time_us="
              << std::chrono::duration_cast<std::chrono::microseconds>(stop - start).count() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchOptions {
  std::string suite = "all";
  bench::SweepOptions sweep;
  std::string out;
};

nlohmann::json report_json(const bench::BenchReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const bench::BenchRow& r : report.rows) {
    rows.push_back({{"suite", r.suite},
                    {"workload", r.workload},
                    {"size", r.size},
                    {"regime", r.regime},
                    {"column", r.column},
                    {"time_us", static_cast<std::uint64_t>(r.time_us + 0.5)},
                    {"speedup", r.speedup},
                    {"assignment", r.assignment},
                    {"status", r.status}});
  }
  return {{"rows", rows}};
}

int cmd_bench(const GlobalOptions& g, BenchOptions o) {
  o.sweep.seed = g.seed;
  o.sweep.devices = device_config(g);
  const std::string& s = o.suite;
  if (s != "all" && s != "conjunction" && s != "disjunction" && s != "restrictions" &&
      s != "batch") {
    throw UsageError("unknown suite '" + s + "'");
  }
  bench::BenchReport report;
  if (s == "all" || s == "conjunction") bench::conjunction_sweeps(report, true, o.sweep);
  if (s == "all" || s == "disjunction") bench::conjunction_sweeps(report, false, o.sweep);
  if (s == "all" || s == "restrictions") bench::restriction_sweeps(report, o.sweep);
  report.compute_speedups();
  if (s == "all" || s == "batch") {
    bench::BenchReport batch;
    bench::batch_sweep(batch, o.sweep);
    report.rows.insert(report.rows.end(), batch.rows.begin(), batch.rows.end());
  }

  const std::string body =
      g.format == "json" ? report_json(report).dump(2) + '\n' : report.to_csv();
  if (o.out.empty()) {
    std::cout << body;
  } else {
    write_file(o.out, body);
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_probe(const GlobalOptions& g) {
  auto kb = require_kb(g);
  const Scheduler scheduler = make_scheduler(g, kb);
  double sum = 0.0;
  std::printf("%-4s %-20s %14s %8s\n", "id", "device", "probe_us", "ratio");
  for (std::size_t d = 0; d < scheduler.devices().size(); ++d) {
    const DeviceProfile& p = scheduler.profiles()[d];
    sum += p.ratio;
    std::printf("%-4zu %-20s %14.3f %8.3f\n", p.device_id,
                scheduler.devices()[d]->kind().c_str(), p.probe_us, p.ratio);
  }
  std::printf("sum %.3f\n", sum);
  return 0;
}

int cmd_devices(const GlobalOptions& g) {
  // Devices need a KB to exist; an empty one is enough to list them.
  auto kb = g.kb_path.empty() ? std::make_shared<const KnowledgeBase>(KnowledgeBaseBuilder{}.build())
                              : require_kb(g);
  for (const auto& d : detect_devices(device_config(g), kb)) {
    const auto* pool = dynamic_cast<const PoolDevice*>(d.get());
    std::cout << d->id() << ' ' << d->kind();
    if (pool) std::cout << " workers=" << pool->workers();
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluate description-logic hypotheses over a knowledge base"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--kb", g.kb_path, "Knowledge base file");
  app.add_option("--config", g.config_path, "Device configuration file");
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--strategy", g.strategy, "Execution strategy for single evaluation")
      ->check(CLI::IsMember({"sequential", "scalar", "vector", "emulated"}));
  app.add_option("--devices", g.devices, "Device list, e.g. vector,scalar,emulated,slow:2");
  app.add_option("--format", g.format, "Report format")->check(CLI::IsMember({"csv", "json"}));
  app.add_flag("--chunk-batches", g.chunk_batches, "Split large batches into chunks");
  app.add_option("--chunk-size", g.chunk_size, "Hypotheses per chunk with --chunk-batches");

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic KB and hypothesis batch");
  gen_cmd->add_option("--regime", gen.regime)
      ->check(CLI::IsMember({"single-subject", "unique-subject"}));
  gen_cmd->add_option("--assertions", gen.assertions, "Role assertions");
  gen_cmd->add_option("--individuals", gen.individuals,
                      "Individuals (default: smallest feasible, or 1000 without assertions)");
  gen_cmd->add_option("--concepts", gen.concepts);
  gen_cmd->add_option("--density", gen.density, "Concept membership probability");
  gen_cmd->add_option("--hypotheses", gen.hypotheses, "Hypotheses in the generated batch");
  gen_cmd->add_option("--template", gen.hypothesis_template)
      ->check(CLI::IsMember({"conj5", "mixed"}));
  gen_cmd->add_option("-o,--out", gen.out, "KB output path");
  gen_cmd->add_option("--hypotheses-out", gen.hypotheses_out, "Hypothesis batch output path");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate hypotheses and print coverage");
  eval_cmd->add_option("-e,--hypothesis", ev.hypotheses, "Hypothesis text (repeatable)");
  eval_cmd->add_option("-f,--file", ev.file, "Batch file, one hypothesis per line");

  BenchOptions bo;
  auto* bench_cmd = app.add_subcommand("bench", "Run benchmark sweeps");
  bench_cmd->add_option("--suite", bo.suite, "all|conjunction|disjunction|restrictions|batch");
  bench_cmd->add_option("--max-individuals", bo.sweep.max_individuals);
  bench_cmd->add_option("--concept-individuals", bo.sweep.concept_sweep_individuals);
  bench_cmd->add_option("--max-assertions", bo.sweep.max_assertions);
  bench_cmd->add_option("--max-batch", bo.sweep.max_batch);
  bench_cmd->add_option("--batch-individuals", bo.sweep.batch_individuals);
  bench_cmd->add_option("--runs", bo.sweep.runs)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--workers", bo.sweep.workers, "0: all hardware threads");
  bench_cmd->add_option("--min-sample-us", bo.sweep.min_sample_us);
  bench_cmd->add_option("-o,--out", bo.out, "Report path (default stdout)");

  auto* probe_cmd = app.add_subcommand("probe", "Probe devices and print ratios");
  auto* devices_cmd = app.add_subcommand("devices", "List configured devices");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(g, gen);
    if (*eval_cmd) return cmd_eval(g, ev);
    if (*bench_cmd) return cmd_bench(g, bo);
    if (*probe_cmd) return cmd_probe(g);
    if (*devices_cmd) return cmd_devices(g);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
