#include "fedirr/experiment.hpp"

#include "fedirr/error.hpp"
#include "fedirr/log.hpp"
#include "fedirr/random.hpp"

#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

namespace fedirr::experiment {

namespace {

enum : std::uint64_t { kWarmupRng = 1, kEvalRng = 2, kWarmupWeather = 3, kEvalWeather = 4 };

std::string fixed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

// Deficits are small fractions; six decimals would hide most of them.
std::string fixed9(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", x);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

edge::NodeState make_node(const ExperimentConfig& cfg, const std::string& node_id,
                          edge::Policy policy, std::uint64_t rng_stream) {
  auto nc = node_config(cfg, node_id);
  nc.policy = policy;
  nc.seed = hash_combine(nc.seed, rng_stream);
  return edge::NodeState::make(nc);
}

void run_reactive(edge::NodeState& node, const soil::WeatherTrace& trace) {
  for (const auto& tick : trace.ticks) edge::run_tick(node, tick, trace.dt_hours);
}

} // namespace

// ---------------------------------------------------------------- telemetry

std::string telemetry_line(const TelemetryRow& row) {
  std::string line;
  line += std::to_string(row.tick) + ',' + row.node_id + ',' + std::to_string(row.analog_raw) + ',';
  line += row.digital_dry ? "1," : "0,";
  line += fixed6(row.moisture_true) + ',';
  line += row.pump_on ? "1," : "0,";
  line += fixed6(row.planned_minutes) + ',' + fixed6(row.tank_level) + ',' + fixed6(row.applied_liters);
  return line;
}

void write_telemetry(const std::filesystem::path& path, const std::vector<TelemetryRow>& rows) {
  std::string text(kTelemetryHeader);
  text += '\n';
  for (const auto& row : rows) text += telemetry_line(row) + '\n';
  write_file(path, text);
}

// ------------------------------------------------------------------ reports

NodeReport total_of(const std::vector<NodeReport>& nodes) {
  NodeReport total;
  total.node_id = "TOTAL";
  for (const auto& n : nodes) {
    total.ledger += n.ledger;
    total.mean_moisture_deficit += n.mean_moisture_deficit;
  }
  if (!nodes.empty()) total.mean_moisture_deficit /= static_cast<double>(nodes.size());
  return total;
}

std::string report_csv(const std::vector<NodeReport>& nodes) {
  std::string text(kReportHeader);
  text += '\n';
  auto row = [&](const NodeReport& r) {
    const auto& l = r.ledger;
    text += r.node_id + ',' + fixed6(l.applied_liters) + ',' + fixed6(l.drained_from_irrigation_liters) +
            ',' + fixed6(l.rain_preempted_liters) + ',' + fixed6(l.avoidable_applied_liters) + ',' +
            fixed6(l.baseline_applied_liters) + ',' + fixed6(l.wasted_liters()) + ',' +
            fixed9(r.mean_moisture_deficit) + '\n';
  };
  for (const auto& n : nodes) row(n);
  row(total_of(nodes));
  return text;
}

std::string report_text(const std::vector<NodeReport>& nodes, edge::Policy policy) {
  std::ostringstream out;
  out << "policy: " << edge::policy_name(policy) << "\n";
  out << std::left << std::setw(8) << "node" << std::right << std::setw(14) << "applied_L"
      << std::setw(14) << "drained_L" << std::setw(14) << "avoidable_L" << std::setw(14)
      << "preempted_L" << std::setw(14) << "wasted_L" << std::setw(14) << "deficit" << "\n";
  auto row = [&](const NodeReport& r) {
    const auto& l = r.ledger;
    out << std::left << std::setw(8) << r.node_id << std::right << std::fixed << std::setprecision(3)
        << std::setw(14) << l.applied_liters << std::setw(14) << l.drained_from_irrigation_liters
        << std::setw(14) << l.avoidable_applied_liters << std::setw(14) << l.rain_preempted_liters
        << std::setw(14) << l.wasted_liters() << std::setprecision(9) << std::setw(14)
        << r.mean_moisture_deficit << "\n";
  };
  for (const auto& n : nodes) row(n);
  row(total_of(nodes));
  return out.str();
}

std::vector<NodeReport> read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader)
    throw Error(Errc::invalid_input, path.string() + ": unexpected header");
  std::vector<NodeReport> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 8) throw Error(Errc::invalid_input, path.string() + ": bad row '" + line + "'");
    NodeReport r;
    r.node_id = cells[0];
    try {
      r.ledger.applied_liters = std::stod(cells[1]);
      r.ledger.drained_from_irrigation_liters = std::stod(cells[2]);
      r.ledger.rain_preempted_liters = std::stod(cells[3]);
      r.ledger.avoidable_applied_liters = std::stod(cells[4]);
      r.ledger.baseline_applied_liters = std::stod(cells[5]);
      r.mean_moisture_deficit = std::stod(cells[7]);
    } catch (const std::exception&) {
      throw Error(Errc::invalid_input, path.string() + ": bad number in '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------- node life

soil::WeatherTrace evaluation_trace(const ExperimentConfig& cfg, const std::string& node_id) {
  return soil::make_scenario(cfg.scenario, cfg.ticks,
                             hash_combine(node_seed(cfg, node_id), kEvalWeather), cfg.dt_hours);
}

edge::NodeState prepare_node(const ExperimentConfig& cfg, const std::string& node_id) {
  edge::NodeState node = make_node(cfg, node_id, cfg.policy, kEvalRng);
  if (cfg.warmup_ticks > 0) {
    edge::NodeState warm = make_node(cfg, node_id, edge::Policy::reactive, kWarmupRng);
    run_reactive(warm, soil::make_scenario(cfg.scenario, cfg.warmup_ticks,
                                           hash_combine(node_seed(cfg, node_id), kWarmupWeather),
                                           cfg.dt_hours));
    node.dataset = warm.dataset;
  }
  return node;
}

std::vector<fl::TrainingExample> validation_set(const ExperimentConfig& cfg) {
  if (cfg.server.validation_ticks == 0) return {};
  const std::string id = "validation";
  edge::NodeState node = make_node(cfg, id, edge::Policy::reactive, kWarmupRng);
  run_reactive(node, soil::make_scenario(cfg.scenario, cfg.server.validation_ticks,
                                         hash_combine(node_seed(cfg, id), kWarmupWeather),
                                         cfg.dt_hours));
  return cfg.scaling.encode(node.dataset.to_vector());
}

EvaluationRun evaluate_node(edge::NodeState& node, const ExperimentConfig& cfg,
                            alerts::AlertDispatcher* live) {
  const auto trace = evaluation_trace(cfg, node.node_id);
  EvaluationRun run;
  run.telemetry.reserve(trace.ticks.size());
  for (const auto& weather : trace.ticks) {
    auto tick = edge::run_tick(node, weather, trace.dt_hours);
    run.telemetry.push_back({tick.frame.tick, node.node_id, tick.frame.analog_raw,
                             tick.frame.digital_dry, tick.moisture_before, tick.plan.pump_on,
                             tick.plan.planned_minutes, node.tank.level, tick.applied_liters});
    for (auto& ev : tick.alerts) {
      if (live) live->dispatch(ev);
      run.alerts.push_back(std::move(ev));
    }
  }
  run.report = {node.node_id, node.ledger, node.mean_moisture_deficit()};
  return run;
}

fl::ModelParams train_offline(edge::NodeState& node, const ExperimentConfig& cfg) {
  fl::ModelParams global = fl::ModelParams::zeros(edge::kFeatureDim, edge::feature_names());
  for (int r = 0; r < cfg.train.max_rounds; ++r) {
    const proto::RoundStart start{global.round, global.weights,
                                  {cfg.train.local_epochs, cfg.train.learning_rate}};
    const auto msg = edge::make_update(node, start, cfg.train.l2);
    fl::ModelParams next = fl::aggregate(std::vector<fl::ClientUpdate>{
        {msg.client_id, msg.round, msg.weights, msg.sample_count, msg.local_loss}});
    next.feature_names = global.feature_names;
    const bool done = fl::has_converged(global, next, cfg.train.convergence_tol);
    global = std::move(next);
    if (done) break;
  }
  node.current_model = global;
  return global;
}

server::ServerConfig make_server_config(const ExperimentConfig& cfg) {
  server::ServerConfig sc;
  sc.train = cfg.train;
  sc.feature_dim = edge::kFeatureDim;
  sc.feature_names = edge::feature_names();
  sc.round_deadline = std::chrono::milliseconds(cfg.server.round_deadline_ms);
  sc.expected_clients = cfg.nodes;
  sc.registration_timeout = std::chrono::milliseconds(cfg.server.registration_timeout_ms);
  sc.validation = validation_set(cfg);
  return sc;
}

net::TcpStream connect_with_retry(const net::Endpoint& endpoint, int retries,
                                  std::chrono::milliseconds backoff) {
  for (int attempt = 0;; ++attempt) {
    try {
      return net::TcpStream::connect(endpoint);
    } catch (const Error& e) {
      if (attempt >= retries) throw;
      log::warn(std::string(e.what()) + "; retrying in " + std::to_string(backoff.count()) + " ms");
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
}

// ---------------------------------------------------------------- commands

int run_serve(const ExperimentConfig& cfg, const ServeOptions& opts, std::ostream& out,
              std::ostream& err) {
  try {
    auto sc = make_server_config(cfg);
    if (opts.out_dir) {
      sc.checkpoint_dir = *opts.out_dir;
      if (opts.resume) sc.resume_from = server::checkpoint_load_latest(*opts.out_dir);
    }
    server::AggregationServer srv(sc, opts.listen);
    out << "listening on " << opts.listen.host << ":" << srv.port() << ", waiting for "
        << cfg.nodes << " client(s)" << std::endl;
    const auto result = srv.run_training();
    for (const auto& rec : result.history) {
      const auto& r = rec.report;
      out << "round " << r.round << " -> " << rec.global.round << ": responders=" << r.responders.size()
          << " stragglers=" << r.stragglers.size() << (r.skipped ? " skipped" : "");
      if (r.post_loss) out << " val_loss=" << *r.post_loss;
      out << (r.converged ? " converged" : "") << "\n";
    }
    out << (result.converged ? "converged" : "stopped without convergence") << " at round "
        << result.final_model.round << std::endl;
    return result.converged ? 0 : 2;
  } catch (const Error& e) {
    err << "error: " << errc_name(e.code()) << ": " << e.what() << std::endl;
    return 1;
  }
}

int run_client(const ExperimentConfig& cfg, const ClientOptions& opts, std::ostream& out,
               std::ostream& err) {
  try {
    edge::NodeState node = prepare_node(cfg, opts.node_id);
    if (opts.offline) {
      if (cfg.policy == edge::Policy::predictive) train_offline(node, cfg);
    } else {
      auto stream = connect_with_retry(opts.server, opts.retries, opts.backoff);
      const auto outcome = edge::run_federation(stream, node, cfg.train.l2);
      out << opts.node_id << ": federation finished after " << outcome.rounds << " round(s)"
          << (outcome.converged ? ", converged" : "") << std::endl;
    }
    alerts::AlertDispatcher dispatcher(cfg.sinks, cfg.dt_hours, out);
    auto run = evaluate_node(node, cfg, &dispatcher);
    if (opts.telemetry) write_telemetry(*opts.telemetry, run.telemetry);
    out << report_text({run.report}, cfg.policy);
    return 0;
  } catch (const Error& e) {
    err << "error: " << errc_name(e.code()) << ": " << e.what() << std::endl;
    return 1;
  }
}

DemoResult run_demo(const ExperimentConfig& cfg, const std::filesystem::path& run_dir) {
  cfg.validate();
  std::filesystem::create_directories(run_dir / "checkpoints");
  std::filesystem::create_directories(run_dir / "telemetry");
  write_file(run_dir / "config.json", config_to_json(cfg));

  auto sc = make_server_config(cfg);
  sc.checkpoint_dir = run_dir / "checkpoints";
  server::AggregationServer srv(sc, net::Endpoint{"127.0.0.1", 0});
  const net::Endpoint endpoint{"127.0.0.1", srv.port()};

  std::vector<EvaluationRun> runs(cfg.nodes);
  std::vector<std::exception_ptr> failures(cfg.nodes);
  std::vector<std::thread> clients;
  clients.reserve(cfg.nodes);
  for (std::size_t i = 0; i < cfg.nodes; ++i) {
    clients.emplace_back([&, i] {
      try {
        edge::NodeState node = prepare_node(cfg, node_id_for(i));
        auto stream = connect_with_retry(endpoint, 3, std::chrono::milliseconds(100));
        edge::run_federation(stream, node, cfg.train.l2);
        runs[i] = evaluate_node(node, cfg);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    });
  }

  DemoResult result;
  std::exception_ptr server_failure;
  try {
    result.training = srv.run_training();
  } catch (...) {
    server_failure = std::current_exception();
    srv.shutdown();
  }
  for (auto& t : clients) t.join();
  if (server_failure) std::rethrow_exception(server_failure);
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);

  // Alerts are replayed after the run, node by node, so the log is ordered.
  const auto alerts_log = run_dir / "alerts.log";
  std::filesystem::remove(alerts_log);
  auto sinks = cfg.sinks;
  sinks.push_back({alerts::SinkKind::file, alerts_log.string(), 1000000});
  alerts::AlertDispatcher dispatcher(sinks, cfg.dt_hours, std::cout);
  for (const auto& run : runs) {
    write_telemetry(run_dir / "telemetry" / (run.report.node_id + ".csv"), run.telemetry);
    for (const auto& ev : run.alerts) dispatcher.dispatch(ev);
    result.nodes.push_back(run.report);
  }
  if (!std::filesystem::exists(alerts_log)) write_file(alerts_log, "");
  result.total = total_of(result.nodes);
  write_file(run_dir / "report.csv", report_csv(result.nodes));
  write_file(run_dir / "report.txt", report_text(result.nodes, cfg.policy));
  return result;
}

// ------------------------------------------------------------------ compare

std::vector<CompareRow> compare_runs(const std::filesystem::path& run_a,
                                     const std::filesystem::path& run_b) {
  const auto a = read_report_csv(run_a / "report.csv");
  const auto b = read_report_csv(run_b / "report.csv");
  std::vector<CompareRow> rows;
  auto delta = [](double x, double y) -> std::optional<double> {
    if (x == y) return 0.0;
    if (x == 0.0) return std::nullopt;
    return (y - x) / std::abs(x) * 100.0;
  };
  for (const auto& ra : a) {
    const NodeReport* rb = nullptr;
    for (const auto& cand : b)
      if (cand.node_id == ra.node_id) rb = &cand;
    if (!rb) continue;
    const std::pair<const char*, std::pair<double, double>> metrics[] = {
        {"applied_liters", {ra.ledger.applied_liters, rb->ledger.applied_liters}},
        {"drained_from_irrigation_liters",
         {ra.ledger.drained_from_irrigation_liters, rb->ledger.drained_from_irrigation_liters}},
        {"rain_preempted_liters", {ra.ledger.rain_preempted_liters, rb->ledger.rain_preempted_liters}},
        {"avoidable_applied_liters",
         {ra.ledger.avoidable_applied_liters, rb->ledger.avoidable_applied_liters}},
        {"wasted_liters", {ra.ledger.wasted_liters(), rb->ledger.wasted_liters()}},
        {"mean_moisture_deficit", {ra.mean_moisture_deficit, rb->mean_moisture_deficit}},
    };
    for (const auto& [name, v] : metrics)
      rows.push_back({ra.node_id, name, v.first, v.second, delta(v.first, v.second)});
  }
  return rows;
}

std::string compare_text(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "node" << std::setw(34) << "metric" << std::right
      << std::setw(16) << "a" << std::setw(16) << "b" << std::setw(12) << "delta" << "\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(8) << r.node_id << std::setw(34) << r.metric << std::right
        << std::fixed << std::setprecision(9) << std::setw(16) << r.a << std::setw(16) << r.b;
    if (r.delta_pct) {
      std::ostringstream pct;
      pct << std::showpos << std::fixed << std::setprecision(2) << *r.delta_pct << "%";
      out << std::setw(12) << pct.str();
    } else {
      out << std::setw(12) << "n/a";
    }
    out << "\n";
  }
  return out.str();
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string text = "node_id,metric,a,b,delta_pct\n";
  for (const auto& r : rows) {
    text += r.node_id + ',' + r.metric + ',' + fixed9(r.a) + ',' + fixed9(r.b) + ',' +
            (r.delta_pct ? fixed6(*r.delta_pct) : std::string("n/a")) + '\n';
  }
  return text;
}

} // namespace fedirr::experiment
