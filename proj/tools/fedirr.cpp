#include "fedirr/config.hpp"
#include "fedirr/error.hpp"
#include "fedirr/experiment.hpp"
#include "fedirr/log.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace fedirr;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::string> scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> policy;
  std::optional<std::size_t> nodes;
  std::optional<std::size_t> ticks;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Config file (JSON); FEDIRR_CONFIG is used when absent");
  cmd->add_option("--scenario", c.scenario, "dry-spell | rain-heavy | alternating");
  cmd->add_option("--seed", c.seed, "Experiment seed");
  cmd->add_option("--policy", c.policy, "reactive | predictive");
  cmd->add_option("--nodes", c.nodes, "Number of edge nodes");
  cmd->add_option("--ticks", c.ticks, "Evaluation length in ticks");
}

ExperimentConfig resolve_config(const Common& c) {
  std::string path = c.config_path;
  if (path.empty())
    if (const char* env = std::getenv("FEDIRR_CONFIG")) path = env;
  ExperimentConfig cfg = path.empty() ? default_config() : load_config(path);
  if (c.scenario) cfg.scenario = soil::parse_scenario(*c.scenario);
  if (c.seed) cfg.seed = *c.seed;
  if (c.policy) cfg.policy = edge::parse_policy(*c.policy);
  if (c.nodes) cfg.nodes = *c.nodes;
  if (c.ticks) cfg.ticks = *c.ticks;
  cfg.validate();
  return cfg;
}

int fail(const Error& e) {
  std::cerr << "error: " << errc_name(e.code()) << ": " << e.what() << std::endl;
  return 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated irrigation simulator"};
  app.require_subcommand(0, 1);
  bool print_default = false;
  std::string log_level = "warn";
  app.add_flag("--print-default-config", print_default, "Print the default config as JSON and exit");
  app.add_option("--log-level", log_level, "debug | info | warn | error | off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  Common serve_c, client_c, demo_c;

  auto* serve = app.add_subcommand("serve", "Run the aggregation server");
  add_common(serve, serve_c);
  std::string listen;
  std::string serve_out;
  bool resume = false;
  serve->add_option("--listen", listen, "host:port to listen on (default from config)");
  serve->add_option("--out", serve_out, "Checkpoint directory");
  serve->add_flag("--resume", resume, "Resume from the latest checkpoint in --out");

  auto* client = app.add_subcommand("client", "Run one edge node");
  add_common(client, client_c);
  std::string server_addr;
  std::string node_id = "n1";
  std::string telemetry;
  bool offline = false;
  int retries = 3;
  client->add_option("--server", server_addr, "host:port of the server (default from config)");
  client->add_option("--node-id", node_id, "Node identifier");
  client->add_option("--telemetry", telemetry, "Write telemetry CSV here");
  client->add_flag("--offline", offline, "Train locally without contacting a server");
  client->add_option("--retries", retries, "Connection retries")->check(CLI::NonNegativeNumber);

  auto* demo = app.add_subcommand("demo", "Run server and all nodes in one process");
  add_common(demo, demo_c);
  std::string demo_out = "run";
  demo->add_option("--out", demo_out, "Run directory");

  auto* compare = app.add_subcommand("compare", "Compare the reports of two run directories");
  std::string run_a, run_b, compare_csv_path;
  compare->add_option("run_a", run_a, "Baseline run directory")->required();
  compare->add_option("run_b", run_b, "Candidate run directory")->required();
  compare->add_option("--csv", compare_csv_path, "Also write the comparison as CSV");

  CLI11_PARSE(app, argc, argv);

  const std::pair<const char*, log::Level> levels[] = {{"debug", log::Level::debug},
                                                       {"info", log::Level::info},
                                                       {"warn", log::Level::warn},
                                                       {"error", log::Level::error},
                                                       {"off", log::Level::off}};
  for (const auto& [name, lvl] : levels)
    if (log_level == name) log::set_level(lvl);

  if (print_default) {
    std::cout << config_to_json(default_config()) << std::endl;
    return 0;
  }

  try {
    if (serve->parsed()) {
      auto cfg = resolve_config(serve_c);
      experiment::ServeOptions opts;
      opts.listen = net::parse_endpoint(listen.empty() ? cfg.server.listen : listen);
      if (!serve_out.empty()) opts.out_dir = serve_out;
      opts.resume = resume;
      if (resume && !opts.out_dir) throw Error(Errc::config_error, "--resume requires --out");
      return experiment::run_serve(cfg, opts, std::cout, std::cerr);
    }
    if (client->parsed()) {
      auto cfg = resolve_config(client_c);
      experiment::ClientOptions opts;
      opts.server = net::parse_endpoint(server_addr.empty() ? cfg.server.listen : server_addr);
      opts.node_id = node_id;
      if (!telemetry.empty()) opts.telemetry = telemetry;
      opts.offline = offline;
      opts.retries = retries;
      return experiment::run_client(cfg, opts, std::cout, std::cerr);
    }
    if (demo->parsed()) {
      auto cfg = resolve_config(demo_c);
      const auto result = experiment::run_demo(cfg, demo_out);
      std::cout << experiment::report_text(result.nodes, cfg.policy);
      std::cout << "run directory: " << demo_out << std::endl;
      return result.training.converged ? 0 : 2;
    }
    if (compare->parsed()) {
      const auto rows = experiment::compare_runs(run_a, run_b);
      std::cout << experiment::compare_text(rows);
      if (!compare_csv_path.empty()) {
        std::ofstream out(compare_csv_path);
        out << experiment::compare_csv(rows);
        if (!out) throw Error(Errc::io_error, "cannot write " + compare_csv_path);
      }
      return 0;
    }
  } catch (const Error& e) {
    return fail(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  std::cout << app.help();
  return 0;
}
