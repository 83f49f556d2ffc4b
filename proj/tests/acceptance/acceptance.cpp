// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include "fedirr/alerts.hpp"
#include "fedirr/error.hpp"
#include "fedirr/experiment.hpp"
#include "fedirr/framing.hpp"
#include "fedirr/learning.hpp"
#include "fedirr/log.hpp"
#include "fedirr/protocol.hpp"
#include "fedirr/sensor.hpp"
#include "fedirr/server.hpp"
#include "fedirr/soil.hpp"
#include "oracles.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>
#include <unistd.h>

using namespace fedirr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome ok(std::string detail) { return {true, std::move(detail)}; }
Outcome bad(std::string detail) { return {false, std::move(detail)}; }

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fedirr_accept_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ------------------------------------------------------------------ 1
Outcome fedavg_correctness() {
  std::mt19937_64 rng(1001);
  std::normal_distribution<double> g(0.0, 5.0);
  std::uniform_int_distribution<std::uint64_t> cnt(1, 500);
  double worst = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = 1 + trial % 12, dim = 1 + trial % 9;
    std::vector<fl::ClientUpdate> ups(k);
    for (std::size_t i = 0; i < k; ++i) {
      ups[i] = {"c" + std::to_string(i), 3, std::vector<double>(dim), cnt(rng), 0.0};
      for (auto& w : ups[i].weights) w = g(rng);
    }
    const auto agg = fl::aggregate(ups);
    if (agg.round != 4) return bad("round not incremented");
    double total = 0.0;
    for (const auto& u : ups) total += static_cast<double>(u.sample_count);
    for (std::size_t j = 0; j < dim; ++j) {
      double lo = 1e300, hi = -1e300, ref = 0.0;
      for (const auto& u : ups) {
        lo = std::min(lo, u.weights[j]);
        hi = std::max(hi, u.weights[j]);
        ref += static_cast<double>(u.sample_count) / total * u.weights[j];
      }
      if (agg.weights[j] < lo || agg.weights[j] > hi) return bad("outside convex hull");
      worst = std::max(worst, std::abs(agg.weights[j] - ref) / std::max(1.0, std::abs(ref)));
    }
    if (fl::aggregate(std::vector<fl::ClientUpdate>{ups[0]}).weights != ups[0].weights)
      return bad("single-update identity broken");
  }
  if (worst >= 1e-12) return bad("max deviation from weighted mean " + fmt("%.3e", worst));
  return ok("2000 sets, max deviation " + fmt("%.2e", worst) + ", identity exact");
}

// ------------------------------------------------------------------ 2
Outcome gradient_oracle() {
  std::mt19937_64 rng(2002);
  std::uniform_int_distribution<std::size_t> dd(1, 8), nn(1, 32);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = dd(rng), n = nn(rng);
    std::vector<fl::TrainingExample> data(n);
    for (auto& ex : data) {
      ex.features.resize(d);
      for (auto& x : ex.features) x = g(rng);
      ex.target = g(rng);
    }
    std::vector<double> w(d + 1);
    for (auto& x : w) x = g(rng);
    const double l2 = trial % 3 == 0 ? 0.1 : 0.0;
    const auto an = fl::gradient(fl::ModelParams{w, 0, {}}, data, l2);
    const auto fd = oracle::fd_gradient(w, data, l2);
    for (std::size_t j = 0; j <= d; ++j)
      worst = std::max(worst, std::abs(an[j] - fd[j]) / std::max(1.0, std::abs(fd[j])));
  }
  if (worst >= 1e-5) return bad("max relative error " + fmt("%.3e", worst));
  return ok("100 instances, max relative error " + fmt("%.2e", worst));
}

// ------------------------------------------------------------------ 3
Outcome federated_convergence() {
  constexpr std::size_t kClients = 5, kSamples = 64, kDim = 4;
  std::mt19937_64 rng(3003);
  const std::vector<double> truth{1.5, -2.0, 0.75, 0.3, -0.5};
  std::vector<std::vector<fl::TrainingExample>> shards;
  std::vector<fl::TrainingExample> pooled;
  for (std::size_t c = 0; c < kClients; ++c) {
    shards.push_back(oracle::synthetic(rng, truth, kSamples, 0.01));
    pooled.insert(pooled.end(), shards.back().begin(), shards.back().end());
  }
  const auto reference = oracle::least_squares(pooled);

  server::ServerConfig cfg;
  cfg.feature_dim = kDim;
  cfg.expected_clients = kClients;
  cfg.train.local_epochs = 5;
  cfg.train.learning_rate = 0.1;
  cfg.train.convergence_tol = 1e-7;
  cfg.train.max_rounds = 200;
  cfg.round_deadline = std::chrono::seconds(10);
  cfg.registration_timeout = std::chrono::seconds(10);
  server::AggregationServer srv(cfg, {"127.0.0.1", 0});

  std::vector<std::thread> clients;
  for (std::size_t c = 0; c < kClients; ++c) {
    clients.emplace_back([&, c] {
      try {
        auto s = net::TcpStream::connect({"127.0.0.1", srv.port()});
        const std::string id = "c" + std::to_string(c);
        net::send_message(s, proto::Register{id, kDim});
        for (;;) {
          const auto msg = net::recv_message(s);
          if (const auto* rs = std::get_if<proto::RoundStart>(&msg)) {
            fl::TrainConfig tc;
            tc.local_epochs = static_cast<int>(rs->cfg_echo.local_epochs);
            tc.learning_rate = rs->cfg_echo.learning_rate;
            const auto u = fl::local_train({rs->global_weights, rs->round, {}}, shards[c], tc, id);
            net::send_message(s, proto::ClientUpdateMsg{id, u.round, u.weights, u.sample_count, u.local_loss});
          } else if (const auto* gm = std::get_if<proto::GlobalModelMsg>(&msg)) {
            if (gm->converged) return;
          }
        }
      } catch (const Error&) {
      }
    });
  }
  const auto result = srv.run_training();
  for (auto& t : clients) t.join();
  const double dist = oracle::rel_l2(result.final_model.weights, reference);
  const auto rounds = result.final_model.round;
  const std::string detail = std::to_string(rounds) + " rounds over TCP, relative L2 to pooled least squares " +
                             fmt("%.2e", dist);
  if (rounds > 200 || dist >= 1e-3) return bad(detail);
  return ok(detail);
}

// ------------------------------------------------------------------ 4
Outcome hysteresis() {
  std::mt19937_64 rng(4004);
  std::bernoulli_distribution pump(0.45);
  std::uniform_real_distribution<double> dt(0.02, 0.6);
  sensor::TankState t;
  std::size_t flips = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto n = sensor::step_tank(t, pump(rng), dt(rng));
    if (n.filling != t.filling) {
      ++flips;
      if (n.filling && t.level > t.threshold_low) return bad("set without a low crossing at step " + std::to_string(i));
      if (!n.filling && t.level < t.capacity_max) return bad("reset below capacity at step " + std::to_string(i));
    }
    if (n.level < 0.0 || n.level > n.capacity_max) return bad("level out of range at step " + std::to_string(i));
    t = n;
  }
  if (flips < 10) return bad("too few latch transitions to be meaningful");
  return ok("10000 steps, " + std::to_string(flips) + " latch transitions, all at thresholds");
}

// ------------------------------------------------------------------ 5
Outcome sensor_monotonicity() {
  sensor::SensorCalib c;
  c.noise_std = 0.0;
  std::mt19937_64 rng(5005);
  int prev = -1;
  double worst = 0.0;
  for (int i = 0; i < 1024; ++i) {
    const double m = i / 1023.0;
    const int counts = sensor::analog_read(m, c, rng);
    if (counts < prev) return bad("analog_read decreased at grid point " + std::to_string(i));
    prev = counts;
    worst = std::max(worst, std::abs(sensor::estimate_moisture(sensor::ideal_counts(m, c), c) - m));
  }
  if (worst >= 1e-9) return bad("inversion error " + fmt("%.3e", worst));
  return ok("1024 grid points non-decreasing, inversion error " + fmt("%.2e", worst));
}

// ------------------------------------------------------------------ 6
Outcome protocol_round_trip() {
  std::mt19937_64 rng(6006);
  for (int i = 0; i < 1000; ++i) {
    const auto m = oracle::random_message(rng);
    if (proto::decode(proto::encode(m)) != m) return bad("message " + std::to_string(i) + " changed");
  }
  const std::vector<std::string> payloads{
      proto::encode(proto::Heartbeat{"n1"}),
      proto::encode(proto::ClientUpdateMsg{"n2", 4, {0.1, -0.2, 0.3}, 64, 0.01}),
      proto::encode(proto::GlobalModelMsg{5, {1.0 / 3.0}, true})};
  const auto bytes = oracle::frames_of(payloads);
  for (std::size_t cut = 0; cut <= bytes.size(); ++cut) {
    oracle::ChunkedStream s(bytes, {cut});
    for (const auto& p : payloads)
      if (net::frame_read(s) != p) return bad("split at byte " + std::to_string(cut) + " corrupted a frame");
    try {
      net::frame_read(s);
      return bad("extra frame after split " + std::to_string(cut));
    } catch (const Error& e) {
      if (e.code() != Errc::clean_close) return bad("unexpected error at split " + std::to_string(cut));
    }
  }
  return ok("1000 messages round-trip; 3-frame stream intact at all " + std::to_string(bytes.size() + 1) +
            " split points");
}

// ------------------------------------------------------------------ 7
Outcome water_balance() {
  std::mt19937_64 rng(7007);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  soil::SoilState s;
  double worst = 0.0;
  std::size_t clamps = 0;
  for (int i = 0; i < 10000; ++i) {
    const double irr = u(rng) < 0.3 ? 0.3 * u(rng) : 0.0;
    const soil::WeatherTick w{u(rng) < 0.3 ? 0.2 * u(rng) : 0.0, 2.0 * u(rng)};
    const double dt = 0.05 + 2.0 * u(rng);
    const auto r = soil::step_soil(s, irr, w, dt);
    const double residual = std::abs((r.state.moisture - s.moisture) - r.report.net_rate() * dt);
    worst = std::max(worst, residual);
    if (r.report.clamped_excess > 0.0 || r.report.clamped_deficit > 0.0) ++clamps;
    s = r.state;
  }
  if (worst >= 1e-12) return bad("max residual " + fmt("%.3e", worst));
  return ok("10000 steps (" + std::to_string(clamps) + " clamped), max residual " + fmt("%.2e", worst));
}

// ------------------------------------------------------------------ 8
struct Goldens {
  double reactive_wasted, predictive_wasted, reactive_deficit, predictive_deficit;
};

std::optional<Goldens> load_goldens() {
  std::ifstream in(FEDIRR_GOLDENS);
  if (!in) return std::nullopt;
  const auto j = nlohmann::json::parse(in);
  return Goldens{j.at("reactive_wasted_liters"), j.at("predictive_wasted_liters"),
                 j.at("reactive_mean_moisture_deficit"), j.at("predictive_mean_moisture_deficit")};
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(b)); }

struct WastageRun {
  experiment::NodeReport reactive, predictive;
};

WastageRun run_wastage_pair() {
  auto cfg = default_config();
  cfg.nodes = 3;
  cfg.scenario = soil::ScenarioKind::rain_heavy;
  cfg.ticks = 200;
  cfg.seed = 1;
  cfg.policy = edge::Policy::reactive;
  const auto reactive = experiment::run_demo(cfg, scratch("reactive")).total;
  cfg.policy = edge::Policy::predictive;
  const auto predictive = experiment::run_demo(cfg, scratch("predictive")).total;
  return {reactive, predictive};
}

Outcome wastage_experiment() {
  const auto [reactive, predictive] = run_wastage_pair();
  const double rw = reactive.ledger.wasted_liters(), pw = predictive.ledger.wasted_liters();
  const double rd = reactive.mean_moisture_deficit, pd = predictive.mean_moisture_deficit;
  std::string detail = "wasted " + fmt("%.3f", pw) + " L vs " + fmt("%.3f", rw) + " L reactive (" +
                       fmt("%+.1f", (pw - rw) / rw * 100.0) + "%), deficit " + fmt("%.3e", pd) + " vs " +
                       fmt("%.3e", rd) + " (" + fmt("%+.2f", rd > 0 ? (pd - rd) / rd * 100.0 : 0.0) + "%)";
  if (!(pw < rw)) return bad(detail + "; predictive does not waste less");
  if (pd > rd * 1.05 + 1e-15) return bad(detail + "; deficit worse by more than 5%");
  const auto gold = load_goldens();
  if (!gold) return bad(detail + "; goldens missing");
  if (!near(rw, gold->reactive_wasted) || !near(pw, gold->predictive_wasted) ||
      !near(rd, gold->reactive_deficit) || !near(pd, gold->predictive_deficit))
    return bad(detail + "; drifted from frozen goldens");
  return ok(detail + ", matches goldens");
}

// ------------------------------------------------------------------ 9
Outcome alert_exactness() {
  sensor::TankState tank;
  const auto wet_to_dry = alerts::evaluate_alerts("n1", sensor::SensorFrame{600, false, 0},
                                                  sensor::SensorFrame{120, true, 1}, tank, tank.level);
  if (wet_to_dry.size() != 1) return bad("wet->dry produced " + std::to_string(wet_to_dry.size()) + " events");
  if (wet_to_dry[0].message != "ALERT: The soil moisture is dry") return bad("message text differs");
  if (wet_to_dry[0].kind != alerts::AlertKind::dry) return bad("wrong kind");
  const auto dry_to_dry = alerts::evaluate_alerts("n1", sensor::SensorFrame{120, true, 1},
                                                  sensor::SensorFrame{110, true, 2}, tank, tank.level);
  if (!dry_to_dry.empty()) return bad("dry->dry produced an event");
  return ok("one DRY event with the exact text; dry->dry silent");
}

// ------------------------------------------------------------------ 10
std::string strip_timestamp(const std::string& text) {
  std::istringstream in(text);
  std::string out;
  for (std::string line; std::getline(in, line);)
    if (line.find("\"created_at\"") == std::string::npos) out += line + '\n';
  return out;
}

Outcome determinism() {
  const auto cfg = default_config();
  const auto a = scratch("det_a"), b = scratch("det_b");
  experiment::run_demo(cfg, a);
  experiment::run_demo(cfg, b);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a / "telemetry")) {
    const auto other = b / "telemetry" / e.path().filename();
    if (slurp(e.path()) != slurp(other)) return bad("telemetry differs: " + e.path().filename().string());
    ++files;
  }
  std::size_t ckpts = 0;
  for (const auto& e : fs::directory_iterator(a / "checkpoints")) {
    const auto other = b / "checkpoints" / e.path().filename();
    if (!fs::exists(other)) return bad("checkpoint missing in second run: " + e.path().filename().string());
    if (strip_timestamp(slurp(e.path())) != strip_timestamp(slurp(other)))
      return bad("checkpoint differs: " + e.path().filename().string());
    ++ckpts;
  }
  std::size_t ckpts_b = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(b / "checkpoints")) ++ckpts_b;
  if (ckpts != ckpts_b) return bad("checkpoint count differs");
  if (files == 0 || ckpts == 0) return bad("nothing to compare");
  return ok(std::to_string(files) + " telemetry CSVs and " + std::to_string(ckpts) +
            " checkpoint files byte-identical (timestamps excluded)");
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
  log::set_level(log::Level::error);
  if (argc > 1 && std::string(argv[1]) == "--write-goldens") {
    const auto run = run_wastage_pair();
    nlohmann::ordered_json j = {
        {"reactive_wasted_liters", run.reactive.ledger.wasted_liters()},
        {"predictive_wasted_liters", run.predictive.ledger.wasted_liters()},
        {"reactive_mean_moisture_deficit", run.reactive.mean_moisture_deficit},
        {"predictive_mean_moisture_deficit", run.predictive.mean_moisture_deficit}};
    std::ofstream(FEDIRR_GOLDENS) << j.dump(2) << "\n";
    std::cout << j.dump(2) << std::endl;
    return 0;
  }
  const std::vector<Criterion> criteria{
      {1, "FedAvg correctness", 1.0, fedavg_correctness},
      {2, "Gradient vs finite differences", 5.0, gradient_oracle},
      {3, "Federated convergence over TCP", 30.0, federated_convergence},
      {4, "Tank hysteresis", 1.0, hysteresis},
      {5, "Sensor monotonicity and inversion", 1.0, sensor_monotonicity},
      {6, "Protocol round trip and segmentation", 5.0, protocol_round_trip},
      {7, "Water balance conservation", 1.0, water_balance},
      {8, "Wastage experiment", 60.0, wastage_experiment},
      {9, "Alert exactness", 1.0, alert_exactness},
      {10, "Determinism", 60.0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = bad(std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (out.pass && secs >= c.budget_s) out = bad(out.detail + "; over the " + fmt("%.0f", c.budget_s) + " s budget");
    if (!out.pass) ++failures;
    std::cout << (out.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << out.detail << " ("
              << fmt("%.3f", secs) << " s)" << std::endl;
  }
  fs::remove_all(fs::temp_directory_path() / ("fedirr_accept_" + std::to_string(::getpid())));
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
