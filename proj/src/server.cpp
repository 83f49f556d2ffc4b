#include "fedirr/server.hpp"

#include "fedirr/error.hpp"
#include "fedirr/framing.hpp"
#include "fedirr/log.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <ctime>
#include <deque>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

namespace fedirr::server {

using ojson = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------- registry

proto::RegisterAck ClientRegistry::register_client(const proto::Register& msg,
                                                   std::uint64_t current_round,
                                                   std::uint64_t connection) {
  if (msg.client_id.empty() || msg.feature_dim != feature_dim_ || is_live(msg.client_id)) {
    return {false, current_round};
  }
  auto& entry = entries_[msg.client_id];
  entry.feature_dim = msg.feature_dim;
  entry.connection = connection;
  entry.last_seen = current_round;
  entry.live = true;
  return {true, current_round};
}

void ClientRegistry::mark_seen(const std::string& client_id, std::uint64_t tick) {
  if (auto it = entries_.find(client_id); it != entries_.end()) it->second.last_seen = tick;
}

void ClientRegistry::drop(const std::string& client_id) {
  if (auto it = entries_.find(client_id); it != entries_.end()) it->second.live = false;
}

bool ClientRegistry::is_live(const std::string& client_id) const {
  auto it = entries_.find(client_id);
  return it != entries_.end() && it->second.live;
}

std::vector<std::string> ClientRegistry::live_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, entry] : entries_)
    if (entry.live) ids.push_back(id);
  return ids;
}

std::size_t ClientRegistry::live_count() const {
  return static_cast<std::size_t>(std::count_if(
      entries_.begin(), entries_.end(), [](const auto& kv) { return kv.second.live; }));
}

// ------------------------------------------------------------- checkpoints

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  ::gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void checkpoint_save(const std::filesystem::path& path, const Checkpoint& ckpt) {
  for (double w : ckpt.weights) {
    if (!std::isfinite(w)) throw Error(Errc::invalid_input, "checkpoint weights must be finite");
  }
  ojson doc = {{"round", ckpt.round},
               {"weights", ckpt.weights},
               {"feature_names", ckpt.feature_names},
               {"converged", ckpt.converged},
               {"created_at", ckpt.created_at}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write " + tmp);
    out << doc.dump(2) << '\n';
    if (!out) throw Error(Errc::io_error, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io_error, "cannot rename " + tmp + ": " + ec.message());
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();

  auto corrupt = [&](const std::string& why) {
    return Error(Errc::corrupt_checkpoint, path.string() + ": " + why);
  };
  ojson doc;
  try {
    doc = ojson::parse(buf.str());
  } catch (const ojson::exception& e) {
    throw corrupt(e.what());
  }
  if (!doc.is_object()) throw corrupt("not a JSON object");

  Checkpoint ckpt;
  try {
    const auto& round = doc.at("round");
    if (!round.is_number_unsigned()) throw corrupt("'round' must be a non-negative integer");
    ckpt.round = round.get<std::uint64_t>();
    for (const auto& w : doc.at("weights")) {
      if (!w.is_number()) throw corrupt("'weights' must hold numbers");
      ckpt.weights.push_back(w.get<double>());
    }
    if (ckpt.weights.empty()) throw corrupt("'weights' is empty");
    for (const auto& name : doc.at("feature_names")) ckpt.feature_names.push_back(name.get<std::string>());
    ckpt.converged = doc.at("converged").get<bool>();
    ckpt.created_at = doc.at("created_at").get<std::string>();
  } catch (const ojson::exception& e) {
    throw corrupt(e.what());
  }
  if (!doc.at("weights").is_array() || !doc.at("feature_names").is_array())
    throw corrupt("'weights' and 'feature_names' must be arrays");
  if (!ckpt.feature_names.empty() && ckpt.feature_names.size() + 1 != ckpt.weights.size())
    throw corrupt("feature_names does not match weight dimension");
  return ckpt;
}

std::filesystem::path checkpoint_file(const std::filesystem::path& dir, std::uint64_t round) {
  char name[32];
  std::snprintf(name, sizeof name, "round_%04llu.json", static_cast<unsigned long long>(round));
  return dir / name;
}

void checkpoint_commit(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  const auto file = checkpoint_file(dir, ckpt.round);
  checkpoint_save(file, ckpt);
  std::ofstream latest(dir / "latest", std::ios::trunc);
  latest << file.filename().string() << '\n';
  if (!latest) throw Error(Errc::io_error, "cannot update " + (dir / "latest").string());
}

Checkpoint checkpoint_load_latest(const std::filesystem::path& dir) {
  std::ifstream latest(dir / "latest");
  std::string name;
  if (!latest || !std::getline(latest, name) || name.empty())
    throw Error(Errc::io_error, "no latest checkpoint in " + dir.string());
  return checkpoint_load(dir / name);
}

// ------------------------------------------------------------------ server

void ServerConfig::validate() const {
  train.validate();
  if (feature_dim < 1) throw Error(Errc::config_error, "server.feature_dim: must be >= 1");
  if (!feature_names.empty() && feature_names.size() != feature_dim)
    throw Error(Errc::config_error, "server.feature_names: must have feature_dim entries");
  if (round_deadline.count() <= 0)
    throw Error(Errc::config_error, "server.round_deadline_ms: must be > 0");
  if (expected_clients < 1) throw Error(Errc::config_error, "nodes: must be >= 1");
  if (resume_from && resume_from->weights.size() != feature_dim + 1)
    throw Error(Errc::config_error, "resume checkpoint dimension does not match feature_dim");
}

namespace {

struct Connection {
  std::uint64_t id = 0;
  net::TcpStream stream;
  std::string client_id;
  std::thread reader;
};

struct Connected {
  std::shared_ptr<Connection> conn;
};
struct Received {
  std::uint64_t conn = 0;
  proto::Message msg;
};
struct BadPayload {
  std::uint64_t conn = 0;
  std::string code;
  std::string detail;
};
struct Closed {
  std::uint64_t conn = 0;
  std::string reason;
};
using Event = std::variant<Connected, Received, BadPayload, Closed>;

class EventQueue {
public:
  void push(Event ev) {
    {
      std::lock_guard lock(mu_);
      events_.push_back(std::move(ev));
    }
    cv_.notify_one();
  }

  std::optional<Event> pop_until(Clock::time_point deadline) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_until(lock, deadline, [&] { return !events_.empty(); })) return std::nullopt;
    Event ev = std::move(events_.front());
    events_.pop_front();
    return ev;
  }

private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Event> events_;
};

struct RoundCtx {
  std::uint64_t round = 0;
  std::set<std::string> pending;
  std::set<std::string> awaiting;
  std::map<std::string, fl::ClientUpdate> received;
  std::size_t discarded = 0;
};

} // namespace

struct AggregationServer::Impl {
  ServerConfig cfg;
  net::TcpListener listener;
  ClientRegistry registry;
  fl::ModelParams global;
  EventQueue events;

  std::atomic<bool> stopping{false};
  std::thread acceptor;
  std::mutex all_mu;
  std::vector<std::shared_ptr<Connection>> all; // for shutdown
  std::uint64_t next_conn_id = 1;

  std::map<std::uint64_t, std::shared_ptr<Connection>> conns; // orchestrator-owned
  RoundCtx* active = nullptr;

  Impl(ServerConfig c, const net::Endpoint& listen)
      : cfg(std::move(c)), listener(listen), registry(cfg.feature_dim) {
    if (cfg.resume_from) {
      global = cfg.resume_from->params();
    } else {
      global = fl::ModelParams::zeros(cfg.feature_dim);
    }
    global.feature_names = cfg.feature_names;
    acceptor = std::thread([this] { accept_loop(); });
  }

  void accept_loop() {
    while (!stopping) {
      auto stream = listener.accept(std::chrono::milliseconds(50));
      if (!stream) continue;
      auto conn = std::make_shared<Connection>();
      conn->stream = std::move(*stream);
      {
        std::lock_guard lock(all_mu);
        if (stopping) break;
        conn->id = next_conn_id++;
        all.push_back(conn);
      }
      events.push(Connected{conn});
      conn->reader = std::thread([this, c = conn.get()] { read_loop(*c); });
    }
  }

  void read_loop(Connection& conn) {
    for (;;) {
      try {
        events.push(Received{conn.id, net::recv_message(conn.stream)});
      } catch (const Error& e) {
        switch (e.code()) {
        case Errc::malformed_payload:
        case Errc::unknown_type:
        case Errc::schema_violation:
          events.push(BadPayload{conn.id, std::string(errc_name(e.code())), e.what()});
          continue;
        default:
          events.push(Closed{conn.id, e.what()});
          return;
        }
      }
    }
  }

  bool send(std::uint64_t conn_id, const proto::Message& msg) {
    auto it = conns.find(conn_id);
    if (it == conns.end()) return false;
    try {
      net::send_message(it->second->stream, msg);
      return true;
    } catch (const Error& e) {
      log::warn("send to connection " + std::to_string(conn_id) + " failed: " + e.what());
      disconnect(conn_id);
      return false;
    }
  }

  bool send_to_client(const std::string& client_id, const proto::Message& msg) {
    const auto& entries = registry.entries();
    auto it = entries.find(client_id);
    if (it == entries.end() || !it->second.live) return false;
    return send(it->second.connection, msg);
  }

  void disconnect(std::uint64_t conn_id) {
    auto it = conns.find(conn_id);
    if (it == conns.end()) return;
    const auto conn = it->second;
    conns.erase(it);
    conn->stream.shutdown();
    if (!conn->client_id.empty()) {
      const auto& entries = registry.entries();
      auto e = entries.find(conn->client_id);
      if (e != entries.end() && e->second.connection == conn_id) {
        registry.drop(conn->client_id);
        if (active) active->awaiting.erase(conn->client_id);
        log::info("client '" + conn->client_id + "' disconnected");
      }
    }
  }

  void on_update(Connection& conn, const proto::ClientUpdateMsg& msg) {
    if (conn.client_id.empty() || conn.client_id != msg.client_id) {
      log::warn("discarding update for '" + msg.client_id + "' from unregistered connection");
      if (active) ++active->discarded;
      return;
    }
    if (!active || msg.round != active->round || !active->pending.contains(msg.client_id)) {
      log::warn("discarding stale update from '" + msg.client_id + "' for round " +
                std::to_string(msg.round));
      if (active) ++active->discarded;
      return;
    }
    if (active->received.contains(msg.client_id)) {
      log::warn("discarding duplicate update from '" + msg.client_id + "'");
      ++active->discarded;
      return;
    }
    if (msg.weights.size() != cfg.feature_dim + 1 || msg.sample_count < 1) {
      log::warn("discarding malformed update from '" + msg.client_id + "'");
      ++active->discarded;
      return;
    }
    active->received.emplace(msg.client_id, fl::ClientUpdate{msg.client_id, msg.round, msg.weights,
                                                             msg.sample_count, msg.local_loss});
    active->awaiting.erase(msg.client_id);
  }

  void on_message(std::uint64_t conn_id, const proto::Message& msg) {
    auto it = conns.find(conn_id);
    if (it == conns.end()) return;
    Connection& conn = *it->second;

    if (const auto* reg = std::get_if<proto::Register>(&msg)) {
      const auto ack = registry.register_client(*reg, global.round, conn_id);
      if (ack.accepted) {
        conn.client_id = reg->client_id;
        log::info("registered '" + reg->client_id + "'");
      } else {
        log::warn("rejected registration of '" + reg->client_id + "'");
      }
      send(conn_id, ack);
    } else if (const auto* upd = std::get_if<proto::ClientUpdateMsg>(&msg)) {
      on_update(conn, *upd);
    } else if (const auto* hb = std::get_if<proto::Heartbeat>(&msg)) {
      if (hb->client_id == conn.client_id) registry.mark_seen(hb->client_id, global.round);
    } else if (const auto* err = std::get_if<proto::ErrorMsg>(&msg)) {
      log::warn("client error " + err->code + ": " + err->detail);
    } else {
      send(conn_id, proto::ErrorMsg{std::string(errc_name(Errc::schema_violation)),
                                    std::string(proto::type_tag(msg)) + " is not accepted by the server"});
    }
  }

  bool process_one(Clock::time_point deadline) {
    auto ev = events.pop_until(deadline);
    if (!ev) return false;
    std::visit(
        [&](auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, Connected>) {
            conns.emplace(e.conn->id, e.conn);
          } else if constexpr (std::is_same_v<T, Received>) {
            on_message(e.conn, e.msg);
          } else if constexpr (std::is_same_v<T, BadPayload>) {
            send(e.conn, proto::ErrorMsg{e.code, e.detail});
          } else {
            disconnect(e.conn);
          }
        },
        *ev);
    return true;
  }

  void broadcast(const proto::Message& msg) {
    for (const auto& id : registry.live_ids()) send_to_client(id, msg);
  }

  std::optional<double> validation_loss(const fl::ModelParams& params) const {
    if (cfg.validation.empty()) return std::nullopt;
    return fl::mse_loss(params, cfg.validation, 0.0);
  }

  RoundRecord run_round() {
    RoundCtx ctx;
    ctx.round = global.round;
    RoundReport report;
    report.round = global.round;
    report.pre_loss = validation_loss(global);

    active = &ctx;
    const proto::RoundStart start{global.round, global.weights,
                                  {cfg.train.local_epochs, cfg.train.learning_rate}};
    for (const auto& id : registry.live_ids()) {
      ctx.pending.insert(id);
      if (send_to_client(id, start)) ctx.awaiting.insert(id);
    }
    const auto deadline = Clock::now() + cfg.round_deadline;
    while (!ctx.awaiting.empty() && process_one(deadline)) {
    }
    active = nullptr;

    std::vector<fl::ClientUpdate> updates;
    for (auto& [id, u] : ctx.received) {
      report.responders.push_back(id);
      updates.push_back(std::move(u));
    }
    for (const auto& id : ctx.pending)
      if (!ctx.received.contains(id)) report.stragglers.push_back(id);
    report.discarded = ctx.discarded;

    if (updates.empty()) {
      report.skipped = true;
      report.post_loss = report.pre_loss;
      log::warn("round " + std::to_string(ctx.round) + ": NoParticipants, global model unchanged");
    } else {
      fl::ModelParams next = fl::aggregate(updates);
      next.feature_names = cfg.feature_names;
      report.converged = fl::has_converged(global, next, cfg.train.convergence_tol);
      global = std::move(next);
      report.post_loss = validation_loss(global);
    }
    if (!report.stragglers.empty()) {
      log::info("round " + std::to_string(ctx.round) + ": " +
                std::to_string(report.stragglers.size()) + " straggler(s)");
    }
    broadcast(proto::GlobalModelMsg{global.round, global.weights, report.converged});

    if (cfg.checkpoint_dir) {
      checkpoint_commit(*cfg.checkpoint_dir, Checkpoint{global.round, global.weights,
                                                        cfg.feature_names, report.converged,
                                                        utc_timestamp()});
    }
    return {global, std::move(report)};
  }

  std::size_t wait_for_clients(std::size_t n, std::chrono::milliseconds timeout) {
    const auto deadline = Clock::now() + timeout;
    while (registry.live_count() < n && process_one(deadline)) {
    }
    return registry.live_count();
  }

  TrainingResult run_training() {
    TrainingResult result;
    if (wait_for_clients(cfg.expected_clients, cfg.registration_timeout) == 0) {
      shutdown();
      throw Error(Errc::no_participants, "no client registered before the timeout");
    }
    const auto max_rounds = static_cast<std::uint64_t>(cfg.train.max_rounds);
    std::uint64_t attempts = 0;
    const std::uint64_t budget = max_rounds > global.round ? max_rounds - global.round : 0;
    while (global.round < max_rounds && attempts < budget) {
      if (registry.live_count() == 0 && wait_for_clients(1, cfg.registration_timeout) == 0) {
        log::warn("all clients left; stopping");
        break;
      }
      ++attempts;
      RoundRecord rec = run_round();
      const bool done = rec.report.converged;
      result.history.push_back(std::move(rec));
      if (done) {
        result.converged = true;
        break;
      }
    }
    result.final_model = global;
    shutdown();
    return result;
  }

  void shutdown() {
    stopping = true;
    if (acceptor.joinable()) acceptor.join();
    listener.close();
    std::vector<std::shared_ptr<Connection>> snapshot;
    {
      std::lock_guard lock(all_mu);
      snapshot = all;
    }
    for (auto& c : snapshot) c->stream.shutdown();
    for (auto& c : snapshot)
      if (c->reader.joinable()) c->reader.join();
    conns.clear();
  }
};

AggregationServer::AggregationServer(ServerConfig cfg, const net::Endpoint& listen) {
  cfg.validate();
  impl_ = std::make_unique<Impl>(std::move(cfg), listen);
}

AggregationServer::~AggregationServer() {
  if (impl_) impl_->shutdown();
}

std::uint16_t AggregationServer::port() const { return impl_->listener.port(); }

std::size_t AggregationServer::wait_for_clients(std::size_t n, std::chrono::milliseconds timeout) {
  return impl_->wait_for_clients(n, timeout);
}

RoundRecord AggregationServer::run_round() { return impl_->run_round(); }
TrainingResult AggregationServer::run_training() { return impl_->run_training(); }
const fl::ModelParams& AggregationServer::global() const { return impl_->global; }
const ClientRegistry& AggregationServer::registry() const { return impl_->registry; }
void AggregationServer::shutdown() { impl_->shutdown(); }

TrainingResult run_training(const ServerConfig& cfg, const net::Endpoint& listen) {
  AggregationServer server(cfg, listen);
  return server.run_training();
}

} // namespace fedirr::server
