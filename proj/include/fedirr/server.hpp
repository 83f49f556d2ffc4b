#pragma once

#include "fedirr/learning.hpp"
#include "fedirr/protocol.hpp"
#include "fedirr/tcp.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fedirr::server {

struct ClientEntry {
  std::uint64_t feature_dim = 0;
  std::uint64_t last_seen = 0;
  std::uint64_t connection = 0;
  bool live = false;
};

/// Who is taking part. Mutated only by the orchestrator.
class ClientRegistry {
public:
  explicit ClientRegistry(std::uint64_t feature_dim) : feature_dim_(feature_dim) {}

  /// Rejects (in band) a wrong feature dimension or an id that is still live.
  proto::RegisterAck register_client(const proto::Register& msg, std::uint64_t current_round,
                                     std::uint64_t connection = 0);
  void mark_seen(const std::string& client_id, std::uint64_t tick);
  void drop(const std::string& client_id);

  bool is_live(const std::string& client_id) const;
  std::vector<std::string> live_ids() const; // sorted
  std::size_t live_count() const;
  const std::map<std::string, ClientEntry>& entries() const { return entries_; }

private:
  std::uint64_t feature_dim_;
  std::map<std::string, ClientEntry> entries_;
};

struct Checkpoint {
  std::uint64_t round = 0;
  std::vector<double> weights;
  std::vector<std::string> feature_names;
  bool converged = false;
  std::string created_at; // ISO-8601 UTC

  fl::ModelParams params() const { return {weights, round, feature_names}; }
  bool operator==(const Checkpoint&) const = default;
};

void checkpoint_save(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws Error(io_error) if unreadable, Error(corrupt_checkpoint) on schema violations.
Checkpoint checkpoint_load(const std::filesystem::path& path);

/// <dir>/round_%04d.json
std::filesystem::path checkpoint_file(const std::filesystem::path& dir, std::uint64_t round);
/// Writes the checkpoint and points <dir>/latest at it.
void checkpoint_commit(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint checkpoint_load_latest(const std::filesystem::path& dir);

std::string utc_timestamp();

struct RoundReport {
  std::uint64_t round = 0; // the round that was attempted
  std::vector<std::string> responders;
  std::vector<std::string> stragglers;
  std::size_t discarded = 0; // stale, duplicate or unsolicited updates
  bool skipped = false;      // no update arrived before the deadline
  bool converged = false;
  std::optional<double> pre_loss;  // on the server's validation set
  std::optional<double> post_loss;
};

struct RoundRecord {
  fl::ModelParams global; // after the round
  RoundReport report;
};

struct ServerConfig {
  fl::TrainConfig train;
  std::uint64_t feature_dim = 4;
  std::vector<std::string> feature_names;
  std::chrono::milliseconds round_deadline{10000};
  std::size_t expected_clients = 1;
  std::chrono::milliseconds registration_timeout{30000};
  std::optional<std::filesystem::path> checkpoint_dir;
  std::vector<fl::TrainingExample> validation;
  std::optional<Checkpoint> resume_from;

  void validate() const;
};

struct TrainingResult {
  std::vector<RoundRecord> history;
  fl::ModelParams final_model;
  bool converged = false;
};

/// Synchronous round orchestrator. One reader thread per connection feeds an
/// event queue; the thread calling run_round/run_training owns all round
/// state and is the only writer to client sockets.
class AggregationServer {
public:
  /// Binds immediately. Throws Error(bind_error).
  AggregationServer(ServerConfig cfg, const net::Endpoint& listen);
  ~AggregationServer();
  AggregationServer(const AggregationServer&) = delete;
  AggregationServer& operator=(const AggregationServer&) = delete;

  std::uint16_t port() const;

  /// Processes registrations until n clients are live or the timeout expires.
  std::size_t wait_for_clients(std::size_t n, std::chrono::milliseconds timeout);

  /// One broadcast/collect/aggregate/redistribute cycle. A round without any
  /// update leaves the global model untouched and is flagged as skipped.
  RoundRecord run_round();

  /// Waits for cfg.expected_clients, then runs rounds until convergence or
  /// until the global round reaches max_rounds. Closes every connection on
  /// return.
  TrainingResult run_training();

  const fl::ModelParams& global() const;
  const ClientRegistry& registry() const;

  /// Closes the listener and every connection.
  void shutdown();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Binds listen, trains and shuts down.
TrainingResult run_training(const ServerConfig& cfg, const net::Endpoint& listen);

} // namespace fedirr::server
