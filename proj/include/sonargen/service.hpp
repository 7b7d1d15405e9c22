#ifndef SONARGEN_SERVICE_HPP
#define SONARGEN_SERVICE_HPP

#include "sonargen/gan/trainer.hpp"
#include "sonargen/sequence.hpp"

#include <nlohmann/json.hpp>

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace sonargen::service {

struct ServiceConfig {
  std::filesystem::path store = "sonar_store";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string default_checkpoint;  // checkpoint id in the store, or a checkpoint directory
  int workers = 1;

  void validate() const;
  /// Reads a JSON config file, then applies SONAR_STORE / SONAR_PORT.
  static ServiceConfig load(const std::filesystem::path& file);
  void apply_environment();
};

void to_json(nlohmann::json& j, const ServiceConfig& c);
void from_json(const nlohmann::json& j, ServiceConfig& c);

enum class JobKind { generate, evaluate };
enum class JobState { queued, running, done, failed };

std::string to_string(JobKind k);
std::string to_string(JobState s);

struct Job {
  std::string id;
  JobKind kind = JobKind::generate;
  JobState state = JobState::queued;
  std::string mission_id;
  std::size_t tiles_done = 0;
  std::size_t tiles_total = 0;
  std::string error_message;
  nlohmann::json params = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const Job& job);
void from_json(const nlohmann::json& j, Job& job);

/// On-disk layout:
///   maps/<id>.json                  posted bytes, id = FNV-1a of the bytes
///   missions/<id>/mission.json      likewise
///   missions/<id>/scan/             ScanWriter directory of the latest generation
///   missions/<id>/report.json
///   jobs/<id>.json
///   checkpoints/<id>/               params.bin + meta.json
class Store {
 public:
  explicit Store(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  /// Stores `bytes` under its content id; returns the id and whether it was new.
  std::pair<std::string, bool> put_map(const std::string& bytes);
  std::pair<std::string, bool> put_mission(const std::string& bytes);
  std::optional<std::string> map_bytes(const std::string& id) const;
  std::optional<std::string> mission_bytes(const std::string& id) const;

  std::filesystem::path scan_dir(const std::string& mission_id) const;
  std::filesystem::path report_file(const std::string& mission_id) const;
  std::filesystem::path checkpoint_dir(const std::string& id) const;

  void save_job(const Job& job) const;
  std::vector<Job> load_jobs() const;

  static bool valid_id(const std::string& id);

 private:
  std::filesystem::path root_;
};

/// HTTP front end plus the job queue. Routes live under /v1.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Installs the /v1 routes on `server`.
  void install(httplib::Server& server);

  /// Blocks serving on config host:port.
  bool listen();
  /// Binds to a free port on config host and serves from a background thread.
  int listen_background();
  void stop();

  /// Held jobs stay queued until resume(); used for maintenance windows.
  void pause();
  void resume();
  /// Waits until the queue is empty and no job runs.
  void wait_idle();

  const ServiceConfig& config() const { return config_; }
  Store& store() { return store_; }

  std::optional<Job> job(const std::string& id) const;

 private:
  struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
  };

  Response post_map(const std::string& body);
  Response post_mission(const std::string& body);
  Response post_job(const std::string& mission_id, const std::string& body, JobKind kind);
  Response get_tiles(const std::string& mission_id, const std::optional<std::string>& from,
                     const std::optional<std::string>& to);
  Response get_tile(const std::string& mission_id, const std::string& index);

  void recover();
  void worker_loop();
  void run_job(Job job);
  void run_generate(Job& job);
  void run_evaluate(Job& job);
  void update(const Job& job);
  std::shared_ptr<gan::Checkpoint> checkpoint(const std::string& id);
  std::optional<std::string> resolve_checkpoint(const std::string& requested) const;

  ServiceConfig config_;
  Store store_;

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<std::string> queue_;
  std::map<std::string, Job> jobs_;
  std::map<std::string, std::string> active_;  // mission id -> queued or running job id
  std::size_t job_counter_ = 0;
  int running_ = 0;
  bool paused_ = false;
  bool stopping_ = false;
  std::vector<std::thread> workers_;

  std::mutex checkpoint_mutex_;
  std::map<std::string, std::shared_ptr<gan::Checkpoint>> checkpoints_;

  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
};

}  // namespace sonargen::service

#endif  // SONARGEN_SERVICE_HPP
