#include "sonargen/service.hpp"

#include "sonargen/evaluation.hpp"
#include "sonargen/image_io.hpp"
#include "sonargen/util.hpp"

#include <httplib.h>

#include <charconv>
#include <cstdlib>
#include <fstream>

namespace sonargen::service {

namespace fs = std::filesystem;
using nlohmann::json;

// --- Config -----------------------------------------------------------------

void ServiceConfig::validate() const {
  std::vector<FieldError> errors;
  if (store.empty()) errors.push_back({"store", "must not be empty"});
  if (port < 0 || port > 65535) errors.push_back({"port", "must lie in [0, 65535]"});
  if (workers < 1) errors.push_back({"workers", "must be at least 1"});
  if (!errors.empty()) throw ValidationError(errors);
}

void to_json(json& j, const ServiceConfig& c) {
  j = {{"store", c.store.string()},
       {"host", c.host},
       {"port", c.port},
       {"default_checkpoint", c.default_checkpoint},
       {"workers", c.workers}};
}

void from_json(const json& j, ServiceConfig& c) {
  ServiceConfig d;
  c.store = j.value("store", d.store.string());
  c.host = j.value("host", d.host);
  c.port = j.value("port", d.port);
  c.default_checkpoint = j.value("default_checkpoint", d.default_checkpoint);
  c.workers = j.value("workers", d.workers);
}

ServiceConfig ServiceConfig::load(const fs::path& file) {
  ServiceConfig c;
  if (!file.empty()) {
    if (!fs::exists(file)) throw IoError("config file not found: " + file.string());
    const auto j = json::parse(read_file(file), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw IoError("config file is not a JSON object: " + file.string());
    try {
      c = j.get<ServiceConfig>();
    } catch (const json::exception& e) {
      throw ValidationError(std::string("config: ") + e.what());
    }
  }
  c.apply_environment();
  c.validate();
  return c;
}

void ServiceConfig::apply_environment() {
  if (const char* s = std::getenv("SONAR_STORE"); s && *s) store = s;
  if (const char* p = std::getenv("SONAR_PORT"); p && *p) {
    int v = 0;
    const auto [end, ec] = std::from_chars(p, p + std::strlen(p), v);
    if (ec != std::errc() || *end != '\0') throw ValidationError(std::vector<FieldError>{{"SONAR_PORT", "not an integer"}});
    port = v;
  }
}

// --- Jobs -------------------------------------------------------------------

std::string to_string(JobKind k) { return k == JobKind::generate ? "generate" : "evaluate"; }

std::string to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    default: return "failed";
  }
}

namespace {

JobState state_from_string(const std::string& s) {
  if (s == "queued") return JobState::queued;
  if (s == "running") return JobState::running;
  if (s == "done") return JobState::done;
  if (s == "failed") return JobState::failed;
  throw IoError("unknown job state: " + s);
}

}  // namespace

void to_json(json& j, const Job& job) {
  j = {{"id", job.id},
       {"kind", to_string(job.kind)},
       {"state", to_string(job.state)},
       {"mission_id", job.mission_id},
       {"progress", {{"tiles_done", job.tiles_done}, {"tiles_total", job.tiles_total}}},
       {"error_message", job.error_message},
       {"params", job.params}};
}

void from_json(const json& j, Job& job) {
  job.id = j.at("id").get<std::string>();
  job.kind = j.at("kind").get<std::string>() == "evaluate" ? JobKind::evaluate : JobKind::generate;
  job.state = state_from_string(j.at("state").get<std::string>());
  job.mission_id = j.at("mission_id").get<std::string>();
  job.tiles_done = j.at("progress").at("tiles_done").get<std::size_t>();
  job.tiles_total = j.at("progress").at("tiles_total").get<std::size_t>();
  job.error_message = j.value("error_message", std::string());
  job.params = j.value("params", json::object());
}

// --- Store ------------------------------------------------------------------

Store::Store(fs::path root) : root_(std::move(root)) {
  for (const char* d : {"maps", "missions", "jobs", "checkpoints"}) fs::create_directories(root_ / d);
}

bool Store::valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

namespace {

std::pair<std::string, bool> put_once(const fs::path& file, const std::string& bytes) {
  if (fs::exists(file)) return {"", false};
  fs::create_directories(file.parent_path());
  write_file_atomic(file, bytes);
  return {"", true};
}

std::optional<std::string> read_if(const fs::path& file) {
  if (!fs::exists(file)) return std::nullopt;
  return read_file(file);
}

}  // namespace

std::pair<std::string, bool> Store::put_map(const std::string& bytes) {
  const std::string id = hex64(fnv1a64(bytes));
  return {id, put_once(root_ / "maps" / (id + ".json"), bytes).second};
}

std::pair<std::string, bool> Store::put_mission(const std::string& bytes) {
  const std::string id = hex64(fnv1a64(bytes));
  return {id, put_once(root_ / "missions" / id / "mission.json", bytes).second};
}

std::optional<std::string> Store::map_bytes(const std::string& id) const {
  if (!valid_id(id)) return std::nullopt;
  return read_if(root_ / "maps" / (id + ".json"));
}

std::optional<std::string> Store::mission_bytes(const std::string& id) const {
  if (!valid_id(id)) return std::nullopt;
  return read_if(root_ / "missions" / id / "mission.json");
}

fs::path Store::scan_dir(const std::string& mission_id) const { return root_ / "missions" / mission_id / "scan"; }

fs::path Store::report_file(const std::string& mission_id) const {
  return root_ / "missions" / mission_id / "report.json";
}

fs::path Store::checkpoint_dir(const std::string& id) const { return root_ / "checkpoints" / id; }

void Store::save_job(const Job& job) const { write_file_atomic(root_ / "jobs" / (job.id + ".json"), json(job).dump(2)); }

std::vector<Job> Store::load_jobs() const {
  std::vector<Job> out;
  for (const auto& e : fs::directory_iterator(root_ / "jobs")) {
    if (e.path().extension() != ".json") continue;
    const auto j = json::parse(read_file(e.path()), nullptr, false);
    if (j.is_discarded()) throw IoError("corrupt job file " + e.path().string());
    try {
      out.push_back(j.get<Job>());
    } catch (const json::exception& ex) {
      throw IoError("job file " + e.path().string() + ": " + ex.what());
    }
  }
  return out;
}

// --- Service ----------------------------------------------------------------

namespace {

std::string error_body(const std::string& message, const std::vector<FieldError>& fields = {}) {
  json j = {{"error", message}};
  if (!fields.empty()) {
    j["fields"] = json::array();
    for (const auto& f : fields) j["fields"].push_back({{"field", f.field}, {"message", f.message}});
  }
  return j.dump();
}

std::vector<FieldError> fields_of(const ValidationError& e) {
  if (!e.fields().empty()) return e.fields();
  return {{"body", e.what()}};
}

bool parse_index(const std::string& s, std::size_t& out) {
  if (s.empty()) return false;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && end == s.data() + s.size();
}

}  // namespace

Service::Service(ServiceConfig config) : config_(std::move(config)), store_(config_.store) {
  config_.validate();
  recover();
  for (int i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : workers_) t.join();
}

void Service::recover() {
  for (auto& job : store_.load_jobs()) {
    if (job.state == JobState::queued || job.state == JobState::running) {
      job.state = JobState::failed;
      job.error_message = "interrupted by service restart";
      store_.save_job(job);
    }
    jobs_[job.id] = job;
  }
  job_counter_ = jobs_.size();
}

void Service::pause() {
  std::lock_guard lock(mutex_);
  paused_ = true;
}

void Service::resume() {
  {
    std::lock_guard lock(mutex_);
    paused_ = false;
  }
  cv_.notify_all();
}

void Service::wait_idle() {
  std::unique_lock lock(mutex_);
  idle_cv_.wait(lock, [this] { return (queue_.empty() || paused_) && running_ == 0; });
}

std::optional<Job> Service::job(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

void Service::update(const Job& job) {
  std::lock_guard lock(mutex_);
  auto& stored = jobs_[job.id];
  // progress and state only move forward
  if (job.tiles_done < stored.tiles_done && stored.id == job.id) return;
  stored = job;
  store_.save_job(job);
}

void Service::worker_loop() {
  for (;;) {
    Job job;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [this] { return stopping_ || (!paused_ && !queue_.empty()); });
      if (stopping_) return;
      job = jobs_.at(queue_.front());
      queue_.pop_front();
      ++running_;
    }
    run_job(std::move(job));
    {
      std::lock_guard lock(mutex_);
      --running_;
    }
    idle_cv_.notify_all();
  }
}

void Service::run_job(Job job) {
  job.state = JobState::running;
  update(job);
  try {
    if (job.kind == JobKind::generate)
      run_generate(job);
    else
      run_evaluate(job);
    job.state = JobState::done;
  } catch (const std::exception& e) {
    job.state = JobState::failed;
    job.error_message = e.what();
  }
  update(job);
  std::lock_guard lock(mutex_);
  active_.erase(job.mission_id);
}

std::optional<std::string> Service::resolve_checkpoint(const std::string& requested) const {
  const std::string id = requested.empty() ? config_.default_checkpoint : requested;
  if (id.empty()) return std::nullopt;
  if (Store::valid_id(id) && fs::exists(store_.checkpoint_dir(id) / "meta.json")) return store_.checkpoint_dir(id).string();
  if (requested.empty() && fs::exists(fs::path(id) / "meta.json")) return id;
  return std::nullopt;
}

std::shared_ptr<gan::Checkpoint> Service::checkpoint(const std::string& dir) {
  std::lock_guard lock(checkpoint_mutex_);
  auto& slot = checkpoints_[dir];
  if (!slot) slot = std::make_shared<gan::Checkpoint>(gan::load_checkpoint(dir));
  return slot;
}

void Service::run_generate(Job& job) {
  const auto map_json = json::parse(*store_.mission_bytes(job.mission_id));
  const MissionSpec mission = parse_mission(map_json);
  const WorldMap map = parse_world_map(json::parse(*store_.map_bytes(mission.map_id)));
  const auto ck = checkpoint(job.params.at("checkpoint_dir").get<std::string>());
  GenerationOptions opt;
  opt.mode = mode_from_string(job.params.at("mode").get<std::string>());
  opt.seed = job.params.at("seed").get<std::uint64_t>();
  opt.noise = job.params.at("noise").get<bool>();
  const fs::path dir = store_.scan_dir(job.mission_id);
  fs::remove_all(dir);
  fs::remove(store_.report_file(job.mission_id));
  json extra = {{"mission_id", job.mission_id}, {"job_id", job.id}};
  generate_mission(map, mission, *ck, opt, dir,
                   [&](std::size_t done, std::size_t total) {
                     job.tiles_done = done;
                     job.tiles_total = total;
                     update(job);
                   },
                   extra);
}

void Service::run_evaluate(Job& job) {
  const fs::path dir = store_.scan_dir(job.mission_id);
  const MissionScan scan = load_scan(dir);
  job.tiles_total = scan.tiles.size();
  json report = {{"mission_id", job.mission_id}, {"checkpoint_id", scan.checkpoint_id},
                 {"mode", to_string(scan.mode)},  {"seed", scan.seed},
                 {"metrics", json::array()}};
  if (scan.tiles.size() >= 2)
    report["metrics"].push_back(
        eval::report_entry("seam", eval::to_json_value(eval::seam_discontinuity(scan)), {}, scan.seed));
  if (scan.tiles.size() >= 100)
    report["metrics"].push_back(
        eval::report_entry("drift", eval::to_json_value(eval::drift_check(scan)), {}, scan.seed));
  else
    report["notes"].push_back("drift needs at least 100 tiles");
  write_file_atomic(store_.report_file(job.mission_id), report.dump(2));
  job.tiles_done = job.tiles_total;
}

Service::Response Service::post_map(const std::string& body) {
  const auto j = json::parse(body, nullptr, false);
  if (j.is_discarded()) return {422, error_body("body is not valid JSON", {{"body", "malformed JSON"}})};
  try {
    parse_world_map(j);
  } catch (const ValidationError& e) {
    return {422, error_body("invalid map", fields_of(e))};
  }
  const auto [id, created] = store_.put_map(body);
  return {created ? 201 : 200, json{{"map_id", id}}.dump()};
}

Service::Response Service::post_mission(const std::string& body) {
  const auto j = json::parse(body, nullptr, false);
  if (j.is_discarded()) return {422, error_body("body is not valid JSON", {{"body", "malformed JSON"}})};
  try {
    const MissionSpec m = parse_mission(j);
    const auto map_bytes = store_.map_bytes(m.map_id);
    if (!map_bytes) return {422, error_body("invalid mission", {{"map_id", "unknown map " + m.map_id}})};
    const WorldMap map = parse_world_map(json::parse(*map_bytes));
    plan_pings(m, map);
  } catch (const ValidationError& e) {
    return {422, error_body("invalid mission", fields_of(e))};
  }
  const auto [id, created] = store_.put_mission(body);
  return {created ? 201 : 200, json{{"mission_id", id}}.dump()};
}

Service::Response Service::post_job(const std::string& mission_id, const std::string& body, JobKind kind) {
  if (!store_.mission_bytes(mission_id)) return {404, error_body("unknown mission " + mission_id)};
  json req = body.empty() ? json::object() : json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object())
    return {422, error_body("body must be a JSON object", {{"body", "malformed JSON"}})};

  json params = json::object();
  std::vector<FieldError> errors;
  if (kind == JobKind::generate) {
    const auto str = [&](const char* key, const std::string& d) -> std::string {
      if (!req.contains(key)) return d;
      if (!req[key].is_string()) {
        errors.push_back({key, "must be a string"});
        return d;
      }
      return req[key].get<std::string>();
    };
    const std::string mode = str("mode", "markov");
    try {
      params["mode"] = to_string(mode_from_string(mode));
    } catch (const ValidationError& e) {
      errors.push_back({"mode", "must be markov, independent or sigmoid_blended"});
    }
    if (!req.contains("seed"))
      params["seed"] = 0;
    else if (req["seed"].is_number_unsigned())
      params["seed"] = req["seed"].get<std::uint64_t>();
    else
      errors.push_back({"seed", "must be a non-negative integer"});
    if (!req.contains("noise"))
      params["noise"] = true;
    else if (req["noise"].is_boolean())
      params["noise"] = req["noise"].get<bool>();
    else
      errors.push_back({"noise", "must be a boolean"});
    const std::string ck = str("checkpoint_id", "");
    const auto dir = resolve_checkpoint(ck);
    if (!dir) {
      errors.push_back({"checkpoint_id", ck.empty() ? "required (no default checkpoint configured)"
                                                    : "unknown checkpoint " + ck});
    } else {
      params["checkpoint_dir"] = *dir;
      try {
        const auto c = checkpoint(*dir);
        params["checkpoint_id"] = c->id;
        const MissionSpec m = parse_mission(json::parse(*store_.mission_bytes(mission_id)));
        if (m.swath_px != c->model->tile_cols)
          errors.push_back({"checkpoint_id", "checkpoint tiles are " + std::to_string(c->model->tile_cols) +
                                                 " px wide but the mission swath is " + std::to_string(m.swath_px)});
      } catch (const std::exception& e) {
        errors.push_back({"checkpoint_id", std::string("unreadable checkpoint: ") + e.what()});
      }
    }
  } else if (!fs::exists(store_.scan_dir(mission_id) / "manifest.json")) {
    return {422, error_body("mission has no generated scan", {{"mission_id", "generate first"}})};
  }
  if (!errors.empty()) return {422, error_body("invalid request", errors)};

  std::lock_guard lock(mutex_);
  if (auto it = active_.find(mission_id); it != active_.end())
    return {409, error_body("job already running for mission " + mission_id)};
  Job job;
  job.kind = kind;
  job.mission_id = mission_id;
  job.params = params;
  job.id = hex64(derive_seed(fnv1a64(mission_id), job_counter_++));
  while (jobs_.count(job.id)) job.id = hex64(derive_seed(fnv1a64(mission_id), job_counter_++));
  jobs_[job.id] = job;
  store_.save_job(job);
  active_[mission_id] = job.id;
  queue_.push_back(job.id);
  cv_.notify_one();
  return {202, json{{"job_id", job.id}}.dump()};
}

Service::Response Service::get_tiles(const std::string& mission_id, const std::optional<std::string>& from,
                                     const std::optional<std::string>& to) {
  if (!store_.mission_bytes(mission_id)) return {404, error_body("unknown mission " + mission_id)};
  const fs::path dir = store_.scan_dir(mission_id);
  if (!fs::exists(dir / "manifest.json")) return {404, error_body("mission has no generated tiles")};
  const json m = read_manifest(dir);
  const std::size_t written = m.value("tiles_written", std::size_t{0});
  std::size_t a = 0, b = written;
  std::vector<FieldError> errors;
  if (from && !parse_index(*from, a)) errors.push_back({"from", "must be a non-negative integer"});
  if (to && !parse_index(*to, b)) errors.push_back({"to", "must be a non-negative integer"});
  if (errors.empty() && a > b) errors.push_back({"from", "must not exceed to"});
  if (!errors.empty()) return {422, error_body("invalid tile range", errors)};
  b = std::min(b, written);
  a = std::min(a, b);
  json entries = m.at("tiles");
  // blended tiles are written one behind
  std::vector<json> sorted(entries.begin(), entries.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const json& x, const json& y) { return x.at("index").get<std::size_t>() < y.at("index").get<std::size_t>(); });
  json tiles = json::array();
  for (const auto& e : sorted) {
    const auto i = e.at("index").get<std::size_t>();
    if (i < a || i >= b) continue;
    tiles.push_back({{"index", i},
                     {"valid_rows", e.at("valid_rows")},
                     {"png_base64", httplib::detail::base64_encode(read_file(dir / e.at("file").get<std::string>()))}});
  }
  json out = {{"mission_id", mission_id},
              {"from", a},
              {"to", b},
              {"tiles_written", written},
              {"tiles_total", m.value("tiles_total", std::size_t{0})},
              {"tile_rows", m.value("tile_rows", 0)},
              {"tiles", tiles}};
  return {200, out.dump()};
}

Service::Response Service::get_tile(const std::string& mission_id, const std::string& index) {
  if (!store_.mission_bytes(mission_id)) return {404, error_body("unknown mission " + mission_id)};
  std::size_t i = 0;
  if (!parse_index(index, i)) return {422, error_body("invalid tile index", {{"index", "must be a non-negative integer"}})};
  const fs::path dir = store_.scan_dir(mission_id);
  if (!fs::exists(dir / "manifest.json")) return {404, error_body("mission has no generated tiles")};
  const json m = read_manifest(dir);
  for (const auto& e : m.at("tiles"))
    if (e.at("index").get<std::size_t>() == i) return {200, read_file(dir / e.at("file").get<std::string>()), "image/png"};
  return {404, error_body("tile " + index + " not generated yet")};
}

void Service::install(httplib::Server& s) {
  const auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  const auto guard = [reply](auto fn) {
    return [reply, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        reply(res, fn(req));
      } catch (const ValidationError& e) {
        reply(res, {422, error_body(e.what(), fields_of(e))});
      } catch (const std::exception& e) {
        reply(res, {500, error_body(e.what())});
      }
    };
  };
  const auto param = [](const httplib::Request& req, const char* key) -> std::optional<std::string> {
    if (!req.has_param(key)) return std::nullopt;
    return req.get_param_value(key);
  };

  s.Get("/v1/health", guard([](const httplib::Request&) { return Response{200, R"({"status":"ok"})"}; }));
  s.Post("/v1/maps", guard([this](const httplib::Request& req) { return post_map(req.body); }));
  s.Get(R"(/v1/maps/([^/]+))", guard([this](const httplib::Request& req) {
          auto b = store_.map_bytes(req.matches[1]);
          return b ? Response{200, *b} : Response{404, error_body("unknown map " + std::string(req.matches[1]))};
        }));
  s.Post("/v1/missions", guard([this](const httplib::Request& req) { return post_mission(req.body); }));
  s.Get(R"(/v1/missions/([^/]+))", guard([this](const httplib::Request& req) {
          auto b = store_.mission_bytes(req.matches[1]);
          return b ? Response{200, *b} : Response{404, error_body("unknown mission " + std::string(req.matches[1]))};
        }));
  s.Post(R"(/v1/missions/([^/]+)/generate)", guard([this](const httplib::Request& req) {
           return post_job(req.matches[1], req.body, JobKind::generate);
         }));
  s.Post(R"(/v1/missions/([^/]+)/evaluate)", guard([this](const httplib::Request& req) {
           return post_job(req.matches[1], req.body, JobKind::evaluate);
         }));
  s.Get(R"(/v1/missions/([^/]+)/tiles)", guard([this, param](const httplib::Request& req) {
          return get_tiles(req.matches[1], param(req, "from"), param(req, "to"));
        }));
  s.Get(R"(/v1/missions/([^/]+)/tiles/([^/]+))", guard([this](const httplib::Request& req) {
          return get_tile(req.matches[1], req.matches[2]);
        }));
  s.Get(R"(/v1/missions/([^/]+)/report)", guard([this](const httplib::Request& req) {
          const std::string id = req.matches[1];
          if (!store_.mission_bytes(id)) return Response{404, error_body("unknown mission " + id)};
          const fs::path f = store_.report_file(id);
          if (!fs::exists(f)) return Response{404, error_body("no report computed for mission " + id)};
          return Response{200, read_file(f)};
        }));
  s.Get(R"(/v1/jobs/([^/]+))", guard([this](const httplib::Request& req) {
          auto j = job(req.matches[1]);
          return j ? Response{200, json(*j).dump()} : Response{404, error_body("unknown job " + std::string(req.matches[1]))};
        }));
  s.Get("/v1/checkpoints", guard([this](const httplib::Request&) {
          json ids = json::array();
          for (const auto& e : fs::directory_iterator(store_.root() / "checkpoints"))
            if (fs::exists(e.path() / "meta.json")) ids.push_back(e.path().filename().string());
          return Response{200, json{{"checkpoints", ids}}.dump()};
        }));
}

bool Service::listen() {
  server_ = std::make_unique<httplib::Server>();
  install(*server_);
  return server_->listen(config_.host, config_.port);
}

int Service::listen_background() {
  server_ = std::make_unique<httplib::Server>();
  install(*server_);
  const int port = server_->bind_to_any_port(config_.host);
  if (port < 0) throw IoError("could not bind " + config_.host);
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void Service::stop() {
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
}

}  // namespace sonargen::service
