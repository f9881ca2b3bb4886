#include "tractloop/service.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <random>
#include <set>

#include <httplib.h>
#include <json.hpp>

#include "tractloop/active_loop.hpp"
#include "tractloop/config.hpp"
#include "tractloop/error.hpp"
#include "tractloop/evaluation.hpp"
#include "tractloop/journal.hpp"
#include "tractloop/tract_io.hpp"

namespace tractloop {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kJson = "application/json";

struct HttpError {
  int status;
  json body;
};

[[noreturn]] void fail(int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  throw HttpError{status, std::move(extra)};
}

json polyline(const ResampledCache& cache, std::size_t id) {
  json pts = json::array();
  for (const auto& p : cache.streamline(id).points) pts.push_back({p.x, p.y, p.z});
  return json{{"id", id}, {"points", std::move(pts)}};
}

/// Up to `limit` ids from `ids` picked at a fixed stride.
std::vector<std::size_t> stride_sample(std::span<const std::size_t> ids, std::size_t limit) {
  if (ids.size() <= limit) return {ids.begin(), ids.end()};
  std::vector<std::size_t> out;
  out.reserve(limit);
  for (std::size_t i = 0; i < limit; ++i) out.push_back(ids[i * ids.size() / limit]);
  return out;
}

std::string option_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) return v.dump();
  fail(400, "config values must be strings, numbers or booleans");
}

RoiSphere parse_roi(const json& j) {
  if (!j.is_object() || !j.contains("center") || !j.contains("radius"))
    fail(400, "roi needs center [x,y,z] and radius");
  const auto& c = j["center"];
  const auto& r = j["radius"];
  if (!c.is_array() || c.size() != 3 || !r.is_number()) fail(400, "roi needs center [x,y,z] and radius");
  for (const auto& v : c)
    if (!v.is_number()) fail(400, "roi center must hold three numbers");
  const RoiSphere roi{{c[0].get<double>(), c[1].get<double>(), c[2].get<double>()}, r.get<double>()};
  if (!(roi.radius > 0.0)) fail(400, "roi radius must be positive");
  return roi;
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) fail(400, "request body must be a JSON object");
  return body;
}

struct SessionEntry {
  std::string id;
  std::mutex work;  // single writer
  Session session;
  std::shared_ptr<const Dataset> data;
  bool accepted = false;
  std::vector<std::size_t> tract;
  std::string tract_tck;
  std::string mask_bin;
  std::string journal_txt;

  mutable std::mutex snapshot_mu;
  json snapshot;

  SessionEntry(std::string id_, Session s, std::shared_ptr<const Dataset> d)
      : id(std::move(id_)), session(std::move(s)), data(std::move(d)) {}

  json resource() const {
    json cfg = json::object();
    for (const auto& [k, v] : session_config_entries(session.config())) cfg[k] = v;
    json r{{"id", id},
           {"dataset", data->name},
           {"status", to_string(session.status())},
           {"iteration", session.iteration()},
           {"rounds", session.rounds_completed()},
           {"labeled", {{"positive", session.labeled_count(true)}, {"negative", session.labeled_count(false)}}},
           {"candidates", std::vector<std::size_t>(session.candidates().begin(), session.candidates().end())},
           {"config", std::move(cfg)},
           {"notice", session.notice()},
           {"accepted", accepted}};
    if (session.rounds_completed() > 0) r["predicted_positive"] = session.current_tract().size();
    return r;
  }

  void publish(json r) {
    std::lock_guard lock(snapshot_mu);
    snapshot = std::move(r);
  }

  json read_snapshot() const {
    std::lock_guard lock(snapshot_mu);
    return snapshot;
  }
};

}  // namespace

struct SessionService::Impl {
  ServiceOptions options;
  httplib::Server server;

  std::mutex datasets_mu;
  std::map<std::pair<std::string, std::size_t>, std::shared_ptr<const Dataset>> datasets;

  std::mutex sessions_mu;
  std::map<std::string, std::shared_ptr<SessionEntry>> sessions;
  std::uint64_t next_session = 1;
  std::string instance_tag;

  explicit Impl(ServiceOptions o) : options(std::move(o)) {
    std::random_device rd;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%08x", rd());
    instance_tag = buf;
    routes();
  }

  std::vector<fs::path> dataset_files() const {
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(options.data_dir, ec))
      if (entry.is_regular_file() && entry.path().extension() == ".tck") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
  }

  std::shared_ptr<const Dataset> dataset(const std::string& name, std::size_t m) {
    std::lock_guard lock(datasets_mu);
    const auto key = std::make_pair(name, m);
    if (auto it = datasets.find(key); it != datasets.end()) return it->second;
    for (const auto& path : dataset_files()) {
      if (path.stem().string() != name) continue;
      auto data = Dataset::create(name, io::read_tck(path), m);
      datasets.emplace(key, data);
      return data;
    }
    fail(404, "unknown dataset \"" + name + "\"");
  }

  std::shared_ptr<SessionEntry> find_session(const std::string& id) {
    std::lock_guard lock(sessions_mu);
    auto it = sessions.find(id);
    if (it == sessions.end()) fail(404, "unknown session \"" + id + "\"");
    return it->second;
  }

  json view(const SessionEntry& e) const {
    json r = e.resource();
    json geom = json::array();
    for (auto id : e.session.candidates()) geom.push_back(polyline(e.data->resampled, id));
    r["candidate_geometry"] = std::move(geom);
    if (e.session.rounds_completed() > 0) {
      const auto tract = e.session.current_tract();
      json preview = json::array();
      for (auto id : stride_sample(tract, options.preview_limit)) preview.push_back(polyline(e.data->resampled, id));
      r["preview"] = {{"total", tract.size()}, {"streamlines", std::move(preview)}};
    }
    return r;
  }

  void routes() {
    auto wrap = [](auto handler) {
      return [handler](const httplib::Request& req, httplib::Response& res) {
        try {
          handler(req, res);
        } catch (const HttpError& e) {
          res.status = e.status;
          res.set_content(e.body.dump(), kJson);
        } catch (const LabelMismatch& e) {
          res.status = 422;
          res.set_content(json{{"error", e.what()},
                               {"missing", e.missing()},
                               {"unexpected", e.unexpected()},
                               {"duplicated", e.duplicated()}}
                              .dump(),
                          kJson);
        } catch (const TooFewRoiStreamlines& e) {
          res.status = 422;
          res.set_content(json{{"error", e.what()}, {"found", e.found()}, {"required", e.required()}}.dump(), kJson);
        } catch (const StateError& e) {
          res.status = 409;
          res.set_content(json{{"error", e.what()}}.dump(), kJson);
        } catch (const InvalidArgument& e) {
          res.status = 400;
          res.set_content(json{{"error", e.what()}}.dump(), kJson);
        } catch (const std::exception& e) {
          res.status = 500;
          res.set_content(json{{"error", e.what()}}.dump(), kJson);
        }
      };
    };

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });

    server.Get("/datasets", wrap([this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      for (const auto& path : dataset_files()) {
        json entry{{"name", path.stem().string()}, {"file", path.filename().string()}};
        try {
          const auto header = io::read_tck_header(path);
          entry["streamlines"] = header.count ? *header.count : io::read_tck(path).size();
        } catch (const Error& e) {
          entry["error"] = e.what();
        }
        list.push_back(std::move(entry));
      }
      res.set_content(json{{"datasets", std::move(list)}}.dump(), kJson);
    }));

    server.Get(R"(/datasets/([^/]+)/preview)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      std::size_t limit = options.preview_limit;
      if (req.has_param("limit")) {
        try {
          limit = std::min<std::size_t>(std::stoul(req.get_param_value("limit")), options.preview_limit);
        } catch (const std::exception&) {
          fail(400, "limit must be a non-negative integer");
        }
      }
      const auto data = dataset(req.matches[1], SessionConfig{}.points_per_streamline);
      std::vector<std::size_t> all(data->tractogram.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      json lines = json::array();
      for (auto id : stride_sample(all, limit)) lines.push_back(polyline(data->resampled, id));
      res.set_content(json{{"name", data->name}, {"streamlines", all.size()}, {"preview", std::move(lines)}}.dump(),
                      kJson);
    }));

    server.Post("/sessions", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      if (!body.contains("dataset") || !body["dataset"].is_string()) fail(400, "dataset name is required");
      if (!body.contains("roi")) fail(400, "roi is required");
      const RoiSphere roi = parse_roi(body["roi"]);
      SessionConfig cfg;
      if (body.contains("config")) {
        if (!body["config"].is_object()) fail(400, "config must be an object");
        for (const auto& [key, value] : body["config"].items()) apply_session_option(cfg, key, option_string(value));
      }
      cfg.validate();
      const auto data = dataset(body["dataset"].get<std::string>(), cfg.points_per_streamline);
      Session session = Session::interactive(data, roi, cfg);

      std::string id;
      {
        std::lock_guard lock(sessions_mu);
        id = instance_tag + "-" + std::to_string(next_session++);
      }
      auto entry = std::make_shared<SessionEntry>(id, std::move(session), data);
      json out = view(*entry);
      entry->publish(entry->resource());
      {
        std::lock_guard lock(sessions_mu);
        sessions.emplace(id, entry);
      }
      res.status = 201;
      res.set_content(out.dump(), kJson);
    }));

    server.Get(R"(/sessions/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto entry = find_session(req.matches[1]);
      res.set_content(entry->read_snapshot().dump(), kJson);
    }));

    server.Post(R"(/sessions/([^/]+)/labels)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto entry = find_session(req.matches[1]);
      std::unique_lock lock(entry->work, std::try_to_lock);
      if (!lock.owns_lock()) fail(409, "session is busy with another request");
      const json body = parse_body(req);
      if (!body.contains("labels") || !body["labels"].is_array()) fail(400, "labels array is required");
      std::vector<Label> labels;
      for (const auto& l : body["labels"]) {
        if (!l.is_object() || !l.contains("id") || !l["id"].is_number_unsigned() || !l.contains("positive") ||
            !l["positive"].is_boolean())
          fail(400, "each label needs an unsigned id and a boolean positive");
        labels.push_back({l["id"].get<std::size_t>(), l["positive"].get<bool>()});
      }
      Session& s = entry->session;
      if (entry->accepted) fail(409, "session is finalized");
      const auto cands = s.candidates();
      const bool stale = !labels.empty() && std::all_of(labels.begin(), labels.end(), [&](const Label& l) {
        return l.streamline_id < s.dataset().tractogram.size() && s.is_labeled(l.streamline_id) &&
               std::find(cands.begin(), cands.end(), l.streamline_id) == cands.end();
      });
      if (stale) fail(409, "batch was already submitted");
      s.submit_labels(labels);
      entry->publish(entry->resource());
      res.set_content(view(*entry).dump(), kJson);
    }));

    server.Post(R"(/sessions/([^/]+)/resample)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto entry = find_session(req.matches[1]);
      std::unique_lock lock(entry->work, std::try_to_lock);
      if (!lock.owns_lock()) fail(409, "session is busy with another request");
      const json body = parse_body(req);
      std::optional<RoiSphere> roi;
      if (body.contains("roi")) roi = parse_roi(body["roi"]);
      entry->session.resample_initial(roi);
      entry->publish(entry->resource());
      res.set_content(view(*entry).dump(), kJson);
    }));

    server.Post(R"(/sessions/([^/]+)/accept)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto entry = find_session(req.matches[1]);
      std::unique_lock lock(entry->work, std::try_to_lock);
      if (!lock.owns_lock()) fail(409, "session is busy with another request");
      if (!entry->accepted) {
        Session& s = entry->session;
        if (s.rounds_completed() == 0) fail(409, "no training round has completed");
        entry->tract = s.finalize();
        const Tractogram& t = entry->data->tractogram;
        entry->tract_tck = io::encode_tck(t.subset(entry->tract));
        entry->mask_bin = io::encode_mask(voxelize(entry->tract, t, default_grid(t)));
        entry->journal_txt = s.journal().text();
        entry->accepted = true;
        const fs::path dir = options.data_dir / "journals";
        std::error_code ec;
        fs::create_directories(dir, ec);
        io::write_file(dir / (entry->id + ".journal"), entry->journal_txt);
      }
      entry->publish(entry->resource());
      json out = entry->resource();
      out["tract"] = entry->tract;
      res.set_content(out.dump(), kJson);
    }));

    server.Get(R"(/sessions/([^/]+)/export/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto entry = find_session(req.matches[1]);
      const std::string artifact = req.matches[2];
      if (artifact != "tract.tck" && artifact != "mask.bin" && artifact != "journal.txt")
        fail(404, "unknown artifact \"" + artifact + "\"");
      std::unique_lock lock(entry->work, std::try_to_lock);
      if (!lock.owns_lock()) fail(409, "session is busy with another request");
      if (!entry->accepted) fail(409, "session has not been accepted");
      if (artifact == "tract.tck") res.set_content(entry->tract_tck, "application/octet-stream");
      else if (artifact == "mask.bin") res.set_content(entry->mask_bin, "application/octet-stream");
      else res.set_content(entry->journal_txt, "text/plain");
    }));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) res.set_content(json{{"error", "no such endpoint"}}.dump(), kJson);
    });
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
    });
  }
};

SessionService::SessionService(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}
SessionService::~SessionService() { stop(); }

int SessionService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host + " to any port");
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port))
    throw IoError("cannot bind " + host + ":" + std::to_string(port) + " (address in use or unavailable)");
  return port;
}

void SessionService::listen() {
  if (!impl_->server.listen_after_bind()) throw IoError("server stopped with an error");
}

void SessionService::stop() {
  if (impl_) impl_->server.stop();
}

bool SessionService::running() const { return impl_->server.is_running(); }
void SessionService::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace tractloop
