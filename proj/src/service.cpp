#include <frk/service.hpp>

#include <frk/harness.hpp>
#include <frk/json_io.hpp>
#include <frk/phantom.hpp>

#include <httplib.h>

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

namespace frk {

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("FRK_DATA_DIR"); env && *env) return env;
  return "frk-data";
}

namespace {

struct StoredVolume {
  std::string id;
  std::string name;
  AnyVolume volume;
};

struct StoredImage {
  Image16 pixels;
  std::string pgm;
};

struct ReviewPoint {
  std::string id;
  Detection det;
};

struct Review {
  std::vector<ReviewPoint> points;
  std::vector<std::string> applied_ops;
  int next_id = 0;
  Json last_solve;
};

struct Session {
  std::mutex mu;  // serializes every operation on this session
  std::vector<std::string> volumes;
  std::vector<std::string> images;
  std::map<std::string, Review> reviews;
};

struct Job {
  std::string status = "queued";
  Json result;
  Json error;
};

int http_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::InvalidInput:
    case ErrorCode::Format: return 400;
    case ErrorCode::HashMismatch: return 409;
    case ErrorCode::Io: return 500;
    default: return 422;
  }
}

Json error_json(const Error& e) {
  Json j{{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
  if (!e.field().empty()) j["field"] = e.field();
  return j;
}

/// Error carrying extra payload keys (e.g. the point count of a refused solve).
struct PayloadError : Error {
  PayloadError(ErrorCode c, const std::string& msg, std::string field, Json extra)
      : Error(c, msg, std::move(field)), extra(std::move(extra)) {}
  Json extra;
};

const Json& require(const Json& body, const char* key) {
  if (!body.is_object() || !body.contains(key))
    throw Error(ErrorCode::InvalidInput, std::string("missing '") + key + "'", key);
  return body[key];
}

std::string require_string(const Json& body, const char* key) {
  const Json& v = require(body, key);
  if (!v.is_string()) throw Error(ErrorCode::InvalidInput, std::string("'") + key + "' must be a string", key);
  return v.get<std::string>();
}

int optional_int(const Json& body, const char* key, int fallback) {
  if (!body.contains(key)) return fallback;
  if (!body[key].is_number_integer())
    throw Error(ErrorCode::InvalidInput, std::string("'") + key + "' must be an integer", key);
  return body[key].get<int>();
}

double optional_number(const Json& body, const char* key, double fallback) {
  if (!body.contains(key)) return fallback;
  if (!body[key].is_number()) throw Error(ErrorCode::InvalidInput, std::string("'") + key + "' must be a number", key);
  return body[key].get<double>();
}

std::optional<std::uint8_t> optional_label(const Json& body) {
  if (!body.contains("label") || body["label"].is_null()) return std::nullopt;
  const int l = optional_int(body, "label", 0);
  if (l < 1 || l > 255) throw Error(ErrorCode::InvalidInput, "'label' must be in [1, 255]", "label");
  return static_cast<std::uint8_t>(l);
}

Point2 point2(const Json& j, const char* key) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw Error(ErrorCode::InvalidInput, std::string("'") + key + "' must be [u, v]", key);
  return {j[0].get<double>(), j[1].get<double>()};
}

BeadClass bead_class(const Json& j) {
  const std::string s = j.is_string() ? j.get<std::string>() : "";
  if (s == "REF") return BeadClass::REFERENCE;
  if (s == "STD") return BeadClass::STANDARD;
  throw Error(ErrorCode::InvalidInput, "class must be \"REF\" or \"STD\"", "class");
}

Json descriptor(const StoredVolume& v) {
  const Lattice& l = lattice_of(v.volume);
  Json j{{"volume_id", v.id},
         {"name", v.name},
         {"dtype", std::holds_alternative<VolumeHU>(v.volume) ? "int16" : "uint8"},
         {"dims", Json::array({l.dims.x(), l.dims.y(), l.dims.z()})},
         {"spacing_mm", Json::array({l.spacing_mm.x(), l.spacing_mm.y(), l.spacing_mm.z()})},
         {"origin_mm", Json::array({l.origin_mm.x(), l.origin_mm.y(), l.origin_mm.z()})}};
  if (const auto* labels = std::get_if<VolumeLabels>(&v.volume)) j["labels"] = label_ids(*labels);
  return j;
}

Json review_json(const std::string& image_id, const Review& r) {
  Json pts = Json::array();
  for (const auto& p : r.points) {
    Json d = detection_to_json(p.det);
    d["id"] = p.id;
    pts.push_back(d);
  }
  Json j{{"image_id", image_id}, {"points", pts}, {"applied_ops", r.applied_ops}};
  if (!r.last_solve.is_null()) j["solve"] = r.last_solve;
  return j;
}

}  // namespace

struct Service::Impl {
  ServiceOptions opts;

  std::mutex store_mu;
  std::map<std::string, std::shared_ptr<const StoredVolume>> volumes;
  std::map<std::string, std::shared_ptr<const StoredImage>> images;
  std::map<std::string, EncodedVolume> grids;

  std::mutex sessions_mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;

  std::mutex jobs_mu;
  std::condition_variable jobs_cv;
  std::map<std::string, Job> jobs;
  std::deque<std::function<void()>> queue;
  std::vector<std::thread> workers;
  bool stopping = false;
  std::uint64_t next_job = 0;

  explicit Impl(ServiceOptions o) : opts(std::move(o)) {
    for (int i = 0; i < std::max(1, opts.workers); ++i)
      workers.emplace_back([this] {
        for (;;) {
          std::function<void()> task;
          {
            std::unique_lock lock(jobs_mu);
            jobs_cv.wait(lock, [this] { return stopping || !queue.empty(); });
            if (stopping && queue.empty()) return;
            task = std::move(queue.front());
            queue.pop_front();
          }
          task();
        }
      });
  }

  ~Impl() {
    {
      std::lock_guard lock(jobs_mu);
      stopping = true;
    }
    jobs_cv.notify_all();
    for (auto& t : workers) t.join();
  }

  void persist(const std::string& sub, const std::string& name, const std::string& bytes) {
    if (opts.data_dir.empty()) return;
    const auto path = opts.data_dir / sub / name;
    if (!std::filesystem::exists(path)) write_file(path, bytes);
  }

  std::shared_ptr<Session> session(const httplib::Request& req, const Json& body) {
    std::string id = "default";
    if (body.is_object() && body.contains("session")) {
      if (!body["session"].is_string()) throw Error(ErrorCode::InvalidInput, "'session' must be a string", "session");
      id = body["session"].get<std::string>();
    } else if (req.has_param("session")) {
      id = req.get_param_value("session");
    }
    std::lock_guard lock(sessions_mu);
    auto& s = sessions[id];
    if (!s) s = std::make_shared<Session>();
    return s;
  }

  std::string add_volume(AnyVolume v, const std::string& name) {
    const EncodedVolume enc = std::visit([](const auto& x) { return encode_volume(x); }, v);
    const std::string id = enc.id();
    persist("volumes", id + ".vjson", enc.header);
    persist("volumes", id + ".raw", enc.raw);
    std::lock_guard lock(store_mu);
    if (!volumes.count(id)) volumes[id] = std::make_shared<StoredVolume>(StoredVolume{id, name, std::move(v)});
    return id;
  }

  std::shared_ptr<const StoredVolume> volume(const std::string& id) {
    std::lock_guard lock(store_mu);
    const auto it = volumes.find(id);
    if (it == volumes.end()) throw Error(ErrorCode::NotFound, "unknown volume '" + id + "'", "volume_id");
    return it->second;
  }

  std::string add_image(const std::string& pgm) {
    auto img = std::make_shared<StoredImage>(StoredImage{decode_pgm(pgm), pgm});
    const std::string id = content_hash(pgm);
    persist("images", id + ".pgm", pgm);
    std::lock_guard lock(store_mu);
    images.emplace(id, std::move(img));
    return id;
  }

  /// `image_id` of a stored image, or an inline `pgm_base64` that is stored first.
  std::pair<std::string, std::shared_ptr<const StoredImage>> image_ref(const Json& j) {
    std::string id;
    if (j.contains("pgm_base64")) {
      id = add_image(base64_decode(require_string(j, "pgm_base64")));
    } else {
      id = require_string(j, "image_id");
    }
    std::lock_guard lock(store_mu);
    const auto it = images.find(id);
    if (it == images.end()) throw Error(ErrorCode::NotFound, "unknown image '" + id + "'", "image_id");
    return {id, it->second};
  }

  std::string submit(std::function<Json()> work) {
    std::lock_guard lock(jobs_mu);
    const std::string id = "job-" + std::to_string(++next_job);
    jobs[id] = Job{};
    queue.emplace_back([this, id, work = std::move(work)] {
      {
        std::lock_guard l(jobs_mu);
        jobs[id].status = "running";
      }
      Job done;
      try {
        done.result = work();
        done.status = "done";
      } catch (const Error& e) {
        done.status = "failed";
        done.error = error_json(e);
      } catch (const std::exception& e) {
        done.status = "failed";
        done.error = Json{{"code", "internal"}, {"message", e.what()}};
      }
      std::lock_guard l(jobs_mu);
      jobs[id] = std::move(done);
    });
    jobs_cv.notify_one();
    return id;
  }

  // ---------------------------------------------------------------- handlers

  Json list_volumes() {
    Json arr = Json::array();
    std::lock_guard lock(store_mu);
    for (const auto& [id, v] : volumes) arr.push_back(descriptor(*v));
    return Json{{"volumes", arr}};
  }

  Json upload_volume(const httplib::Request& req, const Json& body) {
    std::string header, raw, name;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("vjson") || !req.has_file("raw"))
        throw Error(ErrorCode::InvalidInput, "multipart upload needs 'vjson' and 'raw' parts", "vjson");
      header = req.get_file_value("vjson").content;
      raw = req.get_file_value("raw").content;
      name = req.get_file_value("vjson").filename;
    } else {
      header = require_string(body, "vjson");
      raw = base64_decode(require_string(body, "raw_base64"));
      name = body.value("name", "");
    }
    const std::string id = add_volume(decode_any_volume(header, raw), name);
    auto s = session(req, body);
    {
      std::lock_guard lock(s->mu);
      if (std::find(s->volumes.begin(), s->volumes.end(), id) == s->volumes.end()) s->volumes.push_back(id);
    }
    return descriptor(*volume(id));
  }

  Json render(const httplib::Request& req, const Json& body) {
    const auto vol = volume(require_string(body, "volume_id"));
    RenderSettings s;
    CameraMatrix cam;
    if (body.contains("pose")) {
      const Pose p = pose_from_json(body["pose"]);
      cam = camera_from_pose(p);
      s.width = p.detector_width_px;
      s.height = p.detector_height_px;
      s.pixel_pitch_mm = p.pixel_pitch_mm;
    } else if (body.contains("P")) {
      cam = camera_from_json(Json{{"P", body["P"]}});
    } else {
      throw Error(ErrorCode::InvalidInput, "render needs 'pose' or 'P'", "pose");
    }
    s.width = optional_int(body, "width", s.width);
    s.height = optional_int(body, "height", s.height);
    s.pixel_pitch_mm = optional_number(body, "pixel_pitch_mm", s.pixel_pitch_mm);
    if (body.contains("step_mm")) s.step_mm = optional_number(body, "step_mm", 0.0);
    s.label = optional_label(body);
    if (s.width > 4096 || s.height > 4096)
      throw Error(ErrorCode::InvalidInput, "detector larger than 4096 px", s.width > 4096 ? "width" : "height");

    const RenderedImage img = render_image(vol->volume, cam, s);
    const std::string id = add_image(img.pgm);
    auto sess = session(req, body);
    {
      std::lock_guard lock(sess->mu);
      sess->images.push_back(id);
    }
    return Json{{"image_id", id},
                {"pgm_base64", base64_encode(img.pgm)},
                {"raw_min", img.raw_min},
                {"raw_max", img.raw_max},
                {"width", img.width},
                {"height", img.height},
                {"camera", camera_to_json(cam)}};
  }

  Json detect(const httplib::Request& req, const Json& body) {
    const auto [id, img] = image_ref(body);
    DetectOptions o;
    if (body.contains("radii_px")) {
      const Point2 r = point2(body["radii_px"], "radii_px");
      o.r_min_px = r.x();
      o.r_max_px = r.y();
    }
    if (body.contains("dark_beads")) {
      if (!body["dark_beads"].is_boolean())
        throw Error(ErrorCode::InvalidInput, "'dark_beads' must be a boolean", "dark_beads");
      o.dark_beads = body["dark_beads"].get<bool>();
    }
    const auto dets = detect_fiducials(to_double(img->pixels), o);
    auto s = session(req, body);
    std::lock_guard lock(s->mu);
    Review& r = s->reviews[id];
    r = Review{};
    for (const auto& d : dets) r.points.push_back({"p" + std::to_string(r.next_id++), d});
    return review_json(id, r);
  }

  Json edit(const httplib::Request& req, const Json& body) {
    const std::string id = require_string(body, "image_id");
    const Json& ops = require(body, "ops");
    if (!ops.is_array()) throw Error(ErrorCode::InvalidInput, "'ops' must be an array", "ops");
    auto s = session(req, body);
    std::lock_guard lock(s->mu);
    const auto it = s->reviews.find(id);
    if (it == s->reviews.end())
      throw Error(ErrorCode::NotFound, "no fiducial review for image '" + id + "' in this session", "image_id");
    // validate the whole batch on a copy so a bad op leaves the state unchanged
    Review r = it->second;
    for (const auto& op : ops) {
      const std::string op_id = require_string(op, "op_id");
      if (std::find(r.applied_ops.begin(), r.applied_ops.end(), op_id) != r.applied_ops.end()) continue;
      const std::string kind = require_string(op, "op");
      auto find_point = [&]() {
        const std::string pid = require_string(op, "id");
        const auto p = std::find_if(r.points.begin(), r.points.end(), [&](const ReviewPoint& x) { return x.id == pid; });
        if (p == r.points.end()) throw Error(ErrorCode::NotFound, "unknown point '" + pid + "'", "id");
        return p;
      };
      if (kind == "add") {
        Detection d;
        d.center = point2(require(op, "center"), "center");
        d.bead_class = bead_class(require(op, "class"));
        d.radius_px = optional_number(op, "radius_px", 0.0);
        d.score = 1.0;
        r.points.push_back({"p" + std::to_string(r.next_id++), d});
      } else if (kind == "move") {
        find_point()->det.center = point2(require(op, "center"), "center");
      } else if (kind == "delete") {
        r.points.erase(find_point());
      } else if (kind == "reclass") {
        find_point()->det.bead_class = bead_class(require(op, "class"));
      } else {
        throw Error(ErrorCode::InvalidInput, "unknown op '" + kind + "'", "op");
      }
      r.applied_ops.push_back(op_id);
      r.last_solve = Json();
    }
    it->second = std::move(r);
    return review_json(id, it->second);
  }

  Json solve(const httplib::Request& req, const Json& body) {
    const std::string id = require_string(body, "image_id");
    const FiducialSet fid = fiducials_from_json(require(body, "fiducials3d"));
    const double pitch = optional_number(body, "pixel_pitch_mm", 0.152);
    auto s = session(req, body);
    std::lock_guard lock(s->mu);
    const auto it = s->reviews.find(id);
    if (it == s->reviews.end())
      throw Error(ErrorCode::NotFound, "no fiducial review for image '" + id + "' in this session", "image_id");
    Review& r = it->second;
    std::vector<Detection> dets;
    Json ids = Json::array();
    int refs = 0;
    for (const auto& p : r.points) {
      dets.push_back(p.det);
      ids.push_back(p.id);
      refs += p.det.bead_class == BeadClass::REFERENCE;
    }
    if (refs < 6)
      throw PayloadError(ErrorCode::InsufficientPoints,
                         "solve needs at least 6 reference points, " + std::to_string(refs) + " remain", "points",
                         Json{{"count", refs}});
    Json out = calibration_to_json(calibrate_detections(dets, fid, pitch));
    out["point_ids"] = ids;
    r.last_solve = out;
    return out;
  }

  Json reconstruct(const httplib::Request& req, const Json& body) {
    CarveOptions co;
    if (body.contains("mode")) co.mode = carve_mode_from_string(require_string(body, "mode"));
    co.tau = optional_number(body, "tau", co.tau);
    const double tau_mm = optional_number(body, "tau_mm", 1.0);
    const auto label = optional_label(body);

    if (body.contains("manifest")) {
      const std::filesystem::path rel = require_string(body, "manifest");
      const auto path = rel.is_absolute() || opts.data_dir.empty() ? rel : opts.data_dir / rel;
      if (!label) throw Error(ErrorCode::InvalidInput, "manifest reconstruction needs 'label'", "label");
      const Json& poses = require(body, "poses");
      if (!poses.is_array()) throw Error(ErrorCode::InvalidInput, "'poses' must be an array", "poses");
      std::vector<int> idx;
      for (const auto& p : poses) {
        if (!p.is_number_integer()) throw Error(ErrorCode::InvalidInput, "'poses' must hold integers", "poses");
        idx.push_back(p.get<int>());
      }
      return submit_job([this, path, idx, co, tau_mm, l = *label] {
        const Dataset ds = load_dataset(path);
        std::vector<Image16> views;
        std::vector<CameraMatrix> cams;
        for (int i : idx) {
          const DatasetItem& it = ds.item(l, i);
          views.push_back(decode_pgm(encode_pgm(to_mask8(it.mask))));
          cams.push_back(it.cam);
        }
        const Reconstruction rec = reconstruct_images(views, cams, co);
        Json out = store_grid(rec);
        out["metrics"] = metrics_to_json(evaluate_reconstruction(ds, l, rec.grid, tau_mm));
        return out;
      });
    }

    const Json& views = require(body, "views");
    if (!views.is_array()) throw Error(ErrorCode::InvalidInput, "'views' must be an array", "views");
    std::vector<Image16> imgs;
    std::vector<CameraMatrix> cams;
    for (const auto& v : views) {
      imgs.push_back(image_ref(v).second->pixels);
      cams.push_back(camera_from_json(require(v, "camera")));
    }
    std::shared_ptr<const StoredVolume> gt;
    if (label) {
      if (body.contains("labels_volume_id")) {
        gt = volume(require_string(body, "labels_volume_id"));
      } else {
        auto s = session(req, body);
        std::lock_guard lock(s->mu);
        for (auto it = s->volumes.rbegin(); it != s->volumes.rend() && !gt; ++it) {
          auto v = volume(*it);
          if (std::holds_alternative<VolumeLabels>(v->volume)) gt = v;
        }
      }
      if (gt && !std::holds_alternative<VolumeLabels>(gt->volume))
        throw Error(ErrorCode::InvalidInput, "ground truth must be a uint8 label volume", "labels_volume_id");
    }
    return submit_job([this, imgs = std::move(imgs), cams = std::move(cams), co, tau_mm, label, gt] {
      const Reconstruction rec = reconstruct_images(imgs, cams, co);
      Json out = store_grid(rec);
      if (gt && label)
        out["metrics"] =
            metrics_to_json(evaluate_prediction(rec.grid.volume, std::get<VolumeLabels>(gt->volume), label, tau_mm));
      return out;
    });
  }

  Json submit_job(std::function<Json()> work) {
    const std::string id = submit(std::move(work));
    return Json{{"job_id", id}, {"status", "queued"}};
  }

  Json store_grid(const Reconstruction& rec) {
    EncodedVolume enc = encode_volume(rec.grid.volume);
    const std::string id = enc.id();
    persist("grids", id + ".vjson", enc.header);
    persist("grids", id + ".raw", enc.raw);
    {
      std::lock_guard lock(store_mu);
      grids.emplace(id, std::move(enc));
    }
    return Json{{"grid_id", id},
                {"origin", std::string(to_string(rec.grid.provenance))},
                {"center_mm", Json::array({rec.center.x(), rec.center.y(), rec.center.z()})},
                {"occupied", rec.grid.occupied()},
                {"carve_ms", rec.carve_ms}};
  }

  Json job(const std::string& id) {
    std::lock_guard lock(jobs_mu);
    const auto it = jobs.find(id);
    if (it == jobs.end()) throw Error(ErrorCode::NotFound, "unknown job '" + id + "'", "job_id");
    Json j{{"job_id", id}, {"status", it->second.status}};
    if (!it->second.result.is_null()) j["result"] = it->second.result;
    if (!it->second.error.is_null()) j["error"] = it->second.error;
    return j;
  }

  Json grid(const std::string& id) {
    std::lock_guard lock(store_mu);
    const auto it = grids.find(id);
    if (it == grids.end()) throw Error(ErrorCode::NotFound, "unknown grid '" + id + "'", "grid_id");
    return Json{{"grid_id", id}, {"vjson", it->second.header}, {"raw_base64", base64_encode(it->second.raw)}};
  }
};

Service::Service(ServiceOptions opts) : impl_(std::make_unique<Impl>(std::move(opts))) {
  if (impl_->opts.demo) {
    const Phantom ph = lumbar_phantom(5, true);
    auto [hu, labels] = rasterize_phantom(ph, lattice_around(ph, 0.5, 10.0));
    add_volume(std::move(hu), "demo-ct");
    add_volume(std::move(labels), "demo-labels");
  }
}

Service::~Service() = default;

std::string Service::add_volume(const AnyVolume& v, const std::string& name) { return impl_->add_volume(v, name); }

void Service::mount(httplib::Server& server) {
  Impl* impl = impl_.get();
  using Handler = std::function<Json(const httplib::Request&, const Json&)>;
  auto wrap = [](Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        Json body = Json::object();
        if (!req.body.empty() && !req.is_multipart_form_data()) body = parse_json(req.body, "body");
        res.set_content(h(req, body).dump(), "application/json");
      } catch (const PayloadError& e) {
        Json j = error_json(e);
        j.update(e.extra);
        res.status = http_status(e.code());
        res.set_content(j.dump(), "application/json");
      } catch (const Error& e) {
        res.status = http_status(e.code());
        res.set_content(error_json(e).dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(Json{{"code", "internal"}, {"message", e.what()}}.dump(), "application/json");
      }
    };
  };

  server.Get("/api/volumes", wrap([impl](const auto&, const auto&) { return impl->list_volumes(); }));
  server.Post("/api/volumes", wrap([impl](const auto& r, const auto& b) { return impl->upload_volume(r, b); }));
  server.Post("/api/render", wrap([impl](const auto& r, const auto& b) { return impl->render(r, b); }));
  server.Post("/api/fiducials/detect", wrap([impl](const auto& r, const auto& b) { return impl->detect(r, b); }));
  server.Post("/api/fiducials/edit", wrap([impl](const auto& r, const auto& b) { return impl->edit(r, b); }));
  server.Post("/api/calibrate/solve", wrap([impl](const auto& r, const auto& b) { return impl->solve(r, b); }));
  server.Post("/api/reconstruct", wrap([impl](const auto& r, const auto& b) { return impl->reconstruct(r, b); }));
  server.Get(R"(/api/jobs/([A-Za-z0-9_-]+))",
             wrap([impl](const auto& r, const auto&) { return impl->job(r.matches[1].str()); }));
  server.Get(R"(/api/grids/([0-9a-f]+))", wrap([impl](const auto& r, const auto&) { return impl->grid(r.matches[1].str()); }));
}

void serve(const ServiceOptions& opts, const std::string& host, int port) {
  Service svc(opts);
  httplib::Server server;
  svc.mount(server);
  if (!server.listen(host, port))
    throw Error(ErrorCode::Io, "cannot listen on " + host + ":" + std::to_string(port), "port");
}

}  // namespace frk
