#include <doctest.h>

#include "support.hpp"

#include <frk/harness.hpp>
#include <frk/image.hpp>
#include <frk/json_io.hpp>
#include <frk/service.hpp>

#include <httplib.h>

#include <chrono>
#include <thread>

using namespace frk;

namespace {

/// Service mounted on an ephemeral local port for the lifetime of the fixture.
struct LocalService {
  Service svc;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit LocalService(ServiceOptions opts = {}) : svc(std::move(opts)) {
    svc.mount(server);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalService() {
    server.stop();
    thread.join();
  }

  std::pair<int, Json> post(const std::string& path, const Json& body) {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(120, 0);
    const auto res = c.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    return {res->status, Json::parse(res->body)};
  }
  std::pair<int, Json> get(const std::string& path) {
    httplib::Client c("127.0.0.1", port);
    const auto res = c.Get(path);
    REQUIRE(res);
    return {res->status, Json::parse(res->body)};
  }

  Json wait_job(const std::string& id) {
    for (int i = 0; i < 1200; ++i) {
      const auto [status, j] = get("/api/jobs/" + id);
      REQUIRE(status == 200);
      if (j["status"] == "done" || j["status"] == "failed") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    FAIL("job did not finish");
    return {};
  }
};

const Phantom& small_sphere() {
  static const Phantom ph = sphere_phantom(Point3(2, -3, 1), 12.0);
  return ph;
}

VolumeLabels sphere_labels() {
  return rasterize_phantom(small_sphere(), lattice_around(small_sphere(), 1.0, 6.0)).second;
}

Image16 to_pgm_image(const ImageD& img) {
  double hi = 0;
  for (double v : img.data) hi = std::max(hi, v);
  Image16 out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = static_cast<std::uint16_t>(std::lround(60000.0 * img.data[i] / hi));
  return out;
}

Json op(const std::string& id, const std::string& kind, const std::string& point) {
  return Json{{"op_id", id}, {"op", kind}, {"id", point}};
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("volumes are listed and unknown ids are 404") {
  LocalService s;
  const std::string id = s.svc.add_volume(sphere_labels(), "sphere");
  const auto [status, j] = s.get("/api/volumes");
  CHECK(status == 200);
  REQUIRE(j["volumes"].size() == 1);
  CHECK(j["volumes"][0]["volume_id"] == id);
  CHECK(j["volumes"][0]["dtype"] == "uint8");
  CHECK(j["volumes"][0]["labels"] == Json::array({1}));

  const auto [st2, err] = s.post("/api/render", Json{{"volume_id", "0123"}, {"pose", pose_to_json(Pose{})}});
  CHECK(st2 == 404);
  CHECK(err["code"] == "not-found");
  CHECK(err["field"] == "volume_id");
}

TEST_CASE("volume upload by JSON body round-trips") {
  LocalService s;
  const EncodedVolume enc = encode_volume(sphere_labels());
  const auto [status, j] = s.post("/api/volumes", Json{{"vjson", enc.header}, {"raw_base64", base64_encode(enc.raw)}, {"name", "up"}});
  CHECK(status == 200);
  CHECK(j["volume_id"] == enc.id());
  CHECK(j["name"] == "up");
}

TEST_CASE("render matches the library path byte for byte") {
  LocalService s;
  const VolumeLabels labels = sphere_labels();
  const std::string id = s.svc.add_volume(labels, "sphere");
  Pose p;
  p.orbit_deg = 30;
  p.center_mm = Point3(2, -3, 1);
  p.detector_width_px = 256;
  p.detector_height_px = 200;

  const auto [status, j] = s.post("/api/render", Json{{"volume_id", id}, {"pose", pose_to_json(p)}});
  REQUIRE(status == 200);
  CHECK(j["width"] == 256);
  CHECK(j["height"] == 200);
  CHECK(j["raw_max"].get<double>() > 0.0);
  RenderSettings rs;
  rs.width = 256;
  rs.height = 200;
  const RenderedImage direct = render_image(AnyVolume(labels), camera_from_pose(p), rs);
  CHECK(base64_decode(j["pgm_base64"].get<std::string>()) == direct.pgm);
  CHECK(j["image_id"] == content_hash(direct.pgm));

  // the same camera given as P renders the same bytes
  const auto [st2, j2] = s.post("/api/render", Json{{"volume_id", id}, {"P", j["camera"]["P"]}, {"width", 256}, {"height", 200}});
  REQUIRE(st2 == 200);
  CHECK(j2["image_id"] == j["image_id"]);

  const auto [st3, err] = s.post("/api/render", Json{{"volume_id", id}, {"pose", pose_to_json(p)}, {"step_mm", 0}});
  CHECK(st3 == 400);
  CHECK(err["field"] == "step_mm");

  Json bad = pose_to_json(p);
  bad["focal_len_mm"] = -5;
  const auto [st4, err4] = s.post("/api/render", Json{{"volume_id", id}, {"pose", bad}});
  CHECK(st4 == 400);
  CHECK(err4["field"] == "focal_len_mm");
}

TEST_CASE("demo phantom renders the default AP view") {
  ServiceOptions o;
  o.demo = true;
  LocalService s(o);
  const auto [status, vols] = s.get("/api/volumes");
  REQUIRE(vols["volumes"].size() == 2);
  std::string ct;
  for (const auto& v : vols["volumes"])
    if (v["dtype"] == "int16") ct = v["volume_id"];
  Pose p;
  p.center_mm = lumbar_level_center(3);
  const auto [st, j] = s.post("/api/render", Json{{"volume_id", ct}, {"pose", pose_to_json(p)}});
  REQUIRE(st == 200);
  CHECK(j["width"] == 448);
  CHECK(j["height"] == 448);
  CHECK(j["raw_max"].get<double>() > 0.0);
}

TEST_CASE("fiducial review: detect, edit, solve") {
  LocalService s;
  std::mt19937_64 rng(71);
  const CalibrationScene scene = random_calibration_scene(rng);
  const std::string pgm = encode_pgm(to_pgm_image(scene.image));
  const Json fid = fiducials_to_json(scene.fiducials);

  const auto [st, review] = s.post("/api/fiducials/detect", Json{{"pgm_base64", base64_encode(pgm)}, {"session", "a"}});
  REQUIRE(st == 200);
  const std::string image_id = review["image_id"];
  REQUIRE(review["points"].size() == 14);

  const auto [st_solve, solved] =
      s.post("/api/calibrate/solve", Json{{"image_id", image_id}, {"fiducials3d", fid}, {"session", "a"}, {"pixel_pitch_mm", 0.66}});
  REQUIRE(st_solve == 200);
  CHECK(solved["mean_px"].get<double>() < 0.1);
  CHECK(solved["point_ids"].size() == 14);

  // another session sees no review of this image
  const auto [st_b, err_b] = s.post("/api/fiducials/edit", Json{{"image_id", image_id}, {"session", "b"}, {"ops", Json::array()}});
  CHECK(st_b == 404);

  // delete 2 reference and 7 standard points: 5 remain
  Json ops = Json::array();
  int refs = 0, stds = 0;
  for (const auto& p : review["points"]) {
    const bool ref = p["class"] == "REF";
    if (ref && refs < 2) ops.push_back(op("d" + std::to_string(ops.size()), "delete", p["id"])), ++refs;
    if (!ref && stds < 7) ops.push_back(op("d" + std::to_string(ops.size()), "delete", p["id"])), ++stds;
  }
  REQUIRE(ops.size() == 9);
  const auto [st_e, edited] = s.post("/api/fiducials/edit", Json{{"image_id", image_id}, {"session", "a"}, {"ops", ops}});
  REQUIRE(st_e == 200);
  CHECK(edited["points"].size() == 5);
  CHECK(!edited.contains("solve"));

  // replaying the same op ids is a no-op
  const auto [st_r, replay] = s.post("/api/fiducials/edit", Json{{"image_id", image_id}, {"session", "a"}, {"ops", ops}});
  CHECK(st_r == 200);
  CHECK(replay["points"].size() == 5);
  CHECK(replay["applied_ops"].size() == 9);

  const auto [st_f, refused] = s.post("/api/calibrate/solve", Json{{"image_id", image_id}, {"fiducials3d", fid}, {"session", "a"}});
  CHECK(st_f == 422);
  CHECK(refused["code"] == "insufficient-points");
  CHECK(refused["count"] == 5);

  // a batch with a bad op leaves the state unchanged
  Json bad = Json::array({Json{{"op_id", "x1"}, {"op", "add"}, {"center", {10, 10}}, {"class", "REF"}}, op("x2", "delete", "nope")});
  const auto [st_bad, err_bad] = s.post("/api/fiducials/edit", Json{{"image_id", image_id}, {"session", "a"}, {"ops", bad}});
  CHECK(st_bad == 404);
  const auto [st_ok, after] = s.post("/api/fiducials/edit", Json{{"image_id", image_id}, {"session", "a"}, {"ops", Json::array()}});
  CHECK(after["points"].size() == 5);
}

TEST_CASE("reconstruction jobs") {
  LocalService s;
  const VolumeLabels labels = sphere_labels();
  const std::string vol = s.svc.add_volume(labels, "sphere");
  Json views = Json::array();
  for (const auto& [orbit, tilt] : std::vector<std::pair<double, double>>{{0, 0}, {90, 0}, {20, 0}, {30, 10}}) {
    Pose p;
    p.orbit_deg = orbit;
    p.tilt_deg = tilt;
    p.center_mm = Point3(2, -3, 1);
    const auto [st, r] = s.post("/api/render", Json{{"volume_id", vol}, {"pose", pose_to_json(p)}, {"label", 1}});
    REQUIRE(st == 200);
    views.push_back(Json{{"image_id", r["image_id"]}, {"camera", r["camera"]}});
  }
  const Json req{{"views", views}, {"label", 1}, {"labels_volume_id", vol}};
  const auto [st, job] = s.post("/api/reconstruct", req);
  REQUIRE(st == 200);
  const Json done = s.wait_job(job["job_id"]);
  REQUIRE(done["status"] == "done");
  const Json& result = done["result"];
  CHECK(result["metrics"]["surface_score"].get<double>() > 0.0);
  CHECK(result["metrics"]["f1"].get<double>() > 0.5);
  CHECK(result["occupied"].get<int>() > 0);

  const Json again = s.wait_job(s.post("/api/reconstruct", req).second["job_id"]);
  CHECK(again["result"]["grid_id"] == result["grid_id"]);

  const auto [st_g, grid] = s.get("/api/grids/" + result["grid_id"].get<std::string>());
  REQUIRE(st_g == 200);
  const VolumeLabels g = decode_volume_labels(grid["vjson"], base64_decode(grid["raw_base64"]));
  CHECK(encode_volume(g).id() == result["grid_id"]);

  const Json one{{"views", Json::array({views[0]})}};
  const Json failed = s.wait_job(s.post("/api/reconstruct", one).second["job_id"]);
  CHECK(failed["status"] == "failed");
  CHECK(failed["error"]["code"] == "insufficient-views");

  CHECK(s.get("/api/jobs/job-999").first == 404);
  CHECK(s.get("/api/grids/00ff").first == 404);
}

}  // TEST_SUITE
