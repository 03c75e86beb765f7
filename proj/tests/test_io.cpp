#include <doctest.h>

#include "support.hpp"

#include <frk/image.hpp>
#include <frk/json_io.hpp>
#include <frk/pose.hpp>
#include <frk/volume.hpp>

#include <filesystem>

using namespace frk;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidInput;
}

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.field();
  }
  FAIL("no error thrown");
  return {};
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("frk_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("16-bit PGM is big-endian P5 with maxval 65535") {
  Image16 img(2, 1);
  img(0, 0) = 0x0102;
  img(1, 0) = 0xFFFE;
  const std::string bytes = encode_pgm(img);
  CHECK(bytes == std::string("P5\n2 1\n65535\n\x01\x02\xFF\xFE", 17));
  CHECK(decode_pgm(bytes) == img);
}

TEST_CASE("mask PGM is 8-bit with values 0 and 255") {
  Image8 m(3, 1, 0);
  m(1, 0) = 1;
  const std::string bytes = encode_pgm(to_mask8(m));
  CHECK(bytes == std::string("P5\n3 1\n255\n\x00\xFF\x00", 14));
  const Image16 back = decode_pgm(bytes);
  CHECK(back(1, 0) == 255);
}

TEST_CASE("malformed PGM is a format error") {
  CHECK(code_of([] { decode_pgm("P2\n1 1\n255\n0"); }) == ErrorCode::Format);
  CHECK(code_of([] { decode_pgm("P5\n4 4\n65535\n\x01"); }) == ErrorCode::Format);
}

TEST_CASE("content hash is 64-bit FNV-1a") {
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a") == "af63dc4c8601ec8c");
  CHECK(content_hash("foobar") == "85944171f73967e8");
}

TEST_CASE("base64 round-trips and matches RFC 4648 vectors") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foo") == "Zm9v");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
  std::string all;
  for (int c = 0; c < 256; ++c) all.push_back(static_cast<char>(c));
  CHECK(base64_decode(base64_encode(all)) == all);
  CHECK(code_of([] { base64_decode("Zm9v!"); }) == ErrorCode::Format);
}

TEST_CASE("volume files round-trip both dtypes") {
  const auto dir = scratch_dir("volume");
  Lattice l = test::cube(3, 0.5, Point3(1, 2, 3));
  l.dims = Eigen::Vector3i(3, 2, 4);
  VolumeHU hu(l, 0);
  for (std::size_t i = 0; i < hu.size(); ++i) hu.data[i] = static_cast<std::int16_t>(int(i) * 97 - 1000);
  save_volume(hu, dir / "ct.vjson");
  CHECK(std::filesystem::file_size(dir / "ct.raw") == hu.size() * 2);
  CHECK(load_volume_hu(dir / "ct.vjson") == hu);
  CHECK(peek_volume_dtype(dir / "ct.vjson") == DType::Int16);

  VolumeLabels lab(l, 0);
  lab.at(2, 1, 3) = 5;
  save_volume(lab, dir / "lab.vjson");
  CHECK(load_volume_labels(dir / "lab.vjson") == lab);
  CHECK(code_of([&] { load_volume_hu(dir / "lab.vjson"); }) == ErrorCode::Format);
}

TEST_CASE("raw length mismatch names the field") {
  Lattice l = test::cube(2, 1.0);
  const std::string header = volume_header_json(l, DType::UInt8);
  CHECK(field_of([&] { decode_volume_labels(header, std::string(7, '\0')); }) == "raw length");
}

TEST_CASE("int16 raw is little-endian") {
  VolumeHU v(test::cube(1, 1.0), 0);
  v.data[0] = -2;  // 0xFFFE
  CHECK(encode_volume_raw(v) == std::string("\xFE\xFF", 2));
}

TEST_CASE("camera JSON round-trip and flat P") {
  std::mt19937_64 rng(3);
  const CameraMatrix cam = test::random_camera(rng);
  const Json j = camera_to_json(cam);
  CHECK(j["P"].size() == 3);
  CHECK(j["K"].size() == 3);
  CHECK(j["X_o"].size() == 3);
  const CameraMatrix back = camera_from_json(j);
  const double s = test::best_scale(cam.matrix(), back.matrix());
  CHECK((cam.matrix() - s * back.matrix()).norm() < 1e-9 * cam.matrix().norm());

  Json flat = Json::object();
  flat["P"] = Json::array();
  for (int i = 0; i < 12; ++i) flat["P"].push_back(back.matrix()(i / 4, i % 4));
  CHECK(camera_from_json(flat).matrix() == back.matrix());
  CHECK(field_of([] { camera_from_json(Json{{"P", Json::array({1, 2, 3})}}); }) == "P");
}

TEST_CASE("pose JSON names the offending field") {
  Pose p;
  p.orbit_deg = 12.5;
  p.view_class = ViewClass::OBLIQUE;
  const Pose back = pose_from_json(pose_to_json(p));
  CHECK(back.orbit_deg == 12.5);
  CHECK(back.view_class == ViewClass::OBLIQUE);
  CHECK(field_of([] { pose_from_json(Json{{"focal_len_mm", -1}}); }) == "focal_len_mm");
  CHECK(field_of([] { pose_from_json(Json{{"width", 1.5}}); }) == "width");
  CHECK(field_of([] { pose_from_json(Json{{"pixel_pitch_mm", "a"}}); }) == "pixel_pitch_mm");
}

TEST_CASE("fiducial file round-trip and validation") {
  FiducialSet f;
  for (int i = 0; i < 14; ++i) {
    f.points3d.emplace_back(i, 2 * i, -i);
    f.classes.push_back(i < 7 ? BeadClass::REFERENCE : BeadClass::STANDARD);
  }
  const Json j = fiducials_to_json(f);
  CHECK(j["class"][0] == "REF");
  CHECK(j["class"][13] == "STD");
  const FiducialSet back = fiducials_from_json(j);
  CHECK(back.points3d == f.points3d);
  CHECK(back.classes == f.classes);
  Json bad = j;
  bad["class"][0] = "XYZ";
  CHECK(field_of([&] { fiducials_from_json(bad); }) == "class");
}

TEST_CASE("pose protocol has 6 AP, 6 lateral, 4 oblique and 12 misc poses") {
  const auto poses = sample_pose_protocol(Point3(1, 2, 3));
  REQUIRE(poses.size() == 28);
  int counts[4] = {0, 0, 0, 0};
  for (const auto& p : poses) {
    ++counts[static_cast<int>(p.view_class)];
    CHECK(p.source_to_center_mm == 500.0);
    CHECK((p.center_mm - Point3(1, 2, 3)).norm() == 0.0);
  }
  CHECK(counts[0] == 6);
  CHECK(counts[1] == 6);
  CHECK(counts[2] == 4);
  CHECK(counts[3] == 12);
  CHECK(code_of([] { sample_pose_protocol(Point3::Zero(), 0.0); }) == ErrorCode::InvalidInput);
}

TEST_CASE("AP source sits anterior, lateral source to the side") {
  Pose ap;
  CHECK((ap.source_direction() - Point3::UnitY()).norm() < 1e-12);
  Pose lat;
  lat.orbit_deg = 90;
  CHECK(std::abs(lat.source_direction().y()) < 1e-12);
  CHECK(std::abs(lat.source_direction().z()) < 1e-12);
  // the optical axis points from the source through the isocenter
  const Decomposition d = decompose_camera(camera_from_pose(lat));
  CHECK((d.r.row(2).transpose() + lat.source_direction()).norm() < 1e-12);
}

}  // TEST_SUITE
