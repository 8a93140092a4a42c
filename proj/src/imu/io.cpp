#include "gnio/imu/io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gnio/error.hpp"

namespace gnio::imu {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kImuHeader = "t,wx,wy,wz,ax,ay,az";
constexpr const char* kPoseHeader = "t,px,py,pz,qw,qx,qy,qz";

template <std::size_t Cols>
std::vector<std::array<double, Cols>> read_table(const fs::path& path, const char* header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header)
    throw ConfigError(path.string() + ": expected header '" + header + "', got '" + line + "'");

  std::vector<std::array<double, Cols>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, Cols> row{};
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t c = 0; c < Cols; ++c) {
      auto [next, ec] = std::from_chars(p, end, row[c]);
      if (ec != std::errc{} || !std::isfinite(row[c]))
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": bad value in column " +
                          std::to_string(c + 1));
      p = next;
      if (c + 1 < Cols) {
        if (p == end || *p != ',')
          throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(Cols) + " columns");
        ++p;
      }
    }
    if (p != end)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": trailing characters");
    rows.push_back(row);
  }
  return rows;
}

void write_row(std::ostream& out, std::initializer_list<double> values) {
  bool first = true;
  for (double v : values) {
    if (!first) out << ',';
    out << format_double(v);
    first = false;
  }
  out << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

json vec_json(const Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Vector3d json_vec(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(what + " must be a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw IoError("format_double: conversion failed");
  return std::string(buf.data(), p);
}

std::vector<ImuSample> read_imu_csv(const fs::path& path) {
  std::vector<ImuSample> out;
  for (const auto& r : read_table<7>(path, kImuHeader))
    out.push_back({r[0], {r[1], r[2], r[3]}, {r[4], r[5], r[6]}});
  return out;
}

void write_imu_csv(const fs::path& path, std::span<const ImuSample> samples) {
  auto out = open_out(path);
  out << kImuHeader << '\n';
  for (const auto& s : samples)
    write_row(out, {s.t, s.gyro.x(), s.gyro.y(), s.gyro.z(), s.accel.x(), s.accel.y(), s.accel.z()});
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<PoseSample> read_pose_csv(const fs::path& path) {
  std::vector<PoseSample> out;
  for (const auto& r : read_table<8>(path, kPoseHeader))
    out.push_back({r[0], {r[1], r[2], r[3]}, Quaterniond(r[4], r[5], r[6], r[7])});
  return out;
}

void write_pose_csv(const fs::path& path, std::span<const PoseSample> poses) {
  auto out = open_out(path);
  out << kPoseHeader << '\n';
  for (const auto& p : poses)
    write_row(out, {p.t, p.p.x(), p.p.y(), p.p.z(), p.q.w(), p.q.x(), p.q.y(), p.q.z()});
  if (!out) throw IoError("write failed: " + path.string());
}

void save_sequence(const fs::path& dir, const Sequence& seq) {
  fs::create_directories(dir);
  write_imu_csv(dir / "imu.csv", seq.imu);
  if (!seq.gt.empty()) write_pose_csv(dir / "gt.csv", seq.gt);
  json meta = {{"rate", seq.rate}};
  if (seq.bias_gt)
    meta["bias_gt"] = {{"gyro", vec_json(seq.bias_gt->gyro)},
                       {"accel", vec_json(seq.bias_gt->accel)}};
  auto out = open_out(dir / "meta.json");
  out << meta.dump(2) << '\n';
}

Sequence load_sequence(const fs::path& dir) {
  Sequence seq;
  seq.imu = read_imu_csv(dir / "imu.csv");
  if (fs::exists(dir / "gt.csv")) seq.gt = read_pose_csv(dir / "gt.csv");
  if (fs::exists(dir / "meta.json")) {
    std::ifstream in(dir / "meta.json");
    json meta;
    try {
      meta = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError((dir / "meta.json").string() + ": " + e.what());
    }
    seq.rate = meta.at("rate").get<double>();
    if (meta.contains("bias_gt")) {
      const auto& b = meta["bias_gt"];
      seq.bias_gt = Bias{json_vec(b.at("gyro"), "bias_gt.gyro"),
                         json_vec(b.at("accel"), "bias_gt.accel")};
    }
  } else if (seq.imu.size() >= 2) {
    seq.rate = std::round(static_cast<double>(seq.imu.size() - 1) /
                          (seq.imu.back().t - seq.imu.front().t));
  }
  seq.validate();
  return seq;
}

}  // namespace gnio::imu
