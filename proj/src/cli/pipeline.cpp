#include "gnio/cli/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "gnio/ekf/network_source.hpp"
#include "gnio/error.hpp"
#include "gnio/imu/io.hpp"
#include "gnio/imu/windows.hpp"

namespace gnio::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> valid, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(valid.begin(), valid.end(), [&](const char* v) { return key == v; })) {
      std::string list;
      for (const char* v : valid) list += (list.empty() ? "" : ", ") + std::string(v);
      throw ConfigError(std::string(where) + ": unknown key '" + key + "' (valid: " + list + ")");
    }
  }
}

template <typename T>
T get(const json& j, const char* key, T fallback, const char* where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(where) + "." + key + ": wrong type");
  }
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void DatasetConfig::validate() const {
  if (count == 0) throw ConfigError("dataset: count must be positive");
  if (!(duration_s >= 2.0)) throw ConfigError("dataset: duration_s must be at least 2");
  if (rate != 100.0 && rate != 200.0) throw ConfigError("dataset: rate must be 100 or 200");
  for (double v : {sigma_g, sigma_a, bias_g_sigma, bias_a_sigma})
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("dataset: noise terms must be >= 0");
}

DatasetConfig dataset_config_from_json(const json& j) {
  reject_unknown(j, {"count", "duration_s", "rate", "seed", "noise"}, "dataset");
  DatasetConfig c;
  c.count = get(j, "count", c.count, "dataset");
  c.duration_s = get(j, "duration_s", c.duration_s, "dataset");
  c.rate = get(j, "rate", c.rate, "dataset");
  c.seed = get(j, "seed", c.seed, "dataset");
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    reject_unknown(n, {"sigma_g", "sigma_a", "bias_g_sigma", "bias_a_sigma"}, "dataset.noise");
    c.sigma_g = get(n, "sigma_g", c.sigma_g, "dataset.noise");
    c.sigma_a = get(n, "sigma_a", c.sigma_a, "dataset.noise");
    c.bias_g_sigma = get(n, "bias_g_sigma", c.bias_g_sigma, "dataset.noise");
    c.bias_a_sigma = get(n, "bias_a_sigma", c.bias_a_sigma, "dataset.noise");
  }
  c.validate();
  return c;
}

json to_json(const DatasetConfig& c) {
  return {{"count", c.count},
          {"duration_s", c.duration_s},
          {"rate", c.rate},
          {"seed", c.seed},
          {"noise",
           {{"sigma_g", c.sigma_g},
            {"sigma_a", c.sigma_a},
            {"bias_g_sigma", c.bias_g_sigma},
            {"bias_a_sigma", c.bias_a_sigma}}}};
}

imu::SynthSpec dataset_spec(const DatasetConfig& c, std::size_t i) {
  const std::uint64_t seed = mix(c.seed, i);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  imu::NoiseSpec noise;
  noise.sigma_g = c.sigma_g;
  noise.sigma_a = c.sigma_a;
  noise.bg = c.bias_g_sigma * Eigen::Vector3d(n(rng), n(rng), n(rng));
  noise.ba = c.bias_a_sigma * Eigen::Vector3d(n(rng), n(rng), n(rng));
  return imu::random_walk_spec(c.duration_s, c.rate, seed, noise);
}

std::vector<imu::Sequence> generate_dataset(const DatasetConfig& c) {
  c.validate();
  std::vector<imu::Sequence> out;
  out.reserve(c.count);
  for (std::size_t i = 0; i < c.count; ++i) out.push_back(imu::synth_generate(dataset_spec(c, i)));
  return out;
}

void save_dataset(const fs::path& dir, std::span<const imu::Sequence> seqs) {
  if (seqs.size() == 1) {
    imu::save_sequence(dir, seqs.front());
    return;
  }
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "seq_%03zu", i);
    imu::save_sequence(dir / name, seqs[i]);
  }
}

std::vector<NamedSequence> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("no such data directory: " + dir.string());
  if (fs::exists(dir / "imu.csv")) return {{dir.filename().string(), imu::load_sequence(dir)}};
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "imu.csv")) subdirs.push_back(e.path());
  if (subdirs.empty()) throw ConfigError(dir.string() + ": no sequences (imu.csv) found");
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<NamedSequence> out;
  for (const auto& d : subdirs) out.push_back({d.filename().string(), imu::load_sequence(d)});
  return out;
}

std::vector<imu::Window> collect_windows(std::span<const NamedSequence> seqs) {
  std::vector<imu::Window> out;
  for (const auto& s : seqs) {
    auto w = imu::window_stream(s.seq);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

double window_mse(net::GnioNet& net, std::span<const imu::Window> windows) {
  if (windows.empty()) throw ConfigError("window_mse: no windows");
  double se = 0.0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t i = 0; i < windows.size(); i += kChunk) {
    const auto part = windows.subspan(i, std::min(kChunk, windows.size() - i));
    const auto pred = net::predict(net, part);
    for (std::size_t k = 0; k < part.size(); ++k)
      se += (pred[k].d_hat - part[k].d_gt).squaredNorm();
  }
  return se / static_cast<double>(windows.size());
}

Source source_from_string(const std::string& s) {
  if (s == "network") return Source::Network;
  if (s == "oracle") return Source::Oracle;
  if (s == "none") return Source::None;
  throw ConfigError("unknown source '" + s + "' (valid: network, oracle, none)");
}

std::string to_string(Source s) {
  switch (s) {
    case Source::Network: return "network";
    case Source::Oracle: return "oracle";
    case Source::None: return "none";
  }
  return "network";
}

FuseConfig fuse_config_from_json(const json& j) {
  reject_unknown(j, {"filter", "source", "oracle", "alignment"}, "fuse");
  FuseConfig c;
  if (j.contains("filter")) c.filter = ekf::filter_config_from_json(j["filter"]);
  if (j.contains("source")) c.source = source_from_string(get<std::string>(j, "source", "", "fuse"));
  if (j.contains("oracle")) {
    const auto& o = j["oracle"];
    reject_unknown(o, {"variance", "noise_sigma"}, "fuse.oracle");
    c.oracle_variance = get(o, "variance", c.oracle_variance, "fuse.oracle");
    c.oracle_noise_sigma = get(o, "noise_sigma", c.oracle_noise_sigma, "fuse.oracle");
    if (!(c.oracle_variance > 0.0)) throw ConfigError("fuse.oracle.variance must be positive");
    if (!(c.oracle_noise_sigma >= 0.0))
      throw ConfigError("fuse.oracle.noise_sigma must be non-negative");
  }
  if (j.contains("alignment"))
    c.alignment = eval::alignment_from_string(get<std::string>(j, "alignment", "", "fuse"));
  return c;
}

json to_json(const FuseConfig& c) {
  return {{"filter", ekf::to_json(c.filter)},
          {"source", to_string(c.source)},
          {"oracle", {{"variance", c.oracle_variance}, {"noise_sigma", c.oracle_noise_sigma}}},
          {"alignment", eval::to_string(c.alignment)}};
}

eval::Trajectory to_trajectory(const ekf::FilterRun& run) { return run.poses; }

FuseResult fuse_sequence(const imu::Sequence& seq, const FuseConfig& cfg, net::GnioNet* net,
                         std::uint64_t seed, const std::string& fingerprint) {
  if (seq.gt.empty()) throw ConfigError("fuse: sequence has no ground truth to start from");
  ekf::MeasurementFn measure;
  switch (cfg.source) {
    case Source::Network:
      if (!net) throw ConfigError("fuse: source 'network' needs a checkpoint");
      measure = ekf::network_measurements(*net);
      break;
    case Source::Oracle:
      measure = ekf::oracle_measurements(seq, cfg.oracle_variance, cfg.oracle_noise_sigma, seed);
      break;
    case Source::None: break;
  }
  FuseResult r;
  r.fused = ekf::run_filter(seq, measure, cfg.filter);
  r.dead_reckoning = measure ? ekf::run_filter(seq, {}, cfg.filter) : r.fused;
  r.metrics = eval::evaluate(r.fused.poses, seq.gt, cfg.alignment, fingerprint);
  r.dr_metrics = eval::evaluate(r.dead_reckoning.poses, seq.gt, cfg.alignment, fingerprint);
  return r;
}

AblationAxis ablation_axis_from_string(const std::string& s) {
  if (s == "gating") return AblationAxis::Gating;
  if (s == "bank_size") return AblationAxis::BankSize;
  throw ConfigError("unknown ablation axis '" + s + "' (valid: gating, bank_size)");
}

std::string to_string(AblationAxis a) {
  return a == AblationAxis::Gating ? "gating" : "bank_size";
}

std::vector<AblationRow> ablation_grid(AblationAxis axis, const net::NetConfig& base) {
  using net::GateFn;
  using net::ScaleFn;
  std::vector<AblationRow> rows;
  if (axis == AblationAxis::Gating) {
    const std::pair<GateFn, ScaleFn> grid[] = {
        {GateFn::Sigmoid, ScaleFn::Linear}, {GateFn::Tanh, ScaleFn::Linear},
        {GateFn::Tanh, ScaleFn::Exp},       {GateFn::Tanh, ScaleFn::Abs},
        {GateFn::Tanh, ScaleFn::PosElu},    {GateFn::Tanh, ScaleFn::Softplus}};
    const char* labels[] = {"Sigmoid/Linear", "Tanh/Linear", "Tanh/Exp",
                            "Tanh/Abs",       "Tanh/PosELU", "Tanh/Softplus"};
    for (std::size_t i = 0; i < 6; ++i) {
      AblationRow r;
      r.label = labels[i];
      r.net = base;
      r.net.gate_fn = grid[i].first;
      r.net.scale_fn = grid[i].second;
      rows.push_back(r);
    }
  } else {
    for (std::size_t m : {16, 32, 64, 128}) {
      AblationRow r;
      r.label = "m=" + std::to_string(m);
      r.net = base;
      r.net.m = m;
      rows.push_back(r);
    }
  }
  return rows;
}

std::vector<AblationRow> run_ablation(AblationAxis axis, const net::NetConfig& base,
                                      const train::TrainConfig& tcfg, const FuseConfig& fcfg,
                                      std::span<const NamedSequence> train_data,
                                      std::span<const NamedSequence> held_out) {
  if (held_out.empty()) throw ConfigError("ablate: no held-out sequences");
  const auto train_windows = collect_windows(train_data);
  const auto test_windows = collect_windows(held_out);
  auto rows = ablation_grid(axis, base);
  for (auto& row : rows) {
    net::GnioNet net(row.net, tcfg.seed);
    train::Trainer trainer(net, tcfg);
    trainer.run(train_windows);
    row.window_mse = window_mse(net, test_windows);
    FuseConfig fc = fcfg;
    fc.source = Source::Network;
    double ate = 0.0, rmse = 0.0;
    for (const auto& s : held_out) {
      const auto r = fuse_sequence(s.seq, fc, &net, tcfg.seed);
      ate += r.metrics.ate_m;
      rmse += r.metrics.rmse_m;
    }
    row.ate_m = ate / static_cast<double>(held_out.size());
    row.rmse_m = rmse / static_cast<double>(held_out.size());
  }
  return rows;
}

void write_ablation_csv(const fs::path& path, std::span<const AblationRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "config,gate_fn,scale_fn,m,window_mse,ate_m,rmse_m\n";
  for (const auto& r : rows)
    out << r.label << ',' << net::to_string(r.net.gate_fn) << ','
        << net::to_string(r.net.scale_fn) << ',' << r.net.m << ','
        << imu::format_double(r.window_mse) << ',' << imu::format_double(r.ate_m) << ','
        << imu::format_double(r.rmse_m) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace gnio::cli
