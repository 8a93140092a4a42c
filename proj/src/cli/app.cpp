#include "gnio/cli/app.hpp"

#include <charconv>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gnio/cli/pipeline.hpp"
#include "gnio/error.hpp"
#include "gnio/imu/io.hpp"
#include "gnio/imu/windows.hpp"

namespace gnio::cli {
namespace fs = std::filesystem;
using nlohmann::json;

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("--set: empty component in '" + path + "'");
    std::size_t index = 0;
    const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), index);
    const bool numeric = ec == std::errc{} && ptr == key.data() + key.size();
    json* next = nullptr;
    if (node->is_array()) {
      if (!numeric || index >= node->size())
        throw ConfigError("--set: '" + key + "' is not a valid index in '" + path + "'");
      next = &(*node)[index];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object())
        throw ConfigError("--set: '" + path + "' descends into a non-object value");
      next = &(*node)[key];
    }
    if (dot == std::string::npos) {
      *next = value;
      return;
    }
    node = next;
    start = dot + 1;
  }
}

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

json load_config(const Common& c) {
  json j = json::object();
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw ConfigError("cannot open config " + c.config);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(c.config + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(c.config + ": top level must be a JSON object");
  }
  for (const auto& s : c.sets) apply_override(j, s);
  return j;
}

void reject_keys(const json& j, std::initializer_list<const char*> valid, const char* cmd) {
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(valid.begin(), valid.end(), [&](const char* v) { return key == v; }) ==
        valid.end()) {
      std::string list;
      for (const char* v : valid) list += (list.empty() ? "" : ", ") + std::string(v);
      throw ConfigError(std::string(cmd) + ": unknown config key '" + key + "' (valid: " +
                        (list.empty() ? "none" : list) + ")");
    }
  }
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " not found: " + path);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path make_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out + ": " + ec.message());
  return out;
}

net::NetConfig net_from(const json& j) {
  return j.contains("net") ? net::net_config_from_json(j["net"]) : net::NetConfig{};
}

train::TrainConfig train_from(const json& j, const std::optional<std::uint64_t>& seed) {
  json t = j.value("train", json::object());
  if (seed) t["seed"] = *seed;
  return train::train_config_from_json(t);
}

int cmd_synth(const Common& c, std::ostream& out) {
  json j = load_config(c);
  const fs::path dir = make_out(c.out);
  if (j.contains("segments")) {
    if (c.seed) j["seed"] = *c.seed;
    const auto spec = imu::synth_spec_from_json(j);
    const auto seq = imu::synth_generate(spec);
    imu::save_sequence(dir, seq);
    write_json(dir / "config.json", imu::synth_spec_to_json(spec));
    out << "synth: " << seq.imu.size() << " samples, " << seq.duration() << " s -> "
        << dir.string() << '\n';
    return kExitOk;
  }
  if (c.seed) j["seed"] = *c.seed;
  const auto cfg = dataset_config_from_json(j);
  const auto seqs = generate_dataset(cfg);
  save_dataset(dir, seqs);
  write_json(dir / "config.json", to_json(cfg));
  out << "synth: " << seqs.size() << " sequence(s) of " << cfg.duration_s << " s -> "
      << dir.string() << '\n';
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& data, const std::string& resume,
              std::ostream& out) {
  const json j = load_config(c);
  reject_keys(j, {"net", "train"}, "train");
  const auto tcfg = train_from(j, c.seed);
  if (!resume.empty()) require_file(resume, "resume checkpoint");
  const auto seqs = load_dataset(data);
  const auto windows = collect_windows(seqs);
  const fs::path dir = make_out(c.out);

  net::GnioNet net = resume.empty() ? net::GnioNet(net_from(j), tcfg.seed) : net::load_net(resume);
  train::Trainer trainer(net, tcfg);
  std::vector<train::EpochLog> log;
  if (!resume.empty()) {
    trainer.resume(resume);
    const fs::path prev = fs::path(resume).parent_path() / "train_log.csv";
    if (fs::exists(prev))
      for (const auto& row : train::read_log_csv(prev))
        if (row.epoch <= trainer.epochs_done()) log.push_back(row);
  }
  trainer.set_checkpoint_path(dir / "trainer.ckpt");
  const auto log_path = dir / "train_log.csv";
  trainer.run(windows, [&](const train::EpochLog& row) {
    log.push_back(row);
    train::write_log_csv(log_path, log);
    out << "epoch " << row.epoch << " lr " << row.lr << " loss " << row.loss_total << " mse "
        << row.loss_mse << " nll " << row.loss_nll << '\n';
  });
  train::write_log_csv(log_path, log);
  trainer.save(dir / "trainer.ckpt");
  net::save_net(dir / "model.ckpt", net);
  write_json(dir / "config.json", {{"net", net::to_json(net.config())}, {"train", to_json(tcfg)}});
  out << "train: " << windows.size() << " windows, " << trainer.epochs_done() << " epochs -> "
      << (dir / "model.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_infer(const Common& c, const std::string& data, const std::string& ckpt,
              std::ostream& out) {
  const json j = load_config(c);
  reject_keys(j, {}, "infer");
  require_file(ckpt, "checkpoint");
  const auto seqs = load_dataset(data);
  net::GnioNet net = net::load_net(ckpt);
  const fs::path dir = make_out(c.out);
  std::ofstream csv(dir / "predictions.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write " + (dir / "predictions.csv").string());
  csv << "seq,t_start,t_end,dx,dy,dz,ux,uy,uz,gx,gy,gz,gt_dx,gt_dy,gt_dz\n";
  double se = 0.0;
  std::size_t n = 0;
  auto f = [](double v) { return imu::format_double(v); };
  for (const auto& s : seqs) {
    const auto windows = imu::window_stream(s.seq);
    const auto pred = net::predict(net, windows);
    for (std::size_t k = 0; k < windows.size(); ++k) {
      const auto& w = windows[k];
      const auto& p = pred[k];
      csv << s.name << ',' << f(w.t_start) << ',' << f(w.t_end);
      for (const auto* v : {&p.d_hat, &p.u, &p.gate, &w.d_gt})
        for (int i = 0; i < 3; ++i) csv << ',' << f((*v)[i]);
      csv << '\n';
      se += (p.d_hat - w.d_gt).squaredNorm();
      ++n;
    }
  }
  const double mse = n ? se / static_cast<double>(n) : 0.0;
  write_json(dir / "infer.json", {{"window_mse", mse}, {"n", n}});
  out << "infer: " << n << " windows, mse " << mse << '\n';
  return kExitOk;
}

int cmd_fuse(const Common& c, const std::string& data, const std::string& ckpt,
             const std::string& source, std::ostream& out) {
  json j = load_config(c);
  if (!source.empty()) j["source"] = source;
  const auto cfg = fuse_config_from_json(j);
  std::optional<net::GnioNet> net;
  if (cfg.source == Source::Network) {
    if (ckpt.empty()) throw ConfigError("fuse: source 'network' needs --checkpoint");
    require_file(ckpt, "checkpoint");
    net.emplace(net::load_net(ckpt));
  }
  const auto seqs = load_dataset(data);
  const fs::path dir = make_out(c.out);
  json effective = to_json(cfg);
  effective["seed"] = c.seed.value_or(0);
  if (!ckpt.empty()) effective["checkpoint"] = ckpt;
  const std::string hash = eval::config_hash(effective);
  write_json(dir / "config.json", effective);

  for (const auto& s : seqs) {
    const fs::path sub = seqs.size() == 1 ? dir : dir / s.name;
    const auto r = fuse_sequence(s.seq, cfg, net ? &*net : nullptr, c.seed.value_or(0), hash);
    std::vector<eval::NamedTrajectory> trs{{"gt", s.seq.gt},
                                           {"estimate", r.fused.poses}};
    if (cfg.source != Source::None) trs.push_back({"dead_reckoning", r.dead_reckoning.poses});
    eval::emit_outputs(sub, r.metrics, trs);
    write_json(sub / "dead_reckoning_metrics.json", eval::to_json(r.dr_metrics));
    std::ofstream upd(sub / "updates.csv", std::ios::binary);
    upd << "t,start,end,accepted,dx,dy,dz,rx,ry,rz,sxx,syy,szz\n";
    for (const auto& u : r.fused.updates) {
      upd << imu::format_double(u.t) << ',' << u.start << ',' << u.end << ','
          << (u.accepted ? 1 : 0);
      for (const auto* v : {&u.d_hat, &u.residual, &u.sigma_diag})
        for (int i = 0; i < 3; ++i) upd << ',' << imu::format_double((*v)[i]);
      upd << '\n';
    }
    out << "fuse " << s.name << ": ate " << r.metrics.ate_m << " m, dead reckoning "
        << r.dr_metrics.ate_m << " m\n";
  }
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& est, const std::string& gt, std::ostream& out) {
  const json j = load_config(c);
  reject_keys(j, {"alignment"}, "eval");
  const auto alignment = eval::alignment_from_string(j.value("alignment", "first_pose"));
  require_file(est, "estimate");
  require_file(gt, "ground truth");
  const auto e = imu::read_pose_csv(est);
  const auto g = imu::read_pose_csv(gt);
  json effective = {{"alignment", eval::to_string(alignment)}, {"est", est}, {"gt", gt}};
  const auto report = eval::evaluate(e, g, alignment, eval::config_hash(effective));
  const auto synced = eval::synchronize(e, g);
  eval::Trajectory aligned;
  switch (alignment) {
    case eval::Alignment::FirstPose: aligned = eval::align_first_pose(synced.est, synced.gt); break;
    case eval::Alignment::Umeyama: aligned = eval::align_umeyama(synced.est, synced.gt); break;
    case eval::Alignment::None: aligned = synced.est; break;
  }
  const std::vector<eval::NamedTrajectory> trs{{"gt", synced.gt}, {"estimate", aligned}};
  eval::emit_outputs(c.out, report, trs);
  out << "eval: ate " << report.ate_m << " m over " << report.n << " samples\n";
  return kExitOk;
}

int cmd_ablate(const Common& c, const std::string& axis_name, const std::string& data,
               const std::string& heldout, std::ostream& out) {
  const auto axis = ablation_axis_from_string(axis_name);
  const json j = load_config(c);
  reject_keys(j, {"net", "train", "fuse"}, "ablate");
  const auto base = net_from(j);
  const auto tcfg = train_from(j, c.seed);
  const auto fcfg = fuse_config_from_json(j.value("fuse", json::object()));
  auto train_data = load_dataset(data);
  std::vector<NamedSequence> held;
  if (!heldout.empty()) {
    held = load_dataset(heldout);
  } else {
    if (train_data.size() < 2)
      throw ConfigError("ablate: need --heldout or at least two sequences in --data");
    const std::size_t k = std::max<std::size_t>(1, train_data.size() / 5);
    held.assign(std::make_move_iterator(train_data.end() - static_cast<std::ptrdiff_t>(k)),
                std::make_move_iterator(train_data.end()));
    train_data.resize(train_data.size() - k);
  }
  const fs::path dir = make_out(c.out);
  const auto rows = run_ablation(axis, base, tcfg, fcfg, train_data, held);
  const fs::path table = dir / ("ablation_" + to_string(axis) + ".csv");
  write_ablation_csv(table, rows);
  for (const auto& r : rows)
    out << r.label << ": window mse " << r.window_mse << ", ate " << r.ate_m << " m\n";
  out << "ablate: " << rows.size() << " rows -> " << table.string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GNIO: neural inertial odometry with a stochastic-cloning EKF", "gnio"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub, bool need_out) {
    sub->add_option("--config", common.config, "JSON config file");
    sub->add_option("--seed", common.seed, "RNG seed");
    auto* o = sub->add_option("--out", common.out, "output directory");
    if (need_out) o->required();
    sub->add_option("--set", common.sets, "override, key.path=value")->allow_extra_args(false);
  };

  std::string data, ckpt, resume, source, est, gt, axis, heldout;
  auto* synth = app.add_subcommand("synth", "generate synthetic IMU sequences");
  add_common(synth, true);
  auto* train = app.add_subcommand("train", "train a network on a dataset");
  add_common(train, true);
  train->add_option("--data", data, "dataset directory")->required();
  train->add_option("--resume", resume, "trainer checkpoint to continue from");
  auto* infer = app.add_subcommand("infer", "predict window displacements");
  add_common(infer, true);
  infer->add_option("--data", data, "dataset directory")->required();
  infer->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  auto* fuse = app.add_subcommand("fuse", "run the filter on sequences");
  add_common(fuse, true);
  fuse->add_option("--data", data, "dataset directory")->required();
  fuse->add_option("--checkpoint", ckpt, "model checkpoint");
  fuse->add_option("--source", source, "network, oracle or none");
  auto* ev = app.add_subcommand("eval", "score an estimated trajectory");
  add_common(ev, true);
  ev->add_option("--est", est, "estimated pose CSV")->required();
  ev->add_option("--gt", gt, "ground-truth pose CSV")->required();
  auto* ablate = app.add_subcommand("ablate", "sweep head variants or bank sizes");
  add_common(ablate, true);
  ablate->add_option("--axis", axis, "gating or bank_size")->required();
  ablate->add_option("--data", data, "training dataset directory")->required();
  ablate->add_option("--heldout", heldout, "held-out dataset directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "gnio: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(common, out);
    if (train->parsed()) return cmd_train(common, data, resume, out);
    if (infer->parsed()) return cmd_infer(common, data, ckpt, out);
    if (fuse->parsed()) return cmd_fuse(common, data, ckpt, source, out);
    if (ev->parsed()) return cmd_eval(common, est, gt, out);
    if (ablate->parsed()) return cmd_ablate(common, axis, data, heldout, out);
  } catch (const ConfigError& e) {
    err << "gnio: config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "gnio: config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "gnio: config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "gnio: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace gnio::cli
