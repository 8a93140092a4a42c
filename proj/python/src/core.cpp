#include <sstream>

#include <nlohmann/json.hpp>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gnio/cli/app.hpp"
#include "gnio/cli/pipeline.hpp"
#include "gnio/error.hpp"
#include "gnio/imu/io.hpp"
#include "gnio/imu/windows.hpp"
#include "gnio/train/optim.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace gnio;

namespace {

using Rows = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

json parse(const std::string& text) { return text.empty() ? json::object() : json::parse(text); }

Rows imu_rows(const std::vector<imu::ImuSample>& s) {
  Rows m(static_cast<Eigen::Index>(s.size()), 7);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m(r, 0) = s[i].t;
    m.block<1, 3>(r, 1) = s[i].gyro.transpose();
    m.block<1, 3>(r, 4) = s[i].accel.transpose();
  }
  return m;
}

// t, x, y, z, qw, qx, qy, qz
Rows pose_rows(const std::vector<imu::PoseSample>& s) {
  Rows m(static_cast<Eigen::Index>(s.size()), 8);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m(r, 0) = s[i].t;
    m.block<1, 3>(r, 1) = s[i].p.transpose();
    m(r, 4) = s[i].q.w();
    m.block<1, 3>(r, 5) = s[i].q.vec().transpose();
  }
  return m;
}

std::vector<imu::PoseSample> poses_from(const Rows& m) {
  if (m.cols() != 8) throw ShapeError("poses: expected N x 8 (t, x, y, z, qw, qx, qy, qz)");
  std::vector<imu::PoseSample> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto& p = out[static_cast<std::size_t>(r)];
    p.t = m(r, 0);
    p.p = m.block<1, 3>(r, 1).transpose();
    p.q = Eigen::Quaterniond(m(r, 4), m(r, 5), m(r, 6), m(r, 7));
  }
  return out;
}

py::dict report_dict(const eval::MetricReport& r) {
  py::dict d;
  d["ate_m"] = r.ate_m;
  d["rmse_m"] = r.rmse_m;
  d["duration_s"] = r.duration_s;
  d["n"] = r.n;
  d["config_hash"] = r.config_hash;
  return d;
}

std::vector<cli::NamedSequence> named(const std::vector<imu::Sequence>& seqs) {
  std::vector<cli::NamedSequence> out;
  for (const auto& s : seqs) out.push_back({"", s});
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gated inertial odometry: synthesis, network, training, filtering, metrics.";

  py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_FloatingPointError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<imu::Sequence>(m, "Sequence")
      .def_readonly("rate", &imu::Sequence::rate)
      .def_property_readonly("duration", &imu::Sequence::duration)
      .def_property_readonly("imu", [](const imu::Sequence& s) { return imu_rows(s.imu); },
                             "N x 7: t, gyro xyz, accel xyz")
      .def_property_readonly("gt", [](const imu::Sequence& s) { return pose_rows(s.gt); },
                             "N x 8: t, position xyz, quaternion wxyz")
      .def("validate", &imu::Sequence::validate)
      .def("save", [](const imu::Sequence& s, const std::filesystem::path& dir) { imu::save_sequence(dir, s); })
      .def_static("load", &imu::load_sequence)
      .def("__len__", [](const imu::Sequence& s) { return s.imu.size(); });

  m.def("synth", [](const std::string& spec) { return imu::synth_generate(imu::synth_spec_from_json(parse(spec))); },
        py::arg("spec_json"));
  m.def(
      "random_walk",
      [](double duration, double rate, std::uint64_t seed, double sigma_g, double sigma_a) {
        imu::NoiseSpec n;
        n.sigma_g = sigma_g;
        n.sigma_a = sigma_a;
        return imu::synth_generate(imu::random_walk_spec(duration, rate, seed, n));
      },
      py::arg("duration"), py::arg("rate") = 100.0, py::arg("seed") = 0, py::arg("sigma_g") = 0.0,
      py::arg("sigma_a") = 0.0);
  m.def("generate_dataset",
        [](const std::string& cfg) { return cli::generate_dataset(cli::dataset_config_from_json(parse(cfg))); },
        py::arg("config_json") = "");

  py::class_<net::GnioNet>(m, "Net")
      .def(py::init([](const std::string& cfg, std::uint64_t seed) {
             return net::GnioNet(net::net_config_from_json(parse(cfg)), seed);
           }),
           py::arg("config_json") = "", py::arg("seed") = 0)
      .def_static("tiny", [](std::uint64_t seed) { return net::GnioNet(net::NetConfig::tiny(), seed); },
                  py::arg("seed") = 0)
      .def_static("load", &net::load_net)
      .def("save", [](net::GnioNet& n, const std::filesystem::path& p) { net::save_net(p, n); })
      .def("parameter_count", &net::GnioNet::parameter_count)
      .def_property_readonly("config", [](const net::GnioNet& n) { return net::to_json(n.config()).dump(); })
      .def(
          "predict",
          [](net::GnioNet& n, const imu::Sequence& seq) {
            const auto windows = imu::window_stream(seq);
            const auto pred = net::predict(n, windows);
            const auto rows = static_cast<Eigen::Index>(windows.size());
            Rows d(rows, 3), u(rows, 3), g(rows, 3), gt(rows, 3);
            Eigen::VectorXd t_end(rows), path(rows);
            for (Eigen::Index i = 0; i < rows; ++i) {
              const auto k = static_cast<std::size_t>(i);
              d.row(i) = pred[k].d_hat.transpose();
              u.row(i) = pred[k].u.transpose();
              g.row(i) = pred[k].gate.transpose();
              gt.row(i) = windows[k].d_gt.transpose();
              t_end(i) = windows[k].t_end;
              path(i) = windows[k].path_length;
            }
            py::dict out;
            out["d_hat"] = d;
            out["u"] = u;
            out["gate"] = g;
            out["d_gt"] = gt;
            out["t_end"] = t_end;
            out["path_length"] = path;
            return out;
          },
          py::arg("sequence"), "Per-window displacement, log-sigma and gate for a whole sequence.");

  m.def(
      "train",
      [](net::GnioNet& n, const std::vector<imu::Sequence>& seqs, const std::string& cfg) {
        const auto data = named(seqs);
        const auto windows = cli::collect_windows(data);
        train::Trainer trainer(n, train::train_config_from_json(parse(cfg)));
        py::list out;
        for (const auto& e : trainer.run(windows)) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["lr"] = e.lr;
          d["loss_total"] = e.loss_total;
          d["loss_mse"] = e.loss_mse;
          d["loss_nll"] = e.loss_nll;
          d["gate_abs_mean_stationary"] = e.gate_abs_mean_stationary;
          d["gate_abs_mean_moving"] = e.gate_abs_mean_moving;
          out.append(d);
        }
        return out;
      },
      py::arg("net"), py::arg("sequences"), py::arg("config_json") = "");
  m.def(
      "window_mse",
      [](net::GnioNet& n, const std::vector<imu::Sequence>& seqs) {
        const auto data = named(seqs);
        return cli::window_mse(n, cli::collect_windows(data));
      },
      py::arg("net"), py::arg("sequences"));

  m.def(
      "fuse",
      [](const imu::Sequence& seq, const std::string& cfg, net::GnioNet* n, std::uint64_t seed) {
        const auto c = cli::fuse_config_from_json(parse(cfg));
        const auto r = cli::fuse_sequence(seq, c, n, seed);
        py::dict out;
        out["estimate"] = pose_rows(r.fused.poses);
        out["dead_reckoning"] = pose_rows(r.dead_reckoning.poses);
        out["metrics"] = report_dict(r.metrics);
        out["dead_reckoning_metrics"] = report_dict(r.dr_metrics);
        std::size_t accepted = 0;
        for (const auto& u : r.fused.updates) accepted += u.accepted ? 1 : 0;
        out["updates"] = r.fused.updates.size();
        out["accepted"] = accepted;
        out["max_asymmetry"] = r.fused.max_asymmetry;
        out["min_eigenvalue"] = r.fused.min_eigenvalue;
        return out;
      },
      py::arg("sequence"), py::arg("config_json") = "", py::arg("net") = nullptr, py::arg("seed") = 0);

  m.def(
      "evaluate",
      [](const Rows& est, const Rows& gt, const std::string& alignment) {
        const auto e = poses_from(est), g = poses_from(gt);
        return report_dict(eval::evaluate(e, g, eval::alignment_from_string(alignment)));
      },
      py::arg("estimate"), py::arg("ground_truth"), py::arg("alignment") = "first_pose");

  m.def(
      "lr_at", [](double epoch, const std::string& cfg) {
        train::ScheduleSpec s;
        const json j = parse(cfg);
        s.lr_start = j.value("lr_start", s.lr_start);
        s.lr_peak = j.value("lr_peak", s.lr_peak);
        s.warmup_epochs = j.value("warmup_epochs", s.warmup_epochs);
        s.total_epochs = j.value("total_epochs", s.total_epochs);
        s.lr_min = j.value("lr_min", s.lr_min);
        return train::lr_at(epoch, s);
      },
      py::arg("epoch"), py::arg("schedule_json") = "");

  m.def(
      "run",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a gnio subcommand in-process; returns (exit code, stdout, stderr).");
}
