#include "gnio/train/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gnio/error.hpp"
#include "gnio/imu/io.hpp"

namespace gnio::train {
using nlohmann::json;

namespace {

constexpr const char* kLogHeader =
    "epoch,lr,loss_total,loss_mse,loss_nll,gate_abs_mean_stationary,gate_abs_mean_moving";

void reject_unknown(const json& j, std::initializer_list<const char*> valid, const char* where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(valid.begin(), valid.end(), [&](const char* v) { return key == v; }) !=
        valid.end())
      continue;
    std::string list;
    for (const char* v : valid) list += std::string(list.empty() ? "" : ", ") + v;
    throw ConfigError(std::string(where) + ": unknown key '" + key + "' (valid: " + list + ")");
  }
}

double mean_or_nan(double sum, std::size_t n) {
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch == 0) throw ConfigError("train: batch must be positive");
  schedule.validate();
  loss.validate();
  if (static_cast<double>(epochs) > schedule.total_epochs)
    throw ConfigError("train: epochs exceed schedule.total_epochs");
  if (!(nll_delay_epochs >= 0.0)) throw ConfigError("train: nll_delay_epochs must be >= 0");
  if (!(clip_norm >= 0.0)) throw ConfigError("train: clip_norm must be >= 0 (0 disables)");
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  reject_unknown(j, {"seed", "batch", "epochs", "schedule", "loss", "clip_norm", "checkpoint_every"},
                 "train");
  TrainConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.batch = j.value("batch", c.batch);
    c.epochs = j.value("epochs", c.epochs);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.schedule.total_epochs = static_cast<double>(std::max<std::size_t>(c.epochs, 1));
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      reject_unknown(s, {"lr_start", "lr_peak", "warmup_epochs", "total_epochs", "lr_min"},
                     "train.schedule");
      c.schedule.lr_start = s.value("lr_start", c.schedule.lr_start);
      c.schedule.lr_peak = s.value("lr_peak", c.schedule.lr_peak);
      c.schedule.warmup_epochs = s.value("warmup_epochs", c.schedule.warmup_epochs);
      c.schedule.total_epochs = s.value("total_epochs", c.schedule.total_epochs);
      c.schedule.lr_min = s.value("lr_min", c.schedule.lr_min);
    }
    if (!j.contains("schedule") || !j.at("schedule").contains("warmup_epochs"))
      c.schedule.warmup_epochs = std::min(c.schedule.warmup_epochs, 0.1 * c.schedule.total_epochs);
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      reject_unknown(l, {"lambda_mse", "lambda_nll", "nll_delay_epochs"}, "train.loss");
      c.loss.lambda_mse = l.value("lambda_mse", c.loss.lambda_mse);
      c.loss.lambda_nll = l.value("lambda_nll", c.loss.lambda_nll);
      c.nll_delay_epochs = l.value("nll_delay_epochs", c.nll_delay_epochs);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"seed", c.seed},
          {"batch", c.batch},
          {"epochs", c.epochs},
          {"schedule",
           {{"lr_start", c.schedule.lr_start},
            {"lr_peak", c.schedule.lr_peak},
            {"warmup_epochs", c.schedule.warmup_epochs},
            {"total_epochs", c.schedule.total_epochs},
            {"lr_min", c.schedule.lr_min}}},
          {"loss",
           {{"lambda_mse", c.loss.lambda_mse},
            {"lambda_nll", c.loss.lambda_nll},
            {"nll_delay_epochs", c.nll_delay_epochs}}},
          {"clip_norm", c.clip_norm},
          {"checkpoint_every", c.checkpoint_every}};
}

void write_log_csv(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kLogHeader << '\n';
  using imu::format_double;
  for (const auto& r : log)
    out << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.loss_total) << ','
        << format_double(r.loss_mse) << ',' << format_double(r.loss_nll) << ','
        << format_double(r.gate_abs_mean_stationary) << ','
        << format_double(r.gate_abs_mean_moving) << '\n';
}

std::vector<EpochLog> read_log_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kLogHeader)
    throw ConfigError(path.string() + ":1: unexpected log header");
  std::vector<EpochLog> log;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      double x = 0.0;
      if (cell == "nan") x = std::numeric_limits<double>::quiet_NaN();
      else if (std::from_chars(cell.data(), cell.data() + cell.size(), x).ec != std::errc{})
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      v.push_back(x);
    }
    if (v.size() != 7)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 7 columns");
    log.push_back({static_cast<std::size_t>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6]});
  }
  return log;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

Tensor targets_of(std::span<const imu::Window> windows) {
  std::vector<double> d;
  d.reserve(windows.size() * 3);
  for (const auto& w : windows) d.insert(d.end(), w.d_gt.data(), w.d_gt.data() + 3);
  return Tensor({windows.size(), 3}, std::move(d));
}

Trainer::Trainer(net::GnioNet& net, TrainConfig config)
    : net_(net), cfg_(std::move(config)), adam_(net.parameters()) {
  cfg_.validate();
  for (auto& [name, p] : net_.parameters()) params_.push_back(p);
}

EpochLog Trainer::run_epoch(std::span<const imu::Window> data) {
  if (data.empty()) throw ConfigError("train: dataset is empty");
  if (epoch_ >= cfg_.epochs) throw ConfigError("train: all configured epochs are done");

  const auto order = epoch_order(cfg_.seed, epoch_, data.size());
  const std::size_t steps = (data.size() + cfg_.batch - 1) / cfg_.batch;
  LossWeights w = cfg_.loss;
  if (static_cast<double>(epoch_) < cfg_.nll_delay_epochs) w.lambda_nll = 0.0;

  EpochLog log;
  log.epoch = epoch_ + 1;
  double sum_total = 0, sum_mse = 0, sum_nll = 0, gate_stat = 0, gate_move = 0;
  std::size_t n_stat = 0, n_move = 0;
  std::vector<imu::Window> batch;
  for (std::size_t step = 0; step < steps; ++step) {
    batch.clear();
    const std::size_t lo = step * cfg_.batch, hi = std::min(data.size(), lo + cfg_.batch);
    for (std::size_t i = lo; i < hi; ++i) batch.push_back(data[order[i]]);

    Tape tape;
    const auto out = net_.forward(tape, net::windows_to_input(batch), true);
    auto terms = loss_total(tape, targets_of(batch), out.d_hat, out.u, w);
    const double total = terms.total.item();
    if (!std::isfinite(total))
      throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch_ + 1) +
                         ", step " + std::to_string(step + 1));

    adam_.zero_grad();
    tape.backward(terms.total);
    clip_grad_norm(params_, cfg_.clip_norm);
    log.lr = lr_at(static_cast<double>(epoch_) + static_cast<double>(step) / static_cast<double>(steps),
                   cfg_.schedule);
    adam_.step(log.lr);

    const double b = static_cast<double>(batch.size());
    sum_total += total * b;
    sum_mse += terms.mse.item() * b;
    sum_nll += terms.nll.item() * b;
    const auto g = out.g.data();
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const double a = (std::abs(g[3 * k]) + std::abs(g[3 * k + 1]) + std::abs(g[3 * k + 2])) / 3.0;
      if (imu::is_stationary(batch[k])) gate_stat += a, ++n_stat;
      else gate_move += a, ++n_move;
    }
  }
  adam_.zero_grad();
  const double n = static_cast<double>(data.size());
  log.loss_total = sum_total / n;
  log.loss_mse = sum_mse / n;
  log.loss_nll = sum_nll / n;
  log.gate_abs_mean_stationary = mean_or_nan(gate_stat, n_stat);
  log.gate_abs_mean_moving = mean_or_nan(gate_move, n_move);
  ++epoch_;
  return log;
}

std::vector<EpochLog> Trainer::run(std::span<const imu::Window> data,
                                   const std::function<void(const EpochLog&)>& on_epoch) {
  std::vector<EpochLog> log;
  while (epoch_ < cfg_.epochs) {
    log.push_back(run_epoch(data));
    if (on_epoch) on_epoch(log.back());
    if (ckpt_ && cfg_.checkpoint_every > 0 && epoch_ % cfg_.checkpoint_every == 0) save(*ckpt_);
  }
  if (ckpt_ && !log.empty()) save(*ckpt_);
  return log;
}

void Trainer::save(const std::filesystem::path& path) {
  auto state = net_.state();
  adam_.save_state(state);
  state.insert_or_assign("train.epoch", Tensor({1}, {static_cast<double>(epoch_)}));
  ad::save_checkpoint(path, state);
  std::ofstream out(net::config_sidecar(path));
  if (!out) throw IoError("cannot write " + net::config_sidecar(path).string());
  out << net::to_json(net_.config()).dump(2) << '\n';
}

void Trainer::resume(const std::filesystem::path& path) {
  const auto state = ad::load_checkpoint(path);
  net_.load_state(state);
  adam_.load_state(state);
  const auto it = state.find("train.epoch");
  if (it == state.end()) throw ConfigError(path.string() + ": not a training checkpoint");
  epoch_ = static_cast<std::size_t>(it->second.item());
}

ad::GradCheckReport loss_gradient_check(net::GnioNet& net, std::span<const imu::Window> batch,
                                        const LossWeights& weights, const LossCheckOptions& opts) {
  const Tensor X = net::windows_to_input(batch);
  const Tensor y = targets_of(batch);
  auto params = net.parameters();
  // Batch-norm running statistics must not drift between the two passes.
  const auto frozen = net.state();
  auto loss_value = [&] {
    Tape tape(false);
    const auto out = net.forward(tape, X, opts.training);
    net.load_state(frozen);
    return loss_total(tape, y, out.d_hat, out.u, weights).total.item();
  };

  for (auto& [name, p] : params) p.zero_grad();
  {
    Tape tape;
    const auto out = net.forward(tape, X, opts.training);
    auto t = loss_total(tape, y, out.d_hat, out.u, weights);
    tape.backward(t.total);
    net.load_state(frozen);
  }

  std::vector<double> sizes;
  for (const auto& [name, p] : params) sizes.push_back(static_cast<double>(p.numel()));
  std::mt19937_64 rng(opts.seed);
  std::discrete_distribution<std::size_t> pick_tensor(sizes.begin(), sizes.end());

  ad::GradCheckReport report;
  for (std::size_t trial = 0; trial < opts.trials; ++trial) {
    Tensor& p = params[pick_tensor(rng)].second;
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, p.numel() - 1)(rng);
    const double analytic = p.has_grad() ? p.grad()[i] : 0.0;
    const double x0 = p.data()[i];
    p.mutable_data()[i] = x0 + opts.h;
    const double fp = loss_value();
    p.mutable_data()[i] = x0 - opts.h;
    const double fm = loss_value();
    p.mutable_data()[i] = x0;
    const double numeric = (fp - fm) / (2.0 * opts.h);
    const double rel = ad::relative_error(analytic, numeric);
    report.entries.push_back({i, analytic, numeric, rel});
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  for (auto& [name, p] : params) p.zero_grad();
  report.passed = report.max_rel_error < opts.tol;
  return report;
}

}  // namespace gnio::train
