#include "gnio/net/gnio_net.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "gnio/error.hpp"

namespace gnio::net {
namespace {

class Init {
 public:
  explicit Init(std::uint64_t seed) : rng_(seed) {}

  Tensor normal(ad::Shape shape, double stddev) {
    std::normal_distribution<double> n(0.0, stddev);
    std::vector<double> v(ad::numel_of(shape));
    for (auto& x : v) x = n(rng_);
    return Tensor(std::move(shape), std::move(v), true);
  }

 private:
  std::mt19937_64 rng_;
};

ConvBn make_conv_bn(Init& init, std::size_t cin, std::size_t cout, std::size_t k,
                    std::size_t stride, std::size_t pad) {
  ConvBn c;
  c.weight = init.normal({cout, cin, k}, std::sqrt(2.0 / static_cast<double>(cin * k)));
  c.gamma = Tensor::full({cout}, 1.0, true);
  c.beta = Tensor::zeros({cout}, true);
  c.stats = ad::BatchNormStats(cout);
  c.opts = {stride, pad};
  return c;
}

Tensor linear_no_bias(Tape& tape, const Tensor& x, const Tensor& W) { return ad::matmul(tape, x, W); }

}  // namespace

Tensor ConvBn::forward(Tape& tape, const Tensor& x, bool training, bool relu) {
  Tensor y = ad::conv1d(tape, x, weight, opts);
  y = ad::batchnorm1d(tape, y, gamma, beta, stats, training);
  return relu ? ad::relu(tape, y) : y;
}

Tensor BasicBlock::forward(Tape& tape, const Tensor& x, bool training) {
  Tensor y = conv1.forward(tape, x, training, true);
  y = conv2.forward(tape, y, training, false);
  const Tensor skip = shortcut ? shortcut->forward(tape, x, training, false) : x;
  return ad::relu(tape, ad::add(tape, y, skip));
}

Tensor Encoder::forward(Tape& tape, const Tensor& x, bool training) {
  if (x.rank() != 3 || x.dim(1) != kInputChannels)
    throw ShapeError("encode: expected input [B, 6, N], got " + ad::shape_str(x.shape()));
  Tensor y = stem.forward(tape, x, training, true);
  for (auto& b : blocks) y = b.forward(tape, y, training);
  y = ad::global_avg_pool(tape, y);
  if (proj) y = ad::linear(tape, y, proj->first, proj->second);
  return y;
}

Attention bank_attend(Tape& tape, const MotionBank& bank, const Tensor& f) {
  const std::size_t D = bank.M.dim(1);
  if (f.rank() != 2 || f.dim(1) != D)
    throw ShapeError("bank_attend: feature " + ad::shape_str(f.shape()) + " vs bank D = " +
                     std::to_string(D));
  const std::size_t dk = D / bank.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const Tensor Q = linear_no_bias(tape, f, bank.W_Q);
  const Tensor K = ad::matmul(tape, bank.M, bank.W_K);
  const Tensor V = ad::matmul(tape, bank.M, bank.W_V);

  Attention out;
  std::vector<Tensor> parts;
  for (std::size_t h = 0; h < bank.heads; ++h) {
    const bool whole = bank.heads == 1;
    const Tensor Qh = whole ? Q : ad::slice_cols(tape, Q, h * dk, (h + 1) * dk);
    const Tensor Kh = whole ? K : ad::slice_cols(tape, K, h * dk, (h + 1) * dk);
    const Tensor Vh = whole ? V : ad::slice_cols(tape, V, h * dk, (h + 1) * dk);
    const Tensor logits = ad::scale(tape, ad::matmul(tape, Qh, ad::transpose(tape, Kh)), inv_sqrt);
    const Tensor A = ad::softmax(tape, logits);
    out.weights.push_back(A);
    parts.push_back(ad::matmul(tape, A, Vh));
  }
  out.c = parts.size() == 1 ? parts.front() : ad::concat_cols(tape, parts);
  if (bank.W_O) out.c = ad::matmul(tape, out.c, *bank.W_O);
  return out;
}

Tensor fuse(Tape& tape, const Tensor& f, const Tensor& c) { return ad::add(tape, f, c); }

Tensor apply_scale_fn(Tape& tape, ScaleFn fn, const Tensor& x) {
  switch (fn) {
    case ScaleFn::Softplus: return ad::softplus(tape, x);
    case ScaleFn::PosElu: return ad::add_scalar(tape, ad::elu(tape, x), 1.0);
    case ScaleFn::Abs: return ad::abs(tape, x);
    case ScaleFn::Exp: return ad::exp(tape, x);
    case ScaleFn::Linear: return x;
  }
  throw ConfigError("unknown scale_fn");
}

Tensor apply_gate_fn(Tape& tape, GateFn fn, const Tensor& x) {
  return fn == GateFn::Tanh ? ad::tanh(tape, x) : ad::sigmoid(tape, x);
}

GatedOutput gated_head(Tape& tape, const HeadParams& head, const Tensor& h) {
  GatedOutput o;
  o.s = apply_scale_fn(tape, head.scale_fn, ad::linear(tape, h, head.W_s, head.b_s));
  o.g = apply_gate_fn(tape, head.gate_fn, ad::linear(tape, h, head.W_g, head.b_g));
  o.d = ad::mul(tape, o.s, o.g);
  return o;
}

Tensor uncertainty(Tape& tape, const HeadParams& head, const Tensor& h) {
  return ad::linear(tape, h, head.W_u, head.b_u);
}

Eigen::Matrix3d covariance_from_log_sigma(const Eigen::Vector3d& u) {
  return (2.0 * u).array().exp().matrix().asDiagonal();
}

GnioNet::GnioNet(const NetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Init init(seed);
  const auto& ch = config_.channels;
  encoder_.stem = make_conv_bn(init, kInputChannels, ch[0], 7, 2, 3);
  std::size_t cin = ch[0];
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t cout = ch[s];
    for (std::size_t b = 0; b < 2; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      BasicBlock blk;
      blk.conv1 = make_conv_bn(init, cin, cout, 3, stride, 1);
      blk.conv2 = make_conv_bn(init, cout, cout, 3, 1, 1);
      if (stride != 1 || cin != cout) blk.shortcut = make_conv_bn(init, cin, cout, 1, stride, 0);
      encoder_.blocks.push_back(std::move(blk));
      cin = cout;
    }
  }
  const double D = static_cast<double>(config_.D);
  if (cin != config_.D)
    encoder_.proj = std::make_pair(init.normal({config_.D, cin}, std::sqrt(1.0 / static_cast<double>(cin))),
                                   Tensor::zeros({config_.D}, true));

  const double lin = std::sqrt(1.0 / D);
  bank_.heads = config_.heads;
  bank_.M = init.normal({config_.m, config_.D}, lin);
  bank_.W_Q = init.normal({config_.D, config_.D}, lin);
  bank_.W_K = init.normal({config_.D, config_.D}, lin);
  bank_.W_V = init.normal({config_.D, config_.D}, lin);
  if (config_.heads > 1) bank_.W_O = init.normal({config_.D, config_.D}, lin);

  head_.gate_fn = config_.gate_fn;
  head_.scale_fn = config_.scale_fn;
  head_.W_s = init.normal({3, config_.D}, lin);
  head_.b_s = Tensor::zeros({3}, true);
  head_.W_g = init.normal({3, config_.D}, lin);
  head_.b_g = Tensor::zeros({3}, true);
  head_.W_u = init.normal({3, config_.D}, lin);
  head_.b_u = Tensor::zeros({3}, true);
}

Output GnioNet::forward(Tape& tape, const Tensor& X, bool training) {
  Output o;
  o.f = encoder_.forward(tape, X, training);
  Attention att = bank_attend(tape, bank_, o.f);
  o.c = att.c;
  o.attention = std::move(att.weights);
  o.h = fuse(tape, o.f, o.c);
  GatedOutput gh = gated_head(tape, head_, o.h);
  o.s = gh.s;
  o.g = gh.g;
  o.d_hat = gh.d;
  o.u = uncertainty(tape, head_, o.h);
  return o;
}

void GnioNet::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  auto conv_bn = [&](const std::string& p, ConvBn& c) {
    fn(p + ".conv.weight", c.weight);
    fn(p + ".bn.gamma", c.gamma);
    fn(p + ".bn.beta", c.beta);
  };
  conv_bn("encoder.stem", encoder_.stem);
  for (std::size_t i = 0; i < encoder_.blocks.size(); ++i) {
    auto& b = encoder_.blocks[i];
    const std::string p = "encoder.block" + std::to_string(i);
    conv_bn(p + ".a", b.conv1);
    conv_bn(p + ".b", b.conv2);
    if (b.shortcut) conv_bn(p + ".shortcut", *b.shortcut);
  }
  if (encoder_.proj) {
    fn("encoder.proj.weight", encoder_.proj->first);
    fn("encoder.proj.bias", encoder_.proj->second);
  }
  fn("bank.M", bank_.M);
  fn("bank.W_Q", bank_.W_Q);
  fn("bank.W_K", bank_.W_K);
  fn("bank.W_V", bank_.W_V);
  if (bank_.W_O) fn("bank.W_O", *bank_.W_O);
  fn("head.W_s", head_.W_s);
  fn("head.b_s", head_.b_s);
  fn("head.W_g", head_.W_g);
  fn("head.b_g", head_.b_g);
  fn("head.W_u", head_.W_u);
  fn("head.b_u", head_.b_u);
}

void GnioNet::visit_stats(
    const std::function<void(const std::string&, ad::BatchNormStats&)>& fn) {
  fn("encoder.stem.bn", encoder_.stem.stats);
  for (std::size_t i = 0; i < encoder_.blocks.size(); ++i) {
    auto& b = encoder_.blocks[i];
    const std::string p = "encoder.block" + std::to_string(i);
    fn(p + ".a.bn", b.conv1.stats);
    fn(p + ".b.bn", b.conv2.stats);
    if (b.shortcut) fn(p + ".shortcut.bn", b.shortcut->stats);
  }
}

std::vector<std::pair<std::string, Tensor>> GnioNet::parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  visit([&](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
  return out;
}

std::size_t GnioNet::parameter_count() {
  std::size_t n = 0;
  visit([&](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

ad::NamedTensors GnioNet::state() {
  ad::NamedTensors out;
  visit([&](const std::string& name, Tensor& t) { out.emplace(name, t.detach_copy()); });
  visit_stats([&](const std::string& name, ad::BatchNormStats& s) {
    const std::size_t c = s.running_mean.size();
    out.emplace(name + ".running_mean", Tensor({c}, s.running_mean));
    out.emplace(name + ".running_var", Tensor({c}, s.running_var));
  });
  return out;
}

void GnioNet::load_state(const ad::NamedTensors& state) {
  auto find = [&](const std::string& name, const ad::Shape& shape) -> const Tensor& {
    const auto it = state.find(name);
    if (it == state.end()) throw ConfigError("checkpoint is missing '" + name + "'");
    if (it->second.shape() != shape)
      throw ConfigError("checkpoint '" + name + "' has shape " + ad::shape_str(it->second.shape()) +
                        ", network expects " + ad::shape_str(shape));
    return it->second;
  };
  visit([&](const std::string& name, Tensor& t) {
    const Tensor& src = find(name, t.shape());
    std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
  });
  visit_stats([&](const std::string& name, ad::BatchNormStats& s) {
    const ad::Shape shape{s.running_mean.size()};
    const auto& m = find(name + ".running_mean", shape).data();
    const auto& v = find(name + ".running_var", shape).data();
    s.running_mean.assign(m.begin(), m.end());
    s.running_var.assign(v.begin(), v.end());
  });
}

Tensor block_to_input(const imu::AlignedBlock& X) {
  const auto N = static_cast<std::size_t>(X.rows());
  std::vector<double> v(kInputChannels * N);
  for (std::size_t c = 0; c < kInputChannels; ++c)
    for (std::size_t i = 0; i < N; ++i)
      v[c * N + i] = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
  return Tensor({1, kInputChannels, N}, std::move(v));
}

Tensor windows_to_input(std::span<const imu::Window> windows) {
  if (windows.empty()) throw ShapeError("windows_to_input: empty batch");
  const std::size_t N = windows.front().size();
  std::vector<double> v;
  v.reserve(windows.size() * kInputChannels * N);
  for (const auto& w : windows) {
    if (w.size() != N) throw ShapeError("windows_to_input: windows differ in length");
    for (std::size_t c = 0; c < kInputChannels; ++c)
      for (std::size_t i = 0; i < N; ++i)
        v.push_back(w.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
  }
  return Tensor({windows.size(), kInputChannels, N}, std::move(v));
}

namespace {

std::vector<Prediction> unpack(const Output& o) {
  const std::size_t B = o.d_hat.dim(0);
  std::vector<Prediction> out(B);
  for (std::size_t b = 0; b < B; ++b)
    for (int i = 0; i < 3; ++i) {
      const std::size_t k = b * 3 + static_cast<std::size_t>(i);
      out[b].d_hat[i] = o.d_hat.at(k);
      out[b].u[i] = o.u.at(k);
      out[b].gate[i] = o.g.at(k);
    }
  return out;
}

}  // namespace

std::vector<Prediction> predict(GnioNet& net, std::span<const imu::Window> windows) {
  Tape tape(false);
  return unpack(net.forward(tape, windows_to_input(windows), false));
}

Prediction predict(GnioNet& net, const imu::AlignedBlock& X) {
  Tape tape(false);
  return unpack(net.forward(tape, block_to_input(X), false)).front();
}

std::filesystem::path config_sidecar(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".json";
  return p;
}

void save_net(const std::filesystem::path& path, GnioNet& net) {
  ad::save_checkpoint(path, net.state());
  std::ofstream out(config_sidecar(path));
  if (!out) throw IoError("cannot write " + config_sidecar(path).string());
  out << to_json(net.config()).dump(2) << '\n';
}

GnioNet load_net(const std::filesystem::path& path) {
  const auto side = config_sidecar(path);
  std::ifstream in(side);
  if (!in) throw IoError("missing network config " + side.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(side.string() + ": " + e.what());
  }
  GnioNet net(net_config_from_json(j));
  net.load_state(ad::load_checkpoint(path));
  return net;
}

}  // namespace gnio::net
