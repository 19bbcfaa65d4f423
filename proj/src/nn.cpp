#include "sc2ba/nn.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <string>

#include "sc2ba/error.hpp"

namespace sc2ba::nn {

std::string hex_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
  return std::string(buf, ptr);
}

double parse_hex_double(const std::string& token) {
  double v = 0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  bool negative = false;
  if (begin != end && *begin == '-') {
    negative = true;
    ++begin;
  }
  auto [ptr, ec] = std::from_chars(begin, end, v, std::chars_format::hex);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::CheckpointFormat, "bad number '" + token + "'");
  }
  return negative ? -v : v;
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

void expect_token(std::istream& in, std::string_view expected) {
  std::string t;
  if (!(in >> t) || t != expected) {
    throw Error(ErrorCode::CheckpointFormat,
                "expected '" + std::string(expected) + "', got '" + t + "'");
  }
}

template <typename T>
T read_value(std::istream& in) {
  T v{};
  if (!(in >> v)) throw Error(ErrorCode::CheckpointFormat, "truncated checkpoint");
  return v;
}

void write_values(std::ostream& out, const double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) out << (i ? " " : "") << hex_double(data[i]);
  out << '\n';
}

void read_values(std::istream& in, double* data, Eigen::Index n) {
  std::string t;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(in >> t)) throw Error(ErrorCode::CheckpointFormat, "truncated checkpoint");
    data[i] = parse_hex_double(t);
  }
}

}  // namespace

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.widths != b.widths) return false;
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
  }
  return true;
}

Mlp init_params(const std::vector<int>& widths, std::uint64_t seed) {
  require(widths.size() >= 2, "an MLP needs at least input and output widths");
  for (int w : widths) require(w > 0, "layer widths must be positive");
  std::mt19937_64 rng(seed);
  Mlp net;
  net.widths = widths;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / widths[l]));
    Matrix w(widths[l + 1], widths[l]);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = normal(rng);
    }
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vector::Zero(widths[l + 1]));
  }
  return net;
}

ForwardCache forward_cached(const Mlp& net, const Matrix& inputs) {
  require(inputs.rows() == net.input_size(),
          "input has " + std::to_string(inputs.rows()) + " rows, network expects " +
              std::to_string(net.input_size()));
  ForwardCache cache;
  cache.activations.reserve(net.weights.size() + 1);
  cache.activations.push_back(inputs);
  for (int l = 0; l < net.layer_count(); ++l) {
    Matrix z = net.weights[l] * cache.activations.back();
    z.colwise() += net.biases[l];
    const bool last = l + 1 == net.layer_count();
    cache.activations.push_back(last ? std::move(z) : relu(z));
  }
  return cache;
}

Matrix forward_batch(const Mlp& net, const Matrix& inputs) {
  return std::move(forward_cached(net, inputs).activations.back());
}

Vector forward(const Mlp& net, const Vector& input) {
  return forward_batch(net, Matrix(input));
}

Gradients backward(const Mlp& net, const ForwardCache& cache, const Matrix& output_gradient) {
  require(static_cast<int>(cache.activations.size()) == net.layer_count() + 1,
          "forward cache does not match the network");
  require(output_gradient.rows() == net.output_size() &&
              output_gradient.cols() == cache.activations.back().cols(),
          "output gradient shape mismatch");
  Gradients g;
  g.weights.resize(net.weights.size());
  g.biases.resize(net.biases.size());
  Matrix delta = output_gradient;
  for (int l = net.layer_count() - 1; l >= 0; --l) {
    if (l + 1 < net.layer_count()) {
      // ReLU derivative, read off the post-activation values.
      delta = delta.cwiseProduct(
          (cache.activations[l + 1].array() > 0.0).cast<double>().matrix());
    }
    g.weights[l].noalias() = delta * cache.activations[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    Matrix next = net.weights[l].transpose() * delta;
    delta = std::move(next);
  }
  g.input = std::move(delta);
  return g;
}

Gradients backward(const Mlp& net, const Vector& input, const Vector& output_gradient) {
  return backward(net, forward_cached(net, Matrix(input)), Matrix(output_gradient));
}

Vector flatten(const Mlp& net) {
  Vector flat(net.parameter_count());
  Eigen::Index off = 0;
  for (int l = 0; l < net.layer_count(); ++l) {
    const auto nw = net.weights[l].size();
    flat.segment(off, nw) = Eigen::Map<const Vector>(net.weights[l].data(), nw);
    off += nw;
    flat.segment(off, net.biases[l].size()) = net.biases[l];
    off += net.biases[l].size();
  }
  return flat;
}

void unflatten(Mlp& net, const Vector& flat) {
  require(flat.size() == net.parameter_count(), "flat parameter vector has the wrong size");
  Eigen::Index off = 0;
  for (int l = 0; l < net.layer_count(); ++l) {
    const auto nw = net.weights[l].size();
    Eigen::Map<Vector>(net.weights[l].data(), nw) = flat.segment(off, nw);
    off += nw;
    net.biases[l] = flat.segment(off, net.biases[l].size());
    off += net.biases[l].size();
  }
}

Vector flatten(const Gradients& grads) {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    n += grads.weights[l].size() + grads.biases[l].size();
  }
  Vector flat(n);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    const auto nw = grads.weights[l].size();
    flat.segment(off, nw) = Eigen::Map<const Vector>(grads.weights[l].data(), nw);
    off += nw;
    flat.segment(off, grads.biases[l].size()) = grads.biases[l];
    off += grads.biases[l].size();
  }
  return flat;
}

void adam_step(Eigen::Ref<Vector> params, const Vector& grads, AdamState& s) {
  require(params.size() == grads.size(), "gradient size does not match parameters");
  if (s.first_moment.size() != params.size()) {
    s.first_moment = Vector::Zero(params.size());
    s.second_moment = Vector::Zero(params.size());
  }
  ++s.step;
  s.first_moment = s.beta1 * s.first_moment + (1 - s.beta1) * grads;
  s.second_moment = s.beta2 * s.second_moment + (1 - s.beta2) * grads.cwiseAbs2();
  const double c1 = 1 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1 - std::pow(s.beta2, static_cast<double>(s.step));
  params.array() -= s.learning_rate * (s.first_moment.array() / c1) /
                    ((s.second_moment.array() / c2).sqrt() + s.epsilon);
}

Vector probe_gradient(int output_size) {
  return Vector::LinSpaced(output_size, 1.0, static_cast<double>(output_size));
}

FiniteDiffReport finite_diff_check(const Mlp& net, const Vector& input, double tolerance,
                                   double h, const Gradients* analytic) {
  const Vector probe = probe_gradient(net.output_size());
  const Gradients own = backward(net, input, probe);
  const Vector grad = flatten(analytic ? *analytic : own);

  auto pattern = [](const Mlp& m, const Vector& x) {
    const ForwardCache c = forward_cached(m, Matrix(x));
    std::vector<bool> on;
    for (std::size_t l = 1; l + 1 < c.activations.size(); ++l) {
      for (Eigen::Index i = 0; i < c.activations[l].size(); ++i) {
        on.push_back(c.activations[l](i) > 0);
      }
    }
    return on;
  };
  const auto base_pattern = pattern(net, input);

  FiniteDiffReport report;
  Mlp probe_net = net;
  Vector params = flatten(net);
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double keep = params(i);
    params(i) = keep + h;
    unflatten(probe_net, params);
    const double up = probe.dot(forward(probe_net, input));
    const bool kink_up = pattern(probe_net, input) != base_pattern;
    params(i) = keep - h;
    unflatten(probe_net, params);
    const double down = probe.dot(forward(probe_net, input));
    const bool kink_down = pattern(probe_net, input) != base_pattern;
    params(i) = keep;
    if (kink_up || kink_down) {
      ++report.kinks;
      continue;
    }
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(grad(i)), 1e-6});
    report.max_relative_error = std::max(report.max_relative_error, std::abs(numeric - grad(i)) / denom);
    ++report.checked;
  }
  report.pass = report.max_relative_error < tolerance;
  return report;
}

void write_mlp(std::ostream& out, const Mlp& net) {
  out << "mlp " << net.widths.size();
  for (int w : net.widths) out << ' ' << w;
  out << '\n';
  for (int l = 0; l < net.layer_count(); ++l) {
    write_values(out, net.weights[l].data(), net.weights[l].size());
    write_values(out, net.biases[l].data(), net.biases[l].size());
  }
}

Mlp read_mlp(std::istream& in) {
  expect_token(in, "mlp");
  const auto n = read_value<std::size_t>(in);
  if (n < 2 || n > 64) throw Error(ErrorCode::CheckpointFormat, "bad layer count");
  std::vector<int> widths(n);
  for (auto& w : widths) {
    w = read_value<int>(in);
    if (w <= 0) throw Error(ErrorCode::CheckpointFormat, "bad layer width");
  }
  Mlp net = init_params(widths, 0);
  for (int l = 0; l < net.layer_count(); ++l) {
    read_values(in, net.weights[l].data(), net.weights[l].size());
    read_values(in, net.biases[l].data(), net.biases[l].size());
  }
  return net;
}

void write_adam(std::ostream& out, const AdamState& s) {
  out << "adam " << hex_double(s.learning_rate) << ' ' << hex_double(s.beta1) << ' ' << hex_double(s.beta2) << ' '
      << hex_double(s.epsilon) << ' ' << s.step << ' ' << s.first_moment.size() << '\n';
  write_values(out, s.first_moment.data(), s.first_moment.size());
  write_values(out, s.second_moment.data(), s.second_moment.size());
}

AdamState read_adam(std::istream& in) {
  expect_token(in, "adam");
  AdamState s;
  s.learning_rate = parse_hex_double(read_value<std::string>(in));
  s.beta1 = parse_hex_double(read_value<std::string>(in));
  s.beta2 = parse_hex_double(read_value<std::string>(in));
  s.epsilon = parse_hex_double(read_value<std::string>(in));
  s.step = read_value<std::int64_t>(in);
  const auto n = read_value<Eigen::Index>(in);
  s.first_moment.resize(n);
  s.second_moment.resize(n);
  read_values(in, s.first_moment.data(), n);
  read_values(in, s.second_moment.data(), n);
  return s;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace sc2ba::nn
