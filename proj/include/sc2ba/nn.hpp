#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace sc2ba::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Fully connected network: ReLU on hidden layers, identity output.
// weights[l] is (widths[l+1] x widths[l]).
struct Mlp {
  std::vector<int> widths;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  int input_size() const { return widths.front(); }
  int output_size() const { return widths.back(); }
  int layer_count() const { return static_cast<int>(weights.size()); }
  Eigen::Index parameter_count() const;

  friend bool operator==(const Mlp& a, const Mlp& b);
};

// He-normal weights (std sqrt(2 / fan_in)), zero biases.
Mlp init_params(const std::vector<int>& widths, std::uint64_t seed);

Vector forward(const Mlp& net, const Vector& input);
// Columns are samples.
Matrix forward_batch(const Mlp& net, const Matrix& inputs);

// Post-activation outputs of every layer; activations[0] is the input.
struct ForwardCache {
  std::vector<Matrix> activations;
};
ForwardCache forward_cached(const Mlp& net, const Matrix& inputs);

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix input;
};

// Reverse-mode gradients of sum(output_gradient .* output) over the batch.
Gradients backward(const Mlp& net, const ForwardCache& cache, const Matrix& output_gradient);
Gradients backward(const Mlp& net, const Vector& input, const Vector& output_gradient);

// Parameters in a flat vector: per layer, weights (column-major) then bias.
Vector flatten(const Mlp& net);
void unflatten(Mlp& net, const Vector& flat);
Vector flatten(const Gradients& grads);

struct AdamState {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Vector first_moment;
  Vector second_moment;
  std::int64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Bias-corrected adaptive-moment update, in place.
void adam_step(Eigen::Ref<Vector> params, const Vector& grads, AdamState& state);

struct FiniteDiffReport {
  bool pass = false;
  double max_relative_error = 0;
  std::size_t checked = 0;
  // Entries skipped because the +/- h probes straddle a ReLU kink.
  std::size_t kinks = 0;
};

// Central differences (step h) of the scalar probe sum_j (j+1) * y_j against
// backward(); `analytic` overrides the gradients under test.
FiniteDiffReport finite_diff_check(const Mlp& net, const Vector& input, double tolerance,
                                   double h = 1e-4, const Gradients* analytic = nullptr);
// The output gradient used by finite_diff_check.
Vector probe_gradient(int output_size);

// Text checkpoint: every double written as an exact hexadecimal float.
void write_mlp(std::ostream& out, const Mlp& net);
Mlp read_mlp(std::istream& in);
void write_adam(std::ostream& out, const AdamState& state);
AdamState read_adam(std::istream& in);

// Exact text round trip of a double ("0x1.8p+1").
std::string hex_double(double v);
// Throws CheckpointFormat.
double parse_hex_double(const std::string& token);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace sc2ba::nn
