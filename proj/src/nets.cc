#include "gradmask/nets.h"

#include <cmath>
#include <numbers>

#include "gradmask/errors.h"

namespace gradmask {
namespace {

MlpSpec MakeSpec(int in, std::vector<int> hidden, int out, HeadKind head) {
  MlpSpec spec;
  spec.input_dim = in;
  spec.hidden = std::move(hidden);
  spec.output_dim = out;
  spec.head = head;
  return spec;
}

void CheckState(const MlpParams& params, const StateVec& s) {
  if (s.size() != params.input_dim()) {
    throw DimensionError("state has length " + std::to_string(s.size()) +
                         ", net expects " + std::to_string(params.input_dim()));
  }
}

// Linear read-out of the last layer for a single state.
Vec Trunk(const MlpParams& params, const StateVec& s) {
  CheckState(params, s);
  Vec h = s;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const DenseLayer& layer = params.layers[i];
    Vec z = layer.weight * h + layer.bias;
    h = i == last ? z : Vec(z.array().tanh());
  }
  return h;
}

Mat TrunkBatch(const MlpParams& params, const Mat& states) {
  if (states.cols() != params.input_dim()) {
    throw DimensionError("state batch has " + std::to_string(states.cols()) +
                         " columns, net expects " +
                         std::to_string(params.input_dim()));
  }
  Mat h = states;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const DenseLayer& layer = params.layers[i];
    Mat z = h * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    h = i == last ? z : Mat(z.array().tanh());
  }
  return h;
}

}  // namespace

std::string HeadName(HeadKind head) {
  switch (head) {
    case HeadKind::kGaussianPolicy:
      return "gaussian-policy";
    case HeadKind::kScalarValue:
      return "scalar-value";
    case HeadKind::kMaskProbability:
      return "mask-probability";
  }
  return "unknown";
}

HeadKind ParseHead(const std::string& name) {
  if (name == "gaussian-policy") return HeadKind::kGaussianPolicy;
  if (name == "scalar-value") return HeadKind::kScalarValue;
  if (name == "mask-probability") return HeadKind::kMaskProbability;
  throw std::invalid_argument("unknown head kind: " + name);
}

MlpSpec VictimPolicySpec(int state_dim, int action_dim) {
  MlpSpec spec = MakeSpec(state_dim, {128, 128}, action_dim,
                          HeadKind::kGaussianPolicy);
  // Near-zero initial actions.
  spec.output_scale = 0.01;
  return spec;
}

MlpSpec VictimValueSpec(int state_dim) {
  return MakeSpec(state_dim, {128, 128}, 1, HeadKind::kScalarValue);
}

MlpSpec MaskNetSpec(int state_dim) {
  return MakeSpec(state_dim, {64, 64, 64}, state_dim,
                  HeadKind::kMaskProbability);
}

MlpSpec AdversaryValueSpec(int state_dim) {
  return MakeSpec(state_dim, {64, 64, 64}, 1, HeadKind::kScalarValue);
}

int MlpParams::input_dim() const {
  return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols());
}

int MlpParams::output_dim() const {
  return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows());
}

Eigen::Index MlpParams::parameter_count() const {
  Eigen::Index n = log_std.size();
  for (const DenseLayer& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void MlpParams::Validate() const {
  if (layers.empty()) throw DimensionError("net has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const DenseLayer& l = layers[i];
    if (l.bias.size() != l.weight.rows()) {
      throw DimensionError("layer " + std::to_string(i) +
                           ": bias length differs from weight rows");
    }
    if (i + 1 < layers.size() && l.weight.rows() != layers[i + 1].weight.cols()) {
      throw DimensionError("layer " + std::to_string(i) +
                           " output does not match next layer input");
    }
  }
  switch (head) {
    case HeadKind::kGaussianPolicy:
      if (log_std.size() != output_dim()) {
        throw DimensionError("log_std length must equal action dim");
      }
      if ((log_std.array() < kLogStdMin).any() ||
          (log_std.array() > kLogStdMax).any()) {
        throw DimensionError("log_std outside [-5, 2]");
      }
      break;
    case HeadKind::kScalarValue:
      if (output_dim() != 1) throw DimensionError("value head must be scalar");
      [[fallthrough]];
    case HeadKind::kMaskProbability:
      if (log_std.size() != 0) throw DimensionError("only policies own log_std");
      if (head == HeadKind::kMaskProbability && output_dim() != input_dim()) {
        throw DimensionError("mask head output must equal state dim");
      }
      break;
  }
}

Vec MlpParams::Flatten() const {
  Vec flat(parameter_count());
  Eigen::Index o = 0;
  for (const DenseLayer& l : layers) {
    flat.segment(o, l.weight.size()) =
        Eigen::Map<const Vec>(l.weight.data(), l.weight.size());
    o += l.weight.size();
    flat.segment(o, l.bias.size()) = l.bias;
    o += l.bias.size();
  }
  flat.segment(o, log_std.size()) = log_std;
  return flat;
}

void MlpParams::Assign(const Vec& flat) {
  if (flat.size() != parameter_count()) {
    throw DimensionError("flat parameter vector has wrong length");
  }
  Eigen::Index o = 0;
  for (DenseLayer& l : layers) {
    Eigen::Map<Vec>(l.weight.data(), l.weight.size()) =
        flat.segment(o, l.weight.size());
    o += l.weight.size();
    l.bias = flat.segment(o, l.bias.size());
    o += l.bias.size();
  }
  log_std = flat.segment(o, log_std.size());
}

void MlpParams::ClampLogStd() {
  log_std = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

bool operator==(const MlpParams& a, const MlpParams& b) {
  if (a.head != b.head || a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const DenseLayer& x = a.layers[i];
    const DenseLayer& y = b.layers[i];
    if (x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols() ||
        x.weight != y.weight || x.bias != y.bias) {
      return false;
    }
  }
  return a.log_std.size() == b.log_std.size() && a.log_std == b.log_std;
}

MlpParams InitParams(const MlpSpec& spec, Rng& rng) {
  if (spec.input_dim <= 0 || spec.output_dim <= 0) {
    throw DimensionError("net dims must be positive");
  }
  MlpParams params;
  params.head = spec.head;
  std::vector<int> dims{spec.input_dim};
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  dims.push_back(spec.output_dim);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int in = dims[i];
    const int out = dims[i + 1];
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    if (i + 2 == dims.size()) bound *= spec.output_scale;
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer;
    layer.weight.resize(out, in);
    // Row-major draw order so the init does not depend on Eigen's layout.
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weight(r, c) = u(rng);
    }
    layer.bias = Vec::Zero(out);
    params.layers.push_back(std::move(layer));
  }
  if (spec.head == HeadKind::kGaussianPolicy) {
    params.log_std = Vec::Zero(spec.output_dim);
  }
  params.Validate();
  return params;
}

PolicyOutput PolicyForward(const MlpParams& params, const StateVec& s) {
  PolicyOutput out;
  out.mean = Trunk(params, s);
  out.std = params.log_std.array().exp();
  return out;
}

double ValueForward(const MlpParams& params, const StateVec& s) {
  return Trunk(params, s)[0];
}

MaskOutput MaskForward(const MlpParams& params, const StateVec& s) {
  const Vec logits = Trunk(params, s).cwiseMax(-kMaskLogitLimit).cwiseMin(kMaskLogitLimit);
  return MaskOutput{logits.unaryExpr(&Sigmoid)};
}

Mat PolicyMeanBatch(const MlpParams& params, const Mat& states) {
  return TrunkBatch(params, states);
}

Vec ValueBatch(const MlpParams& params, const Mat& states) {
  return TrunkBatch(params, states).col(0);
}

double GaussianLogProb(const PolicyOutput& out, const ActionVec& a) {
  if (a.size() != out.mean.size()) throw DimensionError("action length mismatch");
  const Vec z = (a - out.mean).cwiseQuotient(out.std);
  const double k = static_cast<double>(a.size());
  return -0.5 * z.squaredNorm() - out.std.array().log().sum() -
         0.5 * k * std::log(2.0 * std::numbers::pi);
}

ActionSample SampleAction(const PolicyOutput& out, Rng& rng) {
  ActionSample sample;
  sample.action = out.mean + out.std.cwiseProduct(StandardNormal(out.mean.size(), rng));
  sample.log_prob = GaussianLogProb(out, sample.action);
  return sample;
}

ActionSample DeterministicAction(const PolicyOutput& out) {
  return ActionSample{out.mean, GaussianLogProb(out, out.mean)};
}

MlpNodes BuildMlp(ad::Graph& graph, const MlpParams& params, ad::NodeId input) {
  params.Validate();
  if (graph.Cols(input) != params.input_dim()) {
    throw DimensionError("graph input width does not match net input dim");
  }
  ad::NodeId h = input;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const DenseLayer& layer = params.layers[i];
    ad::NodeId w = graph.Param(layer.weight);
    ad::NodeId b = graph.ParamRow(layer.bias);
    h = graph.Affine(h, w, b);
    if (i != last) h = graph.Tanh(h);
  }
  MlpNodes nodes{h, std::nullopt};
  if (params.head == HeadKind::kGaussianPolicy) {
    nodes.log_std = graph.ParamRow(params.log_std);
  }
  graph.SetOutput(h);
  return nodes;
}

}  // namespace gradmask
