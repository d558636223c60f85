#ifndef GRADMASK_NETS_H_
#define GRADMASK_NETS_H_

#include <optional>
#include <string>
#include <vector>

#include "gradmask/autodiff.h"
#include "gradmask/types.h"

namespace gradmask {

enum class HeadKind { kGaussianPolicy, kScalarValue, kMaskProbability };

std::string HeadName(HeadKind head);
HeadKind ParseHead(const std::string& name);

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
// Mask logits are clamped so sigmoid stays strictly inside (0, 1) in double.
inline constexpr double kMaskLogitLimit = 30.0;

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
  HeadKind head = HeadKind::kScalarValue;
  // Multiplier on the final layer's init range.
  double output_scale = 1.0;
};

// Victim actor and critic: 2 x 128.
MlpSpec VictimPolicySpec(int state_dim, int action_dim);
MlpSpec VictimValueSpec(int state_dim);
// Adversary mask and value nets: 3 x 64.
MlpSpec MaskNetSpec(int state_dim);
MlpSpec AdversaryValueSpec(int state_dim);

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
};

// Feed-forward net with tanh hidden layers and a linear last layer; the head
// determines how the last layer is read out. Only Gaussian-policy heads own
// log_std.
struct MlpParams {
  std::vector<DenseLayer> layers;
  HeadKind head = HeadKind::kScalarValue;
  Vec log_std;

  int input_dim() const;
  int output_dim() const;
  Eigen::Index parameter_count() const;

  // Throws DimensionError when layers do not chain, or log_std is out of
  // range or has the wrong length.
  void Validate() const;

  // Flat layout: per layer the weight (column-major) then the bias, and
  // log_std last. Matches ad::Gradient::wrt_params from BuildMlp.
  Vec Flatten() const;
  void Assign(const Vec& flat);
  void ClampLogStd();
};

bool operator==(const MlpParams& a, const MlpParams& b);

MlpParams InitParams(const MlpSpec& spec, Rng& rng);

struct PolicyOutput {
  ActionVec mean;
  Vec std;
};

struct MaskOutput {
  Vec probs;
};

struct ActionSample {
  ActionVec action;
  double log_prob = 0.0;
};

PolicyOutput PolicyForward(const MlpParams& params, const StateVec& s);
double ValueForward(const MlpParams& params, const StateVec& s);
MaskOutput MaskForward(const MlpParams& params, const StateVec& s);

// Batched variants; one state per row.
Mat PolicyMeanBatch(const MlpParams& params, const Mat& states);
Vec ValueBatch(const MlpParams& params, const Mat& states);

double GaussianLogProb(const PolicyOutput& out, const ActionVec& a);
ActionSample SampleAction(const PolicyOutput& out, Rng& rng);
// The mean together with its log density.
ActionSample DeterministicAction(const PolicyOutput& out);

// Appends the net to `graph`, registering parameters in Flatten() order.
// `output` is the raw last-layer activation (batch x output_dim); for mask
// heads that is the logit. `log_std` is set for Gaussian-policy heads.
struct MlpNodes {
  ad::NodeId output;
  std::optional<ad::NodeId> log_std;
};
MlpNodes BuildMlp(ad::Graph& graph, const MlpParams& params, ad::NodeId input);

}  // namespace gradmask

#endif  // GRADMASK_NETS_H_
