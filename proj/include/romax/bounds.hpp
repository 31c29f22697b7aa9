#pragma once

#include <vector>

#include "romax/common.hpp"
#include "romax/net.hpp"

namespace romax::bounds {

/// l_inf box over a network input. Only masked coordinates (the other
/// agents' action slice) carry nonzero radius. Construction clips
/// center +- radius to [-1,1] on masked coordinates and stores the
/// effective center/radius of the clipped interval.
struct PerturbationBox {
  Vec center;
  Vec radius;
  BoolArr mask;
};

/// Build a box with radius `epsilon` on masked coordinates, clipped to the
/// action range.
PerturbationBox make_box(const Vec& center, double epsilon, const BoolArr& mask);

/// As make_box with a per-coordinate radius vector.
PerturbationBox make_box(const Vec& center, const Vec& radius, const BoolArr& mask);

/// Per-layer interval bounds on hidden pre-activations z_l.
struct LayerBounds {
  std::vector<Vec> lower;
  std::vector<Vec> upper;
};

struct IbpResult {
  Vec output_lower;
  Vec output_upper;
  LayerBounds layers;
};

/// Interval bound propagation. Sound: forward(net, x) stays inside
/// [output_lower, output_upper] for every x in the box.
IbpResult ibp_bounds(const net::MlpNetwork& net, const PerturbationBox& box);

/// Affine lower bound output >= a . x + b over the whole box.
struct LinearBound {
  Vec a;
  double b = 0.0;
};

struct CrownResult {
  double lower = 0.0;
  LinearBound linear;
};

/// Backward linear bounding with the given (IBP) intermediate bounds.
/// Requires a scalar Identity output. The returned lower value equals the
/// exact box minimum of the linear form and never falls below the IBP
/// output lower bound.
CrownResult crown_lower(const net::MlpNetwork& net, const PerturbationBox& box,
                        const LayerBounds& layer_bounds);

/// beta * ibp_lower + (1 - beta) * crown_lower. beta outside [0,1] is an
/// argument error.
double combined_lower(const net::MlpNetwork& net, const PerturbationBox& box,
                      double beta);

struct CombinedGrad {
  double value = 0.0;
  /// d(value)/d(center), full input width, zero on masked coordinates.
  Vec center_grad;
  net::ParamGrads param_grads;
};

/// Value and gradients of combined_lower with respect to the box center
/// (unmasked coordinates) and the network parameters. Intermediate layer
/// bounds and relaxation shapes are treated as constants.
CombinedGrad combined_lower_grad(const net::MlpNetwork& net,
                                 const PerturbationBox& box, double beta);

/// Box point minimizing the CROWN linear form on the masked coordinates:
/// a*_j = center_j - radius_j * s(a_j), s = +1 if a_j > 0 else -1.
/// Returned in ascending coordinate order of the masked slice.
Vec inner_minimizer(const LinearBound& linear, const PerturbationBox& box);

/// Exact optimum of the triangle-relaxation linear program (chord upper
/// bound, x >= 0, x >= z, with z in its interval bounds). Test oracle for
/// tiny nets: total ReLU count must be <= 64. Stable units are fixed to
/// linear/zero before the LP is built.
double triangle_lp_lower(const net::MlpNetwork& net, const PerturbationBox& box,
                         const LayerBounds& layer_bounds);

// ---- Batched forms (columns are samples; one mask shared) ----

struct BoxBatch {
  Mat center;
  Mat radius;
  BoolArr mask;
};

BoxBatch make_box_batch(const Mat& centers, double epsilon, const BoolArr& mask);

struct LayerBoundsBatch {
  std::vector<Mat> lower;
  std::vector<Mat> upper;
};

struct IbpBatchResult {
  Mat output_lower;
  Mat output_upper;
  LayerBoundsBatch layers;
};

IbpBatchResult ibp_bounds_batch(const net::MlpNetwork& net, const BoxBatch& box);

struct CrownBatchResult {
  RowVec lower;
  Mat input_coeff;   // per-sample linear coefficients (input_dim x batch)
  RowVec offset;
};

CrownBatchResult crown_lower_batch(const net::MlpNetwork& net,
                                   const BoxBatch& box,
                                   const LayerBoundsBatch& layer_bounds);

RowVec combined_lower_batch(const net::MlpNetwork& net, const BoxBatch& box,
                            double beta);

struct CombinedGradBatch {
  RowVec value;
  Mat center_grad;  // input_dim x batch, zero on masked coordinates
};

/// Batched value + center gradient (no parameter gradients).
CombinedGradBatch combined_lower_center_grad_batch(const net::MlpNetwork& net,
                                                   const BoxBatch& box,
                                                   double beta);

}  // namespace romax::bounds
