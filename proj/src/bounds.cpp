#include "romax/bounds.hpp"

#include "romax/lp.hpp"

#include <cmath>
#include <limits>

namespace romax::bounds {

namespace {

using net::MlpNetwork;
using net::OutputActivation;

void check_box(const MlpNetwork& net, int center_rows, int mask_size) {
  require(center_rows == net.input_dim(),
          "box center width " + std::to_string(center_rows) +
              " != network input dim " + std::to_string(net.input_dim()));
  require(mask_size == center_rows, "box mask width mismatch");
}

void check_scalar_identity(const MlpNetwork& net, const char* op) {
  require(net.output_dim() == 1 &&
              net.output_activation == OutputActivation::kIdentity,
          std::string(op) + " requires a scalar Identity-output network");
}

}  // namespace

PerturbationBox make_box(const Vec& center, double epsilon, const BoolArr& mask) {
  require(epsilon >= 0.0, "box radius must be nonnegative");
  Vec radius = Vec::Zero(center.size());
  for (Eigen::Index i = 0; i < center.size(); ++i)
    if (mask(i)) radius(i) = epsilon;
  return make_box(center, radius, mask);
}

PerturbationBox make_box(const Vec& center, const Vec& radius, const BoolArr& mask) {
  require(center.size() == radius.size() && center.size() == mask.size(),
          "box center/radius/mask widths differ");
  PerturbationBox box;
  box.center = center;
  box.radius = Vec::Zero(center.size());
  box.mask = mask;
  for (Eigen::Index i = 0; i < center.size(); ++i) {
    require(radius(i) >= 0.0, "box radius must be nonnegative");
    if (!mask(i)) continue;
    // Clip the interval to the feasible action range, then store its
    // effective center/radius.
    const double lo = std::clamp(center(i) - radius(i), -1.0, 1.0);
    const double hi = std::clamp(center(i) + radius(i), -1.0, 1.0);
    box.center(i) = 0.5 * (lo + hi);
    box.radius(i) = 0.5 * (hi - lo);
  }
  return box;
}

BoxBatch make_box_batch(const Mat& centers, double epsilon, const BoolArr& mask) {
  require(centers.rows() == mask.size(), "box mask width mismatch");
  require(epsilon >= 0.0, "box radius must be nonnegative");
  BoxBatch box;
  box.center = centers;
  box.radius = Mat::Zero(centers.rows(), centers.cols());
  box.mask = mask;
  for (Eigen::Index i = 0; i < centers.rows(); ++i) {
    if (!mask(i)) continue;
    for (Eigen::Index k = 0; k < centers.cols(); ++k) {
      const double lo = std::clamp(centers(i, k) - epsilon, -1.0, 1.0);
      const double hi = std::clamp(centers(i, k) + epsilon, -1.0, 1.0);
      box.center(i, k) = 0.5 * (lo + hi);
      box.radius(i, k) = 0.5 * (hi - lo);
    }
  }
  return box;
}

IbpBatchResult ibp_bounds_batch(const MlpNetwork& net, const BoxBatch& box) {
  check_box(net, static_cast<int>(box.center.rows()),
            static_cast<int>(box.mask.size()));
  const int L = net.num_layers();
  IbpBatchResult res;
  res.layers.lower.resize(L - 1);
  res.layers.upper.resize(L - 1);

  Mat x_lo = box.center - box.radius;
  Mat x_hi = box.center + box.radius;
  for (int l = 0; l < L; ++l) {
    const Mat w_pos = net.weights[l].cwiseMax(0.0);
    const Mat w_neg = net.weights[l].cwiseMin(0.0);
    Mat z_lo = w_pos * x_lo + w_neg * x_hi;
    Mat z_hi = w_pos * x_hi + w_neg * x_lo;
    z_lo.colwise() += net.biases[l];
    z_hi.colwise() += net.biases[l];
    if (l < L - 1) {
      res.layers.lower[l] = z_lo;
      res.layers.upper[l] = z_hi;
      x_lo = z_lo.cwiseMax(0.0);
      x_hi = z_hi.cwiseMax(0.0);
    } else if (net.output_activation == OutputActivation::kTanh) {
      res.output_lower = z_lo.array().tanh().matrix();
      res.output_upper = z_hi.array().tanh().matrix();
    } else {
      res.output_lower = std::move(z_lo);
      res.output_upper = std::move(z_hi);
    }
  }
  return res;
}

IbpResult ibp_bounds(const MlpNetwork& net, const PerturbationBox& box) {
  BoxBatch bb{box.center, box.radius, box.mask};
  IbpBatchResult batch = ibp_bounds_batch(net, bb);
  IbpResult res;
  res.output_lower = batch.output_lower.col(0);
  res.output_upper = batch.output_upper.col(0);
  for (auto& m : batch.layers.lower) res.layers.lower.push_back(m.col(0));
  for (auto& m : batch.layers.upper) res.layers.upper.push_back(m.col(0));
  return res;
}

namespace {

// Per-unit linear relaxation of relu(z) on [lo, hi], chosen so the final
// backward bound never falls below the IBP bound:
//   stable on  (lo >= 0): x = z
//   stable off (hi <= 0): x = 0
//   unstable, coeff >= 0: lower line x >= 0
//   unstable, coeff <  0: upper chord x <= hi (z - lo) / (hi - lo)
inline void relaxation_line(double coeff, double lo, double hi, double& m,
                            double& t) {
  if (lo >= 0.0) {
    m = 1.0;
    t = 0.0;
  } else if (hi <= 0.0) {
    m = 0.0;
    t = 0.0;
  } else if (coeff >= 0.0) {
    m = 0.0;
    t = 0.0;
  } else {
    m = hi / (hi - lo);
    t = -hi * lo / (hi - lo);
  }
}

}  // namespace

CrownBatchResult crown_lower_batch(const MlpNetwork& net, const BoxBatch& box,
                                   const LayerBoundsBatch& layer_bounds) {
  check_scalar_identity(net, "crown_lower");
  check_box(net, static_cast<int>(box.center.rows()),
            static_cast<int>(box.mask.size()));
  const int L = net.num_layers();
  require(static_cast<int>(layer_bounds.lower.size()) == L - 1 &&
              static_cast<int>(layer_bounds.upper.size()) == L - 1,
          "crown_lower: layer bounds do not match network depth");
  const Eigen::Index batch = box.center.cols();

  // Backward pass: maintain output >= sum_j A(j,k) * a_l(j) + offset(k).
  Mat coeff = net.weights[L - 1].transpose().replicate(1, batch);
  RowVec offset = RowVec::Constant(batch, net.biases[L - 1](0));

  for (int l = L - 2; l >= 0; --l) {
    const Mat& lo = layer_bounds.lower[l];
    const Mat& hi = layer_bounds.upper[l];
    require(lo.rows() == coeff.rows() && lo.cols() == batch,
            "crown_lower: layer bound shape mismatch");
    // Elementwise relaxation line per unit and sample.
    Mat a_z(coeff.rows(), batch);
    for (Eigen::Index k = 0; k < batch; ++k) {
      for (Eigen::Index j = 0; j < coeff.rows(); ++j) {
        double m, t;
        relaxation_line(coeff(j, k), lo(j, k), hi(j, k), m, t);
        a_z(j, k) = coeff(j, k) * m;
        offset(k) += coeff(j, k) * t;
      }
    }
    offset += net.biases[l].transpose() * a_z;
    coeff = net.weights[l].transpose() * a_z;
  }

  CrownBatchResult res;
  res.input_coeff = std::move(coeff);
  res.offset = offset;
  res.lower = offset + (res.input_coeff.cwiseProduct(box.center) -
                        res.input_coeff.cwiseAbs().cwiseProduct(box.radius))
                           .colwise()
                           .sum();
  return res;
}

CrownResult crown_lower(const MlpNetwork& net, const PerturbationBox& box,
                        const LayerBounds& layer_bounds) {
  BoxBatch bb{box.center, box.radius, box.mask};
  LayerBoundsBatch lb;
  for (const auto& v : layer_bounds.lower) lb.lower.push_back(v);
  for (const auto& v : layer_bounds.upper) lb.upper.push_back(v);
  CrownBatchResult batch = crown_lower_batch(net, bb, lb);
  CrownResult res;
  res.lower = batch.lower(0);
  res.linear.a = batch.input_coeff.col(0);
  res.linear.b = batch.offset(0);
  return res;
}

namespace {

void check_beta(double beta) {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw std::invalid_argument("beta must lie in [0,1]");
}

}  // namespace

RowVec combined_lower_batch(const MlpNetwork& net, const BoxBatch& box,
                            double beta) {
  check_beta(beta);
  check_scalar_identity(net, "combined_lower");
  IbpBatchResult ibp = ibp_bounds_batch(net, box);
  if (beta == 1.0) return ibp.output_lower.row(0);
  CrownBatchResult crown = crown_lower_batch(net, box, ibp.layers);
  return beta * ibp.output_lower.row(0) + (1.0 - beta) * crown.lower;
}

double combined_lower(const MlpNetwork& net, const PerturbationBox& box,
                      double beta) {
  BoxBatch bb{box.center, box.radius, box.mask};
  return combined_lower_batch(net, bb, beta)(0);
}

namespace {

// Adjoint pass through the IBP recursion for the scalar lower output
// bound. Accumulates center gradients and, if `params` is non-null,
// parameter gradients. Branch masks (ReLU on/off, weight signs) are
// frozen at their evaluated values.
Mat ibp_lower_adjoint(const MlpNetwork& net, const BoxBatch& box,
                      const LayerBoundsBatch& layers,
                      net::ParamGrads* params) {
  const int L = net.num_layers();
  const Eigen::Index batch = box.center.cols();

  // Recreate the post-activation interval values (cheap).
  std::vector<Mat> x_lo(L), x_hi(L);
  x_lo[0] = box.center - box.radius;
  x_hi[0] = box.center + box.radius;
  for (int l = 1; l < L; ++l) {
    x_lo[l] = layers.lower[l - 1].cwiseMax(0.0);
    x_hi[l] = layers.upper[l - 1].cwiseMax(0.0);
  }

  Mat g_zlo = Mat::Ones(1, batch);
  Mat g_zhi = Mat::Zero(1, batch);
  Mat grad_center;
  for (int l = L - 1; l >= 0; --l) {
    const Mat& w = net.weights[l];
    if (params) {
      const Mat pos_mask = (w.array() > 0.0).cast<double>();
      params->dw[l] += pos_mask.cwiseProduct(g_zlo * x_lo[l].transpose() +
                                             g_zhi * x_hi[l].transpose()) +
                       (1.0 - pos_mask.array())
                           .matrix()
                           .cwiseProduct(g_zlo * x_hi[l].transpose() +
                                         g_zhi * x_lo[l].transpose());
      params->db[l] += (g_zlo + g_zhi).rowwise().sum();
    }
    const Mat w_pos = w.cwiseMax(0.0);
    const Mat w_neg = w.cwiseMin(0.0);
    Mat g_xlo = w_pos.transpose() * g_zlo + w_neg.transpose() * g_zhi;
    Mat g_xhi = w_neg.transpose() * g_zlo + w_pos.transpose() * g_zhi;
    if (l == 0) {
      grad_center = g_xlo + g_xhi;
      break;
    }
    g_zlo = g_xlo.cwiseProduct(
        (layers.lower[l - 1].array() > 0.0).cast<double>().matrix());
    g_zhi = g_xhi.cwiseProduct(
        (layers.upper[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return grad_center;
}

}  // namespace

CombinedGradBatch combined_lower_center_grad_batch(const MlpNetwork& net,
                                                   const BoxBatch& box,
                                                   double beta) {
  check_beta(beta);
  check_scalar_identity(net, "combined_lower_grad");
  IbpBatchResult ibp = ibp_bounds_batch(net, box);

  CombinedGradBatch res;
  Mat grad = Mat::Zero(net.input_dim(), box.center.cols());
  if (beta > 0.0) grad = beta * ibp_lower_adjoint(net, box, ibp.layers, nullptr);
  if (beta < 1.0) {
    CrownBatchResult crown = crown_lower_batch(net, box, ibp.layers);
    grad += (1.0 - beta) * crown.input_coeff;
    res.value = beta * ibp.output_lower.row(0) + (1.0 - beta) * crown.lower;
  } else {
    res.value = ibp.output_lower.row(0);
  }
  for (Eigen::Index i = 0; i < grad.rows(); ++i)
    if (box.mask(i)) grad.row(i).setZero();
  res.center_grad = std::move(grad);
  return res;
}

CombinedGrad combined_lower_grad(const MlpNetwork& net,
                                 const PerturbationBox& box, double beta) {
  check_beta(beta);
  check_scalar_identity(net, "combined_lower_grad");
  BoxBatch bb{box.center, box.radius, box.mask};
  IbpBatchResult ibp = ibp_bounds_batch(net, bb);
  const int L = net.num_layers();

  CombinedGrad res;
  res.param_grads = net::zero_grads(net);
  Vec grad_center = Vec::Zero(net.input_dim());
  double ibp_value = ibp.output_lower(0, 0);

  if (beta > 0.0) {
    net::ParamGrads ibp_params = net::zero_grads(net);
    Mat g = ibp_lower_adjoint(net, bb, ibp.layers, &ibp_params);
    grad_center += beta * g.col(0);
    for (int l = 0; l < L; ++l) {
      res.param_grads.dw[l] += beta * ibp_params.dw[l];
      res.param_grads.db[l] += beta * ibp_params.db[l];
    }
  }

  if (beta < 1.0) {
    // Forward replay of the backward CROWN pass, recording each stage, then
    // its adjoint. Relaxation lines (m, t) are constants here.
    CrownBatchResult crown = crown_lower_batch(net, bb, ibp.layers);
    std::vector<Vec> coeff_in(L);   // A over a_l entering stage l
    std::vector<Vec> coeff_z(L);    // A over z_l after the relaxation
    std::vector<Vec> line_m(L), line_t(L);
    coeff_in[L - 1] = net.weights[L - 1].transpose().col(0);
    for (int l = L - 2; l >= 0; --l) {
      const Vec& prev = coeff_in[l + 1];
      const Eigen::Index n = prev.size();
      line_m[l].resize(n);
      line_t[l].resize(n);
      Vec az(n);
      for (Eigen::Index j = 0; j < n; ++j) {
        double m, t;
        relaxation_line(prev(j), ibp.layers.lower[l](j, 0),
                        ibp.layers.upper[l](j, 0), m, t);
        line_m[l](j) = m;
        line_t[l](j) = t;
        az(j) = prev(j) * m;
      }
      coeff_z[l] = az;
      coeff_in[l] = net.weights[l].transpose() * az;
    }

    const double w1m = 1.0 - beta;
    // d(value)/d(final input coefficients).
    Vec g_coeff = bb.center.col(0);
    for (Eigen::Index j = 0; j < g_coeff.size(); ++j) {
      const double a = coeff_in[0](j);
      const double sign = a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
      g_coeff(j) -= sign * bb.radius(j, 0);
    }
    for (int l = 0; l <= L - 2; ++l) {
      res.param_grads.dw[l] += w1m * coeff_z[l] * g_coeff.transpose();
      res.param_grads.db[l] += w1m * coeff_z[l];
      Vec g_az = net.weights[l] * g_coeff + net.biases[l];
      g_coeff = g_az.cwiseProduct(line_m[l]) + line_t[l];
    }
    res.param_grads.dw[L - 1] += w1m * g_coeff.transpose();
    res.param_grads.db[L - 1](0) += w1m;

    grad_center += w1m * crown.input_coeff.col(0);
    res.value = beta * ibp_value + (1.0 - beta) * crown.lower(0);
  } else {
    res.value = ibp_value;
  }

  for (Eigen::Index i = 0; i < grad_center.size(); ++i)
    if (box.mask(i)) grad_center(i) = 0.0;
  res.center_grad = grad_center;
  return res;
}

Vec inner_minimizer(const LinearBound& linear, const PerturbationBox& box) {
  require(linear.a.size() == box.center.size(),
          "inner_minimizer: linear bound width mismatch");
  std::vector<double> vals;
  for (Eigen::Index i = 0; i < box.center.size(); ++i) {
    if (!box.mask(i)) continue;
    const double s = linear.a(i) > 0.0 ? 1.0 : -1.0;
    vals.push_back(box.center(i) - box.radius(i) * s);
  }
  return Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

double triangle_lp_lower(const MlpNetwork& net, const PerturbationBox& box,
                         const LayerBounds& layer_bounds) {
  check_scalar_identity(net, "triangle_lp_lower");
  check_box(net, static_cast<int>(box.center.size()),
            static_cast<int>(box.mask.size()));
  const int L = net.num_layers();
  require(static_cast<int>(layer_bounds.lower.size()) == L - 1,
          "triangle_lp_lower: layer bounds do not match network depth");
  int relu_count = 0;
  for (int l = 1; l < L; ++l) relu_count += net.layer_dims[l];
  require(relu_count <= 64, "triangle_lp_lower: oracle limited to <=64 ReLUs");

  // Variable layout: input coords, then per hidden layer its z units, then
  // x vars for its unstable units.
  const int n0 = net.input_dim();
  int n_vars = n0;
  std::vector<int> z_offset(L - 1), x_offset(L - 1);
  // unit state per hidden layer: 0 = off, 1 = on, 2 = unstable
  std::vector<std::vector<int>> state(L - 1);
  std::vector<std::vector<int>> x_index(L - 1);
  int n_ineq = 0;
  for (int l = 0; l < L - 1; ++l) {
    const Eigen::Index n = layer_bounds.lower[l].size();
    z_offset[l] = n_vars;
    n_vars += static_cast<int>(n);
    x_offset[l] = n_vars;
    state[l].resize(n);
    x_index[l].assign(n, -1);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double lo = layer_bounds.lower[l](j);
      const double hi = layer_bounds.upper[l](j);
      if (lo >= 0.0)
        state[l][j] = 1;
      else if (hi <= 0.0)
        state[l][j] = 0;
      else {
        state[l][j] = 2;
        x_index[l][j] = n_vars++;
        n_ineq += 2;
      }
    }
  }
  int n_eq = 0;
  for (int l = 0; l < L - 1; ++l) n_eq += net.layer_dims[l + 1];

  lp::Problem prob;
  prob.a = Mat::Zero(n_eq + n_ineq, n_vars);
  prob.b = Vec::Zero(n_eq + n_ineq);
  prob.rel.assign(n_eq + n_ineq, lp::Rel::kEq);
  prob.c = Vec::Zero(n_vars);
  prob.lo = Vec::Constant(n_vars, -std::numeric_limits<double>::infinity());
  prob.hi = Vec::Constant(n_vars, std::numeric_limits<double>::infinity());

  for (int i = 0; i < n0; ++i) {
    prob.lo[i] = box.center(i) - box.radius(i);
    prob.hi[i] = box.center(i) + box.radius(i);
  }
  for (int l = 0; l < L - 1; ++l) {
    const Eigen::Index n = layer_bounds.lower[l].size();
    for (Eigen::Index j = 0; j < n; ++j) {
      prob.lo[z_offset[l] + j] = layer_bounds.lower[l](j);
      prob.hi[z_offset[l] + j] = layer_bounds.upper[l](j);
      if (state[l][j] == 2) {
        prob.lo[x_index[l][j]] = 0.0;
        prob.hi[x_index[l][j]] = std::max(0.0, layer_bounds.upper[l](j));
      }
    }
  }

  // Column of the variable feeding layer l's unit j (or -1 for constant 0).
  auto input_var = [&](int l, Eigen::Index j) -> int {
    if (l == 0) return static_cast<int>(j);
    const int hl = l - 1;
    if (state[hl][j] == 1) return z_offset[hl] + static_cast<int>(j);
    if (state[hl][j] == 2) return x_index[hl][j];
    return -1;
  };

  int row = 0;
  for (int l = 0; l < L - 1; ++l) {
    const Mat& w = net.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i, ++row) {
      prob.a(row, z_offset[l] + i) = 1.0;
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        const int v = input_var(l, j);
        if (v >= 0) prob.a(row, v) -= w(i, j);
      }
      prob.b[row] = net.biases[l](i);
    }
  }
  for (int l = 0; l < L - 1; ++l) {
    const Eigen::Index n = layer_bounds.lower[l].size();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (state[l][j] != 2) continue;
      const double lo = layer_bounds.lower[l](j);
      const double hi = layer_bounds.upper[l](j);
      // x - z >= 0
      prob.a(row, x_index[l][j]) = 1.0;
      prob.a(row, z_offset[l] + j) = -1.0;
      prob.rel[row] = lp::Rel::kGe;
      ++row;
      // (hi - lo) x - hi z <= -hi lo
      prob.a(row, x_index[l][j]) = hi - lo;
      prob.a(row, z_offset[l] + j) = -hi;
      prob.b[row] = -hi * lo;
      prob.rel[row] = lp::Rel::kLe;
      ++row;
    }
  }

  // Objective: final layer over its inputs.
  const Mat& w_out = net.weights[L - 1];
  double const_term = net.biases[L - 1](0);
  for (Eigen::Index j = 0; j < w_out.cols(); ++j) {
    const int v = input_var(L - 1, j);
    if (v >= 0) prob.c[v] = w_out(0, j);
  }

  lp::Solution sol = lp::solve(prob);
  if (sol.status != lp::Status::kOptimal)
    throw std::runtime_error(
        "triangle_lp_lower: relaxation LP infeasible or unbounded (internal "
        "error)");
  return sol.objective + const_term;
}

}  // namespace romax::bounds
