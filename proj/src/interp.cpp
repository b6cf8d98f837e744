#include "fingervision/interp.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace fv {

double tps_kernel(double r2) { return r2 > 0.0 ? 0.5 * r2 * std::log(r2) : 0.0; }

Vec2 RbfModel::evaluate(const Point2& p) const {
  const double qx = (p.x - origin.x) / scale;
  const double qy = (p.y - origin.y) / scale;
  double ux = affine_x[0] + affine_x[1] * qx + affine_x[2] * qy;
  double uy = affine_y[0] + affine_y[1] * qx + affine_y[2] * qy;
  for (std::size_t j = 0; j < centers.size(); ++j) {
    const double dx = qx - centers[j].x;
    const double dy = qy - centers[j].y;
    const double phi = tps_kernel(dx * dx + dy * dy);
    ux += weights_x[j] * phi;
    uy += weights_y[j] * phi;
  }
  return {ux, uy};
}

namespace {

constexpr double kResidualTolerance = 1e-8;

/// phi(|q_i - c_j|) for every query/center pair, one vectorized column at a time.
Eigen::MatrixXd kernel_matrix(const Eigen::ArrayXd& qx, const Eigen::ArrayXd& qy,
                              const std::vector<Point2>& centers) {
  Eigen::MatrixXd k(qx.size(), static_cast<Eigen::Index>(centers.size()));
  for (std::size_t j = 0; j < centers.size(); ++j) {
    const Eigen::ArrayXd r2 = (qx - centers[j].x).square() + (qy - centers[j].y).square();
    k.col(static_cast<Eigen::Index>(j)) = (r2 > 0.0).select(0.5 * r2 * r2.log(), 0.0).matrix();
  }
  return k;
}

constexpr double kRegularization = 1e-10;

double relative_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& x, const Eigen::MatrixXd& b) {
  const double scale = b.cwiseAbs().maxCoeff();
  const double res = (a * x - b).cwiseAbs().maxCoeff();
  if (!std::isfinite(res)) return INFINITY;
  return scale > 0.0 ? res / scale : res;
}

}  // namespace

RbfModel rbf_fit(const DisplacementVectors& vectors) {
  if (vectors.vectors.size() != vectors.anchors.size() || vectors.validity.size() != vectors.anchors.size()) {
    throw Error(Errc::ShapeMismatch, "displacement vectors have inconsistent lengths");
  }
  std::vector<Point2> pts;
  std::vector<Vec2> vals;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (!vectors.validity[i]) continue;
    pts.push_back(vectors.anchors[i]);
    vals.push_back(vectors.vectors[i]);
  }
  const auto m = static_cast<Eigen::Index>(pts.size());
  if (m < 3) throw Error(Errc::TooFewAnchors, "need at least 3 valid anchors, got " + std::to_string(m));

  RbfModel model;
  double mx = 0.0, my = 0.0;
  for (const Point2& p : pts) {
    mx += p.x;
    my += p.y;
  }
  model.origin = {mx / m, my / m};
  double extent = 0.0;
  for (const Point2& p : pts) {
    extent = std::max({extent, std::abs(p.x - model.origin.x), std::abs(p.y - model.origin.y)});
  }
  if (extent <= 0.0) throw Error(Errc::DegenerateGeometry, "all anchors coincide");
  model.scale = extent;

  model.centers.resize(pts.size());
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point2 q{(pts[i].x - model.origin.x) / extent, (pts[i].y - model.origin.y) / extent};
    model.centers[i] = q;
    sxx += q.x * q.x;
    syy += q.y * q.y;
    sxy += q.x * q.y;
  }
  // Second-moment matrix of the centered anchors is singular iff they are collinear.
  const double det = sxx * syy - sxy * sxy;
  const double tr = sxx + syy;
  if (det <= 1e-12 * tr * tr) throw Error(Errc::DegenerateGeometry, "anchors are collinear");

  const Eigen::Index n = m + 3;
  Eigen::ArrayXd cx(m), cy(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    cx(i) = model.centers[i].x;
    cy(i) = model.centers[i].y;
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  a.topLeftCorner(m, m) = kernel_matrix(cx, cy, model.centers);
  a.block(0, m, m, 1).setOnes();
  a.block(0, m + 1, m, 1) = cx.matrix();
  a.block(0, m + 2, m, 1) = cy.matrix();
  a.block(m, 0, 3, m) = a.block(0, m, m, 3).transpose();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, 2);
  for (Eigen::Index i = 0; i < m; ++i) {
    b(i, 0) = vals[i].x;
    b(i, 1) = vals[i].y;
  }

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Eigen::MatrixXd x = lu.solve(b);
  // One round of iterative refinement.
  x += lu.solve(b - a * x);
  if (relative_residual(a, x, b) > kResidualTolerance) {
    Eigen::MatrixXd shifted = a;
    shifted.topLeftCorner(m, m).diagonal().array() += kRegularization;
    x = Eigen::PartialPivLU<Eigen::MatrixXd>(shifted).solve(b);
    if (relative_residual(shifted, x, b) > kResidualTolerance) {
      throw Error(Errc::SolveFailure, "thin-plate system is ill-conditioned beyond pivot tolerance");
    }
    model.regularized = true;
  }

  model.weights_x.resize(pts.size());
  model.weights_y.resize(pts.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    model.weights_x[i] = x(i, 0);
    model.weights_y[i] = x(i, 1);
  }
  for (int k = 0; k < 3; ++k) {
    model.affine_x[k] = x(m + k, 0);
    model.affine_y[k] = x(m + k, 1);
  }
  return model;
}

DeformationField evaluate_grid(const RbfModel& model, const Roi& roi, int rows, int cols) {
  DeformationField field(roi, rows, cols);
  const Eigen::Index n = static_cast<Eigen::Index>(rows) * cols;
  Eigen::ArrayXd qx(n), qy(n);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Point2 p = field.cell_center(r, c);
      qx(r * cols + c) = (p.x - model.origin.x) / model.scale;
      qy(r * cols + c) = (p.y - model.origin.y) / model.scale;
    }
  }
  const auto m = static_cast<Eigen::Index>(model.centers.size());
  Eigen::MatrixXd w(m, 2);
  for (Eigen::Index j = 0; j < m; ++j) {
    w(j, 0) = model.weights_x[j];
    w(j, 1) = model.weights_y[j];
  }
  Eigen::MatrixXd u = kernel_matrix(qx, qy, model.centers) * w;
  u.col(0).array() += model.affine_x[0] + model.affine_x[1] * qx + model.affine_x[2] * qy;
  u.col(1).array() += model.affine_y[0] + model.affine_y[1] * qx + model.affine_y[2] * qy;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) field.set(r, c, u(r * cols + c, 0), u(r * cols + c, 1));
  }
  return field;
}

}  // namespace fv
