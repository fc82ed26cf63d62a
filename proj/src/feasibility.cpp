#include "opsys/feasibility.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace opsys {

double constraint_value(const FeasibilityConstraint& c, const std::vector<Matrix>& blocks) {
  Complex acc(0, 0);
  for (size_t b = 0; b < blocks.size(); ++b) acc += (c.coeff[b] * blocks[b]).trace();
  return acc.real();
}

namespace {

struct Packing {
  int free_dim;
  std::vector<int> dims;
  std::vector<int> offsets;  // per block, into packed vector
  int total;
};

Packing make_packing(const ConicProgram& p) {
  Packing pk;
  pk.free_dim = p.free_dim;
  pk.dims = p.block_dims;
  pk.total = p.free_dim;
  for (int d : p.block_dims) {
    pk.offsets.push_back(pk.total);
    pk.total += hvec_dim(d);
  }
  return pk;
}

// Projection onto the product of PSD cones; free coordinates untouched.
RealVector project_cone(const Packing& pk, const RealVector& x, double* min_eig_out) {
  RealVector out = x;
  double worst = 0.0;
  for (size_t b = 0; b < pk.dims.size(); ++b) {
    const int d = pk.dims[b];
    Matrix blk = unhvec(x.data() + pk.offsets[b], d);
    Eigen::SelfAdjointEigenSolver<Matrix> es(blk);
    worst = std::min(worst, d > 0 ? es.eigenvalues()(0) : 0.0);
    RealVector clipped = es.eigenvalues().cwiseMax(0.0);
    Matrix proj = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().adjoint();
    hvec_into(proj, out.data() + pk.offsets[b]);
  }
  if (min_eig_out) *min_eig_out = worst;
  return out;
}

// Eigen-clip every block to its negative part (exactly NSD direction).
RealVector clip_negative(const Packing& pk, const RealVector& x) {
  RealVector out = RealVector::Zero(x.size());
  for (size_t b = 0; b < pk.dims.size(); ++b) {
    const int d = pk.dims[b];
    Matrix blk = unhvec(x.data() + pk.offsets[b], d);
    Eigen::SelfAdjointEigenSolver<Matrix> es(blk);
    RealVector neg = es.eigenvalues().cwiseMin(0.0);
    Matrix proj = es.eigenvectors() * neg.asDiagonal() * es.eigenvectors().adjoint();
    hvec_into(proj, out.data() + pk.offsets[b]);
  }
  return out;
}

struct AffineProjector {
  RealMatrix a;
  RealVector rhs;
  Eigen::SelfAdjointEigenSolver<RealMatrix> gram_eig;
  RealVector inv_vals;  // pseudo-inverse eigenvalues of A A^T

  explicit AffineProjector(const RealMatrix& a_in, const RealVector& rhs_in)
      : a(a_in), rhs(rhs_in) {
    if (a.rows() == 0) return;
    RealMatrix gram = a * a.transpose();
    gram_eig.compute(gram);
    const double lmax = gram_eig.eigenvalues().size()
                            ? std::max(gram_eig.eigenvalues().maxCoeff(), 0.0)
                            : 0.0;
    const double cutoff = std::max(lmax, 1.0) * 1e-13;
    inv_vals = gram_eig.eigenvalues();
    for (int i = 0; i < inv_vals.size(); ++i)
      inv_vals(i) = inv_vals(i) > cutoff ? 1.0 / inv_vals(i) : 0.0;
  }

  RealVector pinv_apply(const RealVector& v) const {
    return gram_eig.eigenvectors() *
           (inv_vals.asDiagonal() * (gram_eig.eigenvectors().transpose() * v));
  }

  RealVector project(const RealVector& x) const {
    if (a.rows() == 0) return x;
    RealVector gap = a * x - rhs;
    return x - a.transpose() * pinv_apply(gap);
  }

  // least-squares multipliers for A^T y = v
  RealVector multipliers(const RealVector& v) const {
    return pinv_apply(a * v);
  }
};

}  // namespace

RealVector pack_blocks(const ConicProgram& p, const RealVector& free_part,
                       const std::vector<Matrix>& blocks) {
  Packing pk = make_packing(p);
  RealVector x = RealVector::Zero(pk.total);
  x.head(p.free_dim) = free_part;
  for (size_t b = 0; b < blocks.size(); ++b)
    hvec_into(blocks[b], x.data() + pk.offsets[b]);
  return x;
}

std::vector<Matrix> unpack_blocks(const ConicProgram& p, const RealVector& x) {
  Packing pk = make_packing(p);
  std::vector<Matrix> blocks;
  for (size_t b = 0; b < pk.dims.size(); ++b)
    blocks.push_back(unhvec(x.data() + pk.offsets[b], pk.dims[b]));
  return blocks;
}

ConicOutcome solve_conic(const ConicProgram& p, double tol, int max_iter) {
  if (tol <= 0) throw std::invalid_argument("solve_conic: tol must be positive");
  Packing pk = make_packing(p);
  if (p.a.rows() > 0 && p.a.cols() != pk.total)
    throw DimensionMismatchError("solve_conic: constraint row width mismatch");

  AffineProjector aff(p.a, p.rhs);
  ConicOutcome out;

  // Infeasibility of the affine system alone: least-squares residual that no
  // PSD condition can repair.
  if (p.a.rows() > 0) {
    RealVector x_ls = p.a.transpose() * aff.pinv_apply(p.rhs);
    RealVector gap = p.rhs - p.a * x_ls;
    const double gn = gap.norm();
    if (gn > tol) {
      out.status = FeasibilityStatus::Infeasible;
      out.dual = gap / gn;
      out.residual = gn;
      out.certificate_slack = 0.0;
      return out;
    }
  }

  RealVector x = RealVector::Zero(pk.total);
  RealVector corr = RealVector::Zero(pk.total);  // Dykstra correction, cone side
  const int check_every = 20;
  double scale = 1.0 + (p.rhs.size() ? p.rhs.cwiseAbs().maxCoeff() : 0.0);

  for (int it = 1; it <= max_iter; ++it) {
    RealVector y = aff.project(x);
    RealVector z = y + corr;
    double mineig = 0.0;
    RealVector xn = project_cone(pk, z, &mineig);
    corr = z - xn;
    x = xn;
    out.iterations = it;

    if (it % check_every == 0 || it == max_iter) {
      // feasible exit: affine point nearly PSD
      double y_mineig = 0.0;
      project_cone(pk, y, &y_mineig);
      if (y_mineig >= -tol) {
        out.status = FeasibilityStatus::Feasible;
        out.x = y;
        out.residual = std::max(0.0, -y_mineig);
        break;
      }
      // infeasible exit: clipped gap direction certifies separation
      RealVector v = clip_negative(pk, y - project_cone(pk, y, nullptr));
      const double vn = v.norm();
      if (vn > 1e-14 && p.a.rows() > 0) {
        RealVector vhat = v / vn;
        RealVector mu = aff.multipliers(vhat);
        const double slack = (p.a.transpose() * mu - vhat).norm();
        const double margin = mu.dot(p.rhs);
        if (slack <= tol * 1e-3 && margin >= tol * scale) {
          out.status = FeasibilityStatus::Infeasible;
          out.dual = mu;
          out.residual = margin;
          out.certificate_slack = slack;
          break;
        }
      }
    }
  }

  // best-effort objective descent inside the feasible region
  if (out.status == FeasibilityStatus::Feasible && p.objective.size() == pk.total) {
    RealVector best = out.x;
    double best_val = p.objective.dot(best);
    double step = scale / std::max(p.objective.norm(), 1e-12);
    RealVector cur = best;
    for (int t = 0; t < 200; ++t) {
      cur = aff.project(cur - step * p.objective);
      cur = project_cone(pk, cur, nullptr);
      RealVector y = aff.project(cur);
      double mineig = 0.0;
      project_cone(pk, y, &mineig);
      if (mineig >= -tol) {
        const double val = p.objective.dot(y);
        if (val < best_val - 1e-14) {
          best_val = val;
          best = y;
        } else {
          step *= 0.5;
          if (step < 1e-10 * scale) break;
        }
      } else {
        step *= 0.5;
        cur = best;
        if (step < 1e-10 * scale) break;
      }
    }
    out.x = best;
  }

  return out;
}

FeasibilityOutcome solve_feasibility(const FeasibilityProblem& p, double tol, int max_iter) {
  ConicProgram cp;
  cp.free_dim = 0;
  cp.block_dims = p.block_dims;
  Packing pk = make_packing(cp);

  cp.a.resize(static_cast<Eigen::Index>(p.constraints.size()), pk.total);
  cp.rhs.resize(static_cast<Eigen::Index>(p.constraints.size()));
  for (size_t i = 0; i < p.constraints.size(); ++i) {
    const auto& c = p.constraints[i];
    if (c.coeff.size() != p.block_dims.size())
      throw DimensionMismatchError("solve_feasibility: constraint block count mismatch");
    RealVector row = RealVector::Zero(pk.total);
    for (size_t b = 0; b < c.coeff.size(); ++b) {
      if (c.coeff[b].rows() != p.block_dims[b])
        throw DimensionMismatchError("solve_feasibility: constraint coefficient dimension");
      hvec_into(hermitian_part(c.coeff[b]), row.data() + pk.offsets[b]);
    }
    cp.a.row(static_cast<Eigen::Index>(i)) = row.transpose();
    cp.rhs(static_cast<Eigen::Index>(i)) = c.rhs;
  }
  if (!p.objective.empty()) {
    RealVector obj = RealVector::Zero(pk.total);
    for (size_t b = 0; b < p.objective.size(); ++b)
      hvec_into(hermitian_part(p.objective[b]), obj.data() + pk.offsets[b]);
    cp.objective = obj;
  }

  ConicOutcome co = solve_conic(cp, tol, max_iter);
  FeasibilityOutcome out;
  out.status = co.status;
  out.iterations = co.iterations;
  out.residual = co.residual;
  out.certificate_slack = co.certificate_slack;
  if (co.status == FeasibilityStatus::Feasible) out.witness = unpack_blocks(cp, co.x);
  if (co.status == FeasibilityStatus::Infeasible) out.dual_certificate = co.dual;
  return out;
}

}  // namespace opsys
