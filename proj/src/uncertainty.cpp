#include "tubempc/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include "tubempc/solvers.hpp"

namespace tubempc {

namespace {

double metric_of(const StabilizabilityCertificate& cert, const Vector& d) {
  if (cert.shape == VdeltaShape::Quadratic) return std::sqrt(std::max(d.dot(cert.P * d), 0.0));
  double g = 0.0;
  for (int i = 0; i < cert.rows.rows(); ++i) g = std::max(g, cert.rows.row(i).dot(d));
  return g;
}

Matrix sqrt_of(const Matrix& P) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(P);
  return es.operatorSqrt();
}

std::vector<Vector> d_vertices_or_zero(const LpvUncertainty& um, int /*n*/) {
  if (um.E.size() == 0 || um.d_vertices.empty()) return {Vector::Zero(0)};
  return um.d_vertices;
}

// Vertices of the affine part of Z for exact sup computation; empty when the
// dimension is too large or non-affine rows are present.
std::vector<Vector> z_vertices(const ConstraintSet& cs, int n, int m) {
  if (n + m > 4) return {};
  Matrix rows(0, n + m);
  for (const auto& c : cs.items) {
    if (const auto* a = std::get_if<AffineConstraint>(&c)) {
      rows.conservativeResize(rows.rows() + 1, n + m);
      rows.row(rows.rows() - 1).head(n) = a->Lx.transpose();
      rows.row(rows.rows() - 1).tail(m) = a->Lu.transpose();
    } else {
      return {};
    }
  }
  if (rows.rows() < n + m) return {};
  return polytope_vertices(rows);
}

std::vector<std::pair<Vector, Vector>> sample_z(const ConstraintSet& cs, int n, int m,
                                                const SampleSpec& spec) {
  std::vector<std::pair<Vector, Vector>> out;
  BoxBounds box = affine_bounding_box(cs, n, m);
  for (int j = 0; j < box.lo.size(); ++j) {
    if (!std::isfinite(box.lo[j])) box.lo[j] = -1.0;
    if (!std::isfinite(box.hi[j])) box.hi[j] = 1.0;
  }
  Rng rng(spec.seed);
  out.emplace_back(Vector::Zero(n), Vector::Zero(m));
  while (static_cast<int>(out.size()) < spec.samples) {
    Vector z(n), v(m);
    for (int j = 0; j < n; ++j) z[j] = rng.uniform(box.lo[j], box.hi[j]);
    for (int j = 0; j < m; ++j) v[j] = rng.uniform(box.lo[n + j], box.hi[n + j]);
    bool ok = true;
    for (int j = 0; j < cs.size() && ok; ++j)
      if (!std::holds_alternative<HoelderConstraint>(cs.items[j]))
        ok = eval_constraint(cs, j, z, v) <= 0.0;
    if (ok) out.emplace_back(z, v);
  }
  return out;
}

}  // namespace

double TubeBound::eval(const Vector& x, const Vector& u, double c) const {
  switch (kind) {
    case Kind::Constant:
      return w_bar;
    case Kind::AffineInC:
      return base(x, u) + L_w * c;
    case Kind::VertexMax: {
      double best = -kInf;
      for (int r = 0; r < row_b.size(); ++r)
        best = std::max(best, row_ax.row(r).dot(x) + row_au.row(r).dot(u) + row_b[r]);
      return best + L_w * c;
    }
    case Kind::EllipsoidSup: {
      double best = 0.0;
      for (size_t i = 0; i < ell_Mx.size(); ++i) {
        Vector q = ell_Mx[i] * x + ell_Mu[i] * u;
        if (!ell_off.empty()) q += ell_off[i];
        best = std::max(best, std::sqrt(std::max(q.dot(P * q), 0.0)));
      }
      return best + d_bar + L_w * c;
    }
  }
  return 0.0;
}

double TubeBound::eval_smoothed(const Vector& x, const Vector& u, double c) const {
  if (kind == Kind::EllipsoidSup) {
    double best = 0.0;
    for (size_t i = 0; i < ell_Mx.size(); ++i) {
      Vector q = ell_Mx[i] * x + ell_Mu[i] * u;
      if (!ell_off.empty()) q += ell_off[i];
      best = std::max(best, std::sqrt(q.dot(P * q) + eps_smooth));
    }
    return best + d_bar + L_w * c;
  }
  if (kind == Kind::AffineInC && pin_family) {
    return pin_scale * (pin_a + pin_b * std::sqrt(x.squaredNorm() + eps_smooth)) + L_w * c;
  }
  return eval(x, u, c);
}

int TubeBound::num_rows() const {
  switch (kind) {
    case Kind::Constant: return 1;
    case Kind::AffineInC: return 1;
    case Kind::VertexMax: return static_cast<int>(row_b.size());
    case Kind::EllipsoidSup: return static_cast<int>(ell_Mx.size());
  }
  return 1;
}

TubeBound TubeBound::scaled(double factor) const {
  TubeBound out = *this;
  out.w_bar *= factor;
  out.L_w *= factor;
  out.w_bar_min *= factor;
  out.row_ax *= factor;
  out.row_au *= factor;
  out.row_b *= factor;
  out.d_bar *= factor;
  out.pin_a *= factor;
  out.pin_b *= factor;
  for (auto& M : out.ell_Mx) M *= factor;
  for (auto& M : out.ell_Mu) M *= factor;
  for (auto& v : out.ell_off) v *= factor;
  if (base) {
    auto inner = base;
    out.base = [inner, factor](const Vector& x, const Vector& u) {
      return factor * inner(x, u);
    };
  }
  return out;
}

TubeBound build_constant_bound(const UncertaintyModel& um, const StabilizabilityCertificate& cert,
                               const ConstraintSet& cs, int n, int m, const SampleSpec& spec) {
  TubeBound tb;
  tb.kind = TubeBound::Kind::Constant;

  if (const auto* ball = std::get_if<AdditiveBall>(&um)) {
    if (ball->radius == 0.0 || ball->E.size() == 0) {
      tb.w_bar = 0.0;
    } else if (cert.shape == VdeltaShape::Quadratic) {
      // sup_{||d|| <= r} ||E d||_P = r * sigma_max(P^{1/2} E)
      Matrix M = sqrt_of(cert.P) * ball->E;
      Eigen::JacobiSVD<Matrix> svd(M);
      tb.w_bar = ball->radius * svd.singularValues()[0];
    } else {
      double best = 0.0;
      for (int i = 0; i < cert.rows.rows(); ++i)
        best = std::max(best, (cert.rows.row(i) * ball->E).norm());
      tb.w_bar = ball->radius * best;
    }
    tb.w_bar_min = tb.w_bar;
    return tb;
  }

  if (const auto* lpv = std::get_if<LpvUncertainty>(&um)) {
    const auto dverts = d_vertices_or_zero(*lpv, n);
    auto mismatch_metric = [&](const Vector& z, const Vector& v) {
      double best = 0.0;
      for (const auto& th : lpv->theta_vertices) {
        Vector base = lpv->A_at(th) * z + lpv->B_at(th) * v + lpv->offset_at(th);
        for (const auto& d : dverts) {
          Vector dw = base;
          if (d.size()) dw += lpv->E * d;
          best = std::max(best, metric_of(cert, dw));
        }
      }
      return best;
    };
    double w = 0.0;
    auto verts = z_vertices(cs, n, m);
    if (!verts.empty()) {
      // The metric is convex in (z,v); its sup over the polytope sits on a vertex.
      for (const auto& zv : verts) w = std::max(w, mismatch_metric(zv.head(n), zv.tail(m)));
    } else {
      require(spec.samples > 0, "constant bound: empty sample set");
      for (const auto& [z, v] : sample_z(cs, n, m, spec)) w = std::max(w, mismatch_metric(z, v));
    }
    tb.w_bar = w;
    tb.w_bar_min = w;
    return tb;
  }

  const auto& cb = std::get<CustomBound>(um);
  require(spec.samples > 0, "constant bound: empty sample set");
  const double scale = std::sqrt(cert.c_delta_u);
  double w = 0.0;
  for (const auto& [z, v] : sample_z(cs, n, m, spec)) w = std::max(w, scale * cb.w_hat(z, v));
  tb.w_bar = w;
  tb.w_bar_min = w;
  return tb;
}

TubeBound build_lipschitz_bound(const CustomBound& um, const StabilizabilityCertificate& cert) {
  require(um.L >= 0.0, "lipschitz bound: negative Lipschitz constant");
  TubeBound tb;
  tb.kind = TubeBound::Kind::AffineInC;
  const double scale = std::sqrt(cert.c_delta_u);
  auto w_hat = um.w_hat;
  tb.base = [w_hat, scale](const Vector& x, const Vector& u) { return scale * w_hat(x, u); };
  tb.L_w = um.L * scale * std::sqrt(1.0 / cert.c_delta_l + cert.kappa_max);
  tb.pin_scale = scale;
  tb.w_bar_min = 0.0;  // refined by callers that know the set
  return tb;
}

TubeBound build_lipschitz_bound_pin(double a, double b, const StabilizabilityCertificate& cert) {
  require(a >= 0.0 && b >= 0.0, "lipschitz bound: pin coefficients must be >= 0");
  CustomBound cb;
  cb.w_hat = [a, b](const Vector& x, const Vector&) { return a + b * x.norm(); };
  cb.L = b;  // Lipschitz constant of a + b||x|| in the joint (x,u) norm
  TubeBound tb = build_lipschitz_bound(cb, cert);
  tb.pin_family = true;
  tb.pin_a = a;
  tb.pin_b = b;
  // Minimum over any set containing the origin, shaved down one ulp-scale notch.
  tb.w_bar_min = tb.pin_scale * a * (1.0 - 1e-9);
  return tb;
}

TubeBound build_lpv_bound(const LpvUncertainty& um, const StabilizabilityCertificate& cert,
                          const ConstraintSet& cs, bool simplified) {
  require(cert.shape == VdeltaShape::Polytopic, "lpv bound: polytopic certificate required");
  const int r = static_cast<int>(cert.rows.rows());
  const int n = static_cast<int>(cert.rows.cols());
  const int m = static_cast<int>(um.B[0].cols());
  const int q = static_cast<int>(um.A.size());
  const auto dverts = d_vertices_or_zero(um, n);

  Vector d_bar_row = Vector::Zero(r);
  for (int i = 0; i < r; ++i) {
    double di = 0.0;
    for (const auto& d : dverts)
      if (d.size()) di = std::max(di, cert.rows.row(i).dot(um.E * d));
    d_bar_row[i] = std::max(di, 0.0);
  }

  TubeBound tb;
  tb.kind = TubeBound::Kind::VertexMax;

  std::vector<Matrix> Amats, Bmats;  // matrices entering the row construction
  std::vector<Vector> offsets;
  if (simplified) {
    Matrix As = Matrix::Zero(n, n), Bs = Matrix::Zero(n, m);
    for (int j = 0; j < q; ++j) {
      As += um.A[j];
      Bs += um.B[j];
    }
    Amats = {As};
    Bmats = {Bs};
    Vector off = Vector::Zero(n);
    if (um.x_ref.size()) off += As * um.x_ref;
    if (um.u_ref.size()) off += Bs * um.u_ref;
    offsets = {off};
  } else {
    for (const auto& th : um.theta_vertices) {
      Amats.push_back(um.A_at(th));
      Bmats.push_back(um.B_at(th));
      offsets.push_back(um.offset_at(th));
    }
  }

  const int nrows = r * static_cast<int>(Amats.size());
  tb.row_ax = Matrix::Zero(nrows, n);
  tb.row_au = Matrix::Zero(nrows, m);
  tb.row_b = Vector::Zero(nrows);
  double L_w = 0.0;
  int k = 0;
  for (size_t j = 0; j < Amats.size(); ++j) {
    const Matrix AK = Amats[j] + Bmats[j] * cert.K;
    for (int i = 0; i < r; ++i, ++k) {
      tb.row_ax.row(k) = cert.rows.row(i) * Amats[j];
      tb.row_au.row(k) = cert.rows.row(i) * Bmats[j];
      tb.row_b[k] = d_bar_row[i] + cert.rows.row(i).dot(offsets[j]);
      // L_w row term: max over the gauge unit ball of P_i (A + B K) dx.
      LpProblem lp;
      lp.c = -(cert.rows.row(i) * AK).transpose();
      lp.A_ub = cert.rows;
      lp.b_ub = Vector::Ones(r);
      auto [x, st] = solve_lp(lp, 1e-10);
      if (!st.optimal()) throw NumericalError("lpv bound: L_w LP failed");
      L_w = std::max(L_w, (cert.rows.row(i) * AK).dot(x));
    }
  }
  tb.L_w = std::max(L_w, 0.0);
  tb.d_bar = d_bar_row.size() ? d_bar_row.maxCoeff() : 0.0;

  // w_bar_min = inf over Z of the row max; LP in (z, v, t).
  {
    std::vector<const AffineConstraint*> zrows;
    for (const auto& c : cs.items)
      if (const auto* a = std::get_if<AffineConstraint>(&c)) zrows.push_back(a);
    if (!zrows.empty()) {
      const int d = n + m;
      LpProblem lp;
      lp.c = Vector::Zero(d + 1);
      lp.c[d] = 1.0;  // minimize t
      const int mz = static_cast<int>(zrows.size());
      lp.A_ub = Matrix::Zero(mz + nrows, d + 1);
      lp.b_ub = Vector::Zero(mz + nrows);
      for (int i = 0; i < mz; ++i) {
        lp.A_ub.row(i).head(n) = zrows[i]->Lx.transpose();
        lp.A_ub.row(i).segment(n, m) = zrows[i]->Lu.transpose();
        lp.b_ub[i] = 1.0;
      }
      for (int rr = 0; rr < nrows; ++rr) {
        lp.A_ub.row(mz + rr).head(n) = tb.row_ax.row(rr);
        lp.A_ub.row(mz + rr).segment(n, m) = tb.row_au.row(rr);
        lp.A_ub(mz + rr, d) = -1.0;
        lp.b_ub[mz + rr] = -tb.row_b[rr];
      }
      auto [sol, st] = solve_lp(lp, 1e-10);
      if (st.optimal()) tb.w_bar_min = std::max(sol[d], 0.0) * (1.0 - 1e-9);
    }
  }
  return tb;
}

TubeBound build_ellipsoid_bound(const LpvUncertainty& um,
                                const StabilizabilityCertificate& cert) {
  require(cert.shape == VdeltaShape::Quadratic, "ellipsoid bound: quadratic certificate required");
  TubeBound tb;
  tb.kind = TubeBound::Kind::EllipsoidSup;
  tb.P = cert.P;

  const Matrix Ps = sqrt_of(cert.P);
  const Matrix Psi = Ps.inverse();
  double L_w = 0.0;
  for (const auto& th : um.theta_vertices) {
    const Matrix A = um.A_at(th);
    const Matrix B = um.B_at(th);
    tb.ell_Mx.push_back(A);
    tb.ell_Mu.push_back(B);
    tb.ell_off.push_back(um.offset_at(th));
    Eigen::JacobiSVD<Matrix> svd(Ps * (A + B * cert.K) * Psi);
    L_w = std::max(L_w, svd.singularValues()[0]);
  }
  tb.L_w = L_w;

  double d_bar = 0.0;
  if (um.E.size()) {
    for (const auto& d : um.d_vertices)
      if (d.size()) d_bar = std::max(d_bar, (Ps * um.E * d).norm());
  }
  tb.d_bar = d_bar;
  tb.w_bar_min = d_bar * (1.0 - 1e-9);
  return tb;
}

MonotonicityReport check_monotonicity(const TubeBound& tb, const StabilizabilityCertificate& cert,
                                      const ConstraintSet& cs, int n, int m, int samples,
                                      uint64_t seed) {
  MonotonicityReport rep;
  if (samples <= 0) return rep;
  Rng rng(seed);
  SampleSpec spec{std::max(samples / 4, 1), seed};
  auto zs = sample_z(cs, n, m, spec);
  const double cmax = std::min(cert.s_bar(), 1e6);

  for (int s = 0; s < samples; ++s) {
    const auto& [z, v] = zs[static_cast<size_t>(rng.uniform_int(static_cast<int>(zs.size())))];
    const double c1 = rng.uniform(0.0, cmax);
    const double c2 = rng.uniform(0.0, c1);
    Vector x = z + sample_vdelta_ball(cert, c1 - c2, rng);
    Vector u = cert.kappa(x, z, v);
    const double lhs = tb.eval(x, u, c2);
    const double rhs = tb.eval(z, v, c1);
    ++rep.samples;
    if (lhs - rhs > rep.worst_violation) {
      rep.worst_violation = lhs - rhs;
      rep.witness_z = z;
      rep.witness_v = v;
      rep.witness_c1 = c1;
      rep.witness_c2 = c2;
    }
  }
  rep.violated = rep.worst_violation > 1e-9;
  return rep;
}

SoundnessReport check_soundness(const TubeBound& tb, const StabilizabilityCertificate& cert,
                                const UncertaintyModel& um, const NominalModel& model,
                                const ConstraintSet& cs, int samples, uint64_t seed) {
  SoundnessReport rep;
  if (samples <= 0) return rep;
  Rng rng(seed);
  SampleSpec spec{std::max(samples / 4, 1), seed ^ 0x5bd1e995u};
  auto zs = sample_z(cs, model.n, model.m, spec);
  const double cmax = std::min(cert.s_bar(), 1e6);

  for (int s = 0; s < samples; ++s) {
    const auto& [z, v] = zs[static_cast<size_t>(rng.uniform_int(static_cast<int>(zs.size())))];
    const double c = rng.uniform(0.0, cmax);
    Vector x = z + sample_vdelta_ball(cert, c, rng);
    Vector u = cert.kappa(x, z, v);
    // Worst mismatch in a random metric direction plus pure vertex draws.
    Vector dir = rng.unit_vector(model.n);
    Vector dw = sample_worstcase_mismatch(um, x, u, dir);
    Vector zp = model.step(z, v);
    const double lhs = cert.sqrt_vdelta(zp + dw, zp);
    const double rhs = tb.eval(z, v, c);
    ++rep.samples;
    rep.worst_violation = std::max(rep.worst_violation, lhs - rhs);
  }
  rep.violated = rep.worst_violation > 1e-9;
  return rep;
}

}  // namespace tubempc
