#include "fedhyp/hypgeom.hpp"

#include <cmath>
#include <iostream>

namespace fedhyp::hyp {

namespace {

double artanh(double z) { return 0.5 * std::log((1.0 + z) / (1.0 - z)); }

// artanh argument clamped strictly below 1; should only ever trigger on
// boundary-rounding noise.
double safe_artanh(double z) {
  constexpr double kMax = 1.0 - 1e-15;
  if (z >= kMax) {
    std::cerr << "[hypgeom] warning: artanh argument " << z << " clamped\n";
    z = kMax;
  }
  return artanh(z);
}

Vec mobius_add_raw(const Vec& x, const Vec& y, double gamma) {
  if (x.size() != y.size()) throw UsageError("mobius_add: dimension mismatch");
  const double xy = dot(x, y);
  const double xx = sq_norm(x);
  const double yy = sq_norm(y);
  const double alpha = 1.0 + 2.0 * gamma * xy + gamma * yy;
  const double beta = 1.0 - gamma * xx;
  const double denom = 1.0 + 2.0 * gamma * xy + gamma * gamma * xx * yy;
  if (std::abs(denom) < 1e-12)
    throw NumericalError("mobius_add: degenerate denominator");
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = (alpha * x[i] + beta * y[i]) / denom;
  return out;
}

// Scaling factor phi(n) with u = phi(||v||) * v inside the exp map, and
// its partials w.r.t. ||v|| and gamma.
struct TangentScale {
  double phi;
  double dphi_dn;
  double dphi_dgamma;
};

TangentScale tangent_scale(double n, double gamma, ExpMapVariant variant) {
  const double s = std::sqrt(gamma);
  double a, da_dn, da_dgamma;
  if (variant == ExpMapVariant::Paper) {
    double d = 1.0 - gamma * n * n;
    if (std::abs(d) < 1e-15) d = std::copysign(1e-15, d == 0.0 ? 1.0 : d);
    a = s * n / d;
    da_dn = s * (1.0 + gamma * n * n) / (d * d);
    da_dgamma = n * (1.0 + gamma * n * n) / (2.0 * s * d * d);
  } else {
    a = s * n;
    da_dn = s;
    da_dgamma = n / (2.0 * s);
  }
  const double t = std::tanh(a);
  const double sech2 = 1.0 - t * t;
  TangentScale ts;
  ts.phi = t / (s * n);
  ts.dphi_dn = sech2 * da_dn / (s * n) - t / (s * n * n);
  ts.dphi_dgamma = sech2 * da_dgamma / (s * n) - t / (2.0 * gamma * s * n);
  return ts;
}

}  // namespace

bool in_ball(const Vec& p, double gamma) {
  return gamma * sq_norm(p) < 1.0;
}

Vec project_to_ball(Vec p, double gamma) {
  const double sq = sq_norm(p);
  if (gamma * sq >= 1.0 - kBallMargin) {
    const double target = (1.0 - kBallMargin) / std::sqrt(gamma);
    const double scale = target / std::sqrt(sq);
    for (double& v : p) v *= scale;
  }
  return p;
}

double conformal_factor(const Vec& x, double gamma) {
  return 2.0 / (1.0 - gamma * sq_norm(x));
}

Vec mobius_add(const Vec& x, const Vec& y, double gamma) {
  return project_to_ball(mobius_add_raw(x, y, gamma), gamma);
}

Vec mobius_scalar_mul(double r, const Vec& x, double gamma) {
  const double n = norm(x);
  if (n < kNormEps) return Vec(x.size(), 0.0);
  const double s = std::sqrt(gamma);
  const double scale = std::tanh(r * safe_artanh(s * n)) / (s * n);
  return project_to_ball(scaled(x, scale), gamma);
}

double distance(const Vec& x, const Vec& y, double gamma) {
  const Vec m = mobius_add_raw(scaled(x, -1.0), y, gamma);
  const double s = std::sqrt(gamma);
  return 2.0 / s * safe_artanh(std::min(s * norm(m), 1.0 - 1e-15));
}

Vec exp_map(const Vec& x, const Vec& v, double gamma, ExpMapVariant variant) {
  const double n = norm(v);
  if (n < kNormEps) return x;
  const TangentScale ts = tangent_scale(n, gamma, variant);
  return mobius_add(x, scaled(v, ts.phi), gamma);
}

Vec euclid_to_hyp(const Vec& f, double gamma, ExpMapVariant variant) {
  return exp_map(Vec(f.size(), 0.0), f, gamma, variant);
}

Vec hyperbolic_midpoint(std::span<const Vec> points,
                        std::optional<std::span<const double>> weights,
                        double gamma) {
  if (points.empty()) throw UsageError("hyperbolic_midpoint: empty point set");
  if (weights && weights->size() != points.size())
    throw UsageError("hyperbolic_midpoint: weight count mismatch");
  Vec num(points[0].size(), 0.0);
  double den = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    if (w < 0.0) throw UsageError("hyperbolic_midpoint: negative weight");
    const double lam = conformal_factor(points[i], gamma);
    for (std::size_t j = 0; j < num.size(); ++j) num[j] += w * lam * points[i][j];
    den += w * (lam - 1.0);
  }
  if (den < kNormEps) throw UsageError("hyperbolic_midpoint: zero total weight");
  for (double& v : num) v /= den;
  return mobius_scalar_mul(0.5, project_to_ball(std::move(num), gamma), gamma);
}

MobiusAddVjp mobius_add_vjp(const Vec& x, const Vec& y, double gamma,
                            const Vec& upstream) {
  const double xy = dot(x, y);
  const double xx = sq_norm(x);
  const double yy = sq_norm(y);
  const double alpha = 1.0 + 2.0 * gamma * xy + gamma * yy;
  const double beta = 1.0 - gamma * xx;
  const double denom = 1.0 + 2.0 * gamma * xy + gamma * gamma * xx * yy;
  if (std::abs(denom) < 1e-12)
    throw NumericalError("mobius_add_vjp: degenerate denominator");
  const Vec m = mobius_add_raw(x, y, gamma);

  const double ux = dot(upstream, x);
  const double uy = dot(upstream, y);
  const double um = dot(upstream, m);

  MobiusAddVjp out;
  out.dx.assign(x.size(), 0.0);
  out.dy.assign(x.size(), 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double dalpha_dx = 2.0 * gamma * y[j];
    const double dbeta_dx = -2.0 * gamma * x[j];
    const double ddenom_dx = 2.0 * gamma * y[j] + 2.0 * gamma * gamma * yy * x[j];
    out.dx[j] = (ux * dalpha_dx + alpha * upstream[j] + uy * dbeta_dx -
                 um * ddenom_dx) /
                denom;

    const double dalpha_dy = 2.0 * gamma * x[j] + 2.0 * gamma * y[j];
    const double ddenom_dy = 2.0 * gamma * x[j] + 2.0 * gamma * gamma * xx * y[j];
    out.dy[j] = (ux * dalpha_dy + beta * upstream[j] - um * ddenom_dy) / denom;
  }
  const double dalpha_dg = 2.0 * xy + yy;
  const double dbeta_dg = -xx;
  const double ddenom_dg = 2.0 * xy + 2.0 * gamma * xx * yy;
  out.dgamma = (ux * dalpha_dg + uy * dbeta_dg - um * ddenom_dg) / denom;
  return out;
}

DistanceGrad distance_grad(const Vec& x, const Vec& y, double gamma) {
  DistanceGrad g;
  g.dx.assign(x.size(), 0.0);
  g.dy.assign(x.size(), 0.0);
  const Vec xm = scaled(x, -1.0);
  const Vec m = mobius_add_raw(xm, y, gamma);
  const double n = norm(m);
  if (n < kNormEps) return g;  // not differentiable at x == y

  const double s = std::sqrt(gamma);
  const double z = std::min(s * n, 1.0 - 1e-15);
  // d = (2/s) artanh(s*n): dd/dn = 2 / (1 - gamma n^2)
  const double dd_dn = 2.0 / (1.0 - z * z);
  Vec dd_dm = scaled(m, dd_dn / n);

  const MobiusAddVjp mv = mobius_add_vjp(xm, y, gamma, dd_dm);
  for (std::size_t j = 0; j < x.size(); ++j) {
    g.dx[j] = -mv.dx[j];
    g.dy[j] = mv.dy[j];
  }
  // explicit gamma dependence at fixed m, plus the pullback through m
  const double explicit_dg =
      -std::pow(gamma, -1.5) * safe_artanh(z) + n / (gamma * (1.0 - z * z));
  g.dgamma = explicit_dg + mv.dgamma;
  return g;
}

ExpMapVjp exp_map_vjp(const Vec& x, const Vec& v, double gamma,
                      ExpMapVariant variant, const Vec& upstream) {
  ExpMapVjp out;
  const double n = norm(v);
  if (n < kNormEps) {
    const Vec zero(v.size(), 0.0);
    const MobiusAddVjp mv = mobius_add_vjp(x, zero, gamma, upstream);
    out.dx = mv.dx;
    out.dv = scaled(mv.dy, 1.0);  // phi(0) = 1 for both variants
    out.dgamma = mv.dgamma;
    return out;
  }
  const TangentScale ts = tangent_scale(n, gamma, variant);
  const Vec u = scaled(v, ts.phi);
  const MobiusAddVjp mv = mobius_add_vjp(x, u, gamma, upstream);
  const double wv = dot(mv.dy, v);
  out.dx = mv.dx;
  out.dv.assign(v.size(), 0.0);
  for (std::size_t j = 0; j < v.size(); ++j)
    out.dv[j] = ts.phi * mv.dy[j] + wv * ts.dphi_dn * v[j] / n;
  out.dgamma = mv.dgamma + wv * ts.dphi_dgamma;
  return out;
}

Vec euclid_to_hyp_vjp(const Vec& f, double gamma, ExpMapVariant variant,
                      const Vec& upstream, double* dgamma) {
  const ExpMapVjp vj =
      exp_map_vjp(Vec(f.size(), 0.0), f, gamma, variant, upstream);
  if (dgamma) *dgamma += vj.dgamma;
  return vj.dv;
}

}  // namespace fedhyp::hyp
