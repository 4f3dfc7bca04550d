#pragma once

#include <optional>
#include <span>

#include "fedhyp/common.hpp"

// Poincare-ball gyrovector operations with closed-form gradients.
// Points live in the ball gamma*||x||^2 < 1 (curvature -gamma, gamma > 0).
namespace fedhyp::hyp {

struct Curvature {
  double gamma{0.1};
  bool learnable{true};

  static constexpr double kFloor = 1e-4;

  // Gradient step with the floor clamp; no-op when not learnable.
  void step(double grad, double lr) {
    if (!learnable) return;
    gamma -= lr * grad;
    if (gamma < kFloor) gamma = kFloor;
  }
};

// Margin kept between points and the ball boundary after projection.
inline constexpr double kBallMargin = 1e-7;
// Norms below this are treated as zero (removable singularities).
inline constexpr double kNormEps = 1e-12;

// Two readings of the exponential map:
//   Paper: tanh argument sqrt(g)*||v|| / (1 - g*||v||^2), as printed.
//   Std:   conventional map, tanh argument sqrt(g)*lambda_x*||v||/2.
enum class ExpMapVariant { Paper, Std };

// Radially rescales p onto norm (1-margin)/sqrt(gamma) when it falls on
// or outside the ball; otherwise returns p unchanged.
Vec project_to_ball(Vec p, double gamma);

bool in_ball(const Vec& p, double gamma);

// Conformal factor lambda_x = 2 / (1 - gamma*||x||^2).
double conformal_factor(const Vec& x, double gamma);

Vec mobius_add(const Vec& x, const Vec& y, double gamma);
Vec mobius_scalar_mul(double r, const Vec& x, double gamma);

double distance(const Vec& x, const Vec& y, double gamma);

Vec exp_map(const Vec& x, const Vec& v, double gamma,
            ExpMapVariant variant = ExpMapVariant::Paper);

// exp_map at the origin: the Euclidean-to-hyperbolic feature embedding.
Vec euclid_to_hyp(const Vec& f, double gamma,
                  ExpMapVariant variant = ExpMapVariant::Paper);

// Gyro-midpoint approximation of the (optionally weighted) Frechet mean:
//   (1/2) (x) [ sum_i w_i lambda_i f_i / sum_i w_i (lambda_i - 1) ].
Vec hyperbolic_midpoint(std::span<const Vec> points,
                        std::optional<std::span<const double>> weights,
                        double gamma);

// --- gradients -----------------------------------------------------------
//
// All gradients are closed-form vector-Jacobian products; the finite
// difference harness in the tests is the correctness oracle.

struct DistanceGrad {
  Vec dx;
  Vec dy;
  double dgamma{0.0};
};

// Gradient of distance(x, y, gamma) w.r.t. both points and gamma.
// At x == y the distance is not differentiable; returns zero gradients.
DistanceGrad distance_grad(const Vec& x, const Vec& y, double gamma);

struct MobiusAddVjp {
  Vec dx;
  Vec dy;
  double dgamma{0.0};
};

// Given upstream = dL/d(mobius_add(x,y)), pulls the gradient back to
// (x, y, gamma).
MobiusAddVjp mobius_add_vjp(const Vec& x, const Vec& y, double gamma,
                            const Vec& upstream);

struct ExpMapVjp {
  Vec dx;
  Vec dv;
  double dgamma{0.0};
};

ExpMapVjp exp_map_vjp(const Vec& x, const Vec& v, double gamma,
                      ExpMapVariant variant, const Vec& upstream);

// Pullback for euclid_to_hyp: returns dL/df and accumulates dL/dgamma.
Vec euclid_to_hyp_vjp(const Vec& f, double gamma, ExpMapVariant variant,
                      const Vec& upstream, double* dgamma);

}  // namespace fedhyp::hyp
