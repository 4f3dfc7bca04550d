#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "fedhyp/config.hpp"
#include "fedhyp/data.hpp"
#include "fedhyp/hypgeom.hpp"
#include "fedhyp/model.hpp"

// One client's unsupervised local round: pseudo-label self-training plus
// the prototype clustering loss, prototype EMA, curvature learning.
namespace fedhyp::client {

struct PrototypeSet {
  std::map<int, Vec> protos;        // class -> point (in-ball if hyperbolic)
  std::map<int, long> counts;       // class -> N_{k,c} seen this round
  int round{0};
  int step{0};
};

struct ClientUpdate {
  ParamVector params;
  PrototypeSet protos;
  hyp::Curvature gamma;
  std::size_t sample_count{0};
  std::array<bool, 4> weathers_trained{};
  double loss_st{0.0};
  double loss_cl{0.0};
  int steps{0};
  long skipped_classes{0};  // active classes with no prototype available
  bool aborted{false};
  std::string abort_reason;
};

// Teacher argmax labels per cell; the teacher is never modified.
std::vector<int> pseudo_label(const ParamVector& teacher, const Mat& batch,
                              Weather weather, const model::ModelDims& dims);

struct ClusteringResult {
  double loss{0.0};
  Mat dfeatures;      // dL/d(encoder features), same shape as features
  double dgamma{0.0};
  long skipped{0};    // active classes without a prototype
};

// Eq-style clustering objective: mean over active classes of the mean
// in-class distance between embedded features and the class prototype.
// Gradients flow to the features and (hyperbolic case) the curvature;
// prototypes are treated as constants.
ClusteringResult clustering_loss(const Mat& features,
                                 const std::vector<int>& pseudo_labels,
                                 const PrototypeSet& protos, double gamma,
                                 bool hyperbolic,
                                 hyp::ExpMapVariant variant);

// Plain SGD step on the curvature with the floor clamp.
hyp::Curvature update_curvature(hyp::Curvature gamma, double grad, double lr);

// Coordinate-wise prototype EMA (optionally geodesic), projected to the ball.
Vec ema_prototype(const Vec& prev, const Vec& raw, double beta, double gamma,
                  bool hyperbolic, bool geodesic);

// Runs the full local adaptation round. Reads only the teacher/global
// state and the unlabeled samples; hidden tags never enter this surface.
ClientUpdate local_round(const ParamVector& global_model,
                         const PrototypeSet& global_protos,
                         hyp::Curvature gamma,
                         const std::vector<data::TargetSample>& samples,
                         const model::WeatherClassifier& wclf,
                         const RunConfig& cfg, int client_id, int round);

}  // namespace fedhyp::client
