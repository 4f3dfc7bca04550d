#pragma once

#include <vector>

#include "fedhyp/common.hpp"
#include "fedhyp/params.hpp"

// Tiny per-cell MLP: encoder (two linear+BN+ReLU layers, one BN bank per
// weather) and a linear segmentation head. Inputs are batches of grid
// cells flattened to rows.
namespace fedhyp::model {

struct ModelDims {
  std::size_t d_in{8};
  std::size_t h1{32};
  std::size_t h2{16};
  std::size_t n_classes{6};
};

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

// Views into the flat "bn_bank.<w>" segment: scale/shift/mean/var for the
// two encoder layers, in that order.
struct BnLayout {
  std::size_t h1, h2;
  std::size_t size() const { return 4 * h1 + 4 * h2; }
  std::size_t scale(int layer) const { return layer == 0 ? 0 : 4 * h1; }
  std::size_t shift(int layer) const { return scale(layer) + (layer == 0 ? h1 : h2); }
  std::size_t mean(int layer) const { return shift(layer) + (layer == 0 ? h1 : h2); }
  std::size_t var(int layer) const { return mean(layer) + (layer == 0 ? h1 : h2); }
};

// Offsets into the flat "encoder" and "head" segments.
struct EncLayout {
  ModelDims d;
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return d.d_in * d.h1; }
  std::size_t w2() const { return b1() + d.h1; }
  std::size_t b2() const { return w2() + d.h1 * d.h2; }
  std::size_t size() const { return b2() + d.h2; }
  std::size_t head_w() const { return 0; }
  std::size_t head_b() const { return d.h2 * d.n_classes; }
  std::size_t head_size() const { return head_b() + d.n_classes; }
};

ParamVector init_params(const ModelDims& dims, double gamma_init, Rng& rng);
ModelDims infer_dims(const ParamVector& params);

struct ForwardCache {
  Mat x;               // input cells
  Mat z1, xhat1, a1;   // layer 1: pre-BN, normalized, post-ReLU
  Mat z2, xhat2, bn2;  // layer 2
  Vec mu1, var1, mu2, var2;  // batch statistics used for normalization
  bool train{false};
  Weather weather{Weather::Clear};
};

struct ForwardResult {
  Mat features;  // encoder output, one row per cell
  Mat logits;
  ForwardCache cache;
};

// In train mode the running statistics of bn_bank[weather] are updated in
// place; no other segment is touched.
ForwardResult forward(ParamVector& params, const Mat& batch, Weather weather,
                      bool train, const ModelDims& dims);
ForwardResult forward_eval(const ParamVector& params, const Mat& batch,
                           Weather weather, const ModelDims& dims);

// Mean cross-entropy over cells plus the logit gradient of that mean.
struct XentResult {
  double loss;
  Mat dlogits;
};
XentResult softmax_xent(const Mat& logits, const std::vector<int>& targets);

std::vector<int> argmax_rows(const Mat& logits);

// Pulls (dlogits, extra dL/dfeatures) back to parameter space. Gradient
// segments exist for encoder, head and bn_bank[weather]; all other banks
// and the curvature are exactly zero.
ParamVector backward(const ParamVector& params, const ForwardCache& cache,
                     const Mat& dlogits, const Mat& dfeatures,
                     const ModelDims& dims);

// --- frozen weather classifier -------------------------------------------

// Small MLP over the per-sample mean feature; trained once during
// pretraining, then frozen and excluded from aggregation.
struct WeatherClassifier {
  ParamVector params;  // segments: w1, b1, w2, b2
  std::size_t d_in{8}, hidden{16};
  bool frozen{false};

  Vec logits(const Vec& mean_feature) const;
  Weather classify(const Vec& mean_feature) const;
  // Majority vote over per-sample predictions; ties break by enum order.
  Weather classify_batch(const std::vector<Vec>& mean_features) const;
};

WeatherClassifier init_weather_classifier(std::size_t d_in, std::size_t hidden,
                                          Rng& rng);

// One SGD step of cross-entropy on (mean_feature, weather) pairs; returns
// the mean loss. Throws TrainingError if the classifier is frozen.
double weather_classifier_step(WeatherClassifier& clf,
                               const std::vector<Vec>& mean_features,
                               const std::vector<Weather>& labels, double lr);

}  // namespace fedhyp::model
