#include "fedhyp/client.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedhyp::client {

using model::ForwardResult;
using model::ModelDims;

std::vector<int> pseudo_label(const ParamVector& teacher, const Mat& batch,
                              Weather weather, const ModelDims& dims) {
  const ForwardResult fr = model::forward_eval(teacher, batch, weather, dims);
  return model::argmax_rows(fr.logits);
}

ClusteringResult clustering_loss(const Mat& features,
                                 const std::vector<int>& pseudo_labels,
                                 const PrototypeSet& protos, double gamma,
                                 bool hyperbolic,
                                 hyp::ExpMapVariant variant) {
  if (pseudo_labels.size() != features.rows)
    throw UsageError("clustering_loss: label count mismatch");
  ClusteringResult r;
  r.dfeatures = Mat(features.rows, features.cols);

  // group cells by class
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < pseudo_labels.size(); ++i)
    by_class[pseudo_labels[i]].push_back(i);

  std::vector<std::pair<int, const std::vector<std::size_t>*>> active;
  for (const auto& [c, idx] : by_class) {
    if (protos.protos.count(c)) {
      active.emplace_back(c, &idx);
    } else {
      r.skipped += long(idx.size()) > 0 ? 1 : 0;
    }
  }
  if (active.empty()) return r;

  const double class_w = 1.0 / double(active.size());
  for (const auto& [c, idx] : active) {
    const Vec& proto = protos.protos.at(c);
    const double member_w = class_w / double(idx->size());
    for (std::size_t i : *idx) {
      Vec f = features.row(i);
      if (hyperbolic) {
        const Vec h = hyp::euclid_to_hyp(f, gamma, variant);
        r.loss += member_w * hyp::distance(h, proto, gamma);
        hyp::DistanceGrad dg = hyp::distance_grad(h, proto, gamma);
        r.dgamma += member_w * dg.dgamma;
        Vec upstream = scaled(dg.dx, member_w);
        const Vec df =
            hyp::euclid_to_hyp_vjp(f, gamma, variant, upstream, &r.dgamma);
        for (std::size_t j = 0; j < features.cols; ++j) r.dfeatures(i, j) += df[j];
      } else {
        const Vec diff = axpy(-1.0, proto, f);
        const double d = norm(diff);
        r.loss += member_w * d;
        if (d > hyp::kNormEps)
          for (std::size_t j = 0; j < features.cols; ++j)
            r.dfeatures(i, j) += member_w * diff[j] / d;
      }
    }
  }
  return r;
}

hyp::Curvature update_curvature(hyp::Curvature gamma, double grad, double lr) {
  // normalized step: the raw gradient scales with the clustering weight,
  // so a plain SGD step would pin the curvature at the floor immediately;
  // this keeps per-step movement at the learning-rate scale instead
  const double unit = grad / (std::abs(grad) + 1e-12);
  gamma.step(unit, lr);
  return gamma;
}

Vec ema_prototype(const Vec& prev, const Vec& raw, double beta, double gamma,
                  bool hyperbolic, bool geodesic) {
  if (hyperbolic && geodesic) {
    // walk from prev towards raw by (1-beta) along the geodesic
    const Vec delta = hyp::mobius_add(scaled(prev, -1.0), raw, gamma);
    return hyp::mobius_add(prev, hyp::mobius_scalar_mul(1.0 - beta, delta, gamma),
                           gamma);
  }
  Vec out(prev.size());
  for (std::size_t i = 0; i < prev.size(); ++i)
    out[i] = beta * prev[i] + (1.0 - beta) * raw[i];
  return hyperbolic ? hyp::project_to_ball(std::move(out), gamma) : out;
}

namespace {

// Raw per-class prototype of the current batch: hyperbolic gyro-midpoint
// of the embedded features, or the Euclidean mean.
std::map<int, Vec> batch_prototypes(const Mat& features,
                                    const std::vector<int>& labels,
                                    double gamma, bool hyperbolic,
                                    hyp::ExpMapVariant variant) {
  std::map<int, std::vector<Vec>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Vec f = features.row(i);
    groups[labels[i]].push_back(
        hyperbolic ? hyp::euclid_to_hyp(f, gamma, variant) : std::move(f));
  }
  std::map<int, Vec> out;
  for (auto& [c, pts] : groups) {
    if (hyperbolic) {
      out[c] = hyp::hyperbolic_midpoint(pts, std::nullopt, gamma);
    } else {
      Vec mean(pts[0].size(), 0.0);
      for (const Vec& p : pts)
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += p[j];
      for (double& v : mean) v /= double(pts.size());
      out[c] = std::move(mean);
    }
  }
  return out;
}

}  // namespace

ClientUpdate local_round(const ParamVector& global_model,
                         const PrototypeSet& global_protos,
                         hyp::Curvature gamma,
                         const std::vector<data::TargetSample>& samples,
                         const model::WeatherClassifier& wclf,
                         const RunConfig& cfg, int client_id, int round) {
  ClientUpdate up;
  up.params = global_model;
  up.protos = global_protos;
  up.protos.round = round;
  up.protos.step = 0;
  up.protos.counts.clear();
  up.gamma = gamma;

  const ModelDims& dims = cfg.dims;
  const ParamVector& teacher = global_model;  // teacher is the round-start global
  Rng rng(derive_seed(cfg.seed, 0xC1A0 + std::uint64_t(round),
                      std::uint64_t(client_id)));

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  try {
    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size();
           start += std::size_t(cfg.batch_size)) {
        const std::size_t end =
            std::min(order.size(), start + std::size_t(cfg.batch_size));

        // assemble the cell batch and per-sample mean features
        std::size_t ncells = 0;
        for (std::size_t s = start; s < end; ++s)
          ncells += samples[order[s]].features.rows;
        Mat batch(ncells, dims.d_in);
        std::vector<Vec> mean_feats;
        std::size_t row = 0;
        for (std::size_t s = start; s < end; ++s) {
          const Mat& f = samples[order[s]].features;
          Vec mean(dims.d_in, 0.0);
          for (std::size_t i = 0; i < f.rows; ++i)
            for (std::size_t j = 0; j < dims.d_in; ++j) {
              batch(row + i, j) = f(i, j);
              mean[j] += f(i, j) / double(f.rows);
            }
          mean_feats.push_back(std::move(mean));
          row += f.rows;
        }

        const Weather weather = cfg.weather_bn
                                    ? wclf.classify_batch(mean_feats)
                                    : Weather::Clear;
        const std::vector<int> pseudo =
            pseudo_label(teacher, batch, weather, dims);

        const ForwardResult fr =
            model::forward(up.params, batch, weather, /*train=*/true, dims);
        const model::XentResult xe = model::softmax_xent(fr.logits, pseudo);

        ClusteringResult cl;
        const bool use_cl = cfg.clustering_loss && cfg.lambda_cl != 0.0;
        if (use_cl)
          cl = clustering_loss(fr.features, pseudo, up.protos, up.gamma.gamma,
                               cfg.hyperbolic, cfg.exp_map_variant);

        const double total = xe.loss + cfg.lambda_cl * (use_cl ? cl.loss : 0.0);
        if (!std::isfinite(total))
          throw TrainingError("non-finite loss at client " +
                              std::to_string(client_id) + " round " +
                              std::to_string(round) + " step " +
                              std::to_string(up.steps));

        Mat dfeat;
        if (use_cl) {
          dfeat = cl.dfeatures;
          for (double& v : dfeat.data) v *= cfg.lambda_cl;
        }
        ParamVector grad =
            model::backward(up.params, fr.cache, xe.dlogits, dfeat, dims);
        grad.at("curvature")[0] = 0.0;  // handled by its own learning rate
        if (cfg.grad_clip > 0.0) {
          // global-norm clipping keeps the clustering term (scaled by a
          // large lambda) from destabilizing the unsupervised rounds
          double sq = 0.0;
          for (const auto& [name, seg] : grad.segments)
            if (name != "dims") sq += sq_norm(seg);
          const double gn = std::sqrt(sq);
          if (gn > cfg.grad_clip) grad.scale_inplace(cfg.grad_clip / gn);
        }
        up.params.axpy_inplace(-cfg.lr, grad);

        if (use_cl && cfg.hyperbolic) {
          up.gamma = update_curvature(up.gamma, cfg.lambda_cl * cl.dgamma,
                                      cfg.curvature_lr);
          up.params.at("curvature")[0] = up.gamma.gamma;
        }

        // prototype EMA against this batch's raw class prototypes
        const auto raw = batch_prototypes(fr.features, pseudo, up.gamma.gamma,
                                          cfg.hyperbolic, cfg.exp_map_variant);
        for (const auto& [c, p] : raw) {
          auto it = up.protos.protos.find(c);
          if (it == up.protos.protos.end()) {
            up.protos.protos[c] = p;  // first sighting of this class
          } else {
            it->second = ema_prototype(it->second, p, cfg.beta, up.gamma.gamma,
                                       cfg.hyperbolic, cfg.geodesic_ema);
          }
        }
        for (std::size_t i = 0; i < pseudo.size(); ++i)
          up.protos.counts[pseudo[i]] += 1;

        up.weathers_trained[std::size_t(weather)] = true;
        up.loss_st += xe.loss;
        up.loss_cl += use_cl ? cl.loss : 0.0;
        up.skipped_classes += use_cl ? cl.skipped : 0;
        up.steps += 1;
        up.protos.step = up.steps;
        up.sample_count += end - start;
      }
    }
  } catch (const TrainingError& e) {
    up.aborted = true;
    up.abort_reason = e.what();
    return up;
  }
  if (up.steps > 0) {
    up.loss_st /= double(up.steps);
    up.loss_cl /= double(up.steps);
  }
  up.params.sample_count = up.sample_count;
  return up;
}

}  // namespace fedhyp::client
