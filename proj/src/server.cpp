#include "fedhyp/server.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <future>
#include <numeric>

namespace fedhyp::server {

using client::ClientUpdate;
using client::PrototypeSet;
using model::ModelDims;

namespace {

struct CellBatch {
  Mat features;
  std::vector<int> labels;
};

CellBatch concat_cells(const std::vector<data::TaggedSample>& samples,
                       const std::vector<std::size_t>& idx, std::size_t lo,
                       std::size_t hi, std::size_t d_in) {
  std::size_t ncells = 0;
  for (std::size_t s = lo; s < hi; ++s) ncells += samples[idx[s]].features.rows;
  CellBatch b{Mat(ncells, d_in), {}};
  b.labels.reserve(ncells);
  std::size_t row = 0;
  for (std::size_t s = lo; s < hi; ++s) {
    const auto& smp = samples[idx[s]];
    for (std::size_t i = 0; i < smp.features.rows; ++i) {
      for (std::size_t j = 0; j < d_in; ++j)
        b.features(row + i, j) = smp.features(i, j);
      b.labels.push_back(smp.labels[i]);
    }
    row += smp.features.rows;
  }
  return b;
}

Vec mean_feature(const Mat& features) {
  Vec mean(features.cols, 0.0);
  for (std::size_t i = 0; i < features.rows; ++i)
    for (std::size_t j = 0; j < features.cols; ++j)
      mean[j] += features(i, j) / double(features.rows);
  return mean;
}

}  // namespace

PretrainResult pretrain(const std::vector<data::TaggedSample>& source,
                        const RunConfig& cfg) {
  if (source.empty()) throw UsageError("pretrain: empty source set");
  const ModelDims& dims = cfg.dims;
  Rng rng(derive_seed(cfg.seed, 0x5E1));

  PretrainResult out;
  out.model = model::init_params(dims, cfg.gamma_init, rng);
  ParamVector velocity = out.model.zeros_like();

  std::vector<std::size_t> order(source.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batches_per_epoch =
      (source.size() + std::size_t(cfg.pretrain_batch) - 1) /
      std::size_t(cfg.pretrain_batch);
  const double total_steps =
      double(batches_per_epoch) * double(cfg.pretrain_epochs);
  double step_idx = 0.0;

  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t lo = 0; lo < order.size();
         lo += std::size_t(cfg.pretrain_batch)) {
      const std::size_t hi =
          std::min(order.size(), lo + std::size_t(cfg.pretrain_batch));
      const CellBatch b = concat_cells(source, order, lo, hi, dims.d_in);

      // pretraining uses a single working bank; the others inherit below
      const auto fr =
          model::forward(out.model, b.features, Weather::Clear, true, dims);
      const auto xe = model::softmax_xent(fr.logits, b.labels);
      if (!std::isfinite(xe.loss))
        throw TrainingError("pretrain diverged (non-finite loss); config: " +
                            config_to_json_text(cfg));
      ParamVector grad =
          model::backward(out.model, fr.cache, xe.dlogits, Mat{}, dims);

      // poly learning-rate decay
      const double lr = cfg.pretrain_lr *
                        std::pow(1.0 - step_idx / total_steps,
                                 cfg.pretrain_lr_power);
      velocity.scale_inplace(cfg.pretrain_momentum);
      velocity.axpy_inplace(-lr, grad);
      out.model.axpy_inplace(1.0, velocity);
      step_idx += 1.0;
    }
  }

  // all weather banks inherit the pretraining statistics
  const Vec bank = out.model.at(bn_bank_key(Weather::Clear));
  for (Weather w : kAllWeathers) out.model.at(bn_bank_key(w)) = bank;
  out.model.at("curvature")[0] = cfg.gamma_init;

  // weather classifier on per-sample mean features, then frozen
  out.wclf = model::init_weather_classifier(dims.d_in, 16, rng);
  std::vector<Vec> wfeats;
  std::vector<Weather> wlabels;
  for (const auto& s : source) {
    wfeats.push_back(mean_feature(s.features));
    wlabels.push_back(s.weather);
  }
  std::vector<std::size_t> worder(wfeats.size());
  std::iota(worder.begin(), worder.end(), 0);
  for (int epoch = 0; epoch < cfg.wclf_epochs; ++epoch) {
    std::shuffle(worder.begin(), worder.end(), rng);
    for (std::size_t lo = 0; lo < worder.size(); lo += 88) {
      const std::size_t hi = std::min(worder.size(), lo + 88);
      std::vector<Vec> fs;
      std::vector<Weather> ys;
      for (std::size_t i = lo; i < hi; ++i) {
        fs.push_back(wfeats[worder[i]]);
        ys.push_back(wlabels[worder[i]]);
      }
      model::weather_classifier_step(out.wclf, fs, ys, cfg.wclf_lr);
    }
  }
  out.wclf.frozen = true;

  // source metrics + initial global prototypes from the source features
  std::map<int, std::vector<Vec>> feats_by_class;
  std::size_t correct_cells = 0, total_cells = 0, correct_weather = 0;
  for (const auto& s : source) {
    const auto fr =
        model::forward_eval(out.model, s.features, Weather::Clear, dims);
    const auto preds = model::argmax_rows(fr.logits);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      correct_cells += preds[i] == s.labels[i];
      ++total_cells;
      feats_by_class[s.labels[i]].push_back(fr.features.row(i));
    }
    correct_weather += out.wclf.classify(mean_feature(s.features)) == s.weather;
  }
  out.source_accuracy = double(correct_cells) / double(total_cells);
  out.weather_accuracy = double(correct_weather) / double(source.size());

  out.protos.round = 0;
  for (auto& [c, feats] : feats_by_class) {
    if (cfg.hyperbolic) {
      std::vector<Vec> pts;
      pts.reserve(feats.size());
      for (const Vec& f : feats)
        pts.push_back(
            hyp::euclid_to_hyp(f, cfg.gamma_init, cfg.exp_map_variant));
      out.protos.protos[c] =
          hyp::hyperbolic_midpoint(pts, std::nullopt, cfg.gamma_init);
    } else {
      Vec mean(dims.h2, 0.0);
      for (const Vec& f : feats)
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += f[j];
      for (double& v : mean) v /= double(feats.size());
      out.protos.protos[c] = std::move(mean);
    }
    out.protos.counts[c] = long(feats.size());
  }
  return out;
}

RoundPlan sample_clients(int n_clients, int k, int round, std::uint64_t seed) {
  if (k > n_clients) throw UsageError("sample_clients: k exceeds client count");
  RoundPlan plan;
  plan.round = round;
  plan.seed = derive_seed(seed, 0x5A3, std::uint64_t(round));
  Rng rng(plan.seed);
  std::vector<int> ids(static_cast<std::size_t>(n_clients), 0);
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  plan.participants.assign(ids.begin(), ids.begin() + k);
  std::sort(plan.participants.begin(), plan.participants.end());
  return plan;
}

ParamVector aggregate_models(const std::vector<ClientUpdate>& updates,
                             const GlobalState& state, const RunConfig& cfg) {
  if (updates.empty()) throw UsageError("aggregate_models: no updates");
  ParamVector out = state.model;  // banks and metadata carry over by default

  // client mean (unweighted as printed; optionally |D_k|-weighted)
  for (const std::string& seg : {std::string("encoder"), std::string("head")}) {
    Vec mean(out.at(seg).size(), 0.0);
    double wsum = 0.0;
    for (const ClientUpdate& u : updates) {
      const double w =
          cfg.weighted_model_avg ? double(u.sample_count) : 1.0;
      const Vec& v = u.params.at(seg);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += w * v[i];
      wsum += w;
    }
    for (double& v : mean) v /= wsum;

    if (cfg.queue_agg) {
      const std::size_t q = state.queue.size();
      for (const ParamVector& past : state.queue) {
        const Vec& v = past.at(seg);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
      }
      for (double& v : mean) v /= double(q + 1);
    }
    out.at(seg) = std::move(mean);
  }

  // weather-wise BN aggregation: same-weather statistics only
  for (Weather w : kAllWeathers) {
    const std::string key = bn_bank_key(w);
    Vec mean(out.at(key).size(), 0.0);
    int contributors = 0;
    for (const ClientUpdate& u : updates) {
      if (!u.weathers_trained[std::size_t(w)]) continue;
      const Vec& v = u.params.at(key);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
      ++contributors;
    }
    if (contributors > 0) {
      for (double& v : mean) v /= double(contributors);
      if (cfg.queue_agg) {
        // trained banks are queue-smoothed like the rest of the model;
        // untouched banks below carry over bitwise instead
        const std::size_t q = state.queue.size();
        for (const ParamVector& past : state.queue) {
          const Vec& v = past.at(key);
          for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
        }
        for (double& v : mean) v /= double(q + 1);
      }
      out.at(key) = std::move(mean);
    }
    // else: bank carried over unchanged from state.model
  }
  out.sample_count = 0;
  return out;
}

PrototypeSet aggregate_prototypes(const std::vector<ClientUpdate>& updates,
                                  const GlobalState& state,
                                  const RunConfig& cfg) {
  PrototypeSet out = state.protos;  // classes nobody touched carry forward
  out.round = state.round + 1;

  std::map<int, double> totals;
  for (const ClientUpdate& u : updates)
    for (const auto& [c, n] : u.protos.counts)
      if (n > 0 && u.protos.protos.count(c)) totals[c] += double(n);

  for (const auto& [c, total] : totals) {
    if (total <= 0.0) continue;
    Vec weighted;
    for (const ClientUpdate& u : updates) {
      auto nit = u.protos.counts.find(c);
      if (nit == u.protos.counts.end() || nit->second <= 0) continue;
      const Vec& p = u.protos.protos.at(c);
      if (weighted.empty()) weighted.assign(p.size(), 0.0);
      const double w = double(nit->second) / total;
      for (std::size_t j = 0; j < p.size(); ++j) weighted[j] += w * p[j];
    }
    auto prev = state.protos.protos.find(c);
    Vec next;
    if (prev != state.protos.protos.end()) {
      next.assign(weighted.size(), 0.0);
      for (std::size_t j = 0; j < weighted.size(); ++j)
        next[j] = cfg.beta_prime * prev->second[j] +
                  (1.0 - cfg.beta_prime) * weighted[j];
    } else {
      next = std::move(weighted);
    }
    out.protos[c] = cfg.hyperbolic
                        ? hyp::project_to_ball(std::move(next), state.gamma.gamma)
                        : std::move(next);
    out.counts[c] = long(total);
  }
  return out;
}

hyp::Curvature aggregate_curvature(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw UsageError("aggregate_curvature: no updates");
  double num = 0.0, den = 0.0;
  for (const ClientUpdate& u : updates) {
    num += double(u.sample_count) * u.gamma.gamma;
    den += double(u.sample_count);
  }
  hyp::Curvature g = updates.front().gamma;
  g.gamma = den > 0.0 ? num / den : g.gamma;
  if (g.gamma < hyp::Curvature::kFloor) g.gamma = hyp::Curvature::kFloor;
  return g;
}

std::vector<int> car_to_drone_map(const RunConfig& cfg) {
  const data::DomainTable t = data::make_domain_table(cfg.gen);
  std::vector<int> map(cfg.gen.n_car_classes, -1);
  for (std::size_t c = 0; c < cfg.gen.n_car_classes; ++c) {
    if (c < cfg.gen.n_drone_classes) {
      map[c] = int(c);
      continue;
    }
    // car-only: nearest shared class by class-mean distance (eval only)
    double best = 1e300;
    for (std::size_t d = 0; d < cfg.gen.n_drone_classes; ++d) {
      const double dist = norm(axpy(-1.0, t.class_means[d], t.class_means[c]));
      if (dist < best) {
        best = dist;
        map[c] = int(d);
      }
    }
  }
  return map;
}

metrics::EvalReport evaluate(const ParamVector& params,
                             const model::WeatherClassifier& wclf,
                             const std::vector<data::TaggedSample>& eval_set,
                             const RunConfig& cfg) {
  const ModelDims& dims = cfg.dims;
  const std::vector<int> c2d = car_to_drone_map(cfg);
  const std::vector<int> shared_map = [&] {
    // map used by combined_score: identity on shared classes only
    std::vector<int> m(cfg.gen.n_car_classes, -1);
    for (std::size_t c = 0; c < cfg.gen.n_drone_classes; ++c) m[c] = int(c);
    return m;
  }();

  Mat car_conf(dims.n_classes, dims.n_classes);
  Mat drone_conf(cfg.gen.n_drone_classes, cfg.gen.n_drone_classes);
  std::array<Mat, 4> car_w, drone_w;
  for (int w = 0; w < 4; ++w) {
    car_w[std::size_t(w)] = Mat(dims.n_classes, dims.n_classes);
    drone_w[std::size_t(w)] = Mat(cfg.gen.n_drone_classes, cfg.gen.n_drone_classes);
  }

  for (const auto& s : eval_set) {
    const Weather bank = cfg.weather_bn
                             ? wclf.classify(mean_feature(s.features))
                             : Weather::Clear;
    const auto fr = model::forward_eval(params, s.features, bank, dims);
    const auto preds = model::argmax_rows(fr.logits);
    const int wi = static_cast<int>(s.weather);
    if (s.agent == data::Agent::Car) {
      const Mat conf = metrics::confusion(preds, s.labels, dims.n_classes);
      for (std::size_t i = 0; i < conf.data.size(); ++i) {
        car_conf.data[i] += conf.data[i];
        car_w[std::size_t(wi)].data[i] += conf.data[i];
      }
    } else {
      const auto mapped = metrics::class_remap(preds, c2d);
      const Mat conf =
          metrics::confusion(mapped, s.labels, cfg.gen.n_drone_classes);
      for (std::size_t i = 0; i < conf.data.size(); ++i) {
        drone_conf.data[i] += conf.data[i];
        drone_w[std::size_t(wi)].data[i] += conf.data[i];
      }
    }
  }

  metrics::EvalReport rep;
  const double nan = std::nan("");
  rep.car_miou = metrics::miou(car_conf).value_or(nan);
  rep.drone_miou = metrics::miou(drone_conf).value_or(nan);
  rep.combined = metrics::combined_score(car_conf, drone_conf, shared_map);
  for (int w = 0; w < 4; ++w)
    rep.per_weather[std::size_t(w)] = metrics::combined_score(
        car_w[std::size_t(w)], drone_w[std::size_t(w)], shared_map);
  rep.car_conf = std::move(car_conf);
  rep.drone_conf = std::move(drone_conf);
  return rep;
}

RunResult run(const RunConfig& cfg, metrics::LedgerWriter* ledger) {
  const auto scenario = data::make_scenario(cfg.scenario);
  const auto source = data::gen_source(cfg.gen, cfg.source_per_domain,
                                       derive_seed(cfg.seed, 0xD5));
  const auto clients =
      data::gen_target(cfg.gen, scenario, derive_seed(cfg.seed, 0xD7));
  const auto eval_set =
      data::gen_eval(cfg.gen, cfg.eval_per_domain, derive_seed(cfg.seed, 0xD9));

  RunResult result;
  PretrainResult pre = pretrain(source, cfg);
  result.state.model = std::move(pre.model);
  result.state.protos = std::move(pre.protos);
  result.state.gamma = hyp::Curvature{cfg.gamma_init, cfg.gamma_learnable};
  result.state.round = 0;

  const std::string out_dir = cfg.out_dir;
  if (ledger) {
    std::filesystem::create_directories(out_dir);
    save_checkpoint(result.state.model, out_dir + "/model_round0.ckpt");
    save_checkpoint(pre.wclf.params, out_dir + "/weather_classifier.ckpt");
  }

  result.source_only = evaluate(result.state.model, pre.wclf, eval_set, cfg);
  {
    metrics::RoundRecord rec;
    rec.round = 0;
    rec.gamma = result.state.gamma.gamma;
    rec.eval = result.source_only;
    result.records.push_back(rec);
    if (ledger) ledger->append(rec);
  }

  for (int r = 1; r <= cfg.rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const RoundPlan plan = sample_clients(int(clients.size()),
                                          cfg.clients_per_round, r, cfg.seed);

    // dispatch client rounds (results joined in participant order)
    std::vector<ClientUpdate> all(plan.participants.size());
    auto run_one = [&](std::size_t i) {
      const int id = plan.participants[i];
      return client::local_round(result.state.model, result.state.protos,
                                 result.state.gamma,
                                 clients[std::size_t(id)].samples, pre.wclf,
                                 cfg, id, r);
    };
    if (cfg.workers > 1) {
      std::vector<std::future<ClientUpdate>> futs;
      for (std::size_t i = 0; i < all.size(); ++i)
        futs.push_back(std::async(std::launch::async, run_one, i));
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = futs[i].get();
    } else {
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = run_one(i);
    }

    metrics::RoundRecord rec;
    rec.round = r;
    rec.participants = plan.participants;
    std::vector<ClientUpdate> valid;
    for (std::size_t i = 0; i < all.size(); ++i) {
      metrics::ClientRoundLoss cl;
      cl.client_id = plan.participants[i];
      cl.loss_st = all[i].loss_st;
      cl.loss_cl = all[i].loss_cl;
      cl.steps = all[i].steps;
      cl.aborted = all[i].aborted;
      rec.client_losses.push_back(cl);
      if (!all[i].aborted) valid.push_back(std::move(all[i]));
      else if (ledger)
        ledger->note("client " + std::to_string(plan.participants[i]) +
                     " aborted round " + std::to_string(r) + ": " +
                     all[i].abort_reason);
    }

    if (valid.empty()) {
      if (ledger)
        ledger->note("round " + std::to_string(r) +
                     " skipped: no valid client updates");
    } else {
      if (cfg.queue_agg) {
        result.state.queue.push_front(result.state.model);
        while (int(result.state.queue.size()) > cfg.queue_len)
          result.state.queue.pop_back();
      }
      ParamVector next = aggregate_models(valid, result.state, cfg);
      result.state.protos = aggregate_prototypes(valid, result.state, cfg);
      result.state.gamma = aggregate_curvature(valid);
      next.at("curvature")[0] = result.state.gamma.gamma;
      result.state.model = std::move(next);
    }
    result.state.round = r;

    rec.gamma = result.state.gamma.gamma;
    rec.eval = evaluate(result.state.model, pre.wclf, eval_set, cfg);
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    result.records.push_back(rec);
    if (ledger) {
      ledger->append(rec);
      if (cfg.checkpoint_interval > 0 && r % cfg.checkpoint_interval == 0)
        save_checkpoint(result.state.model,
                        out_dir + "/model_round" + std::to_string(r) + ".ckpt");
    }
  }

  result.final_eval = result.records.back().eval;
  if (ledger)
    save_checkpoint(result.state.model, out_dir + "/model_final.ckpt");
  return result;
}

}  // namespace fedhyp::server
