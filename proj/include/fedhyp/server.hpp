#pragma once

#include <deque>
#include <vector>

#include "fedhyp/client.hpp"
#include "fedhyp/config.hpp"
#include "fedhyp/data.hpp"
#include "fedhyp/metrics.hpp"

namespace fedhyp::server {

struct GlobalState {
  ParamVector model;
  std::deque<ParamVector> queue;  // previous globals, newest first (r-1 .. r-Q)
  client::PrototypeSet protos;
  hyp::Curvature gamma;
  int round{0};
};

struct RoundPlan {
  int round{0};
  std::vector<int> participants;
  std::uint64_t seed{0};
};

struct PretrainResult {
  ParamVector model;
  model::WeatherClassifier wclf;
  client::PrototypeSet protos;  // per-class prototypes of the source features
  double source_accuracy{0.0};
  double weather_accuracy{0.0};
};

// Supervised pretraining on the labeled source set (cross-entropy,
// SGD+momentum with a power-law decaying rate), weather classifier
// training, and BN-bank inheritance (all four banks equal afterwards).
PretrainResult pretrain(const std::vector<data::TaggedSample>& source,
                        const RunConfig& cfg);

// Uniform sampling without replacement, reproducible from the seed.
RoundPlan sample_clients(int n_clients, int k, int round, std::uint64_t seed);

// Queue-smoothed aggregation: (client mean + sum of queued globals)/(q+1).
// BN banks are averaged per weather over the clients that trained that
// weather this round; untouched banks carry over from the previous global.
ParamVector aggregate_models(const std::vector<client::ClientUpdate>& updates,
                             const GlobalState& state, const RunConfig& cfg);

client::PrototypeSet aggregate_prototypes(
    const std::vector<client::ClientUpdate>& updates, const GlobalState& state,
    const RunConfig& cfg);

// Sample-count weighted FedAvg of the client curvatures.
hyp::Curvature aggregate_curvature(
    const std::vector<client::ClientUpdate>& updates);

// Evaluation of a model on a tagged sample set: car/drone/combined mIoU
// plus per-weather slices. Weather banks are selected by the classifier,
// never by the hidden tags.
metrics::EvalReport evaluate(const ParamVector& params,
                             const model::WeatherClassifier& wclf,
                             const std::vector<data::TaggedSample>& eval_set,
                             const RunConfig& cfg);

// Total-map from car classes onto drone classes: shared classes map to
// themselves, car-only classes to the nearest shared class mean.
std::vector<int> car_to_drone_map(const RunConfig& cfg);

struct RunResult {
  GlobalState state;
  std::vector<metrics::RoundRecord> records;
  metrics::EvalReport source_only;
  metrics::EvalReport final_eval;
};

// Full protocol: pretraining (round 0), R adaptation rounds, per-round
// ledger records and final evaluation. Bit-deterministic for a fixed
// config+seed, independent of the worker count.
RunResult run(const RunConfig& cfg, metrics::LedgerWriter* ledger = nullptr);

}  // namespace fedhyp::server
