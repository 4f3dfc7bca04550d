#pragma once

#include <cstdint>
#include <string>

#include "fedhyp/data.hpp"
#include "fedhyp/hypgeom.hpp"
#include "fedhyp/model.hpp"

namespace fedhyp {

// Fully resolved run configuration. Defaults follow the reference
// hyperparameters: lambda_cl=140, beta=beta'=0.85, Q=5, gamma0=0.1,
// R=100 rounds with 5 clients each, client SGD lr 1e-4.
struct RunConfig {
  data::Scenario scenario{data::Scenario::I};
  int rounds{100};
  int clients_per_round{5};

  double lambda_cl{140.0};
  double beta{0.85};        // client prototype EMA
  double beta_prime{0.85};  // server prototype smoothing
  int queue_len{5};
  double gamma_init{0.1};
  bool gamma_learnable{true};
  double lr{1e-4};
  double curvature_lr{1e-3};
  int local_epochs{1};
  int batch_size{1};     // samples per local batch (one grid per step)
  double grad_clip{1.0};  // max global L2 norm of a local step; 0 disables

  int pretrain_epochs{5};
  int pretrain_batch{16};
  double pretrain_lr{5e-3};
  double pretrain_lr_power{0.9};
  double pretrain_momentum{0.9};
  int wclf_epochs{8};
  double wclf_lr{0.5};

  int source_per_domain{160};  // samples per (agent, weather) in the source set
  int eval_per_domain{10};

  // ablation toggles
  bool clustering_loss{true};
  bool weather_bn{true};
  bool queue_agg{true};
  bool hyperbolic{true};  // hyperbolic vs Euclidean prototypes
  hyp::ExpMapVariant exp_map_variant{hyp::ExpMapVariant::Paper};
  bool weighted_model_avg{false};  // sample-count weighted client mean
  bool geodesic_ema{false};        // geodesic alternative to coordinate EMA

  std::uint64_t seed{1};
  int workers{1};
  int checkpoint_interval{1};  // rounds between checkpoints; 0 = final only
  std::string out_dir{"runs/out"};

  model::ModelDims dims{8, 32, 16, 6};
  data::GenParams gen{};
};

// JSON round-trip; unknown keys are a usage error so typos fail loudly.
RunConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const RunConfig& cfg);
RunConfig load_config_file(const std::string& path);

// Applies a comma-separated ablation list, e.g.
// "no-clustering,no-weather-bn,no-queue,euclidean,std-expmap".
void apply_ablations(RunConfig& cfg, const std::string& toggles);

}  // namespace fedhyp
