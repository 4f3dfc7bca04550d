#pragma once

#include <cstdint>
#include <vector>

#include "fedhyp/common.hpp"
#include "fedhyp/params.hpp"

// Procedural toy "segmentation" data: each sample is a small grid of
// feature vectors with per-cell class labels, generated per (agent,
// weather) domain with a calibrated source->target shift.
namespace fedhyp::data {

enum class Agent : int { Car = 0, Drone = 1 };
enum class Scenario : int { I = 0, II = 1, III = 2 };

const char* agent_name(Agent a);

// Fully labeled sample (source and evaluation sets).
struct TaggedSample {
  int id{0};
  Agent agent{Agent::Car};
  Weather weather{Weather::Clear};
  Mat features;             // cells x d_in
  std::vector<int> labels;  // per cell
};

// What client training is allowed to see.
struct TargetSample {
  int id{0};
  Mat features;
};

// Generation-time ground truth, kept out of the training surface.
struct HiddenTag {
  std::vector<int> labels;
  Weather weather{Weather::Clear};
};

struct ClientDataset {
  int client_id{0};
  Agent agent{Agent::Car};
  std::vector<TargetSample> samples;
  std::vector<HiddenTag> hidden;  // parallel to samples; evaluation only
};

struct GenParams {
  std::size_t d_in{8};
  std::size_t grid{8};  // grid x grid cells per sample
  std::size_t n_car_classes{6};
  std::size_t n_drone_classes{4};  // first n_drone_classes of the car set
  double class_mean_scale{3.0};
  double noise_scale{0.6};
  // multiplicative + additive shift applied to target-domain features,
  // calibrated so source-only evaluation visibly degrades
  double target_scale{0.8};
  double target_offset{1.5};
  std::uint64_t meta_seed{1234};  // fixes class means and shift directions
};

// Deterministic per-domain transform table derived from meta_seed.
struct DomainTable {
  std::vector<Vec> class_means;           // n_car_classes x d_in
  std::array<double, 4> weather_scale{};  // multiplicative, per weather
  std::array<Vec, 4> weather_offset;      // additive, per weather
  std::array<Vec, 2> agent_offset;        // per agent
  Vec target_offset_dir;                  // unit direction of target shift
};

DomainTable make_domain_table(const GenParams& p);

struct ScenarioConfig {
  Scenario scenario{Scenario::I};
  int n_car{32};
  int n_drone{8};
  int car_samples_min{69}, car_samples_max{72};
  int drone_samples_min{24}, drone_samples_max{25};
};

ScenarioConfig make_scenario(Scenario s);

// Labeled source data with weather tags: n samples per (agent, weather).
std::vector<TaggedSample> gen_source(const GenParams& p, int n_per_domain,
                                     std::uint64_t seed);

// Unlabeled federated target split; hidden tags attached for evaluation.
std::vector<ClientDataset> gen_target(const GenParams& p,
                                      const ScenarioConfig& sc,
                                      std::uint64_t seed);

// Held-out target-domain evaluation set: n per (agent, weather).
std::vector<TaggedSample> gen_eval(const GenParams& p, int n_per_domain,
                                   std::uint64_t seed);

// Minimal image type for the sunlit score.
struct Image {
  std::size_t h{0}, w{0}, channels{0};
  std::vector<double> data;  // h*w*channels, channel-minor
  double at(std::size_t i, std::size_t j, std::size_t c) const {
    return data[(i * w + j) * channels + c];
  }
};

// Sum over the 3 channels of the mean pixel intensity.
double sunlit_score(const Image& img);

// Columnar serialization (version header; one row per cell).
void save_clients_csv(const std::vector<ClientDataset>& clients,
                      const std::string& path);
std::vector<ClientDataset> load_clients_csv(const std::string& path);

}  // namespace fedhyp::data
