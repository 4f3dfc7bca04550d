#include "fedhyp/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fedhyp {

using nlohmann::json;

namespace {
const char* scenario_name(data::Scenario s) {
  switch (s) {
    case data::Scenario::I: return "i";
    case data::Scenario::II: return "ii";
    case data::Scenario::III: return "iii";
  }
  throw UsageError("invalid scenario");
}

data::Scenario scenario_from(const std::string& s) {
  if (s == "i" || s == "I" || s == "1") return data::Scenario::I;
  if (s == "ii" || s == "II" || s == "2") return data::Scenario::II;
  if (s == "iii" || s == "III" || s == "3") return data::Scenario::III;
  throw UsageError("unknown scenario: " + s);
}
}  // namespace

std::string config_to_json_text(const RunConfig& c) {
  json j;
  j["scenario"] = scenario_name(c.scenario);
  j["rounds"] = c.rounds;
  j["clients_per_round"] = c.clients_per_round;
  j["lambda_cl"] = c.lambda_cl;
  j["beta"] = c.beta;
  j["beta_prime"] = c.beta_prime;
  j["queue_len"] = c.queue_len;
  j["gamma_init"] = c.gamma_init;
  j["gamma_learnable"] = c.gamma_learnable;
  j["lr"] = c.lr;
  j["curvature_lr"] = c.curvature_lr;
  j["local_epochs"] = c.local_epochs;
  j["batch_size"] = c.batch_size;
  j["grad_clip"] = c.grad_clip;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["pretrain_batch"] = c.pretrain_batch;
  j["pretrain_lr"] = c.pretrain_lr;
  j["pretrain_lr_power"] = c.pretrain_lr_power;
  j["pretrain_momentum"] = c.pretrain_momentum;
  j["wclf_epochs"] = c.wclf_epochs;
  j["wclf_lr"] = c.wclf_lr;
  j["source_per_domain"] = c.source_per_domain;
  j["eval_per_domain"] = c.eval_per_domain;
  j["clustering_loss"] = c.clustering_loss;
  j["weather_bn"] = c.weather_bn;
  j["queue_agg"] = c.queue_agg;
  j["hyperbolic"] = c.hyperbolic;
  j["exp_map_variant"] =
      c.exp_map_variant == hyp::ExpMapVariant::Paper ? "paper" : "std";
  j["weighted_model_avg"] = c.weighted_model_avg;
  j["geodesic_ema"] = c.geodesic_ema;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["out_dir"] = c.out_dir;
  j["model"] = {{"d_in", c.dims.d_in},
                {"h1", c.dims.h1},
                {"h2", c.dims.h2},
                {"n_classes", c.dims.n_classes}};
  j["gen"] = {{"d_in", c.gen.d_in},
              {"grid", c.gen.grid},
              {"n_car_classes", c.gen.n_car_classes},
              {"n_drone_classes", c.gen.n_drone_classes},
              {"class_mean_scale", c.gen.class_mean_scale},
              {"noise_scale", c.gen.noise_scale},
              {"target_scale", c.gen.target_scale},
              {"target_offset", c.gen.target_offset},
              {"meta_seed", c.gen.meta_seed}};
  return j.dump();
}

RunConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig c;
  auto take = [&j](const char* key, auto& dst) {
    if (j.contains(key)) {
      j.at(key).get_to(dst);
      j.erase(key);
    }
  };
  if (j.contains("scenario")) {
    c.scenario = scenario_from(j.at("scenario").get<std::string>());
    j.erase("scenario");
  }
  take("rounds", c.rounds);
  take("clients_per_round", c.clients_per_round);
  take("lambda_cl", c.lambda_cl);
  take("beta", c.beta);
  take("beta_prime", c.beta_prime);
  take("queue_len", c.queue_len);
  take("gamma_init", c.gamma_init);
  take("gamma_learnable", c.gamma_learnable);
  take("lr", c.lr);
  take("curvature_lr", c.curvature_lr);
  take("local_epochs", c.local_epochs);
  take("batch_size", c.batch_size);
  take("grad_clip", c.grad_clip);
  take("pretrain_epochs", c.pretrain_epochs);
  take("pretrain_batch", c.pretrain_batch);
  take("pretrain_lr", c.pretrain_lr);
  take("pretrain_lr_power", c.pretrain_lr_power);
  take("pretrain_momentum", c.pretrain_momentum);
  take("wclf_epochs", c.wclf_epochs);
  take("wclf_lr", c.wclf_lr);
  take("source_per_domain", c.source_per_domain);
  take("eval_per_domain", c.eval_per_domain);
  take("clustering_loss", c.clustering_loss);
  take("weather_bn", c.weather_bn);
  take("queue_agg", c.queue_agg);
  take("hyperbolic", c.hyperbolic);
  if (j.contains("exp_map_variant")) {
    const std::string v = j.at("exp_map_variant").get<std::string>();
    if (v == "paper")
      c.exp_map_variant = hyp::ExpMapVariant::Paper;
    else if (v == "std")
      c.exp_map_variant = hyp::ExpMapVariant::Std;
    else
      throw UsageError("config: exp_map_variant must be 'paper' or 'std'");
    j.erase("exp_map_variant");
  }
  take("weighted_model_avg", c.weighted_model_avg);
  take("geodesic_ema", c.geodesic_ema);
  take("seed", c.seed);
  take("workers", c.workers);
  take("checkpoint_interval", c.checkpoint_interval);
  take("out_dir", c.out_dir);
  if (j.contains("model")) {
    json m = j.at("model");
    if (m.contains("d_in")) m.at("d_in").get_to(c.dims.d_in);
    if (m.contains("h1")) m.at("h1").get_to(c.dims.h1);
    if (m.contains("h2")) m.at("h2").get_to(c.dims.h2);
    if (m.contains("n_classes")) m.at("n_classes").get_to(c.dims.n_classes);
    j.erase("model");
  }
  if (j.contains("gen")) {
    json g = j.at("gen");
    if (g.contains("d_in")) g.at("d_in").get_to(c.gen.d_in);
    if (g.contains("grid")) g.at("grid").get_to(c.gen.grid);
    if (g.contains("n_car_classes")) g.at("n_car_classes").get_to(c.gen.n_car_classes);
    if (g.contains("n_drone_classes")) g.at("n_drone_classes").get_to(c.gen.n_drone_classes);
    if (g.contains("class_mean_scale")) g.at("class_mean_scale").get_to(c.gen.class_mean_scale);
    if (g.contains("noise_scale")) g.at("noise_scale").get_to(c.gen.noise_scale);
    if (g.contains("target_scale")) g.at("target_scale").get_to(c.gen.target_scale);
    if (g.contains("target_offset")) g.at("target_offset").get_to(c.gen.target_offset);
    if (g.contains("meta_seed")) g.at("meta_seed").get_to(c.gen.meta_seed);
    j.erase("gen");
  }
  if (!j.empty())
    throw UsageError("config: unknown key '" + j.begin().key() + "'");
  if (c.rounds < 0 || c.clients_per_round < 1 || c.queue_len < 0 ||
      c.gamma_init <= 0.0 || c.batch_size < 1 || c.local_epochs < 1 ||
      c.grad_clip < 0.0)
    throw UsageError("config: invalid value range");
  if (c.gen.n_drone_classes > c.gen.n_car_classes)
    throw UsageError("config: drone classes must be a subset of car classes");
  if (c.dims.n_classes != c.gen.n_car_classes || c.dims.d_in != c.gen.d_in)
    throw UsageError("config: model dims must match generator dims");
  return c;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_json_text(ss.str());
}

void apply_ablations(RunConfig& cfg, const std::string& toggles) {
  std::stringstream ss(toggles);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    if (tok == "no-clustering")
      cfg.clustering_loss = false;
    else if (tok == "no-weather-bn")
      cfg.weather_bn = false;
    else if (tok == "no-queue")
      cfg.queue_agg = false;
    else if (tok == "euclidean")
      cfg.hyperbolic = false;
    else if (tok == "std-expmap")
      cfg.exp_map_variant = hyp::ExpMapVariant::Std;
    else if (tok == "frozen-curvature")
      cfg.gamma_learnable = false;
    else
      throw UsageError("unknown ablation toggle: " + tok);
  }
}

}  // namespace fedhyp
