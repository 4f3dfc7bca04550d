// Command-line front end for the federated adaptation simulator.
//
// Exit codes: 0 success, 2 usage/config error, 3 training failure.
#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "fedhyp/server.hpp"

using namespace fedhyp;

namespace {

struct CommonArgs {
  std::string config_file;
  std::string out_dir;
  std::string scenario;
  std::string ablate;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
  int rounds = -1;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_file, "JSON config file");
  cmd->add_option("--out-dir", a.out_dir, "output directory for ledger/checkpoints");
  cmd->add_option("--scenario", a.scenario, "federated scenario: i, ii or iii");
  cmd->add_option("--ablate", a.ablate,
                  "comma-separated toggles: no-clustering, no-weather-bn, "
                  "no-queue, euclidean, std-expmap, frozen-curvature");
  cmd->add_option("--seed", a.seed, "run seed")->each([&a](const std::string&) {
    a.seed_set = true;
  });
  cmd->add_option("--workers", a.workers, "parallel client workers");
  cmd->add_option("--rounds", a.rounds, "number of adaptation rounds");
}

RunConfig resolve(const CommonArgs& a) {
  RunConfig cfg = a.config_file.empty() ? RunConfig{}
                                        : load_config_file(a.config_file);
  if (a.seed_set) cfg.seed = a.seed;
  if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
  if (!a.scenario.empty()) {
    // reuse the JSON parser so the accepted spellings stay in one place
    const RunConfig tmp =
        config_from_json_text("{\"scenario\":\"" + a.scenario + "\"}");
    cfg.scenario = tmp.scenario;
  }
  if (a.workers > 0) cfg.workers = a.workers;
  if (a.rounds >= 0) cfg.rounds = a.rounds;
  return cfg;
}

model::WeatherClassifier load_wclf(const std::string& path) {
  model::WeatherClassifier clf;
  clf.params = load_checkpoint(path);
  clf.hidden = clf.params.at("b1").size();
  clf.d_in = clf.params.at("w1").size() / clf.hidden;
  clf.frozen = true;
  return clf;
}

void print_eval(const char* tag, const metrics::EvalReport& e) {
  std::printf("%s: combined=%.4f car_miou=%.4f drone_miou=%.4f "
              "clear=%.4f night=%.4f rain=%.4f fog=%.4f\n",
              tag, e.combined, e.car_miou, e.drone_miou, e.per_weather[0],
              e.per_weather[1], e.per_weather[2], e.per_weather[3]);
}

int cmd_pretrain(const CommonArgs& a) {
  const RunConfig cfg = resolve(a);
  const auto source = data::gen_source(cfg.gen, cfg.source_per_domain,
                                       derive_seed(cfg.seed, 0xD5));
  const auto pre = server::pretrain(source, cfg);
  std::filesystem::create_directories(cfg.out_dir);
  save_checkpoint(pre.model, cfg.out_dir + "/model_round0.ckpt");
  save_checkpoint(pre.wclf.params, cfg.out_dir + "/weather_classifier.ckpt");
  std::printf("config: %s\n", config_to_json_text(cfg).c_str());
  std::printf("pretrain: source_accuracy=%.4f weather_accuracy=%.4f\n",
              pre.source_accuracy, pre.weather_accuracy);
  std::printf("wrote %s/model_round0.ckpt and weather_classifier.ckpt\n",
              cfg.out_dir.c_str());
  return 0;
}

int cmd_adapt(const CommonArgs& a) {
  RunConfig cfg = resolve(a);
  if (!a.ablate.empty()) apply_ablations(cfg, a.ablate);
  std::printf("config: %s\n", config_to_json_text(cfg).c_str());
  metrics::LedgerWriter ledger(cfg.out_dir, config_to_json_text(cfg));
  const auto result = server::run(cfg, &ledger);
  print_eval("source-only", result.source_only);
  print_eval("final", result.final_eval);
  std::printf("gamma=%.6f rounds=%d ledger=%s/ledger.jsonl\n",
              result.state.gamma.gamma, cfg.rounds, cfg.out_dir.c_str());
  return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& model_path,
             const std::string& wclf_path) {
  const RunConfig cfg = resolve(a);
  const ParamVector params = load_checkpoint(model_path);
  const model::WeatherClassifier wclf = load_wclf(wclf_path);
  const auto eval_set = data::gen_eval(cfg.gen, cfg.eval_per_domain,
                                       derive_seed(cfg.seed, 0xD9));
  print_eval("eval", server::evaluate(params, wclf, eval_set, cfg));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated source-free adaptation simulator on procedural toy data"};
  app.require_subcommand(1);

  CommonArgs pa, aa, ea;
  std::string model_path, wclf_path;

  CLI::App* pre = app.add_subcommand("pretrain", "supervised source pretraining only");
  add_common(pre, pa);

  CLI::App* adapt = app.add_subcommand(
      "adapt", "full run: pretraining plus federated adaptation rounds");
  add_common(adapt, aa);

  CLI::App* ev = app.add_subcommand("eval", "evaluate a saved checkpoint");
  add_common(ev, ea);
  ev->add_option("--model", model_path, "model checkpoint")->required();
  ev->add_option("--wclf", wclf_path, "weather classifier checkpoint")->required();

  try {
    app.parse(argc, argv);
    if (pre->parsed()) return cmd_pretrain(pa);
    if (adapt->parsed()) return cmd_adapt(aa);
    if (ev->parsed()) return cmd_eval(ea, model_path, wclf_path);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "training error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
