#include "fedhyp/metrics.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fedhyp::metrics {

using nlohmann::json;

Mat confusion(const std::vector<int>& preds, const std::vector<int>& labels,
              std::size_t n_classes) {
  if (preds.size() != labels.size())
    throw UsageError("confusion: length mismatch");
  Mat conf(n_classes, n_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || std::size_t(labels[i]) >= n_classes ||
        preds[i] < 0 || std::size_t(preds[i]) >= n_classes)
      throw UsageError("confusion: class id out of range");
    conf(std::size_t(labels[i]), std::size_t(preds[i])) += 1.0;
  }
  return conf;
}

std::optional<double> class_iou(const Mat& conf, std::size_t c) {
  if (conf.rows != conf.cols) throw UsageError("class_iou: non-square matrix");
  const double tp = conf(c, c);
  double fp = 0.0, fn = 0.0;
  for (std::size_t i = 0; i < conf.rows; ++i) {
    if (i != c) {
      fp += conf(i, c);
      fn += conf(c, i);
    }
  }
  if (tp + fp + fn == 0.0) return std::nullopt;  // class absent everywhere
  return tp / (tp + fp + fn);
}

std::optional<double> miou(const Mat& conf) {
  if (conf.rows != conf.cols) throw UsageError("miou: non-square matrix");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < conf.rows; ++c) {
    if (auto iou = class_iou(conf, c)) {
      sum += *iou;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / double(n);
}

std::vector<int> class_remap(const std::vector<int>& preds,
                             const std::vector<int>& mapping) {
  std::vector<int> out(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || std::size_t(preds[i]) >= mapping.size() ||
        mapping[std::size_t(preds[i])] < 0)
      throw UsageError("class_remap: unmapped class id");
    out[i] = mapping[std::size_t(preds[i])];
  }
  return out;
}

double combined_score(const Mat& car_conf, const Mat& drone_conf,
                      const std::vector<int>& car_to_drone) {
  if (car_to_drone.size() != car_conf.rows)
    throw UsageError("combined_score: map size mismatch");
  for (int d : car_to_drone)
    if (d >= int(drone_conf.rows))
      throw UsageError("combined_score: map target out of range");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < car_conf.rows; ++c) {
    const auto car = class_iou(car_conf, c);
    std::optional<double> drone;
    if (car_to_drone[c] >= 0)
      drone = class_iou(drone_conf, std::size_t(car_to_drone[c]));
    std::optional<double> score;
    if (car && drone)
      score = 0.5 * (*car + *drone);
    else if (car)
      score = car;
    else if (drone)
      score = drone;
    if (score) {
      sum += *score;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / double(n);
}

namespace {
json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}
}  // namespace

std::string round_record_json(const RoundRecord& rec) {
  json j;
  j["type"] = "round";
  j["round"] = rec.round;
  j["participants"] = rec.participants;
  json losses = json::array();
  for (const auto& cl : rec.client_losses)
    losses.push_back({{"client", cl.client_id},
                      {"loss_st", cl.loss_st},
                      {"loss_cl", cl.loss_cl},
                      {"steps", cl.steps},
                      {"aborted", cl.aborted}});
  j["clients"] = std::move(losses);
  j["gamma"] = rec.gamma;
  j["eval"] = {{"car_miou", rec.eval.car_miou},
               {"drone_miou", rec.eval.drone_miou},
               {"combined", rec.eval.combined},
               {"per_weather", rec.eval.per_weather},
               {"car_conf", mat_to_json(rec.eval.car_conf)},
               {"drone_conf", mat_to_json(rec.eval.drone_conf)}};
  return j.dump();
}

LedgerWriter::LedgerWriter(const std::string& out_dir,
                           const std::string& config_echo)
    : dir_(out_dir) {
  std::filesystem::create_directories(dir_);
  std::ofstream ledger(dir_ + "/ledger.jsonl", std::ios::trunc);
  if (!ledger) throw UsageError("LedgerWriter: cannot open ledger in " + dir_);
  ledger << config_echo << "\n";
  std::ofstream csv(dir_ + "/metrics.csv", std::ios::trunc);
  csv << "round,car_miou,drone_miou,all,clear,night,rain,fog\n";
  std::ofstream timing(dir_ + "/timing.csv", std::ios::trunc);
  timing << "round,wall_ms\n";
}

void LedgerWriter::append(const RoundRecord& rec) {
  if (rec.round <= last_round_)
    throw UsageError("LedgerWriter: round index must increase");
  last_round_ = rec.round;
  std::ofstream ledger(dir_ + "/ledger.jsonl", std::ios::app);
  ledger << round_record_json(rec) << "\n";
  std::ofstream csv(dir_ + "/metrics.csv", std::ios::app);
  csv << rec.round;
  char buf[32];
  for (double v : {rec.eval.car_miou, rec.eval.drone_miou, rec.eval.combined,
                   rec.eval.per_weather[0], rec.eval.per_weather[1],
                   rec.eval.per_weather[2], rec.eval.per_weather[3]}) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    csv << ',' << buf;
  }
  csv << "\n";
  std::ofstream timing(dir_ + "/timing.csv", std::ios::app);
  timing << rec.round << ',' << rec.wall_ms << "\n";
}

void LedgerWriter::note(const std::string& event) {
  std::ofstream ledger(dir_ + "/ledger.jsonl", std::ios::app);
  json j;
  j["type"] = "note";
  j["event"] = event;
  ledger << j.dump() << "\n";
}

}  // namespace fedhyp::metrics
