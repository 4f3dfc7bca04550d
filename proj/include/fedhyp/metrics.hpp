#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fedhyp/common.hpp"

namespace fedhyp::metrics {

// Standard confusion counts; conf(label, pred).
Mat confusion(const std::vector<int>& preds, const std::vector<int>& labels,
              std::size_t n_classes);

// Mean over classes of TP/(TP+FP+FN). Classes absent from both predictions
// and labels are excluded; nullopt when every class is absent.
std::optional<double> miou(const Mat& conf);

std::optional<double> class_iou(const Mat& conf, std::size_t c);

// Elementwise relabeling; mapping must be total over the observed ids.
std::vector<int> class_remap(const std::vector<int>& preds,
                             const std::vector<int>& mapping);

// Per-class IoU averaged across the car and drone evaluations for shared
// classes, car IoU for car-only classes, then the mean over car classes.
// car_to_drone[c] is the drone id of shared car class c, or -1 if car-only.
double combined_score(const Mat& car_conf, const Mat& drone_conf,
                      const std::vector<int>& car_to_drone);

struct EvalReport {
  double car_miou{0.0};
  double drone_miou{0.0};
  double combined{0.0};
  std::array<double, 4> per_weather{};  // combined score sliced by weather
  // sufficient statistics, kept so ledger metrics can be replayed
  Mat car_conf;
  Mat drone_conf;
};

struct ClientRoundLoss {
  int client_id{0};
  double loss_st{0.0};
  double loss_cl{0.0};
  int steps{0};
  bool aborted{false};
};

struct RoundRecord {
  int round{0};
  std::vector<int> participants;
  std::vector<ClientRoundLoss> client_losses;
  double gamma{0.0};
  EvalReport eval;
  double wall_ms{0.0};  // excluded from the deterministic ledger files
};

// Append-only run ledger: a JSONL file (header = resolved config echo,
// then one record per round) plus a plotting CSV. Wall times go to a
// separate timing file so ledgers are bit-reproducible.
class LedgerWriter {
 public:
  LedgerWriter(const std::string& out_dir, const std::string& config_echo);
  void append(const RoundRecord& rec);
  void note(const std::string& event);  // freeform event line, also JSONL
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  int last_round_{-1};
};

std::string round_record_json(const RoundRecord& rec);

}  // namespace fedhyp::metrics
