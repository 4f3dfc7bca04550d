#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedhyp/common.hpp"

namespace fedhyp {

enum class Weather : int { Clear = 0, Night = 1, Rain = 2, Fog = 3 };
inline constexpr int kNumWeathers = 4;
inline constexpr std::array<Weather, 4> kAllWeathers{
    Weather::Clear, Weather::Night, Weather::Rain, Weather::Fog};

const char* weather_name(Weather w);
std::string bn_bank_key(Weather w);

// Flat named-segment parameter store. Linear combinations are defined
// segment-wise and require identical shapes on both sides.
struct ParamVector {
  // ordered map keeps serialization and aggregation deterministic
  std::map<std::string, Vec> segments;
  std::map<std::string, std::vector<std::size_t>> shapes;
  std::size_t sample_count{0};

  Vec& at(const std::string& name);
  const Vec& at(const std::string& name) const;
  bool same_shape(const ParamVector& other) const;

  // this += alpha * other, over all segments
  void axpy_inplace(double alpha, const ParamVector& other);
  void scale_inplace(double alpha);
  ParamVector zeros_like() const;

  bool operator==(const ParamVector& other) const;
};

// Versioned binary checkpoint with a named-segment shape manifest.
// Round-trips bit-exactly.
void save_checkpoint(const ParamVector& p, const std::string& path);
ParamVector load_checkpoint(const std::string& path);

}  // namespace fedhyp
