#include "fedhyp/params.hpp"

#include <cstring>
#include <fstream>

namespace fedhyp {

namespace {
constexpr char kMagic[8] = {'F', 'H', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw UsageError("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const auto n = read_pod<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw UsageError("checkpoint: truncated string");
  return s;
}
}  // namespace

const char* weather_name(Weather w) {
  switch (w) {
    case Weather::Clear: return "clear";
    case Weather::Night: return "night";
    case Weather::Rain: return "rain";
    case Weather::Fog: return "fog";
  }
  throw UsageError("invalid weather value");
}

std::string bn_bank_key(Weather w) {
  return std::string("bn_bank.") + weather_name(w);
}

Vec& ParamVector::at(const std::string& name) {
  auto it = segments.find(name);
  if (it == segments.end()) throw UsageError("ParamVector: no segment " + name);
  return it->second;
}

const Vec& ParamVector::at(const std::string& name) const {
  auto it = segments.find(name);
  if (it == segments.end()) throw UsageError("ParamVector: no segment " + name);
  return it->second;
}

bool ParamVector::same_shape(const ParamVector& other) const {
  if (segments.size() != other.segments.size()) return false;
  for (const auto& [name, vec] : segments) {
    auto it = other.segments.find(name);
    if (it == other.segments.end() || it->second.size() != vec.size())
      return false;
  }
  return true;
}

void ParamVector::axpy_inplace(double alpha, const ParamVector& other) {
  if (!same_shape(other))
    throw UsageError("ParamVector: shape mismatch in linear combination");
  for (auto& [name, vec] : segments) {
    const Vec& o = other.segments.at(name);
    for (std::size_t i = 0; i < vec.size(); ++i) vec[i] += alpha * o[i];
  }
}

void ParamVector::scale_inplace(double alpha) {
  for (auto& [name, vec] : segments)
    for (double& v : vec) v *= alpha;
}

ParamVector ParamVector::zeros_like() const {
  ParamVector z;
  z.shapes = shapes;
  z.sample_count = 0;
  for (const auto& [name, vec] : segments) z.segments[name] = Vec(vec.size(), 0.0);
  return z;
}

bool ParamVector::operator==(const ParamVector& other) const {
  return segments == other.segments && sample_count == other.sample_count;
}

void save_checkpoint(const ParamVector& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("checkpoint: cannot open for write: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint64_t>(os, p.sample_count);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.segments.size()));
  for (const auto& [name, vec] : p.segments) {
    write_string(os, name);
    auto sh = p.shapes.count(name) ? p.shapes.at(name)
                                   : std::vector<std::size_t>{vec.size()};
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(sh.size()));
    for (std::size_t d : sh) write_pod<std::uint64_t>(os, d);
    write_pod<std::uint64_t>(os, vec.size());
    os.write(reinterpret_cast<const char*>(vec.data()),
             static_cast<std::streamsize>(vec.size() * sizeof(double)));
  }
  if (!os) throw UsageError("checkpoint: write failed: " + path);
}

ParamVector load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw UsageError("checkpoint: bad magic in " + path);
  ParamVector p;
  p.sample_count = read_pod<std::uint64_t>(is);
  const auto nseg = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < nseg; ++i) {
    const std::string name = read_string(is);
    const auto ndim = read_pod<std::uint32_t>(is);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = read_pod<std::uint64_t>(is);
    const auto n = read_pod<std::uint64_t>(is);
    Vec vec(n);
    is.read(reinterpret_cast<char*>(vec.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw UsageError("checkpoint: truncated data in " + path);
    p.shapes[name] = std::move(shape);
    p.segments[name] = std::move(vec);
  }
  return p;
}

}  // namespace fedhyp
