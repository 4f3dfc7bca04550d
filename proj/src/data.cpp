#include "fedhyp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace fedhyp::data {

namespace {

Vec random_vec(Rng& rng, std::size_t n, double scale) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(n);
  for (double& x : v) x = scale * gauss(rng);
  return v;
}

std::size_t class_count(const GenParams& p, Agent a) {
  return a == Agent::Car ? p.n_car_classes : p.n_drone_classes;
}

// Voronoi-style per-cell class layout from a few random region seeds.
std::vector<int> grid_layout(const GenParams& p, Agent agent, Rng& rng) {
  const std::size_t g = p.grid;
  const int k = 2 + int(rng() % 3);
  std::vector<std::array<int, 3>> centers;  // row, col, class
  for (int i = 0; i < k; ++i)
    centers.push_back({int(rng() % g), int(rng() % g),
                       int(rng() % class_count(p, agent))});
  std::vector<int> labels(g * g);
  for (std::size_t r = 0; r < g; ++r)
    for (std::size_t c = 0; c < g; ++c) {
      int best = 0, best_d = 1 << 30;
      for (int i = 0; i < k; ++i) {
        const int dr = int(r) - centers[std::size_t(i)][0];
        const int dc = int(c) - centers[std::size_t(i)][1];
        const int d = dr * dr + dc * dc;
        if (d < best_d) {
          best_d = d;
          best = centers[std::size_t(i)][2];
        }
      }
      labels[r * g + c] = best;
    }
  return labels;
}

Vec cell_feature(const GenParams& p, const DomainTable& t, int cls, Agent a,
                 Weather w, bool target, Rng& rng) {
  const int wi = static_cast<int>(w);
  Vec x(p.d_in);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t j = 0; j < p.d_in; ++j) {
    double v = t.class_means[std::size_t(cls)][j] +
               t.agent_offset[std::size_t(a)][j];
    v = t.weather_scale[std::size_t(wi)] * v +
        t.weather_offset[std::size_t(wi)][j];
    if (target) v = p.target_scale * v + p.target_offset * t.target_offset_dir[j];
    x[j] = v + p.noise_scale * gauss(rng);
  }
  return x;
}

TaggedSample make_sample(const GenParams& p, const DomainTable& t, int id,
                         Agent a, Weather w, bool target, Rng& rng) {
  TaggedSample s;
  s.id = id;
  s.agent = a;
  s.weather = w;
  s.labels = grid_layout(p, a, rng);
  s.features = Mat(p.grid * p.grid, p.d_in);
  for (std::size_t cell = 0; cell < s.labels.size(); ++cell) {
    const Vec f = cell_feature(p, t, s.labels[cell], a, w, target, rng);
    for (std::size_t j = 0; j < p.d_in; ++j) s.features(cell, j) = f[j];
  }
  return s;
}

Weather sample_weather(const std::array<double, 4>& mix, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng), acc = 0.0;
  for (int w = 0; w < 4; ++w) {
    acc += mix[std::size_t(w)];
    if (r <= acc) return static_cast<Weather>(w);
  }
  return Weather::Fog;
}

}  // namespace

const char* agent_name(Agent a) { return a == Agent::Car ? "car" : "drone"; }

DomainTable make_domain_table(const GenParams& p) {
  Rng rng(p.meta_seed);
  DomainTable t;
  // class means kept pairwise well separated
  while (t.class_means.size() < p.n_car_classes) {
    Vec cand = random_vec(rng, p.d_in, p.class_mean_scale);
    bool ok = true;
    for (const Vec& m : t.class_means)
      if (norm(axpy(-1.0, m, cand)) < p.class_mean_scale) ok = false;
    if (ok) t.class_means.push_back(std::move(cand));
  }
  t.weather_scale = {1.0, 0.45, 0.8, 0.6};
  t.weather_offset[0] = Vec(p.d_in, 0.0);
  for (int w = 1; w < 4; ++w) t.weather_offset[std::size_t(w)] = random_vec(rng, p.d_in, 3.0);
  t.agent_offset[0] = Vec(p.d_in, 0.0);
  t.agent_offset[1] = random_vec(rng, p.d_in, 1.0);
  t.target_offset_dir = random_vec(rng, p.d_in, 1.0);
  const double n = norm(t.target_offset_dir);
  for (double& v : t.target_offset_dir) v /= n;
  return t;
}

ScenarioConfig make_scenario(Scenario s) {
  ScenarioConfig c;
  c.scenario = s;
  switch (s) {
    case Scenario::I: c.n_car = 32; c.n_drone = 8; break;
    case Scenario::II:
    case Scenario::III: c.n_car = 32; c.n_drone = 32; break;
  }
  return c;
}

std::vector<TaggedSample> gen_source(const GenParams& p, int n_per_domain,
                                     std::uint64_t seed) {
  if (n_per_domain < 1) throw UsageError("gen_source: n_per_domain < 1");
  const DomainTable t = make_domain_table(p);
  Rng rng(derive_seed(seed, 0xA0));
  std::vector<TaggedSample> out;
  int id = 0;
  for (Agent a : {Agent::Car, Agent::Drone})
    for (Weather w : kAllWeathers)
      for (int i = 0; i < n_per_domain; ++i)
        out.push_back(make_sample(p, t, id++, a, w, /*target=*/false, rng));
  return out;
}

std::vector<ClientDataset> gen_target(const GenParams& p,
                                      const ScenarioConfig& sc,
                                      std::uint64_t seed) {
  const DomainTable t = make_domain_table(p);
  std::vector<ClientDataset> clients;
  int next_id = 0;
  const int total = sc.n_car + sc.n_drone;
  for (int k = 0; k < total; ++k) {
    ClientDataset cd;
    cd.client_id = k;
    cd.agent = k < sc.n_car ? Agent::Car : Agent::Drone;
    Rng rng(derive_seed(seed, 0xB0, std::uint64_t(k)));

    const int lo = cd.agent == Agent::Car ? sc.car_samples_min : sc.drone_samples_min;
    const int hi = cd.agent == Agent::Car ? sc.car_samples_max : sc.drone_samples_max;
    const int n = lo + int(rng() % std::uint64_t(hi - lo + 1));

    std::array<double, 4> mix{};
    if (sc.scenario == Scenario::III) {
      mix[std::size_t(k % 4)] = 1.0;  // one weather per client
    } else {
      // clear-daytime predominant, jittered per client
      std::uniform_real_distribution<double> u(0.5, 1.5);
      std::array<double, 4> base{0.55, 0.15, 0.15, 0.15};
      double s = 0.0;
      for (int w = 0; w < 4; ++w) {
        mix[std::size_t(w)] = base[std::size_t(w)] * u(rng);
        s += mix[std::size_t(w)];
      }
      for (double& v : mix) v /= s;
    }

    for (int i = 0; i < n; ++i) {
      const Weather w = sample_weather(mix, rng);
      TaggedSample s = make_sample(p, t, next_id++, cd.agent, w, /*target=*/true, rng);
      cd.samples.push_back(TargetSample{s.id, std::move(s.features)});
      cd.hidden.push_back(HiddenTag{std::move(s.labels), w});
    }
    clients.push_back(std::move(cd));
  }
  return clients;
}

std::vector<TaggedSample> gen_eval(const GenParams& p, int n_per_domain,
                                   std::uint64_t seed) {
  if (n_per_domain < 1) throw UsageError("gen_eval: n_per_domain < 1");
  const DomainTable t = make_domain_table(p);
  Rng rng(derive_seed(seed, 0xC0));
  std::vector<TaggedSample> out;
  int id = 0;
  for (Agent a : {Agent::Car, Agent::Drone})
    for (Weather w : kAllWeathers)
      for (int i = 0; i < n_per_domain; ++i)
        out.push_back(make_sample(p, t, id++, a, w, /*target=*/true, rng));
  return out;
}

double sunlit_score(const Image& img) {
  if (img.channels != 3) throw UsageError("sunlit_score: expected 3 channels");
  if (img.h == 0 || img.w == 0) throw UsageError("sunlit_score: empty image");
  double score = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < img.h; ++i)
      for (std::size_t j = 0; j < img.w; ++j) sum += img.at(i, j, c);
    score += sum / double(img.h * img.w);
  }
  return score;
}

void save_clients_csv(const std::vector<ClientDataset>& clients,
                      const std::string& path) {
  std::ofstream os(path);
  if (!os) throw UsageError("save_clients_csv: cannot open " + path);
  std::size_t d_in = 0;
  for (const auto& c : clients)
    if (!c.samples.empty()) d_in = c.samples[0].features.cols;
  os << "# fedhyp-clients v1\n";
  os << "sample_id,client_id,agent,cell,hidden_weather,hidden_label";
  for (std::size_t j = 0; j < d_in; ++j) os << ",f" << j;
  os << "\n";
  char buf[32];
  for (const auto& c : clients)
    for (std::size_t s = 0; s < c.samples.size(); ++s)
      for (std::size_t cell = 0; cell < c.samples[s].features.rows; ++cell) {
        os << c.samples[s].id << ',' << c.client_id << ','
           << static_cast<int>(c.agent) << ',' << cell << ','
           << static_cast<int>(c.hidden[s].weather) << ','
           << c.hidden[s].labels[cell];
        for (std::size_t j = 0; j < d_in; ++j) {
          std::snprintf(buf, sizeof(buf), "%.17g", c.samples[s].features(cell, j));
          os << ',' << buf;
        }
        os << '\n';
      }
}

std::vector<ClientDataset> load_clients_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("load_clients_csv: cannot open " + path);
  std::string line;
  std::getline(is, line);
  if (line != "# fedhyp-clients v1")
    throw UsageError("load_clients_csv: unknown version header");
  std::getline(is, line);  // column header

  std::map<int, ClientDataset> by_client;
  std::map<int, std::size_t> sample_index;  // sample_id -> index in its client
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    auto next = [&]() {
      if (!std::getline(ss, tok, ',')) throw UsageError("load_clients_csv: short row");
      return tok;
    };
    const int sid = std::stoi(next());
    const int cid = std::stoi(next());
    const int agent = std::stoi(next());
    const std::size_t cell = std::size_t(std::stoul(next()));
    const int weather = std::stoi(next());
    const int label = std::stoi(next());
    Vec feats;
    while (std::getline(ss, tok, ',')) feats.push_back(std::stod(tok));

    ClientDataset& cd = by_client[cid];
    cd.client_id = cid;
    cd.agent = static_cast<Agent>(agent);
    if (!sample_index.count(sid)) {
      sample_index[sid] = cd.samples.size();
      cd.samples.push_back(TargetSample{sid, Mat(0, feats.size())});
      cd.hidden.push_back(HiddenTag{{}, static_cast<Weather>(weather)});
    }
    const std::size_t idx = sample_index[sid];
    Mat& m = cd.samples[idx].features;
    if (cell != m.rows) throw UsageError("load_clients_csv: out-of-order cells");
    m.rows += 1;
    m.data.insert(m.data.end(), feats.begin(), feats.end());
    cd.hidden[idx].labels.push_back(label);
  }
  std::vector<ClientDataset> out;
  for (auto& [cid, cd] : by_client) out.push_back(std::move(cd));
  return out;
}

}  // namespace fedhyp::data
