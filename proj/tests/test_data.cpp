#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <set>

#include "fedhyp/data.hpp"

using namespace fedhyp;
using namespace fedhyp::data;

TEST_CASE("generation is deterministic in the seed") {
  GenParams p;
  const auto a = gen_source(p, 4, 77);
  const auto b = gen_source(p, 4, 77);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].features.data == b[i].features.data);
    CHECK(a[i].labels == b[i].labels);
    CHECK(a[i].weather == b[i].weather);
  }
  const auto c = gen_source(p, 4, 78);
  CHECK(a[0].features.data != c[0].features.data);

  const auto sc = make_scenario(Scenario::I);
  const auto t1 = gen_target(p, sc, 5);
  const auto t2 = gen_target(p, sc, 5);
  REQUIRE(t1.size() == t2.size());
  for (std::size_t k = 0; k < t1.size(); ++k) {
    REQUIRE(t1[k].samples.size() == t2[k].samples.size());
    for (std::size_t s = 0; s < t1[k].samples.size(); ++s)
      CHECK(t1[k].samples[s].features.data == t2[k].samples[s].features.data);
  }
}

TEST_CASE("scenario populations and per-client sample counts") {
  GenParams p;
  struct Want { Scenario s; int car, drone; };
  for (const Want w : {Want{Scenario::I, 32, 8}, Want{Scenario::II, 32, 32},
                       Want{Scenario::III, 32, 32}}) {
    const auto sc = make_scenario(w.s);
    CHECK(sc.n_car == w.car);
    CHECK(sc.n_drone == w.drone);
    const auto clients = gen_target(p, sc, 9);
    REQUIRE(int(clients.size()) == w.car + w.drone);
    int cars = 0, drones = 0;
    for (const auto& c : clients) {
      const int n = int(c.samples.size());
      if (c.agent == Agent::Car) {
        ++cars;
        CHECK(n >= sc.car_samples_min);
        CHECK(n <= sc.car_samples_max);
      } else {
        ++drones;
        CHECK(n >= sc.drone_samples_min);
        CHECK(n <= sc.drone_samples_max);
      }
      REQUIRE(c.hidden.size() == c.samples.size());
    }
    CHECK(cars == w.car);
    CHECK(drones == w.drone);
  }
}

TEST_CASE("scenario III pins one weather per client") {
  GenParams p;
  const auto clients = gen_target(p, make_scenario(Scenario::III), 3);
  for (const auto& c : clients) {
    const Weather expect = static_cast<Weather>(c.client_id % 4);
    for (const auto& h : c.hidden) CHECK(h.weather == expect);
  }
}

TEST_CASE("sample ids are globally unique and labels in range") {
  GenParams p;
  const auto clients = gen_target(p, make_scenario(Scenario::II), 11);
  std::set<int> ids;
  for (const auto& c : clients) {
    const int n_cls =
        c.agent == Agent::Car ? int(p.n_car_classes) : int(p.n_drone_classes);
    for (std::size_t s = 0; s < c.samples.size(); ++s) {
      CHECK(ids.insert(c.samples[s].id).second);
      CHECK(c.samples[s].features.rows == p.grid * p.grid);
      CHECK(c.samples[s].features.cols == p.d_in);
      for (int l : c.hidden[s].labels) {
        CHECK(l >= 0);
        CHECK(l < n_cls);
      }
    }
  }
}

TEST_CASE("clear-weather car source recovers the class means") {
  GenParams p;
  const DomainTable t = make_domain_table(p);
  const auto src = gen_source(p, 60, 13);

  std::vector<Vec> sums(p.n_car_classes, Vec(p.d_in, 0.0));
  std::vector<double> counts(p.n_car_classes, 0.0);
  for (const auto& s : src) {
    if (s.agent != Agent::Car || s.weather != Weather::Clear) continue;
    for (std::size_t i = 0; i < s.features.rows; ++i) {
      const int c = s.labels[i];
      counts[std::size_t(c)] += 1.0;
      for (std::size_t j = 0; j < p.d_in; ++j)
        sums[std::size_t(c)][j] += s.features(i, j);
    }
  }
  for (std::size_t c = 0; c < p.n_car_classes; ++c) {
    REQUIRE(counts[c] > 30.0);
    const double tol = 3.0 * p.noise_scale / std::sqrt(counts[c]);
    for (std::size_t j = 0; j < p.d_in; ++j)
      CHECK(std::abs(sums[c][j] / counts[c] - t.class_means[c][j]) < 3.0 * tol);
  }
}

TEST_CASE("mixed scenarios keep clear weather predominant") {
  GenParams p;
  const auto clients = gen_target(p, make_scenario(Scenario::II), 21);
  std::array<double, 4> freq{};
  double total = 0.0;
  for (const auto& c : clients)
    for (const auto& h : c.hidden) {
      freq[std::size_t(static_cast<int>(h.weather))] += 1.0;
      total += 1.0;
    }
  for (double& f : freq) f /= total;
  CHECK(std::abs(freq[0] - 0.55) < 0.05);
  for (int w = 1; w < 4; ++w) {
    CHECK(std::abs(freq[std::size_t(w)] - 0.15) < 0.05);
    CHECK(freq[0] > 2.0 * freq[std::size_t(w)]);
  }
}

TEST_CASE("sunlit score sums channel means and scales linearly") {
  Image img;
  img.h = 10;
  img.w = 10;
  img.channels = 3;
  img.data.assign(300, 1.0);
  CHECK(sunlit_score(img) == doctest::Approx(3.0));
  for (double& v : img.data) v *= 2.0;
  CHECK(sunlit_score(img) == doctest::Approx(6.0));

  Image gray = img;
  gray.channels = 1;
  gray.data.assign(100, 1.0);
  CHECK_THROWS_AS(sunlit_score(gray), UsageError);
  Image empty;
  empty.channels = 3;
  CHECK_THROWS_AS(sunlit_score(empty), UsageError);
}

TEST_CASE("client CSV round-trips bit-exactly") {
  GenParams p;
  const auto clients = gen_target(p, make_scenario(Scenario::I), 31);
  const std::string path = "clients_roundtrip.csv";
  save_clients_csv(clients, path);
  const auto back = load_clients_csv(path);
  std::remove(path.c_str());

  REQUIRE(back.size() == clients.size());
  for (std::size_t k = 0; k < clients.size(); ++k) {
    CHECK(back[k].client_id == clients[k].client_id);
    CHECK(back[k].agent == clients[k].agent);
    REQUIRE(back[k].samples.size() == clients[k].samples.size());
    for (std::size_t s = 0; s < clients[k].samples.size(); ++s) {
      CHECK(back[k].samples[s].id == clients[k].samples[s].id);
      CHECK(back[k].samples[s].features.data ==
            clients[k].samples[s].features.data);
      CHECK(back[k].hidden[s].labels == clients[k].hidden[s].labels);
      CHECK(back[k].hidden[s].weather == clients[k].hidden[s].weather);
    }
  }
}
