#include "fedhyp/model.hpp"

#include <algorithm>
#include <cmath>

namespace fedhyp::model {

namespace {

void he_init(Vec& seg, std::size_t off, std::size_t fan_in, std::size_t count,
             Rng& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / double(fan_in)));
  for (std::size_t i = 0; i < count; ++i) seg[off + i] = gauss(rng);
}

// out = X (rows x in) * W (in x out_dim) + b
Mat linear(const Mat& x, const Vec& seg, std::size_t w_off, std::size_t b_off,
           std::size_t out_dim) {
  Mat out(x.rows, out_dim);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < out_dim; ++j) {
      double s = seg[b_off + j];
      for (std::size_t k = 0; k < x.cols; ++k)
        s += x(i, k) * seg[w_off + k * out_dim + j];
      out(i, j) = s;
    }
  return out;
}

struct BnOut {
  Mat xhat;
  Mat y;
  Vec mu, var;
};

BnOut bn_forward(const Mat& z, Vec& bank, const BnLayout& lay, int layer,
                 bool train) {
  const std::size_t h = (layer == 0) ? lay.h1 : lay.h2;
  const std::size_t m = z.rows;
  BnOut out;
  out.xhat = Mat(m, h);
  out.y = Mat(m, h);
  out.mu.assign(h, 0.0);
  out.var.assign(h, 0.0);
  if (train && m < 2)
    throw UsageError("bn_forward: train mode needs at least 2 rows");

  for (std::size_t c = 0; c < h; ++c) {
    double mu, var;
    if (train) {
      mu = 0.0;
      for (std::size_t i = 0; i < m; ++i) mu += z(i, c);
      mu /= double(m);
      var = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = z(i, c) - mu;
        var += d * d;
      }
      var /= double(m);
      // running = (1-mom)*running + mom*batch
      bank[lay.mean(layer) + c] =
          (1.0 - kBnMomentum) * bank[lay.mean(layer) + c] + kBnMomentum * mu;
      bank[lay.var(layer) + c] = std::max(
          (1.0 - kBnMomentum) * bank[lay.var(layer) + c] + kBnMomentum * var,
          1e-8);
    } else {
      mu = bank[lay.mean(layer) + c];
      var = bank[lay.var(layer) + c];
    }
    out.mu[c] = mu;
    out.var[c] = var;
    const double inv = 1.0 / std::sqrt(var + kBnEps);
    const double scale = bank[lay.scale(layer) + c];
    const double shift = bank[lay.shift(layer) + c];
    for (std::size_t i = 0; i < m; ++i) {
      const double xh = (z(i, c) - mu) * inv;
      out.xhat(i, c) = xh;
      out.y(i, c) = scale * xh + shift;
    }
  }
  return out;
}

Mat relu(const Mat& x) {
  Mat out = x;
  for (double& v : out.data) v = std::max(v, 0.0);
  return out;
}

ForwardResult forward_impl(const ParamVector& cparams, ParamVector* mut,
                           const Mat& batch, Weather weather, bool train,
                           const ModelDims& dims) {
  if (batch.cols != dims.d_in) throw UsageError("forward: feature dim mismatch");
  if (batch.rows == 0) throw UsageError("forward: empty batch");
  const EncLayout el{dims};
  const BnLayout bl{dims.h1, dims.h2};
  const Vec& enc = cparams.at("encoder");
  const Vec& head = cparams.at("head");
  // train mode mutates the selected bank's running statistics
  Vec bank_copy;
  Vec* bank;
  if (train) {
    bank = &mut->at(bn_bank_key(weather));
  } else {
    bank_copy = cparams.at(bn_bank_key(weather));
    bank = &bank_copy;
  }

  ForwardResult r;
  r.cache.x = batch;
  r.cache.train = train;
  r.cache.weather = weather;

  r.cache.z1 = linear(batch, enc, el.w1(), el.b1(), dims.h1);
  BnOut bn1 = bn_forward(r.cache.z1, *bank, bl, 0, train);
  r.cache.xhat1 = std::move(bn1.xhat);
  r.cache.mu1 = std::move(bn1.mu);
  r.cache.var1 = std::move(bn1.var);
  r.cache.a1 = relu(bn1.y);

  r.cache.z2 = linear(r.cache.a1, enc, el.w2(), el.b2(), dims.h2);
  BnOut bn2 = bn_forward(r.cache.z2, *bank, bl, 1, train);
  r.cache.xhat2 = std::move(bn2.xhat);
  r.cache.mu2 = std::move(bn2.mu);
  r.cache.var2 = std::move(bn2.var);
  r.cache.bn2 = std::move(bn2.y);

  r.features = relu(r.cache.bn2);
  r.logits = linear(r.features, head, el.head_w(), el.head_b(), dims.n_classes);
  return r;
}

// BN backward for train-mode batch statistics.
void bn_backward(const Mat& dout, const Mat& z, const Mat& xhat, const Vec& mu,
                 const Vec& var, const Vec& bank, Vec& dbank,
                 const BnLayout& lay, int layer, bool train, Mat& dz) {
  const std::size_t h = (layer == 0) ? lay.h1 : lay.h2;
  const std::size_t m = z.rows;
  dz = Mat(m, h);
  for (std::size_t c = 0; c < h; ++c) {
    const double scale = bank[lay.scale(layer) + c];
    const double inv = 1.0 / std::sqrt(var[c] + kBnEps);
    double dscale = 0.0, dshift = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      dscale += dout(i, c) * xhat(i, c);
      dshift += dout(i, c);
    }
    dbank[lay.scale(layer) + c] += dscale;
    dbank[lay.shift(layer) + c] += dshift;

    if (!train) {
      for (std::size_t i = 0; i < m; ++i) dz(i, c) = dout(i, c) * scale * inv;
      continue;
    }
    double dvar = 0.0, dmu = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double dxh = dout(i, c) * scale;
      dvar += dxh * (z(i, c) - mu[c]);
      dmu += dxh;
    }
    dvar *= -0.5 * inv * inv * inv;
    dmu *= -inv;
    for (std::size_t i = 0; i < m; ++i) {
      const double dxh = dout(i, c) * scale;
      dz(i, c) = dxh * inv + dvar * 2.0 * (z(i, c) - mu[c]) / double(m) +
                 dmu / double(m);
    }
  }
}

}  // namespace

ParamVector init_params(const ModelDims& dims, double gamma_init, Rng& rng) {
  ParamVector p;
  const EncLayout el{dims};
  const BnLayout bl{dims.h1, dims.h2};

  Vec enc(el.size(), 0.0);
  he_init(enc, el.w1(), dims.d_in, dims.d_in * dims.h1, rng);
  he_init(enc, el.w2(), dims.h1, dims.h1 * dims.h2, rng);
  p.segments["encoder"] = std::move(enc);
  p.shapes["encoder"] = {el.size()};

  Vec head(el.head_size(), 0.0);
  he_init(head, el.head_w(), dims.h2, dims.h2 * dims.n_classes, rng);
  p.segments["head"] = std::move(head);
  p.shapes["head"] = {el.head_size()};

  Vec bank(bl.size(), 0.0);
  for (int layer : {0, 1}) {
    const std::size_t h = (layer == 0) ? dims.h1 : dims.h2;
    for (std::size_t c = 0; c < h; ++c) {
      bank[bl.scale(layer) + c] = 1.0;
      bank[bl.var(layer) + c] = 1.0;
    }
  }
  for (Weather w : kAllWeathers) {
    p.segments[bn_bank_key(w)] = bank;
    p.shapes[bn_bank_key(w)] = {bank.size()};
  }

  p.segments["curvature"] = {gamma_init};
  p.shapes["curvature"] = {1};
  // stash dims so checkpoints are self-describing
  p.segments["dims"] = {double(dims.d_in), double(dims.h1), double(dims.h2),
                        double(dims.n_classes)};
  p.shapes["dims"] = {4};
  return p;
}

ModelDims infer_dims(const ParamVector& params) {
  const Vec& d = params.at("dims");
  return ModelDims{std::size_t(d[0]), std::size_t(d[1]), std::size_t(d[2]),
                   std::size_t(d[3])};
}

ForwardResult forward(ParamVector& params, const Mat& batch, Weather weather,
                      bool train, const ModelDims& dims) {
  return forward_impl(params, &params, batch, weather, train, dims);
}

ForwardResult forward_eval(const ParamVector& params, const Mat& batch,
                           Weather weather, const ModelDims& dims) {
  return forward_impl(params, nullptr, batch, weather, false, dims);
}

XentResult softmax_xent(const Mat& logits, const std::vector<int>& targets) {
  if (targets.size() != logits.rows)
    throw UsageError("softmax_xent: target count mismatch");
  XentResult r{0.0, Mat(logits.rows, logits.cols)};
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const int t = targets[i];
    if (t < 0 || std::size_t(t) >= logits.cols)
      throw UsageError("softmax_xent: target out of range");
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < logits.cols; ++j) z += std::exp(logits(i, j) - mx);
    r.loss += -(logits(i, std::size_t(t)) - mx - std::log(z));
    for (std::size_t j = 0; j < logits.cols; ++j) {
      const double pj = std::exp(logits(i, j) - mx) / z;
      r.dlogits(i, j) = (pj - (std::size_t(t) == j ? 1.0 : 0.0)) / double(logits.rows);
    }
  }
  r.loss /= double(logits.rows);
  return r;
}

std::vector<int> argmax_rows(const Mat& logits) {
  std::vector<int> out(logits.rows);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    int best = 0;
    for (std::size_t j = 1; j < logits.cols; ++j)
      if (logits(i, j) > logits(i, best)) best = int(j);
    out[i] = best;
  }
  return out;
}

ParamVector backward(const ParamVector& params, const ForwardCache& cache,
                     const Mat& dlogits, const Mat& dfeatures,
                     const ModelDims& dims) {
  const EncLayout el{dims};
  const BnLayout bl{dims.h1, dims.h2};
  const Vec& enc = params.at("encoder");
  const Vec& head = params.at("head");
  const Vec& bank = params.at(bn_bank_key(cache.weather));

  ParamVector grad = params.zeros_like();
  Vec& genc = grad.at("encoder");
  Vec& ghead = grad.at("head");
  Vec& gbank = grad.at(bn_bank_key(cache.weather));

  const std::size_t m = cache.x.rows;
  const Mat features = relu(cache.bn2);

  // head
  Mat dfeat(m, dims.h2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < dims.n_classes; ++j) {
      const double g = dlogits(i, j);
      ghead[el.head_b() + j] += g;
      for (std::size_t k = 0; k < dims.h2; ++k) {
        ghead[el.head_w() + k * dims.n_classes + j] += features(i, k) * g;
        dfeat(i, k) += head[el.head_w() + k * dims.n_classes + j] * g;
      }
    }
  if (dfeatures.rows == m)
    for (std::size_t i = 0; i < m * dims.h2; ++i) dfeat.data[i] += dfeatures.data[i];

  // ReLU on features
  for (std::size_t i = 0; i < m * dims.h2; ++i)
    if (cache.bn2.data[i] <= 0.0) dfeat.data[i] = 0.0;

  Mat dz2;
  bn_backward(dfeat, cache.z2, cache.xhat2, cache.mu2, cache.var2, bank, gbank,
              bl, 1, cache.train, dz2);

  // layer 2 linear
  Mat da1(m, dims.h1);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < dims.h2; ++j) {
      const double g = dz2(i, j);
      genc[el.b2() + j] += g;
      for (std::size_t k = 0; k < dims.h1; ++k) {
        genc[el.w2() + k * dims.h2 + j] += cache.a1(i, k) * g;
        da1(i, k) += enc[el.w2() + k * dims.h2 + j] * g;
      }
    }

  // ReLU on a1: recover BN1 output sign from a1 (relu output) itself
  for (std::size_t i = 0; i < m * dims.h1; ++i)
    if (cache.a1.data[i] <= 0.0) da1.data[i] = 0.0;

  Mat dz1;
  bn_backward(da1, cache.z1, cache.xhat1, cache.mu1, cache.var1, bank, gbank,
              bl, 0, cache.train, dz1);

  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < dims.h1; ++j) {
      const double g = dz1(i, j);
      genc[el.b1() + j] += g;
      for (std::size_t k = 0; k < dims.d_in; ++k)
        genc[el.w1() + k * dims.h1 + j] += cache.x(i, k) * g;
    }
  return grad;
}

// --- weather classifier ----------------------------------------------------

Vec WeatherClassifier::logits(const Vec& f) const {
  const Vec& w1 = params.at("w1");
  const Vec& b1 = params.at("b1");
  const Vec& w2 = params.at("w2");
  const Vec& b2 = params.at("b2");
  Vec h(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    double s = b1[j];
    for (std::size_t k = 0; k < d_in; ++k) s += f[k] * w1[k * hidden + j];
    h[j] = std::max(s, 0.0);
  }
  Vec out(kNumWeathers);
  for (int j = 0; j < kNumWeathers; ++j) {
    double s = b2[std::size_t(j)];
    for (std::size_t k = 0; k < hidden; ++k)
      s += h[k] * w2[k * std::size_t(kNumWeathers) + std::size_t(j)];
    out[std::size_t(j)] = s;
  }
  return out;
}

Weather WeatherClassifier::classify(const Vec& f) const {
  const Vec l = logits(f);
  int best = 0;
  for (int j = 1; j < kNumWeathers; ++j)
    if (l[std::size_t(j)] > l[std::size_t(best)]) best = j;
  return static_cast<Weather>(best);
}

Weather WeatherClassifier::classify_batch(const std::vector<Vec>& fs) const {
  if (fs.empty()) throw UsageError("classify_batch: empty batch");
  int votes[kNumWeathers] = {0};
  for (const Vec& f : fs) votes[static_cast<int>(classify(f))]++;
  int best = 0;
  for (int j = 1; j < kNumWeathers; ++j)
    if (votes[j] > votes[best]) best = j;  // tie keeps lower enum value
  return static_cast<Weather>(best);
}

WeatherClassifier init_weather_classifier(std::size_t d_in, std::size_t hidden,
                                          Rng& rng) {
  WeatherClassifier clf;
  clf.d_in = d_in;
  clf.hidden = hidden;
  clf.params.segments["w1"] = Vec(d_in * hidden, 0.0);
  clf.params.segments["b1"] = Vec(hidden, 0.0);
  clf.params.segments["w2"] = Vec(hidden * kNumWeathers, 0.0);
  clf.params.segments["b2"] = Vec(kNumWeathers, 0.0);
  clf.params.shapes["w1"] = {d_in, hidden};
  clf.params.shapes["b1"] = {hidden};
  clf.params.shapes["w2"] = {hidden, std::size_t(kNumWeathers)};
  clf.params.shapes["b2"] = {std::size_t(kNumWeathers)};
  he_init(clf.params.at("w1"), 0, d_in, d_in * hidden, rng);
  he_init(clf.params.at("w2"), 0, hidden, hidden * kNumWeathers, rng);
  clf.params.segments["meta"] = {double(d_in), double(hidden)};
  clf.params.shapes["meta"] = {2};
  return clf;
}

double weather_classifier_step(WeatherClassifier& clf,
                               const std::vector<Vec>& fs,
                               const std::vector<Weather>& labels, double lr) {
  if (clf.frozen) throw TrainingError("weather classifier is frozen");
  if (fs.size() != labels.size())
    throw UsageError("weather_classifier_step: label count mismatch");
  Vec& w1 = clf.params.at("w1");
  Vec& b1 = clf.params.at("b1");
  Vec& w2 = clf.params.at("w2");
  Vec& b2 = clf.params.at("b2");
  Vec gw1(w1.size(), 0.0), gb1(b1.size(), 0.0), gw2(w2.size(), 0.0),
      gb2(b2.size(), 0.0);
  const double inv_n = 1.0 / double(fs.size());
  double loss = 0.0;

  for (std::size_t s = 0; s < fs.size(); ++s) {
    const Vec& f = fs[s];
    Vec h(clf.hidden), hpre(clf.hidden);
    for (std::size_t j = 0; j < clf.hidden; ++j) {
      double v = b1[j];
      for (std::size_t k = 0; k < clf.d_in; ++k) v += f[k] * w1[k * clf.hidden + j];
      hpre[j] = v;
      h[j] = std::max(v, 0.0);
    }
    Vec l(kNumWeathers);
    double mx = -1e300;
    for (int j = 0; j < kNumWeathers; ++j) {
      double v = b2[std::size_t(j)];
      for (std::size_t k = 0; k < clf.hidden; ++k)
        v += h[k] * w2[k * kNumWeathers + std::size_t(j)];
      l[std::size_t(j)] = v;
      mx = std::max(mx, v);
    }
    double z = 0.0;
    for (int j = 0; j < kNumWeathers; ++j) z += std::exp(l[std::size_t(j)] - mx);
    const int t = static_cast<int>(labels[s]);
    loss += -(l[std::size_t(t)] - mx - std::log(z)) * inv_n;

    Vec dh(clf.hidden, 0.0);
    for (int j = 0; j < kNumWeathers; ++j) {
      const double pj = std::exp(l[std::size_t(j)] - mx) / z;
      const double g = (pj - (j == t ? 1.0 : 0.0)) * inv_n;
      gb2[std::size_t(j)] += g;
      for (std::size_t k = 0; k < clf.hidden; ++k) {
        gw2[k * kNumWeathers + std::size_t(j)] += h[k] * g;
        dh[k] += w2[k * kNumWeathers + std::size_t(j)] * g;
      }
    }
    for (std::size_t j = 0; j < clf.hidden; ++j) {
      if (hpre[j] <= 0.0) continue;
      gb1[j] += dh[j];
      for (std::size_t k = 0; k < clf.d_in; ++k)
        gw1[k * clf.hidden + j] += f[k] * dh[j];
    }
  }
  for (std::size_t i = 0; i < w1.size(); ++i) w1[i] -= lr * gw1[i];
  for (std::size_t i = 0; i < b1.size(); ++i) b1[i] -= lr * gb1[i];
  for (std::size_t i = 0; i < w2.size(); ++i) w2[i] -= lr * gw2[i];
  for (std::size_t i = 0; i < b2.size(); ++i) b2[i] -= lr * gb2[i];
  return loss;
}

}  // namespace fedhyp::model
