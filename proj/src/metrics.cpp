#include "msf/metrics.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "msf/error.hpp"

namespace msf {

using nlohmann::json;

namespace {

void check_sequences(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "metrics");
  require_rank(pred, 5, "metrics");
}

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[static_cast<size_t>(i)] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
    total += w[static_cast<size_t>(i)];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Separable valid-mode filtering of `src` [height, width].
std::vector<double> filter_valid(const std::vector<double>& src, int64_t height, int64_t width,
                                 const std::array<double, kSsimWindow>& w) {
  const int64_t oh = height - kSsimWindow + 1, ow = width - kSsimWindow + 1;
  std::vector<double> rows(static_cast<size_t>(height * ow));
  for (int64_t y = 0; y < height; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += w[static_cast<size_t>(k)] * src[static_cast<size_t>(y * width + x + k)];
      rows[static_cast<size_t>(y * ow + x)] = acc;
    }
  }
  std::vector<double> out(static_cast<size_t>(oh * ow));
  for (int64_t y = 0; y < oh; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += w[static_cast<size_t>(k)] * rows[static_cast<size_t>((y + k) * ow + x)];
      out[static_cast<size_t>(y * ow + x)] = acc;
    }
  }
  return out;
}

}  // namespace

void to_json(json& j, const MetricsReport& r) {
  json csi = json::array();
  for (size_t i = 0; i < r.thresholds.size(); ++i) {
    csi.push_back({{"threshold", r.thresholds[i]}, {"per_frame", r.csi[i]}});
  }
  j = json{{"frames", r.frames},       {"sequences", r.sequences}, {"mse", r.mse},
           {"mae", r.mae},             {"ssim", r.ssim},           {"mse_mean", r.mse_mean},
           {"mae_mean", r.mae_mean},   {"ssim_mean", r.ssim_mean}, {"csi", csi}};
}

void from_json(const json& j, MetricsReport& r) {
  r.frames = j.at("frames").get<int64_t>();
  r.sequences = j.at("sequences").get<int64_t>();
  r.mse = j.at("mse").get<std::vector<double>>();
  r.mae = j.at("mae").get<std::vector<double>>();
  r.ssim = j.at("ssim").get<std::vector<double>>();
  r.mse_mean = j.at("mse_mean").get<double>();
  r.mae_mean = j.at("mae_mean").get<double>();
  r.ssim_mean = j.at("ssim_mean").get<double>();
  r.thresholds.clear();
  r.csi.clear();
  for (const auto& e : j.value("csi", json::array())) {
    r.thresholds.push_back(e.at("threshold").get<double>());
    r.csi.push_back(e.at("per_frame").get<std::vector<double>>());
  }
  const auto n = static_cast<size_t>(r.frames);
  if (r.mse.size() != n || r.mae.size() != n || r.ssim.size() != n) {
    throw DataError("metrics report per-frame arrays do not match frame count");
  }
  for (const auto& c : r.csi) {
    if (c.size() != n) throw DataError("metrics report CSI curve does not match frame count");
  }
}

std::string metrics_csv(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "frame,mse,mae,ssim\n";
  for (int64_t t = 0; t < r.frames; ++t) {
    const auto i = static_cast<size_t>(t);
    os << t + 1 << ',' << r.mse[i] << ',' << r.mae[i] << ',' << r.ssim[i] << '\n';
  }
  return os.str();
}

std::string csi_csv(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "threshold,frame,csi\n";
  for (size_t k = 0; k < r.thresholds.size(); ++k) {
    for (int64_t t = 0; t < r.frames; ++t) os << r.thresholds[k] << ',' << t + 1 << ',' << r.csi[k][static_cast<size_t>(t)] << '\n';
  }
  return os.str();
}

FrameErrors mse_mae(const Tensor& pred, const Tensor& target) {
  check_sequences(pred, target);
  const int64_t batch = pred.dim(0), frames = pred.dim(1);
  const int64_t frame = pred.dim(2) * pred.dim(3) * pred.dim(4);
  FrameErrors out{std::vector<double>(static_cast<size_t>(frames)), std::vector<double>(static_cast<size_t>(frames))};
  for (int64_t t = 0; t < frames; ++t) {
    double sq = 0.0, ab = 0.0;
    for (int64_t b = 0; b < batch; ++b) {
      const int64_t base = (b * frames + t) * frame;
      for (int64_t i = 0; i < frame; ++i) {
        const double d = pred[base + i] - target[base + i];
        sq += d * d;
        ab += std::abs(d);
      }
    }
    out.mse[static_cast<size_t>(t)] = sq / static_cast<double>(batch);
    out.mae[static_cast<size_t>(t)] = ab / static_cast<double>(batch);
  }
  return out;
}

double ssim_plane(std::span<const double> a, std::span<const double> b, int64_t height, int64_t width) {
  if (height < kSsimWindow || width < kSsimWindow) {
    throw DataError("SSIM needs frames of at least " + std::to_string(kSsimWindow) + "x" +
                    std::to_string(kSsimWindow) + ", got " + std::to_string(height) + "x" + std::to_string(width));
  }
  const auto n = static_cast<size_t>(height * width);
  if (a.size() != n || b.size() != n) throw ContractError("ssim_plane: buffer size does not match dims");
  static const auto w = gaussian_window();
  std::vector<double> va(a.begin(), a.end()), vb(b.begin(), b.end());
  std::vector<double> aa(n), bb(n), ab(n);
  for (size_t i = 0; i < n; ++i) {
    aa[i] = va[i] * va[i];
    bb[i] = vb[i] * vb[i];
    ab[i] = va[i] * vb[i];
  }
  const auto mu_a = filter_valid(va, height, width, w);
  const auto mu_b = filter_valid(vb, height, width, w);
  const auto e_aa = filter_valid(aa, height, width, w);
  const auto e_bb = filter_valid(bb, height, width, w);
  const auto e_ab = filter_valid(ab, height, width, w);
  const double c1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
  const double c2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);
  double total = 0.0;
  for (size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double var_a = e_aa[i] - ma * ma;
    const double var_b = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double ssim_frame(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "ssim_frame");
  if (a.rank() == 2) return ssim_plane(a.data(), b.data(), a.dim(0), a.dim(1));
  require_rank(a, 3, "ssim_frame");
  const int64_t channels = a.dim(0), h = a.dim(1), w = a.dim(2);
  double total = 0.0;
  for (int64_t c = 0; c < channels; ++c) {
    const auto off = static_cast<size_t>(c * h * w);
    const auto n = static_cast<size_t>(h * w);
    total += ssim_plane(a.data().subspan(off, n), b.data().subspan(off, n), h, w);
  }
  return total / static_cast<double>(channels);
}

double critical_success_index(const CsiCounts& c) {
  const int64_t denom = c.hits + c.misses + c.false_alarms;
  if (denom == 0) return 1.0;
  return static_cast<double>(c.hits) / static_cast<double>(denom);
}

CsiCounts csi_counts(std::span<const double> pred, std::span<const double> target, double threshold) {
  if (pred.size() != target.size()) throw ContractError("csi_counts: buffer sizes differ");
  CsiCounts c;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= threshold, t = target[i] >= threshold;
    if (p && t) ++c.hits;
    else if (t) ++c.misses;
    else if (p) ++c.false_alarms;
  }
  return c;
}

std::vector<std::vector<double>> csi_curve(const Tensor& pred, const Tensor& target,
                                           std::span<const double> thresholds) {
  check_sequences(pred, target);
  const int64_t batch = pred.dim(0), frames = pred.dim(1);
  const int64_t frame = pred.dim(2) * pred.dim(3) * pred.dim(4);
  std::vector<std::vector<double>> out;
  for (double thr : thresholds) {
    if (!(thr >= 0.0 && thr <= 1.0)) throw ConfigError("CSI thresholds must lie in [0, 1]");
    std::vector<double> curve;
    for (int64_t t = 0; t < frames; ++t) {
      CsiCounts pooled;
      for (int64_t b = 0; b < batch; ++b) {
        const auto base = static_cast<size_t>((b * frames + t) * frame);
        const CsiCounts c = csi_counts(pred.data().subspan(base, static_cast<size_t>(frame)),
                                       target.data().subspan(base, static_cast<size_t>(frame)), thr);
        pooled.hits += c.hits;
        pooled.misses += c.misses;
        pooled.false_alarms += c.false_alarms;
      }
      curve.push_back(critical_success_index(pooled));
    }
    out.push_back(std::move(curve));
  }
  return out;
}

MetricsAccumulator::MetricsAccumulator(std::vector<double> thresholds) : thresholds_(std::move(thresholds)) {
  for (double t : thresholds_) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("CSI thresholds must lie in [0, 1]");
  }
}

void MetricsAccumulator::add(const Tensor& pred, const Tensor& target) {
  check_sequences(pred, target);
  const int64_t batch = pred.dim(0), frames = pred.dim(1), channels = pred.dim(2);
  const int64_t h = pred.dim(3), w = pred.dim(4);
  const int64_t frame = channels * h * w;
  if (frames_ < 0) {
    frames_ = frames;
    sse_.assign(static_cast<size_t>(frames), 0.0);
    sae_.assign(static_cast<size_t>(frames), 0.0);
    ssim_.assign(static_cast<size_t>(frames), 0.0);
    csi_.assign(thresholds_.size(), std::vector<CsiCounts>(static_cast<size_t>(frames)));
  } else if (frames_ != frames) {
    throw ContractError("metrics batches disagree on horizon length");
  }
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t t = 0; t < frames; ++t) {
      const auto ti = static_cast<size_t>(t);
      const int64_t base = (b * frames + t) * frame;
      const auto ps = pred.data().subspan(static_cast<size_t>(base), static_cast<size_t>(frame));
      const auto ts = target.data().subspan(static_cast<size_t>(base), static_cast<size_t>(frame));
      double sq = 0.0, ab = 0.0;
      for (int64_t i = 0; i < frame; ++i) {
        const double d = ps[static_cast<size_t>(i)] - ts[static_cast<size_t>(i)];
        sq += d * d;
        ab += std::abs(d);
      }
      sse_[ti] += sq;
      sae_[ti] += ab;
      double s = 0.0;
      for (int64_t c = 0; c < channels; ++c) {
        const auto off = static_cast<size_t>(c * h * w);
        const auto n = static_cast<size_t>(h * w);
        s += ssim_plane(ps.subspan(off, n), ts.subspan(off, n), h, w);
      }
      ssim_[ti] += s / static_cast<double>(channels);
      for (size_t k = 0; k < thresholds_.size(); ++k) {
        const CsiCounts c = csi_counts(ps, ts, thresholds_[k]);
        auto& dst = csi_[k][ti];
        dst.hits += c.hits;
        dst.misses += c.misses;
        dst.false_alarms += c.false_alarms;
      }
    }
  }
  sequences_ += batch;
}

void MetricsAccumulator::merge(const MetricsAccumulator& other) {
  if (other.frames_ < 0) return;
  if (thresholds_ != other.thresholds_) throw ContractError("cannot merge metrics with different thresholds");
  if (frames_ < 0) {
    *this = other;
    return;
  }
  if (frames_ != other.frames_) throw ContractError("cannot merge metrics over different horizons");
  for (size_t t = 0; t < sse_.size(); ++t) {
    sse_[t] += other.sse_[t];
    sae_[t] += other.sae_[t];
    ssim_[t] += other.ssim_[t];
  }
  for (size_t k = 0; k < csi_.size(); ++k) {
    for (size_t t = 0; t < csi_[k].size(); ++t) {
      csi_[k][t].hits += other.csi_[k][t].hits;
      csi_[k][t].misses += other.csi_[k][t].misses;
      csi_[k][t].false_alarms += other.csi_[k][t].false_alarms;
    }
  }
  sequences_ += other.sequences_;
}

MetricsReport MetricsAccumulator::report() const {
  if (frames_ < 0 || sequences_ == 0) throw ContractError("no batches were added to the metrics accumulator");
  MetricsReport r;
  r.frames = frames_;
  r.sequences = sequences_;
  r.thresholds = thresholds_;
  const double n = static_cast<double>(sequences_);
  for (size_t t = 0; t < sse_.size(); ++t) {
    r.mse.push_back(sse_[t] / n);
    r.mae.push_back(sae_[t] / n);
    r.ssim.push_back(ssim_[t] / n);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  r.mse_mean = mean(r.mse);
  r.mae_mean = mean(r.mae);
  r.ssim_mean = mean(r.ssim);
  for (const auto& per_frame : csi_) {
    std::vector<double> curve;
    for (const auto& c : per_frame) curve.push_back(critical_success_index(c));
    r.csi.push_back(std::move(curve));
  }
  return r;
}

MetricsReport evaluate_metrics(const Tensor& pred, const Tensor& target, std::vector<double> thresholds) {
  MetricsAccumulator acc(std::move(thresholds));
  acc.add(pred, target);
  return acc.report();
}

}  // namespace msf
