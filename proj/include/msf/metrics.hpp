#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "msf/tensor.hpp"

namespace msf {

// Per-frame evaluation of a predicted horizon against its target.
//
// MSE and MAE use the per-frame SUM over pixels (channels included), averaged
// over sequences; aggregates are the mean over frames. This matches the
// magnitude convention commonly reported for Moving MNIST (tens, not 1e-3).
struct MetricsReport {
  std::vector<double> mse;
  std::vector<double> mae;
  std::vector<double> ssim;
  double mse_mean = 0.0;
  double mae_mean = 0.0;
  double ssim_mean = 0.0;
  std::vector<double> thresholds;
  std::vector<std::vector<double>> csi;  // [threshold][frame]
  int64_t frames = 0;
  int64_t sequences = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

// "frame,mse,mae,ssim" rows.
std::string metrics_csv(const MetricsReport& r);
// "threshold,frame,csi" rows, one per threshold and frame.
std::string csi_csv(const MetricsReport& r);

struct FrameErrors {
  std::vector<double> mse;
  std::vector<double> mae;
};

// pred, target: [B, N, C, H, W].
FrameErrors mse_mae(const Tensor& pred, const Tensor& target);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

// Gaussian-windowed SSIM of one plane, averaged over all window positions
// that lie fully inside the frame. Dynamic range 1.
double ssim_plane(std::span<const double> a, std::span<const double> b, int64_t height, int64_t width);
// Frames [C, H, W] (or [H, W]); channels are scored separately and averaged.
double ssim_frame(const Tensor& a, const Tensor& b);

struct CsiCounts {
  int64_t hits = 0;
  int64_t misses = 0;
  int64_t false_alarms = 0;
};
// hits / (hits + misses + false alarms); 1.0 when all three are zero.
double critical_success_index(const CsiCounts& c);
CsiCounts csi_counts(std::span<const double> pred, std::span<const double> target, double threshold);

// CSI per threshold and frame, with counts pooled over the batch.
std::vector<std::vector<double>> csi_curve(const Tensor& pred, const Tensor& target,
                                           std::span<const double> thresholds);

// Streams batches and reduces them in arrival order.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(std::vector<double> thresholds = {});

  void add(const Tensor& pred, const Tensor& target);
  // Appends another shard's totals; both must cover the same horizon.
  void merge(const MetricsAccumulator& other);
  MetricsReport report() const;

 private:
  std::vector<double> thresholds_;
  int64_t frames_ = -1;
  int64_t sequences_ = 0;
  std::vector<double> sse_, sae_, ssim_;
  std::vector<std::vector<CsiCounts>> csi_;
};

MetricsReport evaluate_metrics(const Tensor& pred, const Tensor& target, std::vector<double> thresholds = {});

}  // namespace msf
