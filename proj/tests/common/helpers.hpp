#pragma once

// Shared fixtures and independent reference oracles. The oracles are kept as
// plain per-pixel loops so they stay decoupled from the library's tensor
// implementations.

#include <torch/torch.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cris/metrics.hpp"
#include "cris/types.hpp"

namespace cris::test {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    dir_ = std::filesystem::temp_directory_path() /
           ("cris-test-" + std::to_string(counter.fetch_add(1)) + "-" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this) & 0xffff));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

inline MaskTensor random_mask(std::int64_t h, std::int64_t w, double p = 0.5) {
  return MaskTensor::unchecked((torch::rand({1, h, w}) < p).to(torch::kFloat32));
}

inline ProbMap random_prob(std::int64_t h, std::int64_t w) {
  return ProbMap::unchecked(torch::rand({1, h, w}));
}

struct NaiveCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline NaiveCounts naive_confusion(const MaskTensor& pred, const MaskTensor& gt) {
  const auto pa = pred.tensor().accessor<float, 3>();
  const auto ga = gt.tensor().accessor<float, 3>();
  NaiveCounts c;
  for (std::int64_t y = 0; y < pred.height(); ++y) {
    for (std::int64_t x = 0; x < pred.width(); ++x) {
      const bool p = pa[0][y][x] > 0.5f;
      const bool g = ga[0][y][x] > 0.5f;
      c.tp += p && g;
      c.fp += p && !g;
      c.fn += !p && g;
      c.tn += !p && !g;
    }
  }
  return c;
}

inline double naive_precision(const NaiveCounts& c) {
  return c.tp + c.fp == 0 ? 1.0
                          : static_cast<double>(c.tp) /
                                static_cast<double>(c.tp + c.fp);
}

inline double naive_recall(const NaiveCounts& c) {
  return c.tp + c.fn == 0 ? 1.0
                          : static_cast<double>(c.tp) /
                                static_cast<double>(c.tp + c.fn);
}

inline double naive_dice(const NaiveCounts& c) {
  const auto den = 2 * c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

inline double naive_mse(const ProbMap& p, const MaskTensor& g) {
  const auto pa = p.tensor().accessor<float, 3>();
  const auto ga = g.tensor().accessor<float, 3>();
  double sum = 0.0;
  for (std::int64_t y = 0; y < p.height(); ++y) {
    for (std::int64_t x = 0; x < p.width(); ++x) {
      const double d = static_cast<double>(pa[0][y][x]) -
                       static_cast<double>(ga[0][y][x]);
      sum += d * d;
    }
  }
  return sum / static_cast<double>(p.height() * p.width());
}

/// Thresholds with >= in a plain loop (independent of cris::binarize).
inline MaskTensor naive_binarize(const ProbMap& p, double t) {
  auto out = torch::zeros_like(p.tensor());
  const auto pa = p.tensor().accessor<float, 3>();
  auto oa = out.accessor<float, 3>();
  for (std::int64_t y = 0; y < p.height(); ++y) {
    for (std::int64_t x = 0; x < p.width(); ++x) {
      oa[0][y][x] = pa[0][y][x] >= static_cast<float>(t) ? 1.0f : 0.0f;
    }
  }
  return MaskTensor::unchecked(out);
}

/// Exhaustive macro-DICE argmax over the grid with smallest-threshold ties.
inline double naive_best_threshold(const std::vector<ProbMap>& probs,
                                   const std::vector<MaskTensor>& gts,
                                   std::vector<double> grid) {
  std::sort(grid.begin(), grid.end());
  double best_t = grid.front();
  double best_score = -1.0;
  for (const double t : grid) {
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      sum += naive_dice(naive_confusion(naive_binarize(probs[i], t), gts[i]));
    }
    const double mean = sum / static_cast<double>(probs.size());
    if (mean > best_score) {
      best_score = mean;
      best_t = t;
    }
  }
  return best_t;
}

inline bool bitwise_equal(const torch::Tensor& a, const torch::Tensor& b) {
  return a.sizes() == b.sizes() && a.dtype() == b.dtype() &&
         torch::equal(a, b);
}

/// One finite-difference probe of f around x0. Networks with ReLU/max-pool
/// have kinks; a probe whose one-sided differences disagree has a kink
/// inside the window, where a central difference is not a derivative
/// estimate, and is reported as invalid rather than compared.
struct FdProbe {
  double central = 0.0;
  bool valid = false;
};

template <typename F>
FdProbe fd_probe(F&& f, double x0, double h) {
  const double f0 = f(x0);
  const double f_plus = f(x0 + h);
  const double f_minus = f(x0 - h);
  const double left = (f0 - f_minus) / h;
  const double right = (f_plus - f0) / h;
  FdProbe probe;
  probe.central = (f_plus - f_minus) / (2.0 * h);
  probe.valid = std::abs(left - right) <=
                0.1 * std::max({std::abs(left), std::abs(right), 1e-8});
  return probe;
}

inline bool grad_close(double autodiff, double fd, double rel_tol = 1e-3) {
  return std::abs(autodiff - fd) <=
         rel_tol * std::max({std::abs(autodiff), std::abs(fd), 1e-8});
}

inline std::vector<torch::Tensor> clone_all(
    const std::vector<torch::Tensor>& params) {
  std::vector<torch::Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.detach().clone());
  return out;
}

}  // namespace cris::test
