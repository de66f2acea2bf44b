#pragma once

#include <torch/types.h>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pixfuse/scenedata.hpp"

namespace pixfuse {

// Rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  // Pixels whose ground truth is kUnlabeled are skipped; any other id
  // outside [0, C) in either map is a ShapeError.
  void accumulate(const torch::Tensor& pred, const torch::Tensor& gt);
  void add(int gt, int pred, int64_t count = 1);

  int num_classes() const { return classes_; }
  int64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt * classes_ + pred)]; }
  int64_t row_sum(int gt) const;
  int64_t col_sum(int pred) const;
  int64_t total() const;

 private:
  int classes_;
  std::vector<int64_t> counts_;
};

struct EvalReport {
  ConfusionMatrix confusion{1};
  std::vector<double> class_accuracy;  // NaN for classes absent from gt
  std::vector<double> class_iou;       // NaN for classes absent from gt
  std::vector<bool> present;
  double aa = 0.0;
  double miou = 0.0;
};

// Per-class accuracy is diag / row sum; IoU is TP / (TP + FP + FN). AA and
// mIoU average over classes that occur in the ground truth. EvalError when
// no pixel is labeled.
// `include`, when given, further restricts the averaged classes.
EvalReport summarize(const ConfusionMatrix& confusion, const std::vector<bool>& include = {});
EvalReport evaluate(std::span<const torch::Tensor> pred, std::span<const torch::Tensor> gt,
                    const ClassScheme& scheme);

// One JSON object with aa, miou and a row per class.
void write_report_json(const std::filesystem::path& path, const EvalReport& report, const ClassScheme& scheme);

}  // namespace pixfuse
