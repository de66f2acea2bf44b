#include "pixfuse/metrics.hpp"

#include <torch/torch.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>

#include "pixfuse/errors.hpp"

namespace pixfuse {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : classes_(num_classes), counts_(static_cast<std::size_t>(num_classes * num_classes), 0) {
  if (num_classes < 1) throw ConfigError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(int gt, int pred, int64_t count) {
  if (gt < 0 || gt >= classes_ || pred < 0 || pred >= classes_) throw ShapeError("class id out of range");
  counts_[static_cast<std::size_t>(gt * classes_ + pred)] += count;
}

void ConfusionMatrix::accumulate(const torch::Tensor& pred, const torch::Tensor& gt) {
  if (pred.sizes() != gt.sizes()) throw ShapeError("prediction and ground truth differ in shape");
  auto p = pred.to(torch::kInt64).contiguous().view(-1);
  auto g = gt.to(torch::kInt64).contiguous().view(-1);
  const auto* pp = p.data_ptr<int64_t>();
  const auto* gp = g.data_ptr<int64_t>();
  for (int64_t i = 0; i < p.numel(); ++i) {
    if (gp[i] == kUnlabeled) continue;
    add(static_cast<int>(gp[i]), static_cast<int>(pp[i]));
  }
}

int64_t ConfusionMatrix::row_sum(int gt) const {
  int64_t s = 0;
  for (int j = 0; j < classes_; ++j) s += at(gt, j);
  return s;
}

int64_t ConfusionMatrix::col_sum(int pred) const {
  int64_t s = 0;
  for (int i = 0; i < classes_; ++i) s += at(i, pred);
  return s;
}

int64_t ConfusionMatrix::total() const {
  int64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

EvalReport summarize(const ConfusionMatrix& confusion, const std::vector<bool>& include) {
  if (confusion.total() == 0) throw EvalError("no labeled pixels to evaluate");
  const int c = confusion.num_classes();
  EvalReport r;
  r.confusion = confusion;
  r.class_accuracy.assign(c, std::numeric_limits<double>::quiet_NaN());
  r.class_iou.assign(c, std::numeric_limits<double>::quiet_NaN());
  r.present.assign(c, false);
  int present = 0;
  for (int k = 0; k < c; ++k) {
    const auto rows = confusion.row_sum(k);
    if (rows == 0) continue;
    if (!include.empty() && !include[static_cast<std::size_t>(k)]) continue;
    const auto tp = static_cast<double>(confusion.at(k, k));
    const auto fp = static_cast<double>(confusion.col_sum(k)) - tp;
    const auto fn = static_cast<double>(rows) - tp;
    r.present[k] = true;
    r.class_accuracy[k] = tp / static_cast<double>(rows);
    r.class_iou[k] = tp / (tp + fp + fn);
    r.aa += r.class_accuracy[k];
    r.miou += r.class_iou[k];
    ++present;
  }
  if (present == 0) throw EvalError("no evaluated class occurs in the ground truth");
  r.aa /= present;
  r.miou /= present;
  return r;
}

EvalReport evaluate(std::span<const torch::Tensor> pred, std::span<const torch::Tensor> gt,
                    const ClassScheme& scheme) {
  if (pred.size() != gt.size()) throw ShapeError("prediction and ground-truth sets differ in size");
  ConfusionMatrix cm(static_cast<int>(scheme.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) cm.accumulate(pred[i], gt[i]);
  return summarize(cm);
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report, const ClassScheme& scheme) {
  nlohmann::json j;
  j["aa"] = report.aa;
  j["miou"] = report.miou;
  auto rows = nlohmann::json::array();
  for (std::size_t k = 0; k < scheme.size(); ++k) {
    nlohmann::json row;
    row["id"] = k;
    row["name"] = scheme.names[k];
    row["present"] = static_cast<bool>(report.present[k]);
    if (report.present[k]) {
      row["accuracy"] = report.class_accuracy[k];
      row["iou"] = report.class_iou[k];
    } else {
      row["accuracy"] = nullptr;
      row["iou"] = nullptr;
    }
    auto counts = nlohmann::json::array();
    for (std::size_t p = 0; p < scheme.size(); ++p) counts.push_back(report.confusion.at(static_cast<int>(k), static_cast<int>(p)));
    row["confusion"] = counts;
    rows.push_back(row);
  }
  j["classes"] = rows;
  std::ofstream out(path);
  if (!out) throw PipelineError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace pixfuse
