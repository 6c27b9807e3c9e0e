#include "embal/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace embal {

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
  if (classes <= 0) throw Error("ConfusionMatrix: class count must be positive");
  counts_.assign(static_cast<std::size_t>(classes) * classes, 0);
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || truth >= classes_ || predicted < 0 || predicted >= classes_)
    throw Error("ConfusionMatrix: class id out of range");
  ++counts_[static_cast<std::size_t>(truth) * classes_ + predicted];
  ++total_;
}

void ConfusionMatrix::add(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) throw Error("ConfusionMatrix: length mismatch");
  for (std::size_t i = 0; i < truth.size(); ++i) add(truth[i], predicted[i]);
}

std::optional<double> ConfusionMatrix::iou(int cls) const {
  std::int64_t gt = 0, pred = 0;
  for (int k = 0; k < classes_; ++k) {
    gt += count(cls, k);
    pred += count(k, cls);
  }
  const std::int64_t tp = count(cls, cls);
  const std::int64_t uni = gt + pred - tp;
  if (uni == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(uni);
}

double ConfusionMatrix::mean_iou(const std::optional<std::vector<int>>& subset) const {
  std::vector<int> classes;
  if (subset) {
    classes = *subset;
  } else {
    classes.resize(classes_);
    std::iota(classes.begin(), classes.end(), 0);
  }
  double sum = 0.0;
  int n = 0;
  for (int c : classes) {
    if (c < 0 || c >= classes_) throw Error("mean_iou: class id out of range");
    if (auto v = iou(c)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) throw Error("mean_iou: empty effective class set");
  return sum / n;
}

double ConfusionMatrix::accuracy() const {
  if (total_ == 0) throw Error("accuracy: no pixels");
  std::int64_t diag = 0;
  for (int k = 0; k < classes_; ++k) diag += count(k, k);
  return static_cast<double>(diag) / static_cast<double>(total_);
}

ConfusionMatrix confusion(const SegModel& model, const std::vector<View>& refset) {
  if (refset.empty()) throw Error("evaluation: empty reference set");
  ConfusionMatrix cm(model.shape.classes);
  for (const auto& v : refset) cm.add(v.gt_class, predict_labels(model, v));
  return cm;
}

double miou(const SegModel& model, const std::vector<View>& refset,
            const std::optional<std::vector<int>>& class_subset) {
  return confusion(model, refset).mean_iou(class_subset);
}

double mean_accuracy(const SegModel& model, const std::vector<View>& refset) {
  return confusion(model, refset).accuracy();
}

std::vector<int> top_k_classes(const std::vector<View>& refset, int k) {
  if (refset.empty()) throw Error("top_k_classes: empty reference set");
  std::map<int, std::int64_t> counts;
  for (const auto& v : refset)
    for (int c : v.gt_class) ++counts[c];
  std::vector<std::pair<int, std::int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<int> out;
  for (std::size_t i = 0; i < ranked.size() && static_cast<int>(i) < k; ++i)
    out.push_back(ranked[i].first);
  return out;
}

}  // namespace embal
