#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "embal/perception.hpp"

namespace embal {

/// Pooled confusion counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);

  void add(int truth, int predicted);
  void add(const std::vector<int>& truth, const std::vector<int>& predicted);

  int classes() const { return classes_; }
  std::int64_t count(int truth, int predicted) const {
    return counts_[static_cast<std::size_t>(truth) * classes_ + predicted];
  }
  std::int64_t total() const { return total_; }

  /// IoU of one class; nullopt when the class is absent from truth and prediction.
  std::optional<double> iou(int cls) const;

  /// Mean IoU over `subset` when given, otherwise over classes present in
  /// truth or prediction. Classes with an empty union are skipped; an empty
  /// remaining set throws.
  double mean_iou(const std::optional<std::vector<int>>& subset = std::nullopt) const;

  double accuracy() const;

 private:
  int classes_;
  std::vector<std::int64_t> counts_;
  std::int64_t total_ = 0;
};

ConfusionMatrix confusion(const SegModel& model, const std::vector<View>& refset);

double miou(const SegModel& model, const std::vector<View>& refset,
            const std::optional<std::vector<int>>& class_subset = std::nullopt);

double mean_accuracy(const SegModel& model, const std::vector<View>& refset);

/// The k classes with the most ground-truth pixels (ties to the lower id);
/// all present classes when fewer than k exist. Returned in rank order.
std::vector<int> top_k_classes(const std::vector<View>& refset, int k = 10);

}  // namespace embal
