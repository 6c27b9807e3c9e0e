#include "embal/propagation.hpp"

#include <algorithm>

namespace embal {

PropagatedMask::PropagatedMask(std::vector<int> labels) : labels_(std::move(labels)) {
  unknown_count_ = static_cast<int>(std::count(labels_.begin(), labels_.end(), kUnknown));
  unknown_fraction_ =
      labels_.empty() ? 1.0 : static_cast<double>(unknown_count_) / static_cast<double>(labels_.size());
}

PropagatedMask init_from_gt(const View& view) { return PropagatedMask(view.gt_class); }

PropagatedMask propagate(const PropagatedMask& mask, const CorrespondenceMap& corr) {
  std::vector<int> out(corr.size(), kUnknown);
  for (std::size_t j = 0; j < corr.size(); ++j) {
    const int i = corr[j];
    if (i == kNoMatch) continue;
    if (i < 0 || i >= mask.width()) throw Error("propagate: correspondence index out of range");
    out[j] = mask.labels()[i];
  }
  return PropagatedMask(std::move(out));
}

PropagatedMask do_annotate(TrainSet& trainset, const View& view) {
  trainset.push_back(LabeledView{view, view.gt_class});
  return init_from_gt(view);
}

void do_collect(TrainSet& trainset, const View& view, const PropagatedMask& mask) {
  if (mask.width() != view.width()) throw Error("do_collect: mask width does not match view");
  if (mask.all_unknown()) throw Error("do_collect: mask has no known pixels");
  trainset.push_back(LabeledView{view, mask.labels()});
}

}  // namespace embal
