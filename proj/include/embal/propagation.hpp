#pragma once

#include <vector>

#include "embal/perception.hpp"

namespace embal {

/// Per-pixel labels carried along agent motion; kUnknown marks pixels whose
/// annotation was lost. The unknown fraction is derived from the labels.
class PropagatedMask {
 public:
  PropagatedMask() = default;
  explicit PropagatedMask(std::vector<int> labels);

  const std::vector<int>& labels() const { return labels_; }
  int width() const { return static_cast<int>(labels_.size()); }
  double unknown_fraction() const { return unknown_fraction_; }
  int unknown_count() const { return unknown_count_; }
  bool all_unknown() const { return unknown_count_ == width(); }

  friend bool operator==(const PropagatedMask& a, const PropagatedMask& b) {
    return a.labels_ == b.labels_;
  }

 private:
  std::vector<int> labels_;
  int unknown_count_ = 0;
  double unknown_fraction_ = 0.0;
};

PropagatedMask init_from_gt(const View& view);

PropagatedMask propagate(const PropagatedMask& mask, const CorrespondenceMap& corr);

/// Appends the view with full ground truth and returns the reset mask.
PropagatedMask do_annotate(TrainSet& trainset, const View& view);

/// Appends the view with the propagated labels; throws when nothing is known.
void do_collect(TrainSet& trainset, const View& view, const PropagatedMask& mask);

}  // namespace embal
