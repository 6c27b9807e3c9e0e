#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "embal/harness.hpp"

namespace embal {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

enum class CurveAxis { Step, Annotations };

/// Mean mIoU per method on a regular grid of the chosen axis. Step curves are
/// interpolated between checkpoints; annotation curves take the value after
/// the last point with at most that many annotations.
std::vector<PlotSeries> mean_curves(const std::vector<CurveRow>& rows, CurveAxis axis, int grid = 8);

/// Static line chart with axes, ticks and a legend.
void write_svg(std::ostream& out, const std::vector<PlotSeries>& series, const std::string& title,
               const std::string& x_label, const std::string& y_label);

}  // namespace embal
