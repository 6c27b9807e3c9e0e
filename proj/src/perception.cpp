#include "embal/perception.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <string>

namespace embal {

void validate(const TrainConfig& c) {
  if (c.batch_size <= 0 || c.learning_rate <= 0.0 || c.momentum < 0.0 || c.weight_decay < 0.0 ||
      c.max_iters <= 0)
    throw Error("TrainConfig: values must be positive");
  if (!(c.early_stop_acc > 0.0 && c.early_stop_acc <= 1.0))
    throw Error("TrainConfig: early_stop_acc must lie in (0, 1]");
  if (!(c.min_crop_fraction > 0.0 && c.min_crop_fraction <= 1.0))
    throw Error("TrainConfig: min_crop_fraction must lie in (0, 1]");
}

SegModel init_model(std::uint64_t seed, const SegShape& shape) {
  if (shape.width <= 0 || shape.appearance_dim <= 0 || shape.context < 0 || shape.classes < 1)
    throw Error("init_model: invalid shape");
  SegModel m;
  m.shape = shape;
  m.init_seed = seed;
  m.weights.resize(shape.classes, m.feature_count());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 0.01);
  for (Eigen::Index r = 0; r < m.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < m.weights.cols(); ++c) m.weights(r, c) = gauss(rng);
  m.velocity = Eigen::MatrixXd::Zero(m.weights.rows(), m.weights.cols());
  return m;
}

Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& features, const std::vector<double>& depth,
                              int context) {
  const int w = static_cast<int>(features.rows());
  const int d = static_cast<int>(features.cols());
  const int window = 2 * context + 1;
  Eigen::MatrixXd x(w, window * d + 2);
  for (int p = 0; p < w; ++p) {
    for (int o = -context; o <= context; ++o) {
      const int q = std::clamp(p + o, 0, w - 1);
      x.block(p, (o + context) * d, 1, d) = features.row(q);
    }
    x(p, window * d) = depth[p] / kDepthScale;
    x(p, window * d + 1) = 1.0;
  }
  return x;
}

namespace {

void softmax_rows(Eigen::MatrixXd& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - mx).exp();
    logits.row(r) /= logits.row(r).sum();
  }
}

void check_width(const SegModel& model, const View& view) {
  if (view.width() != model.shape.width)
    throw Error("SegModel: view width " + std::to_string(view.width()) +
                " does not match model width " + std::to_string(model.shape.width));
  if (view.features.cols() != model.shape.appearance_dim)
    throw Error("SegModel: appearance dimension mismatch");
}

}  // namespace

Eigen::MatrixXd predict(const SegModel& model, const View& view) {
  check_width(model, view);
  Eigen::MatrixXd logits =
      design_matrix(view.features, view.depth, model.shape.context) * model.weights.transpose();
  softmax_rows(logits);
  return logits;
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& probs) {
  std::vector<int> out(probs.rows());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Eigen::Index k = 0;
    probs.row(r).maxCoeff(&k);
    out[r] = static_cast<int>(k);
  }
  return out;
}

std::vector<int> predict_labels(const SegModel& model, const View& view) {
  return argmax_rows(predict(model, view));
}

LossAndGradient cross_entropy(const Eigen::MatrixXd& weights,
                              const std::vector<Eigen::MatrixXd>& designs,
                              const std::vector<std::vector<int>>& labels, double weight_decay) {
  LossAndGradient out;
  out.gradient = Eigen::MatrixXd::Zero(weights.rows(), weights.cols());
  for (std::size_t b = 0; b < designs.size(); ++b) {
    const Eigen::MatrixXd& x = designs[b];
    Eigen::MatrixXd p = x * weights.transpose();
    softmax_rows(p);
    const auto& y = labels[b];
    // Rows of unknown pixels are zeroed so they contribute nothing.
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const int cls = y[r];
      if (cls == kUnknown) {
        p.row(r).setZero();
        continue;
      }
      ++out.known_pixels;
      Eigen::Index arg = 0;
      p.row(r).maxCoeff(&arg);
      if (arg == cls) ++out.correct_pixels;
      out.loss -= std::log(std::max(p(r, cls), 1e-300));
      p(r, cls) -= 1.0;
    }
    out.gradient.noalias() += p.transpose() * x;
  }
  if (out.known_pixels > 0) {
    out.loss /= out.known_pixels;
    out.gradient /= out.known_pixels;
  }
  out.loss += 0.5 * weight_decay * weights.squaredNorm();
  out.gradient += weight_decay * weights;
  return out;
}

LabeledView augment_crop(const LabeledView& sample, double min_fraction, std::mt19937_64& rng) {
  const int w = sample.view.width();
  const int min_len = std::max(1, static_cast<int>(std::ceil(min_fraction * w)));
  std::uniform_int_distribution<int> len_dist(min_len, w);
  const int len = len_dist(rng);
  std::uniform_int_distribution<int> off_dist(0, w - len);
  const int off = off_dist(rng);

  LabeledView out;
  out.view.pose = sample.view.pose;
  out.view.origin = sample.view.origin;
  out.view.fov_deg = sample.view.fov_deg;
  out.view.features.resize(w, sample.view.features.cols());
  out.view.gt_class.resize(w);
  out.view.depth.resize(w);
  out.view.hit_points.resize(w);
  out.labels.resize(w);
  for (int p = 0; p < w; ++p) {
    const int src = off + static_cast<int>(static_cast<long long>(p) * len / w);
    out.view.features.row(p) = sample.view.features.row(src);
    out.view.gt_class[p] = sample.view.gt_class[src];
    out.view.depth[p] = sample.view.depth[src];
    out.view.hit_points[p] = sample.view.hit_points[src];
    out.labels[p] = sample.labels[src];
  }
  return out;
}

RefineStats refine(SegModel& model, const TrainSet& trainset, const TrainConfig& config,
                   std::mt19937_64& rng) {
  if (trainset.empty()) throw Error("refine: empty training set");
  validate(config);
  for (const auto& s : trainset) check_width(model, s.view);

  RefineStats stats;
  std::uniform_int_distribution<std::size_t> pick(0, trainset.size() - 1);
  std::vector<Eigen::MatrixXd> clean(trainset.size());  // un-augmented designs, filled lazily
  std::vector<std::size_t> chosen(config.batch_size);
  std::vector<Eigen::MatrixXd> designs(config.batch_size);
  std::vector<std::vector<int>> labels(config.batch_size);
  for (int it = 0; it < config.max_iters; ++it) {
    for (int b = 0; b < config.batch_size; ++b) chosen[b] = b == 0 ? trainset.size() - 1 : pick(rng);

    // The stopping rule looks at the sampled views as they are, so stopping
    // means the model already labels those views correctly.
    int known = 0, correct = 0;
    for (std::size_t idx : chosen) {
      const LabeledView& s = trainset[idx];
      if (clean[idx].size() == 0) clean[idx] = design_matrix(s.view.features, s.view.depth, model.shape.context);
      const Eigen::MatrixXd logits = clean[idx] * model.weights.transpose();
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (s.labels[i] == kUnknown) continue;
        Eigen::Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        ++known;
        correct += arg == s.labels[i];
      }
    }
    if (known > 0) {
      stats.last_batch_accuracy = static_cast<double>(correct) / known;
      if (stats.last_batch_accuracy > config.early_stop_acc) {
        stats.early_stopped = true;
        break;
      }
    }

    for (int b = 0; b < config.batch_size; ++b) {
      LabeledView aug = augment_crop(trainset[chosen[b]], config.min_crop_fraction, rng);
      designs[b] = design_matrix(aug.view.features, aug.view.depth, model.shape.context);
      labels[b] = std::move(aug.labels);
    }
    const LossAndGradient lg = cross_entropy(model.weights, designs, labels, config.weight_decay);
    model.velocity = config.momentum * model.velocity + lg.gradient;
    model.weights -= config.learning_rate * model.velocity;
    ++stats.iterations;
  }
  return stats;
}

void save_model(std::ostream& out, const SegModel& m) {
  const auto prec = out.precision(17);
  out << "embal-segmodel 1\n"
      << m.shape.width << ' ' << m.shape.appearance_dim << ' ' << m.shape.context << ' '
      << m.shape.classes << ' ' << m.init_seed << '\n';
  for (Eigen::Index r = 0; r < m.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.weights.cols(); ++c) out << (c ? " " : "") << m.weights(r, c);
    out << '\n';
  }
  out.precision(prec);
}

SegModel load_model(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "embal-segmodel" || version != 1)
    throw Error("load_model: not a version-1 segmentation checkpoint");
  SegShape shape;
  std::uint64_t seed = 0;
  in >> shape.width >> shape.appearance_dim >> shape.context >> shape.classes >> seed;
  if (!in || shape.width <= 0 || shape.appearance_dim <= 0 || shape.context < 0 ||
      shape.classes <= 0 || shape.appearance_dim * (2 * shape.context + 1) > (1 << 20))
    throw Error("load_model: malformed header");
  SegModel m;
  m.shape = shape;
  m.init_seed = seed;
  m.weights.resize(shape.classes, m.feature_count());
  for (Eigen::Index r = 0; r < m.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < m.weights.cols(); ++c) in >> m.weights(r, c);
  if (!in) throw Error("load_model: truncated weights");
  m.velocity = Eigen::MatrixXd::Zero(m.weights.rows(), m.weights.cols());
  return m;
}

}  // namespace embal
