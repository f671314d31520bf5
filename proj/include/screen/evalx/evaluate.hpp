#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "screen/corpus/types.hpp"
#include "screen/evalx/metrics.hpp"
#include "screen/model/cnn.hpp"
#include "screen/model/network.hpp"
#include "screen/views/views.hpp"

namespace screen::evalx {

struct Prediction {
  std::string id;
  corpus::Label truth = corpus::Label::normal;
  double probability = 0;
  corpus::Label predicted = corpus::Label::normal;
};

struct Evaluation {
  MetricsReport report;
  std::vector<Prediction> predictions;
};

inline ConfusionMatrix tally(std::span<const Prediction> predictions) {
  ConfusionMatrix c;
  for (const auto& p : predictions) {
    const bool truth = p.truth == corpus::Label::tb;
    const bool said = p.predicted == corpus::Label::tb;
    (truth ? (said ? c.tp : c.fn) : (said ? c.fp : c.tn)) += 1;
  }
  return c;
}

/// Classifies every sample as tb when sigmoid(logit) >= threshold.
/// `logit_of` receives the model-sized central input of each sample.
inline Evaluation evaluate(std::span<const corpus::ImageSample> samples, int input_side, double threshold,
                           const std::function<double(const Image&)>& logit_of) {
  if (samples.empty()) invalid("evaluation needs a nonempty test split");
  if (!(threshold >= 0 && threshold <= 1)) invalid("threshold must lie in [0,1]");
  Evaluation ev;
  for (const auto& s : samples) {
    const double logit = logit_of(views::prepare_input(s.pixels, input_side));
    const double p = logit >= 0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
    ev.predictions.push_back({s.id, s.label, p, p >= threshold ? corpus::Label::tb : corpus::Label::normal});
  }
  ev.report = compute_metrics(tally(ev.predictions));
  return ev;
}

template <typename S>
Evaluation evaluate(model::Network<S>& net, std::span<const corpus::ImageSample> samples, double threshold = 0.5) {
  return evaluate(samples, net.encoder_config().input_side, threshold,
                  [&net](const Image& img) { return static_cast<double>(net.infer(img).logits(0, 0)); });
}

template <typename S>
Evaluation evaluate(model::BaselineCnn<S>& net, std::span<const corpus::ImageSample> samples,
                    double threshold = 0.5) {
  return evaluate(samples, net.config().input_side, threshold,
                  [&net](const Image& img) { return static_cast<double>(net.forward(img, nullptr)); });
}

}  // namespace screen::evalx
