#include "lmke/descriptor_math.hpp"

#include <algorithm>
#include <cmath>

#include "lmke/errors.hpp"

namespace lmke {

namespace {

constexpr double kUnitNormTolerance = 1e-5;

void check_gem_params(const GemParams& params) {
  if (!(params.p >= 1.0)) throw ParamError("GeM exponent p must be >= 1");
  if (!(params.eps > 0.0)) throw ParamError("GeM eps must be positive");
}

void check_arc_params(const ArcMarginParams& params) {
  if (!(params.scale > 0.0)) throw ParamError("arcmargin scale must be positive");
  if (!(params.margin >= 0.0) || params.margin >= std::acos(-1.0) / 2.0) {
    throw ParamError("arcmargin margin must lie in [0, pi/2)");
  }
}

double unit_dot_or_throw(std::span<const double> a, std::span<const double> b,
                         const char* what) {
  if (a.size() != b.size()) throw ParamError("dimension mismatch in " + std::string(what));
  double dot = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) dot += a[t] * b[t];
  return dot;
}

double l2(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

void require_unit(std::span<const double> v, const char* name) {
  if (std::abs(l2(v) - 1.0) > kUnitNormTolerance) {
    throw NormError(std::string(name) + " is not unit-norm within 1e-5");
  }
}

}  // namespace

FeatureMap::FeatureMap(std::size_t c, std::size_t h, std::size_t w)
    : FeatureMap(c, h, w, std::vector<float>(c * h * w, 0.0f)) {}

FeatureMap::FeatureMap(std::size_t c, std::size_t h, std::size_t w,
                       std::vector<float> values)
    : channels(c), height(h), width(w), data(std::move(values)) {
  if (c == 0 || h == 0 || w == 0) {
    throw ParamError("feature map dimensions must be >= 1");
  }
  if (data.size() != c * h * w) {
    throw IntegrityError("feature map data size does not match c*h*w");
  }
  for (float v : data) {
    if (!(v >= 0.0f)) throw IntegrityError("feature map entries must be >= 0");
  }
}

std::vector<double> gem_pool(const FeatureMap& map, const GemParams& params) {
  check_gem_params(params);
  const std::size_t plane = map.plane();
  std::vector<double> pooled(map.channels);
  for (std::size_t c = 0; c < map.channels; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double x = std::max<double>(map.data[c * plane + i], params.eps);
      sum += std::pow(x, params.p);
    }
    pooled[c] = std::pow(sum / static_cast<double>(plane), 1.0 / params.p);
  }
  return pooled;
}

std::vector<double> gem_pool_grad(const FeatureMap& map, const GemParams& params,
                                  std::span<const double> upstream) {
  check_gem_params(params);
  if (upstream.size() != map.channels) {
    throw ParamError("upstream gradient length must equal channel count");
  }
  const std::size_t plane = map.plane();
  const auto pooled = gem_pool(map, params);
  std::vector<double> grad(map.data.size(), 0.0);
  for (std::size_t c = 0; c < map.channels; ++c) {
    // d f / d x_i = (1/(h*w)) * x_i^(p-1) * f^(1-p) for x_i above the clamp.
    const double scale = upstream[c] * std::pow(pooled[c], 1.0 - params.p) /
                         static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      const double x = map.data[c * plane + i];
      if (x > params.eps) {
        grad[c * plane + i] = scale * std::pow(x, params.p - 1.0);
      }
    }
  }
  return grad;
}

std::vector<double> arcmargin_logits(std::span<const double> embedding,
                                     const Matrix& weights, std::size_t target,
                                     const ArcMarginParams& params) {
  check_arc_params(params);
  if (weights.empty()) throw ParamError("weight matrix is empty");
  if (target >= weights.size()) {
    throw IndexError("target class " + std::to_string(target) +
                     " out of range for " + std::to_string(weights.size()) +
                     " classes");
  }
  require_unit(embedding, "embedding");
  for (const auto& row : weights) require_unit(row, "weight row");

  const double cos_m = std::cos(params.margin);
  const double sin_m = std::sin(params.margin);
  // Guard threshold: once theta + m would wrap past pi, fall back to the
  // linear penalty s*(cos theta - m*sin m).
  const double guard = std::cos(std::acos(-1.0) - params.margin);

  std::vector<double> logits(weights.size());
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const double cos_t = unit_dot_or_throw(embedding, weights[j], "arcmargin_logits");
    if (j == target) {
      if (cos_t > guard) {
        const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
        logits[j] = params.scale * (cos_t * cos_m - sin_t * sin_m);
      } else {
        logits[j] = params.scale * (cos_t - params.margin * sin_m);
      }
    } else {
      logits[j] = params.scale * cos_t;
    }
  }
  return logits;
}

double arcmargin_loss(const Matrix& embeddings, const Matrix& weights,
                      const std::vector<std::size_t>& targets,
                      const ArcMarginParams& params) {
  if (embeddings.empty()) throw ParamError("batch must be nonempty");
  if (embeddings.size() != targets.size()) {
    throw ParamError("batch and target counts differ");
  }
  double total = 0.0;
  for (std::size_t b = 0; b < embeddings.size(); ++b) {
    const auto logits = arcmargin_logits(embeddings[b], weights, targets[b], params);
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum_exp = 0.0;
    for (double z : logits) sum_exp += std::exp(z - max_logit);
    // -log softmax(target) = logsumexp(z) - z_target
    total += max_logit + std::log(sum_exp) - logits[targets[b]];
  }
  return total / static_cast<double>(embeddings.size());
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ParamError("cosine_similarity dimension mismatch");
  const double na = l2(a);
  const double nb = l2(b);
  if (na <= 1e-12 || nb <= 1e-12) {
    throw ZeroVectorError("cosine_similarity on a zero vector");
  }
  double dot = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) dot += a[t] * b[t];
  return dot / (na * nb);
}

}  // namespace lmke
