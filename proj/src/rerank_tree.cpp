#include "lmke/rerank_tree.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "lmke/errors.hpp"

namespace lmke {

namespace {

constexpr double kLambda = 1e-6;   // denominator regularizer for Newton steps
constexpr double kMinGain = 1e-12;
constexpr double kProbClamp = 1e-4;  // keeps logistic gradients finite

struct Sample {
  double value = 0.0;
  std::uint32_t row = 0;
};

struct SplitChoice {
  double gain = 0.0;
  std::int32_t feature = -1;
  double threshold = 0.0;
};

struct Trainer {
  const std::vector<std::vector<double>>& features;
  std::span<const double> grad;
  std::span<const double> hess;
  std::size_t num_features;
  const TreeTrainParams& params;
  std::vector<TreeNode> nodes;

  double leaf_value(double g_sum, double h_sum) const {
    return -g_sum / (h_sum + kLambda);
  }

  static double score(double g, double h) { return g * g / (h + kLambda); }

  SplitChoice best_split(std::span<const std::uint32_t> rows) const {
    double g_total = 0.0, h_total = 0.0;
    for (std::uint32_t r : rows) {
      g_total += grad[r];
      h_total += hess[r];
    }
    const double parent = score(g_total, h_total);

    SplitChoice best;
    std::vector<Sample> sorted(rows.size());
    for (std::size_t f = 0; f < num_features; ++f) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        sorted[i] = {features[rows[i]][f], rows[i]};
      }
      // Row index as tie key keeps prefix sums independent of the sort
      // implementation, so identical inputs give bit-identical models.
      std::sort(sorted.begin(), sorted.end(), [](const Sample& a, const Sample& b) {
        return a.value != b.value ? a.value < b.value : a.row < b.row;
      });

      double g_left = 0.0, h_left = 0.0;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        g_left += grad[sorted[i].row];
        h_left += hess[sorted[i].row];
        if (sorted[i].value == sorted[i + 1].value) continue;  // no boundary
        const std::size_t n_left = i + 1;
        const std::size_t n_right = sorted.size() - n_left;
        if (n_left < params.min_leaf || n_right < params.min_leaf) continue;
        const double gain = score(g_left, h_left) +
                            score(g_total - g_left, h_total - h_left) - parent;
        if (gain > best.gain + kMinGain) {
          best.gain = gain;
          best.feature = static_cast<std::int32_t>(f);
          best.threshold = sorted[i].value +
                           0.5 * (sorted[i + 1].value - sorted[i].value);
        }
      }
    }
    return best;
  }

  std::int32_t build(std::vector<std::uint32_t>& rows, std::size_t depth) {
    double g_sum = 0.0, h_sum = 0.0;
    for (std::uint32_t r : rows) {
      g_sum += grad[r];
      h_sum += hess[r];
    }

    const std::int32_t id = static_cast<std::int32_t>(nodes.size());
    nodes.emplace_back();

    SplitChoice split;
    if (depth < params.max_depth && rows.size() >= 2 * params.min_leaf) {
      split = best_split(rows);
    }
    if (split.feature < 0) {
      nodes[id].value = leaf_value(g_sum, h_sum);
      return id;
    }

    std::vector<std::uint32_t> left_rows, right_rows;
    left_rows.reserve(rows.size());
    right_rows.reserve(rows.size());
    for (std::uint32_t r : rows) {
      (features[r][split.feature] < split.threshold ? left_rows : right_rows)
          .push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    nodes[id].feature = split.feature;
    nodes[id].threshold = split.threshold;
    nodes[id].left = build(left_rows, depth + 1);
    nodes[id].right = build(right_rows, depth + 1);
    return id;
  }
};

}  // namespace

double RegressionTree::eval(std::span<const double> row) const {
  std::size_t node = 0;
  while (nodes[node].feature >= 0) {
    const auto& n = nodes[node];
    node = row[static_cast<std::size_t>(n.feature)] < n.threshold
               ? static_cast<std::size_t>(n.left)
               : static_cast<std::size_t>(n.right);
  }
  return nodes[node].value;
}

double TreeModel::predict_raw(std::span<const double> row) const {
  double score = base_score;
  for (const auto& tree : trees) score += tree.shrinkage * tree.eval(row);
  return score;
}

double TreeModel::predict(std::span<const double> row) const {
  return std::clamp(predict_raw(row), 0.0, 1.0);
}

TreeModel train_rerank_tree(const std::vector<std::vector<double>>& features,
                            const std::vector<int>& labels,
                            const TreeTrainParams& params) {
  if (features.empty()) throw ParamError("no training rows");
  if (features.size() != labels.size()) {
    throw ParamError("feature and label counts differ");
  }
  if (params.shrinkage <= 0.0 || params.shrinkage > 1.0) {
    throw ParamError("shrinkage must lie in (0, 1]");
  }
  if (params.min_leaf == 0) throw ParamError("min_leaf must be >= 1");
  const std::size_t num_features = features[0].size();
  if (num_features == 0) throw ParamError("feature rows are empty");

  std::size_t positives = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != num_features) {
      throw ParamError("ragged feature matrix");
    }
    for (double v : features[i]) {
      if (!std::isfinite(v)) throw ParamError("non-finite feature value");
    }
    if (labels[i] != 0 && labels[i] != 1) {
      throw ParamError("labels must be 0 or 1");
    }
    positives += static_cast<std::size_t>(labels[i]);
  }
  if (positives == 0 || positives == features.size()) {
    throw DegenerateLabelError("training labels contain a single class");
  }

  const std::size_t n = features.size();

  // The model is additive directly in probability space, so logistic loss
  // -[y ln F + (1-y) ln(1-F)] is boosted with the identity link:
  //   y = 1: g = -1/F,     h = 1/F^2
  //   y = 0: g = 1/(1-F),  h = 1/(1-F)^2
  TreeModel model;
  model.base_score = static_cast<double>(positives) / static_cast<double>(n);
  model.num_features = num_features;

  std::vector<double> raw(n, model.base_score);
  std::vector<double> grad(n), hess(n);
  std::vector<std::uint32_t> all_rows(n);

  for (std::size_t t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = std::clamp(raw[i], kProbClamp, 1.0 - kProbClamp);
      if (labels[i] == 1) {
        grad[i] = -1.0 / p;
        hess[i] = 1.0 / (p * p);
      } else {
        grad[i] = 1.0 / (1.0 - p);
        hess[i] = 1.0 / ((1.0 - p) * (1.0 - p));
      }
    }
    for (std::size_t i = 0; i < n; ++i) all_rows[i] = static_cast<std::uint32_t>(i);

    Trainer trainer{features, grad, hess, num_features, params, {}};
    std::vector<std::uint32_t> root_rows = all_rows;
    trainer.build(root_rows, 0);

    RegressionTree tree;
    tree.nodes = std::move(trainer.nodes);
    tree.shrinkage = params.shrinkage;
    for (std::size_t i = 0; i < n; ++i) {
      raw[i] += tree.shrinkage * tree.eval(features[i]);
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

std::vector<double> apply_rerank(const TreeModel& model,
                                 const std::vector<std::vector<double>>& features) {
  std::vector<double> out;
  out.reserve(features.size());
  for (const auto& row : features) {
    if (model.num_features != 0 && row.size() != model.num_features) {
      throw ParamError("feature row width " + std::to_string(row.size()) +
                       " does not match model width " +
                       std::to_string(model.num_features));
    }
    out.push_back(model.predict(row));
  }
  return out;
}

std::string TreeModel::to_json_string() const {
  nlohmann::ordered_json doc;
  doc["format"] = "lmke-rerank-tree";
  doc["version"] = 1;
  doc["base_score"] = base_score;
  doc["num_features"] = num_features;
  auto& trees_json = doc["trees"] = nlohmann::ordered_json::array();
  for (const auto& tree : trees) {
    nlohmann::ordered_json t;
    t["shrinkage"] = tree.shrinkage;
    auto& nodes_json = t["nodes"] = nlohmann::ordered_json::array();
    for (const auto& n : tree.nodes) {
      nodes_json.push_back({{"feature", n.feature},
                            {"threshold", n.threshold},
                            {"left", n.left},
                            {"right", n.right},
                            {"value", n.value}});
    }
    trees_json.push_back(std::move(t));
  }
  return doc.dump(2) + "\n";
}

TreeModel TreeModel::from_json_string(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("rerank model is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format") != "lmke-rerank-tree" || doc.at("version") != 1) {
      throw FormatError("unknown rerank model format/version");
    }
    TreeModel model;
    model.base_score = doc.at("base_score").get<double>();
    model.num_features = doc.at("num_features").get<std::size_t>();
    for (const auto& t : doc.at("trees")) {
      RegressionTree tree;
      tree.shrinkage = t.at("shrinkage").get<double>();
      for (const auto& n : t.at("nodes")) {
        TreeNode node;
        node.feature = n.at("feature").get<std::int32_t>();
        node.threshold = n.at("threshold").get<double>();
        node.left = n.at("left").get<std::int32_t>();
        node.right = n.at("right").get<std::int32_t>();
        node.value = n.at("value").get<double>();
        tree.nodes.push_back(node);
      }
      if (tree.nodes.empty()) throw FormatError("tree with no nodes");
      for (const auto& node : tree.nodes) {
        if (node.feature >= 0) {
          const bool left_ok = node.left >= 0 &&
                               node.left < static_cast<std::int32_t>(tree.nodes.size());
          const bool right_ok = node.right >= 0 &&
                                node.right < static_cast<std::int32_t>(tree.nodes.size());
          if (!left_ok || !right_ok || !std::isfinite(node.threshold)) {
            throw FormatError("malformed internal node");
          }
        }
      }
      model.trees.push_back(std::move(tree));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("rerank model JSON missing fields: ") + e.what());
  }
}

void TreeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << to_json_string();
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

TreeModel TreeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_string(text);
}

}  // namespace lmke
