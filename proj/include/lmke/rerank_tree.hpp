#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lmke/types.hpp"

namespace lmke {

// Binary tree node. feature >= 0 marks an internal node routing
// x[feature] < threshold to left, else right; feature == -1 marks a leaf
// contributing value.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double shrinkage = 1.0;

  double eval(std::span<const double> row) const;
};

// Gradient-boosted stump/tree ensemble used to recalibrate prediction
// confidences. predict() is base_score + sum of shrinkage-scaled tree
// outputs, clamped to [0, 1].
struct TreeModel {
  double base_score = 0.0;
  std::size_t num_features = 0;
  std::vector<RegressionTree> trees;

  double predict_raw(std::span<const double> row) const;
  double predict(std::span<const double> row) const;

  std::string to_json_string() const;
  static TreeModel from_json_string(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static TreeModel load(const std::filesystem::path& path);
};

struct TreeTrainParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 3;
  double shrinkage = 0.1;
  std::size_t min_leaf = 5;
};

// Fits gradient-boosted regression trees to logistic loss with exact greedy
// splits. Deterministic given input order: split ties resolve to the lowest
// feature index, then the lowest threshold; no sampling anywhere.
TreeModel train_rerank_tree(const std::vector<std::vector<double>>& features,
                            const std::vector<int>& labels,
                            const TreeTrainParams& params = {});

// Recalibrated confidences in [0, 1], one per feature row.
std::vector<double> apply_rerank(const TreeModel& model,
                                 const std::vector<std::vector<double>>& features);

}  // namespace lmke
