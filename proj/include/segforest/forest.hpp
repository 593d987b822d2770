// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Static forest topology: tree shapes, class subsets, parameter layout and the
// SFF1 text serialization of a fitted forest model.

#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "segforest/sdf.hpp"

namespace segforest {

enum class NodeType : std::uint8_t { kLeaf, kBsp, kQuad };

struct TreeNode {
  NodeType type = NodeType::kLeaf;
  SdfKind sdf = SdfKind::kLine;  // meaningful for kBsp only
  std::vector<int> children;     // preorder node indices, 2 (Bsp) or 4 (Quad)
  int leaf_index = -1;           // preorder leaf number for leaves
  int leaf_begin = 0;            // leaves of this subtree are [leaf_begin, leaf_end)
  int leaf_end = 0;
  int param_offset = 0;          // into the tree's inner parameter vector
};

/// Number of parameters an inner node consumes (Quad: the split point).
int node_parameter_count(const TreeNode& node);

/// A complete tree in preorder. Inner nodes are BSP nodes (any SdfKind, two
/// children) or quadtree nodes (four children). Leaves are numbered in
/// preorder, so every subtree owns a contiguous leaf range.
class TreeShape {
 public:
  TreeShape() : TreeShape(from_codes("L")) {}

  static TreeShape bsp(SdfKind kind, int depth);
  /// Axis-aligned k-d tree; the split axis alternates X, Y, X, ... by depth.
  static TreeShape kd(int depth);
  static TreeShape dynamic_kd(int depth);
  static TreeShape quad(int depth);
  /// Preorder node codes separated by spaces or commas: `Q`, `B<sdf-code>`, `L`.
  static TreeShape from_codes(std::string_view codes);  // throws ParseError

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int leaf_count() const { return leaf_count_; }
  int inner_count() const { return static_cast<int>(inner_nodes_.size()); }
  /// Preorder indices of the inner nodes.
  const std::vector<int>& inner_nodes() const { return inner_nodes_; }
  int depth() const { return depth_; }
  int inner_parameter_count() const { return inner_parameter_count_; }
  bool has_quad() const;

  /// Space-separated preorder codes, e.g. "BL BL L L BL L L".
  std::string codes() const;

  /// Leaf indices reachable through `child_slot` of inner node `node_index`.
  std::vector<int> leaves_under(int node_index, int child_slot) const;
  std::pair<int, int> leaf_range(int node_index, int child_slot) const;

  bool operator==(const TreeShape& other) const { return codes() == other.codes(); }

 private:
  explicit TreeShape(std::vector<TreeNode> nodes);

  std::vector<TreeNode> nodes_;
  std::vector<int> inner_nodes_;
  int leaf_count_ = 0;
  int depth_ = 0;
  int inner_parameter_count_ = 0;
};

struct ClassSubset {
  std::vector<int> classes;  // global class indices, in logit order
  TreeShape shape;
};

struct ForestSpec {
  int block_size = 8;
  int class_count = 0;
  std::vector<ClassSubset> subsets;

  /// One subset holding every class.
  static ForestSpec single(int class_count, const TreeShape& shape,
                           int block_size = 8);
  /// One singleton subset per class, all sharing `shape`.
  static ForestSpec per_class(int class_count, const TreeShape& shape,
                              int block_size = 8);

  /// Throws ContractError unless the subsets partition {0..class_count−1}.
  void validate() const;
  /// |C_j| / |C|.
  double subset_weight(int j) const;
};

struct SubsetLayout {
  int inner_offset = 0;
  int inner_count = 0;
  int logit_offset = 0;
  int logit_count = 0;  // leaves × |C_j|
  int leaves = 0;
  int classes = 0;
  std::vector<int> node_offsets;  // absolute offset per inner node (preorder)
};

/// Flat parameter layout of one block: per subset, inner parameters followed
/// by leaf logits (leaf-major, class-minor).
struct ParamLayout {
  std::vector<SubsetLayout> subsets;
  int shape_parameters = 0;
  int content_parameters = 0;
  int total() const { return shape_parameters + content_parameters; }
};

ParamLayout param_layout(const ForestSpec& spec);

struct SubsetParams {
  std::vector<double> inner;
  std::vector<double> leaf_logits;  // row-major leaves × |C_j|

  bool operator==(const SubsetParams&) const = default;
};

struct BlockParams {
  std::vector<SubsetParams> subsets;

  /// Concatenation in ParamLayout order.
  std::vector<double> flatten() const;
  static BlockParams unflatten(const ParamLayout& layout,
                               std::span<const double> flat);
  bool conforms(const ForestSpec& spec) const;

  bool operator==(const BlockParams&) const = default;
};

struct ForestModel {
  ForestSpec spec;
  int grid_width = 0;
  int grid_height = 0;
  std::vector<BlockParams> blocks;  // row-major

  BlockParams& block(int bx, int by) { return blocks[by * grid_width + bx]; }
  const BlockParams& block(int bx, int by) const {
    return blocks[by * grid_width + bx];
  }
  void validate() const;
};

std::string serialize(const ForestModel& model);
ForestModel deserialize(std::string_view text);  // throws ParseError

// ---------------------------------------------------------------------------
// Command-line vocabulary.

/// "bsp:<sdf>:<depth>", "kd:<depth>", "dkd:<depth>", "quad:<depth>",
/// "mixed:<codes>" (codes comma- or space-separated).
TreeShape parse_tree_dsl(std::string_view text);

/// "single", "per-class", or explicit "0,1|2,3|4,5".
std::vector<std::vector<int>> parse_subsets(std::string_view text,
                                            int class_count);

}  // namespace segforest
