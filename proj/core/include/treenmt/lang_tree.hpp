#ifndef TREENMT_LANG_TREE_HPP
#define TREENMT_LANG_TREE_HPP

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "treenmt/errors.hpp"

namespace treenmt {

// Node of a phylogenetic language tree. Leaves carry language codes,
// internal nodes group two or more subtrees.
struct TreeNode {
  std::string code;                // leaf code, empty for internal nodes
  std::vector<TreeNode> children;  // >= 2 for internal nodes

  bool is_leaf() const { return children.empty(); }
};

// A validated language tree with a precomputed node index.
//
// Node identity: a node's id is the lexicographically sorted set of leaf
// codes beneath it, joined with '-'. The id of an internal node is by
// construction the union of its children's ids.
class LanguageTree {
 public:
  struct NodeInfo {
    std::string id;
    int depth = 0;  // root = 1
    bool is_leaf = false;
    std::string parent;                // empty for root
    std::vector<std::string> children;  // ids in spec order
    std::vector<std::string> leaf_codes;  // sorted
  };

  LanguageTree() = default;

  // Grammar: tree := code | '(' tree (',' tree)+ ')'
  // with codes matching [a-zA-Z][a-zA-Z0-9-]*. Whitespace is ignored.
  // Throws TreeError on duplicate leaf codes, internal nodes with fewer
  // than two children, unbalanced parentheses, or empty input.
  static LanguageTree parse(std::string_view spec_text);

  // Canonical text form; parse(render()) reproduces the tree.
  std::string render() const;

  const TreeNode& root() const { return root_; }
  const std::string& root_id() const { return schedule_.back(); }

  // Leaf codes in tree (left-to-right) order.
  const std::vector<std::string>& leaves() const { return leaves_; }
  bool has_leaf(const std::string& code) const;

  const NodeInfo& info(const std::string& node_id) const;
  size_t num_nodes() const { return schedule_.size(); }

  // Node ids, leaves first, every child before its parent (post-order,
  // children in spec order). Reversed, this is the decoder split order.
  const std::vector<std::string>& traversal_schedule() const { return schedule_; }

  // Node ids from the root down to the given leaf, inclusive.
  std::vector<std::string> path_from_root(const std::string& leaf_code) const;

  // Number of nodes on the deepest root-to-leaf path.
  int max_path_nodes() const { return max_path_nodes_; }

  static std::string node_id(const TreeNode& node);

  bool operator==(const LanguageTree& other) const { return render() == other.render(); }

 private:
  void build_index();

  TreeNode root_;
  std::vector<std::string> leaves_;
  std::vector<std::string> schedule_;
  std::map<std::string, NodeInfo> index_;
  int max_path_nodes_ = 0;
};

// Per-node layer budget. Every root-to-leaf path's counts sum to exactly
// depth_budget, and every node holds at least one layer.
struct LayerAllocation {
  std::map<std::string, int> layers;  // node_id -> layer count
  int depth_budget = 0;

  int total() const;
  int at(const std::string& node_id) const;
};

// Splits depth_budget D evenly over the m* positions of the deepest
// root-to-leaf path, extras going to positions nearest the root; internal
// nodes take the count of their depth position, leaves absorb whatever
// remains on their path. Throws TreeError when D < m* or a leaf's
// remainder would drop below one layer.
LayerAllocation allocate_layers(const LanguageTree& tree, int depth_budget);

// Layer depths for the full-parameter-sharing baseline: the sums of all
// hierarchical layer counts on the encoder and decoder sides.
std::pair<int, int> baseline_depths(const LayerAllocation& enc_alloc,
                                    const LayerAllocation& dec_alloc);

}  // namespace treenmt

#endif  // TREENMT_LANG_TREE_HPP
