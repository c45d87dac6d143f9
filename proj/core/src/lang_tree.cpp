#include "treenmt/lang_tree.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace treenmt {

namespace {

struct Parser {
  std::string_view text;
  size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  bool eof() {
    skip_ws();
    return pos >= text.size();
  }

  char peek() {
    skip_ws();
    return text[pos];
  }

  [[noreturn]] void fail(const std::string& msg) {
    throw TreeError("tree spec: " + msg + " (at offset " + std::to_string(pos) + ")");
  }

  TreeNode parse_node() {
    if (eof()) fail("unexpected end of input");
    if (peek() == '(') return parse_internal();
    return parse_leaf();
  }

  TreeNode parse_leaf() {
    skip_ws();
    size_t start = pos;
    if (pos >= text.size() || !std::isalpha(static_cast<unsigned char>(text[pos]))) {
      fail("expected a language code");
    }
    ++pos;
    while (pos < text.size()) {
      char c = text[pos];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '-') {
        ++pos;
      } else {
        break;
      }
    }
    TreeNode node;
    node.code = std::string(text.substr(start, pos - start));
    return node;
  }

  TreeNode parse_internal() {
    skip_ws();
    ++pos;  // consume '('
    TreeNode node;
    node.children.push_back(parse_node());
    while (true) {
      if (eof()) fail("unbalanced parentheses");
      char c = peek();
      if (c == ',') {
        ++pos;
        node.children.push_back(parse_node());
      } else if (c == ')') {
        ++pos;
        break;
      } else {
        fail(std::string("unexpected character '") + c + "'");
      }
    }
    if (node.children.size() < 2) fail("internal node needs at least 2 children");
    return node;
  }
};

void collect_leaves(const TreeNode& node, std::vector<std::string>& out) {
  if (node.is_leaf()) {
    out.push_back(node.code);
    return;
  }
  for (const auto& child : node.children) collect_leaves(child, out);
}

void render_node(const TreeNode& node, std::string& out) {
  if (node.is_leaf()) {
    out += node.code;
    return;
  }
  out += '(';
  for (size_t i = 0; i < node.children.size(); ++i) {
    if (i > 0) out += ',';
    render_node(node.children[i], out);
  }
  out += ')';
}

}  // namespace

std::string LanguageTree::node_id(const TreeNode& node) {
  std::vector<std::string> codes;
  collect_leaves(node, codes);
  std::sort(codes.begin(), codes.end());
  std::string id;
  for (size_t i = 0; i < codes.size(); ++i) {
    if (i > 0) id += '-';
    id += codes[i];
  }
  return id;
}

LanguageTree LanguageTree::parse(std::string_view spec_text) {
  Parser p{spec_text};
  if (p.eof()) throw TreeError("tree spec: empty input");
  LanguageTree tree;
  tree.root_ = p.parse_node();
  if (!p.eof()) p.fail("trailing characters after tree");
  tree.build_index();
  return tree;
}

void LanguageTree::build_index() {
  leaves_.clear();
  collect_leaves(root_, leaves_);
  std::set<std::string> seen;
  for (const auto& code : leaves_) {
    if (!seen.insert(code).second) {
      throw TreeError("tree spec: duplicate leaf code '" + code + "'");
    }
  }

  schedule_.clear();
  index_.clear();
  max_path_nodes_ = 0;

  // Post-order walk: leaves first, children before parents.
  struct Walker {
    LanguageTree& tree;
    void walk(const TreeNode& node, int depth, const std::string& parent_id) {
      NodeInfo info;
      info.id = node_id(node);
      info.depth = depth;
      info.is_leaf = node.is_leaf();
      info.parent = parent_id;
      collect_leaves(node, info.leaf_codes);
      std::sort(info.leaf_codes.begin(), info.leaf_codes.end());
      for (const auto& child : node.children) {
        walk(child, depth + 1, info.id);
        info.children.push_back(node_id(child));
      }
      if (node.is_leaf()) tree.max_path_nodes_ = std::max(tree.max_path_nodes_, depth);
      tree.schedule_.push_back(info.id);
      tree.index_.emplace(info.id, std::move(info));
    }
  };
  Walker{*this}.walk(root_, 1, "");
}

std::string LanguageTree::render() const {
  std::string out;
  render_node(root_, out);
  return out;
}

bool LanguageTree::has_leaf(const std::string& code) const {
  auto it = index_.find(code);
  return it != index_.end() && it->second.is_leaf;
}

const LanguageTree::NodeInfo& LanguageTree::info(const std::string& node_id) const {
  auto it = index_.find(node_id);
  if (it == index_.end()) throw TreeError("unknown tree node '" + node_id + "'");
  return it->second;
}

std::vector<std::string> LanguageTree::path_from_root(const std::string& leaf_code) const {
  if (!has_leaf(leaf_code)) throw TreeError("unknown language '" + leaf_code + "'");
  std::vector<std::string> path;
  std::string cur = leaf_code;
  while (!cur.empty()) {
    path.push_back(cur);
    cur = info(cur).parent;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

int LayerAllocation::total() const {
  int sum = 0;
  for (const auto& [id, n] : layers) sum += n;
  return sum;
}

int LayerAllocation::at(const std::string& node_id) const {
  auto it = layers.find(node_id);
  if (it == layers.end()) throw TreeError("no layer count for node '" + node_id + "'");
  return it->second;
}

LayerAllocation allocate_layers(const LanguageTree& tree, int depth_budget) {
  const int m = tree.max_path_nodes();
  if (depth_budget < m) {
    throw TreeError("infeasible layer budget: D=" + std::to_string(depth_budget) +
                    " but the deepest path has " + std::to_string(m) + " nodes");
  }

  // Even split of D over the m positions of the deepest path, extras
  // assigned toward the root: position i (root = 1) gets floor(D/m),
  // plus one if i <= D mod m.
  std::vector<int> position_count(m + 1, 0);
  for (int i = 1; i <= m; ++i) {
    position_count[i] = depth_budget / m + (i <= depth_budget % m ? 1 : 0);
  }

  LayerAllocation alloc;
  alloc.depth_budget = depth_budget;
  for (const auto& id : tree.traversal_schedule()) {
    const auto& info = tree.info(id);
    if (info.is_leaf) continue;
    alloc.layers[id] = position_count[info.depth];
  }
  for (const auto& leaf : tree.leaves()) {
    int ancestors = 0;
    for (int d = 1; d < tree.info(leaf).depth; ++d) ancestors += position_count[d];
    int remainder = depth_budget - ancestors;
    if (remainder < 1) {
      throw TreeError("infeasible layer budget: leaf '" + leaf +
                      "' would get " + std::to_string(remainder) + " layers");
    }
    alloc.layers[leaf] = remainder;
  }
  return alloc;
}

std::pair<int, int> baseline_depths(const LayerAllocation& enc_alloc,
                                    const LayerAllocation& dec_alloc) {
  return {enc_alloc.total(), dec_alloc.total()};
}

}  // namespace treenmt
