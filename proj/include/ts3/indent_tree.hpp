#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ts3 {

using NodeId = std::size_t;

struct TreeNode {
  NodeId id = 0;
  std::string statement;
  int indent_index = 0;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  std::size_t source_line = 0;  // 1-based physical line where the statement starts

  bool is_leaf() const { return children.empty(); }
  bool operator==(const TreeNode& o) const {
    return statement == o.statement && indent_index == o.indent_index && parent == o.parent &&
           children == o.children;
  }
};

/// Ordered statement tree. Node 0 is the root; nodes are stored in source
/// order, so sibling order equals statement order.
class IndentTree {
 public:
  explicit IndentTree(std::vector<TreeNode> nodes);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(NodeId id) const { return nodes_.at(id); }
  const TreeNode& root() const { return nodes_.front(); }
  std::size_t size() const { return nodes_.size(); }
  std::size_t internal_count() const;

  // Re-indented source (4 spaces per level) that rebuilds to the same tree.
  std::string to_source() const;
  // "[id] statement" lines indented two spaces per level.
  std::string debug_string() const;

  bool operator==(const IndentTree& o) const { return nodes_ == o.nodes_; }

 private:
  std::vector<TreeNode> nodes_;
};

/// Builds the statement tree of one function from its indentation.
///
/// Blank lines and `#` comment lines are dropped, bracketed or backslash
/// continuations and triple-quoted strings are merged into one logical
/// statement, and tabs advance to the next multiple of 8 columns. The indent
/// unit is the smallest positive indent increase between consecutive
/// statements (4 when nothing is nested). Decorator lines ahead of the root
/// are skipped. Throws DataError naming the physical line for indentation
/// that does not fit the inferred unit, and for empty input.
IndentTree build_tree(std::string_view code_text);

struct EncodeStep {
  NodeId output_node = 0;
  // inputs.front() is output_node itself and stands for its statement
  // encoding; the remaining ids are children, standing for their resolved
  // vectors (statement encoding for leaves, step output otherwise).
  std::vector<NodeId> inputs;
};

struct EncodePlan {
  std::vector<EncodeStep> steps;
};

/// Post-order composition schedule: one step per internal node, emitted
/// after the steps of all its internal descendants. The last step belongs to
/// the root. A single-node tree yields no steps.
EncodePlan postorder_schedule(const IndentTree& tree);

}  // namespace ts3
