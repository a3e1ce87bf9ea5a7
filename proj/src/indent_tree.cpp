#include "ts3/indent_tree.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

#include "ts3/error.hpp"

namespace ts3 {
namespace {

struct LogicalLine {
  std::string text;
  std::size_t column = 0;
  std::size_t line = 0;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::size_t indent_column(std::string_view line) {
  std::size_t col = 0;
  for (char c : line) {
    if (c == ' ') {
      ++col;
    } else if (c == '\t') {
      col = (col / 8 + 1) * 8;
    } else if (c == '\f' || c == '\r') {
      continue;
    } else {
      break;
    }
  }
  return col;
}

// Tracks string literals and bracket depth across the physical lines of one
// logical statement.
class LineScanner {
 public:
  // Returns the line with any trailing comment removed and updates state.
  std::string scan(std::string_view line) {
    std::string kept;
    for (std::size_t i = 0; i < line.size(); ++i) {
      char c = line[i];
      if (!quote_.empty()) {
        kept.push_back(c);
        if (c == '\\' && i + 1 < line.size()) {
          kept.push_back(line[++i]);
        } else if (line.substr(i, quote_.size()) == quote_) {
          kept.append(line.substr(i + 1, quote_.size() - 1));
          i += quote_.size() - 1;
          quote_.clear();
        }
        continue;
      }
      if (c == '#') break;
      if (c == '"' || c == '\'') {
        std::string triple(3, c);
        quote_ = line.substr(i, 3) == triple ? triple : std::string(1, c);
        kept.append(quote_);
        i += quote_.size() - 1;
        continue;
      }
      if (c == '(' || c == '[' || c == '{') ++depth_;
      if ((c == ')' || c == ']' || c == '}') && depth_ > 0) --depth_;
      kept.push_back(c);
    }
    // Single-quoted strings do not span lines.
    if (quote_.size() == 1) quote_.clear();
    return kept;
  }

  bool open() const { return depth_ > 0 || !quote_.empty(); }

 private:
  int depth_ = 0;
  std::string quote_;
};

std::vector<LogicalLine> logical_lines(std::string_view text) {
  std::vector<LogicalLine> out;
  LineScanner scanner;
  bool continuing = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view raw = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;

    std::string_view content = trim(raw);
    if (!continuing) {
      if (content.empty() || content.front() == '#') continue;
      out.push_back({"", indent_column(raw), line_no});
    }
    std::string kept = std::string(trim(scanner.scan(content)));
    bool backslash = !kept.empty() && kept.back() == '\\' && !scanner.open();
    if (backslash) kept = std::string(trim(std::string_view(kept).substr(0, kept.size() - 1)));
    auto& cur = out.back().text;
    if (!kept.empty()) {
      if (!cur.empty()) cur.push_back(' ');
      cur += kept;
    }
    continuing = scanner.open() || backslash;
  }
  // A statement that was only a comment after merging contributes nothing.
  std::erase_if(out, [](const LogicalLine& l) { return l.text.empty(); });
  return out;
}

}  // namespace

IndentTree::IndentTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw DataError("tree must contain a root");
}

std::size_t IndentTree::internal_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
}

std::string IndentTree::to_source() const {
  std::string out;
  for (const auto& n : nodes_) {
    out.append(static_cast<std::size_t>(n.indent_index) * 4, ' ');
    out += n.statement;
    out.push_back('\n');
  }
  return out;
}

std::string IndentTree::debug_string() const {
  std::string out;
  for (const auto& n : nodes_) {
    out.append(static_cast<std::size_t>(n.indent_index) * 2, ' ');
    out += "[" + std::to_string(n.id) + "] " + n.statement + "\n";
  }
  return out;
}

IndentTree build_tree(std::string_view code_text) {
  auto lines = logical_lines(code_text);
  // Decorators are attached to the definition that follows them.
  while (lines.size() > 1 && lines.front().text.front() == '@' &&
         lines[1].column == lines.front().column) {
    lines.erase(lines.begin());
  }
  if (lines.empty()) throw DataError("empty code snippet");

  const std::size_t base = lines.front().column;
  std::size_t unit = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].column > lines[i - 1].column) unit = std::min(unit, lines[i].column - lines[i - 1].column);
  }
  if (unit == std::numeric_limits<std::size_t>::max()) unit = 4;

  std::vector<TreeNode> nodes;
  nodes.push_back({0, lines.front().text, 0, std::nullopt, {}, lines.front().line});
  std::vector<NodeId> open_at_level{0};  // last node seen at each indent level
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& l = lines[i];
    const std::string where = "line " + std::to_string(l.line);
    if (l.column < base) throw DataError(where + ": dedent below the first statement");
    const std::size_t rel = l.column - base;
    if (rel % unit != 0) throw DataError(where + ": inconsistent indentation");
    const std::size_t level = rel / unit;
    if (level == 0) throw DataError(where + ": second top-level statement");
    if (level > open_at_level.size()) throw DataError(where + ": unexpected indent");

    open_at_level.resize(level);
    const NodeId parent = open_at_level.back();
    const NodeId id = nodes.size();
    nodes.push_back({id, l.text, static_cast<int>(level), parent, {}, l.line});
    nodes[parent].children.push_back(id);
    open_at_level.push_back(id);
  }
  return IndentTree(std::move(nodes));
}

EncodePlan postorder_schedule(const IndentTree& tree) {
  EncodePlan plan;
  // Iterative post-order: a node's step is emitted once all children are done.
  std::vector<std::pair<NodeId, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto& [id, next_child] = stack.back();
    const auto& node = tree.node(id);
    if (next_child < node.children.size()) {
      NodeId child = node.children[next_child++];
      if (!tree.node(child).is_leaf()) stack.emplace_back(child, 0);
      continue;
    }
    if (!node.is_leaf()) {
      EncodeStep step{id, {id}};
      step.inputs.insert(step.inputs.end(), node.children.begin(), node.children.end());
      plan.steps.push_back(std::move(step));
    }
    stack.pop_back();
  }
  return plan;
}

}  // namespace ts3
