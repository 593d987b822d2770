// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0

#include "segforest/forest.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

namespace segforest {

int node_parameter_count(const TreeNode& node) {
  switch (node.type) {
    case NodeType::kLeaf: return 0;
    case NodeType::kBsp: return parameter_count(node.sdf);
    case NodeType::kQuad: return 2;
  }
  return 0;
}

namespace {

std::vector<std::string> split_tokens(std::string_view text, std::string_view seps) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (seps.find(ch) != std::string_view::npos) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string repeat_codes(const std::string& inner, int arity, int depth) {
  if (depth == 0) return "L";
  std::string out = inner;
  for (int i = 0; i < arity; ++i) out += " " + repeat_codes(inner, arity, depth - 1);
  return out;
}

}  // namespace

TreeShape::TreeShape(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  // Leaf numbering, ranges and parameter offsets in one preorder pass.
  int next_leaf = 0;
  int next_param = 0;
  std::function<int(int, int)> visit = [&](int index, int level) -> int {
    TreeNode& n = nodes_[index];
    n.leaf_begin = next_leaf;
    int deepest = level;
    if (n.type == NodeType::kLeaf) {
      n.leaf_index = next_leaf++;
    } else {
      inner_nodes_.push_back(index);
      n.param_offset = next_param;
      next_param += node_parameter_count(n);
      for (int child : n.children) deepest = std::max(deepest, visit(child, level + 1));
    }
    n.leaf_end = next_leaf;
    return deepest;
  };
  depth_ = visit(0, 0);
  leaf_count_ = next_leaf;
  inner_parameter_count_ = next_param;
}

TreeShape TreeShape::from_codes(std::string_view codes) {
  const auto tokens = split_tokens(codes, " ,\t");
  if (tokens.empty()) throw ParseError("empty tree code string");
  std::vector<TreeNode> nodes;
  std::size_t pos = 0;
  std::function<int()> parse = [&]() -> int {
    if (pos >= tokens.size()) throw ParseError("tree codes end before the tree is complete");
    const std::string& tok = tokens[pos++];
    const int index = static_cast<int>(nodes.size());
    nodes.emplace_back();
    int arity = 0;
    if (tok == "L") {
      nodes[index].type = NodeType::kLeaf;
    } else if (tok == "Q") {
      nodes[index].type = NodeType::kQuad;
      arity = 4;
    } else if (tok.size() == 2 && tok[0] == 'B') {
      nodes[index].type = NodeType::kBsp;
      nodes[index].sdf = sdf_from_code(tok[1]);
      arity = 2;
    } else {
      throw ParseError("unknown node code '" + tok + "'");
    }
    for (int i = 0; i < arity; ++i) {
      const int child = parse();
      nodes[index].children.push_back(child);
    }
    return index;
  };
  parse();
  if (pos != tokens.size()) throw ParseError("trailing node codes after a complete tree");
  return TreeShape(std::move(nodes));
}

TreeShape TreeShape::bsp(SdfKind kind, int depth) {
  require(depth >= 0, "tree depth must be non-negative");
  return from_codes(repeat_codes(std::string("B") + sdf_code(kind), 2, depth));
}

TreeShape TreeShape::kd(int depth) {
  require(depth >= 0, "tree depth must be non-negative");
  std::function<std::string(int)> build = [&](int level) -> std::string {
    if (level == depth) return "L";
    const std::string self = level % 2 == 0 ? "BX" : "BY";
    return self + " " + build(level + 1) + " " + build(level + 1);
  };
  return from_codes(build(0));
}

TreeShape TreeShape::dynamic_kd(int depth) { return bsp(SdfKind::kDynKd, depth); }

TreeShape TreeShape::quad(int depth) {
  require(depth >= 0, "tree depth must be non-negative");
  return from_codes(repeat_codes("Q", 4, depth));
}

bool TreeShape::has_quad() const {
  return std::any_of(nodes_.begin(), nodes_.end(),
                     [](const TreeNode& n) { return n.type == NodeType::kQuad; });
}

std::string TreeShape::codes() const {
  std::string out;
  for (const TreeNode& n : nodes_) {
    if (!out.empty()) out += ' ';
    switch (n.type) {
      case NodeType::kLeaf: out += 'L'; break;
      case NodeType::kQuad: out += 'Q'; break;
      case NodeType::kBsp:
        out += 'B';
        out += sdf_code(n.sdf);
        break;
    }
  }
  return out;
}

std::pair<int, int> TreeShape::leaf_range(int node_index, int child_slot) const {
  require(node_index >= 0 && node_index < static_cast<int>(nodes_.size()),
          "leaves_under: node index out of range");
  const TreeNode& n = nodes_[node_index];
  require(n.type != NodeType::kLeaf, "leaves_under: node is a leaf");
  require(child_slot >= 0 && child_slot < static_cast<int>(n.children.size()),
          "leaves_under: child slot out of range");
  const TreeNode& c = nodes_[n.children[child_slot]];
  return {c.leaf_begin, c.leaf_end};
}

std::vector<int> TreeShape::leaves_under(int node_index, int child_slot) const {
  const auto [lo, hi] = leaf_range(node_index, child_slot);
  std::vector<int> out(hi - lo);
  std::iota(out.begin(), out.end(), lo);
  return out;
}

// ---------------------------------------------------------------------------

ForestSpec ForestSpec::single(int class_count, const TreeShape& shape, int block_size) {
  ForestSpec spec;
  spec.block_size = block_size;
  spec.class_count = class_count;
  ClassSubset subset;
  subset.classes.resize(class_count);
  std::iota(subset.classes.begin(), subset.classes.end(), 0);
  subset.shape = shape;
  spec.subsets.push_back(std::move(subset));
  return spec;
}

ForestSpec ForestSpec::per_class(int class_count, const TreeShape& shape, int block_size) {
  ForestSpec spec;
  spec.block_size = block_size;
  spec.class_count = class_count;
  for (int c = 0; c < class_count; ++c) spec.subsets.push_back({{c}, shape});
  return spec;
}

void ForestSpec::validate() const {
  require(block_size >= 1, "block size must be positive");
  require(class_count >= 1, "class count must be positive");
  require(class_count < 255, "class count must be below the ignore index 255");
  require(!subsets.empty(), "forest needs at least one class subset");
  std::vector<int> seen(class_count, 0);
  for (const ClassSubset& s : subsets) {
    require(!s.classes.empty(), "class subsets must be nonempty");
    for (int c : s.classes) {
      require(c >= 0 && c < class_count, "class subset member out of range");
      require(seen[c]++ == 0, "class subsets must be disjoint");
    }
  }
  for (int c = 0; c < class_count; ++c) {
    require(seen[c] == 1, "class subsets must cover every class");
  }
}

double ForestSpec::subset_weight(int j) const {
  return static_cast<double>(subsets[j].classes.size()) / class_count;
}

ParamLayout param_layout(const ForestSpec& spec) {
  ParamLayout layout;
  int offset = 0;
  for (const ClassSubset& s : spec.subsets) {
    SubsetLayout sl;
    sl.leaves = s.shape.leaf_count();
    sl.classes = static_cast<int>(s.classes.size());
    sl.inner_offset = offset;
    sl.inner_count = s.shape.inner_parameter_count();
    for (int idx : s.shape.inner_nodes()) {
      sl.node_offsets.push_back(offset + s.shape.nodes()[idx].param_offset);
    }
    offset += sl.inner_count;
    sl.logit_offset = offset;
    sl.logit_count = sl.leaves * sl.classes;
    offset += sl.logit_count;
    layout.shape_parameters += sl.inner_count;
    layout.content_parameters += sl.logit_count;
    layout.subsets.push_back(std::move(sl));
  }
  return layout;
}

std::vector<double> BlockParams::flatten() const {
  std::vector<double> out;
  for (const SubsetParams& s : subsets) {
    out.insert(out.end(), s.inner.begin(), s.inner.end());
    out.insert(out.end(), s.leaf_logits.begin(), s.leaf_logits.end());
  }
  return out;
}

BlockParams BlockParams::unflatten(const ParamLayout& layout, std::span<const double> flat) {
  require(static_cast<int>(flat.size()) == layout.total(),
          "unflatten: parameter vector does not match layout");
  BlockParams out;
  for (const SubsetLayout& sl : layout.subsets) {
    SubsetParams s;
    s.inner.assign(flat.begin() + sl.inner_offset,
                   flat.begin() + sl.inner_offset + sl.inner_count);
    s.leaf_logits.assign(flat.begin() + sl.logit_offset,
                         flat.begin() + sl.logit_offset + sl.logit_count);
    out.subsets.push_back(std::move(s));
  }
  return out;
}

bool BlockParams::conforms(const ForestSpec& spec) const {
  if (subsets.size() != spec.subsets.size()) return false;
  for (std::size_t j = 0; j < subsets.size(); ++j) {
    const auto& shape = spec.subsets[j].shape;
    if (static_cast<int>(subsets[j].inner.size()) != shape.inner_parameter_count()) return false;
    if (subsets[j].leaf_logits.size() !=
        static_cast<std::size_t>(shape.leaf_count()) * spec.subsets[j].classes.size()) {
      return false;
    }
  }
  return true;
}

void ForestModel::validate() const {
  spec.validate();
  require(grid_width >= 0 && grid_height >= 0, "grid dimensions must be non-negative");
  require(static_cast<long>(blocks.size()) == static_cast<long>(grid_width) * grid_height,
          "block count does not match grid");
  for (const BlockParams& b : blocks) {
    require(b.conforms(spec), "block parameters do not match the forest layout");
  }
}

// ---------------------------------------------------------------------------
// SFF1

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    const std::size_t end = text_.find('\n', pos_);
    const std::size_t stop = end == std::string_view::npos ? text_.size() : end;
    line = text_.substr(pos_, stop - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end == std::string_view::npos ? text_.size() : end + 1;
    ++number_;
    return true;
  }
  bool peek(std::string_view& line) const {
    LineReader copy = *this;
    return copy.next(line);
  }
  int number() const { return number_; }

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError("SFF1 line " + std::to_string(number_) + ": " + message);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  int number_ = 0;
};

template <class Num>
Num parse_number(const LineReader& reader, const std::string& token) {
  Num value{};
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) reader.fail("invalid number '" + token + "'");
  return value;
}

}  // namespace

std::string serialize(const ForestModel& model) {
  model.validate();
  const ForestSpec& spec = model.spec;
  std::string out = "SFF1\n";
  out += "block_size " + std::to_string(spec.block_size) + " classes " +
         std::to_string(spec.class_count) + "\n";
  out += "grid " + std::to_string(model.grid_width) + " " +
         std::to_string(model.grid_height) + "\n";
  for (std::size_t j = 0; j < spec.subsets.size(); ++j) {
    out += "subset " + std::to_string(j) + ":";
    for (int c : spec.subsets[j].classes) out += " " + std::to_string(c);
    out += " ; tree: " + spec.subsets[j].shape.codes() + "\n";
  }
  for (int by = 0; by < model.grid_height; ++by) {
    for (int bx = 0; bx < model.grid_width; ++bx) {
      const BlockParams& b = model.block(bx, by);
      for (std::size_t j = 0; j < b.subsets.size(); ++j) {
        out += "blk " + std::to_string(bx) + " " + std::to_string(by) + " " +
               std::to_string(j) + " :";
        for (double v : b.subsets[j].inner) {
          out += ' ';
          append_double(out, v);
        }
        out += " |";
        for (double v : b.subsets[j].leaf_logits) {
          out += ' ';
          append_double(out, v);
        }
        out += '\n';
      }
    }
  }
  return out;
}

ForestModel deserialize(std::string_view text) {
  LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || line != "SFF1") reader.fail("missing SFF1 header");

  ForestModel model;
  if (!reader.next(line)) reader.fail("missing block_size/classes line");
  {
    const auto t = split_tokens(line, " ");
    if (t.size() != 4 || t[0] != "block_size" || t[2] != "classes") {
      reader.fail("expected 'block_size S classes C'");
    }
    model.spec.block_size = parse_number<int>(reader, t[1]);
    model.spec.class_count = parse_number<int>(reader, t[3]);
  }
  if (!reader.next(line)) reader.fail("missing grid line");
  {
    const auto t = split_tokens(line, " ");
    if (t.size() != 3 || t[0] != "grid") reader.fail("expected 'grid W H'");
    model.grid_width = parse_number<int>(reader, t[1]);
    model.grid_height = parse_number<int>(reader, t[2]);
    if (model.grid_width < 0 || model.grid_height < 0) reader.fail("negative grid size");
  }
  while (reader.peek(line) && line.rfind("subset ", 0) == 0) {
    reader.next(line);
    const std::size_t colon = line.find(':');
    const std::size_t semi = line.find(';');
    if (colon == std::string_view::npos || semi == std::string_view::npos || semi < colon) {
      reader.fail("malformed subset line");
    }
    const auto head = split_tokens(line.substr(0, colon), " ");
    if (head.size() != 2 ||
        parse_number<int>(reader, head[1]) != static_cast<int>(model.spec.subsets.size())) {
      reader.fail("subset lines must be numbered consecutively from 0");
    }
    ClassSubset subset;
    for (const auto& tok : split_tokens(line.substr(colon + 1, semi - colon - 1), " ")) {
      subset.classes.push_back(parse_number<int>(reader, tok));
    }
    std::string_view tail = line.substr(semi + 1);
    const std::size_t tree_pos = tail.find("tree:");
    if (tree_pos == std::string_view::npos) reader.fail("subset line lacks 'tree:'");
    try {
      subset.shape = TreeShape::from_codes(tail.substr(tree_pos + 5));
    } catch (const ParseError& e) {
      reader.fail(e.what());
    }
    model.spec.subsets.push_back(std::move(subset));
  }
  try {
    model.spec.validate();
  } catch (const ContractError& e) {
    reader.fail(e.what());
  }

  const ParamLayout layout = param_layout(model.spec);
  const long block_count = static_cast<long>(model.grid_width) * model.grid_height;
  model.blocks.resize(block_count);
  for (int by = 0; by < model.grid_height; ++by) {
    for (int bx = 0; bx < model.grid_width; ++bx) {
      BlockParams& b = model.block(bx, by);
      for (std::size_t j = 0; j < model.spec.subsets.size(); ++j) {
        const std::string record = "blk " + std::to_string(bx) + " " +
                                   std::to_string(by) + " " + std::to_string(j);
        if (!reader.next(line)) reader.fail("missing record '" + record + "'");
        const std::size_t colon = line.find(':');
        const std::size_t bar = line.find('|');
        if (colon == std::string_view::npos || bar == std::string_view::npos || bar < colon) {
          reader.fail("malformed block record");
        }
        const auto head = split_tokens(line.substr(0, colon), " ");
        std::string head_joined;
        for (const auto& h : head) head_joined += (head_joined.empty() ? "" : " ") + h;
        if (head_joined != record) {
          reader.fail("expected record '" + record + "', found '" + head_joined + "'");
        }
        SubsetParams sp;
        for (const auto& tok : split_tokens(line.substr(colon + 1, bar - colon - 1), " ")) {
          sp.inner.push_back(parse_number<double>(reader, tok));
        }
        for (const auto& tok : split_tokens(line.substr(bar + 1), " ")) {
          sp.leaf_logits.push_back(parse_number<double>(reader, tok));
        }
        const SubsetLayout& sl = layout.subsets[j];
        if (static_cast<int>(sp.inner.size()) != sl.inner_count ||
            static_cast<int>(sp.leaf_logits.size()) != sl.logit_count) {
          reader.fail("dimension mismatch in record '" + record + "'");
        }
        b.subsets.push_back(std::move(sp));
      }
    }
  }
  while (reader.next(line)) {
    if (!line.empty()) reader.fail("unexpected trailing content");
  }
  return model;
}

// ---------------------------------------------------------------------------

TreeShape parse_tree_dsl(std::string_view text) {
  const std::size_t colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ParseError("tree spec '" + std::string(text) + "' lacks a ':'");
  }
  const std::string_view family = text.substr(0, colon);
  const std::string_view rest = text.substr(colon + 1);
  auto depth_of = [&](std::string_view s) {
    int depth = -1;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), depth);
    if (ec != std::errc() || ptr != s.data() + s.size() || depth < 0 || depth > 8) {
      throw ParseError("invalid tree depth '" + std::string(s) + "'");
    }
    return depth;
  };
  if (family == "bsp") {
    const std::size_t c2 = rest.find(':');
    if (c2 == std::string_view::npos) throw ParseError("expected bsp:<sdf>:<depth>");
    return TreeShape::bsp(sdf_from_name(rest.substr(0, c2)), depth_of(rest.substr(c2 + 1)));
  }
  if (family == "kd") return TreeShape::kd(depth_of(rest));
  if (family == "dkd") return TreeShape::dynamic_kd(depth_of(rest));
  if (family == "quad") return TreeShape::quad(depth_of(rest));
  if (family == "mixed") return TreeShape::from_codes(rest);
  throw ParseError("unknown tree family '" + std::string(family) + "'");
}

std::vector<std::vector<int>> parse_subsets(std::string_view text, int class_count) {
  std::vector<std::vector<int>> out;
  if (text == "single") {
    out.emplace_back(class_count);
    std::iota(out.back().begin(), out.back().end(), 0);
    return out;
  }
  if (text == "per-class") {
    for (int c = 0; c < class_count; ++c) out.push_back({c});
    return out;
  }
  for (const auto& group : split_tokens(text, "|")) {
    std::vector<int> subset;
    for (const auto& tok : split_tokens(group, ",")) {
      int c = -1;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), c);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ParseError("invalid class index '" + tok + "' in subsets");
      }
      subset.push_back(c);
    }
    out.push_back(std::move(subset));
  }
  if (out.empty()) throw ParseError("empty subset specification");
  std::vector<int> seen(std::max(class_count, 0), 0);
  for (const auto& subset : out) {
    for (int c : subset) {
      if (c < 0 || c >= class_count || seen[c]++ > 0) {
        throw ParseError("subsets must partition classes 0.." + std::to_string(class_count - 1) +
                         " (class " + std::to_string(c) + " out of range or repeated)");
      }
    }
  }
  for (int c = 0; c < class_count; ++c) {
    if (seen[c] == 0) throw ParseError("subsets miss class " + std::to_string(c));
  }
  return out;
}

}  // namespace segforest
