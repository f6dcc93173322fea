#pragma once

// TOP-style semantic frames: `[IN:GET_WEATHER what s the [SL:LOCATION boston ] forecast ]`.
//
// A frame is a tree rooted at an intent. Intents hold tokens and slots; slots
// hold tokens and (nested) intents. Labels carry their `IN:` / `SL:` prefix
// and use only [A-Z_:] after it.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deff/error.hpp"

namespace deff {

enum class NodeKind { intent, slot, token };

struct FrameNode {
  NodeKind kind = NodeKind::token;
  // Full label (with prefix) for intents and slots; the token text otherwise.
  std::string text;
  std::vector<FrameNode> children;

  static FrameNode token(std::string text) {
    return {NodeKind::token, std::move(text), {}};
  }
  static FrameNode intent(std::string label,
                          std::vector<FrameNode> children = {}) {
    return {NodeKind::intent, std::move(label), std::move(children)};
  }
  static FrameNode slot(std::string label,
                        std::vector<FrameNode> children = {}) {
    return {NodeKind::slot, std::move(label), std::move(children)};
  }

  bool is_token() const noexcept { return kind == NodeKind::token; }

  friend bool operator==(const FrameNode&, const FrameNode&) = default;
};

// Label multiset: ontology label -> occurrence count (every count >= 1).
using LabelMultiset = std::map<std::string, std::size_t, std::less<>>;

namespace detail {

inline bool is_label_char(char c) noexcept {
  return (c >= 'A' && c <= 'Z') || c == '_' || c == ':';
}

inline bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

// Returns an empty string when the label is valid, otherwise the reason.
inline std::string label_problem(std::string_view label, NodeKind kind) {
  const std::string_view prefix = kind == NodeKind::intent ? "IN:" : "SL:";
  if (!label.starts_with(prefix)) {
    return "label '" + std::string(label) + "' must start with '" +
           std::string(prefix) + "'";
  }
  const std::string_view body = label.substr(prefix.size());
  if (body.empty()) return "empty label";
  for (char c : body) {
    if (!is_label_char(c)) {
      return "label '" + std::string(label) + "' contains '" +
             std::string(1, c) + "'";
    }
  }
  return {};
}

inline void validate_node(const FrameNode& node) {
  if (node.is_token()) {
    if (node.text.empty()) throw Error("empty token");
    for (char c : node.text) {
      if (is_space(c) || c == '[' || c == ']') {
        throw Error("token '" + node.text +
                    "' contains whitespace or a bracket");
      }
    }
    if (!node.children.empty()) throw Error("token nodes have no children");
    return;
  }
  if (auto why = label_problem(node.text, node.kind); !why.empty()) {
    throw Error(why);
  }
  for (const FrameNode& child : node.children) {
    if (child.kind == node.kind) {
      throw Error((node.kind == NodeKind::intent ? "intent " : "slot ") +
                  node.text + " cannot directly contain " + child.text);
    }
    validate_node(child);
  }
}

inline void serialize_node(const FrameNode& node, std::string& out) {
  if (node.is_token()) {
    out += node.text;
    return;
  }
  out += '[';
  out += node.text;
  for (const FrameNode& child : node.children) {
    out += ' ';
    serialize_node(child, out);
  }
  out += " ]";
}

inline void collect_labels(const FrameNode& node, LabelMultiset& counts) {
  if (node.is_token()) return;
  if (auto it = counts.find(node.text); it != counts.end()) {
    ++it->second;
  } else {
    counts.emplace(node.text, 1);
  }
  for (const FrameNode& child : node.children) collect_labels(child, counts);
}

// Single-pass recursive descent; fails on the first problem.
class FrameParser {
 public:
  explicit FrameParser(std::string_view text) : text_(text) {}

  FrameNode parse() {
    skip_space();
    if (at_end()) throw FrameParseError("empty frame", pos_);
    if (peek() != '[') throw FrameParseError("expected '['", pos_);
    FrameNode root = parse_node(/*parent=*/nullptr);
    skip_space();
    if (!at_end()) throw FrameParseError("trailing garbage after root", pos_);
    return root;
  }

 private:
  bool at_end() const noexcept { return pos_ >= text_.size(); }
  char peek() const noexcept { return text_[pos_]; }

  void skip_space() {
    while (!at_end() && is_space(peek())) ++pos_;
  }

  // Precondition: peek() == '['.
  FrameNode parse_node(const FrameNode* parent) {
    const std::size_t open = pos_++;
    const std::size_t label_start = pos_;
    while (!at_end() && !is_space(peek()) && peek() != '[' && peek() != ']') {
      ++pos_;
    }
    const std::string_view label = text_.substr(label_start, pos_ - label_start);
    if (label.empty()) throw FrameParseError("empty label", label_start);

    NodeKind kind;
    if (label.starts_with("IN:")) {
      kind = NodeKind::intent;
    } else if (label.starts_with("SL:")) {
      kind = NodeKind::slot;
    } else {
      throw FrameParseError("label '" + std::string(label) +
                                "' has no IN:/SL: prefix",
                            label_start);
    }
    if (parent == nullptr && kind != NodeKind::intent) {
      throw FrameParseError("root is not an intent", label_start);
    }
    if (parent != nullptr && parent->kind == kind) {
      throw FrameParseError(std::string(kind == NodeKind::intent ? "intent"
                                                                 : "slot") +
                                " nested directly in " + parent->text,
                            label_start);
    }
    if (auto why = label_problem(label, kind); !why.empty()) {
      throw FrameParseError(why, label_start);
    }

    FrameNode node{kind, std::string(label), {}};
    for (;;) {
      skip_space();
      if (at_end()) {
        throw FrameParseError("unbalanced brackets: '[' at byte " +
                                  std::to_string(open) + " is never closed",
                              pos_);
      }
      const char c = peek();
      if (c == ']') {
        ++pos_;
        return node;
      }
      if (c == '[') {
        node.children.push_back(parse_node(&node));
        continue;
      }
      const std::size_t start = pos_;
      while (!at_end() && !is_space(peek()) && peek() != '[' && peek() != ']') {
        ++pos_;
      }
      node.children.push_back(
          FrameNode::token(std::string(text_.substr(start, pos_ - start))));
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

class Frame {
 public:
  // Validates the tree; throws deff::Error when it breaks a frame invariant.
  explicit Frame(FrameNode root) : root_(std::move(root)) {
    if (root_.kind != NodeKind::intent) throw Error("root is not an intent");
    detail::validate_node(root_);
  }

  const FrameNode& root() const noexcept { return root_; }
  const std::string& root_label() const noexcept { return root_.text; }

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  Frame(FrameNode root, std::nullptr_t) : root_(std::move(root)) {}
  friend Frame parse_frame(std::string_view);

  FrameNode root_;
};

// Parses a bracketed frame. Tokens are maximal runs of non-space,
// non-bracket bytes. Throws FrameParseError carrying the byte offset.
inline Frame parse_frame(std::string_view text) {
  // The parser enforces every invariant the validating constructor checks.
  return Frame(detail::FrameParser(text).parse(), nullptr);
}

// Canonical form: single spaces between label, children, and the closing
// bracket; no case folding.
inline std::string serialize_frame(const Frame& frame) {
  std::string out;
  detail::serialize_node(frame.root(), out);
  return out;
}

// Percentage of positions whose frames are identical.
inline double exact_match(std::span<const Frame> system,
                          std::span<const Frame> reference) {
  if (system.empty() || reference.empty()) {
    throw Error("exact match needs non-empty frame lists");
  }
  if (system.size() != reference.size()) {
    throw Error("exact match over lists of different length (" +
                std::to_string(system.size()) + " vs " +
                std::to_string(reference.size()) + ")");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < system.size(); ++i) {
    if (system[i] == reference[i]) ++hits;
  }
  return 100.0 * static_cast<double>(hits) /
         static_cast<double>(system.size());
}

// Counts of every intent and slot label; tokens excluded.
inline LabelMultiset ontology_labels(const Frame& frame) {
  LabelMultiset counts;
  detail::collect_labels(frame.root(), counts);
  return counts;
}

}  // namespace deff
