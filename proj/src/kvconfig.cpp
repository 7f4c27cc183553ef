#include "czforge/kvconfig.hpp"

#include <charconv>
#include <cmath>

#include "czforge/error.hpp"

namespace czforge::kv {
namespace {

struct Line {
  std::size_t number = 0;
  std::size_t indent = 0;
  std::string body;  // without indent and comment
};

std::string strip_comment(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '#' && (i == 0 || s[i - 1] == ' ' || s[i - 1] == '\t')) return std::string(s.substr(0, i));
  }
  return std::string(s);
}

std::string unquote(std::string value) {
  if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
    return value.substr(1, value.size() - 2);
  }
  return value;
}

/// Splits "key: value" / "key:" at the first colon followed by a blank or the end.
Entry split_entry(std::string_view body, std::size_t line) {
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != ':') continue;
    if (i + 1 < body.size() && body[i + 1] != ' ' && body[i + 1] != '\t') continue;
    Entry e;
    e.key = unquote(trim(body.substr(0, i)));
    e.value = unquote(trim(body.substr(i + 1)));
    e.line = line;
    if (e.key.empty()) throw ParseError("empty key", line);
    return e;
  }
  throw ParseError("expected 'key: value'", line);
}

std::vector<Line> tokenize(std::string_view text) {
  std::vector<Line> lines;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(pos, end - pos);
    ++number;
    pos = end + 1;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    std::string content = strip_comment(raw);
    std::size_t indent = 0;
    while (indent < content.size() && content[indent] == ' ') ++indent;
    if (indent < content.size() && content[indent] == '\t') throw ParseError("tab indentation", number);
    std::string body = trim(std::string_view(content).substr(indent));
    if (body.empty()) {
      if (end == text.size()) break;
      continue;
    }
    lines.push_back({number, indent, std::move(body)});
    if (end == text.size()) break;
  }
  return lines;
}

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

Document Document::parse(std::string_view text) {
  const std::vector<Line> lines = tokenize(text);
  Document doc;
  std::size_t i = 0;
  while (i < lines.size()) {
    const Line& head = lines[i];
    if (head.indent != 0) throw ParseError("unexpected indentation", head.number);
    Entry e = split_entry(head.body, head.number);
    if (doc.find(e.key) != nullptr) throw ParseError("duplicate key '" + e.key + "'", head.number);
    Node node;
    node.key = e.key;
    node.line = head.number;
    ++i;
    if (!e.value.empty()) {
      node.kind = Node::Kind::kScalar;
      node.scalar = e.value;
      if (i < lines.size() && lines[i].indent > 0) throw ParseError("unexpected indentation", lines[i].number);
      doc.nodes_.push_back(std::move(node));
      continue;
    }
    node.kind = Node::Kind::kMap;
    if (i < lines.size() && lines[i].indent > 0 && lines[i].body.starts_with("-")) {
      node.kind = Node::Kind::kList;
      const std::size_t item_indent = lines[i].indent;
      while (i < lines.size() && lines[i].indent > 0) {
        const Line& l = lines[i];
        if (l.indent != item_indent || !(l.body == "-" || l.body.starts_with("- "))) {
          throw ParseError("expected list item", l.number);
        }
        Map item;
        const std::string rest = trim(std::string_view(l.body).substr(1));
        if (!rest.empty()) item.push_back(split_entry(rest, l.number));
        ++i;
        std::size_t cont_indent = 0;
        while (i < lines.size() && lines[i].indent > item_indent) {
          if (cont_indent == 0) cont_indent = lines[i].indent;
          if (lines[i].indent != cont_indent) throw ParseError("inconsistent indentation", lines[i].number);
          if (lines[i].body.starts_with("- ")) throw ParseError("nested lists are not supported", lines[i].number);
          Entry ce = split_entry(lines[i].body, lines[i].number);
          if (ce.value.empty()) throw ParseError("nesting deeper than one level", lines[i].number);
          if (kv::find(item, ce.key) != nullptr) throw ParseError("duplicate key '" + ce.key + "'", lines[i].number);
          item.push_back(std::move(ce));
          ++i;
        }
        node.list.push_back(std::move(item));
      }
    } else {
      std::size_t child_indent = 0;
      while (i < lines.size() && lines[i].indent > 0) {
        const Line& l = lines[i];
        if (child_indent == 0) child_indent = l.indent;
        if (l.indent != child_indent) throw ParseError("inconsistent indentation", l.number);
        Entry ce = split_entry(l.body, l.number);
        if (ce.value.empty()) throw ParseError("nesting deeper than one level", l.number);
        node.map.push_back(std::move(ce));
        ++i;
      }
    }
    doc.nodes_.push_back(std::move(node));
  }
  return doc;
}

const Node* Document::find(std::string_view key) const {
  for (const Node& n : nodes_) {
    if (n.key == key) return &n;
  }
  return nullptr;
}

const Entry* find(const Map& map, std::string_view key) {
  for (const Entry& e : map) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

double to_double(const Entry& entry) {
  const std::string& v = entry.value;
  double out = 0.0;
  const char* first = v.data();
  if (!v.empty() && v.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ParseError("'" + entry.key + "' is not a number", entry.line);
  }
  return out;
}

long long to_integer(const Entry& entry) {
  const std::string& v = entry.value;
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ParseError("'" + entry.key + "' is not an integer", entry.line);
  }
  return out;
}

std::uint64_t to_u64(const Entry& entry) {
  const std::string& v = entry.value;
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ParseError("'" + entry.key + "' is not a non-negative integer", entry.line);
  }
  return out;
}

std::vector<std::string> to_list(const Entry& entry) {
  const std::string& v = entry.value;
  if (v.empty() || v.front() != '[') return {v};
  if (v.back() != ']') throw ParseError("unterminated list for '" + entry.key + "'", entry.line);
  std::vector<std::string> out;
  const std::string_view inner = std::string_view(v).substr(1, v.size() - 2);
  if (trim(inner).empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = inner.find(',', pos);
    const std::string item = trim(inner.substr(pos, comma == std::string_view::npos ? inner.npos : comma - pos));
    if (item.empty()) throw ParseError("empty list element for '" + entry.key + "'", entry.line);
    out.push_back(unquote(item));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace czforge::kv
