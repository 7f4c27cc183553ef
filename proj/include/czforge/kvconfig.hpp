#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace czforge::kv {

// Restricted key:value dialect shared by the dataset config and the augment
// pipeline description:
//
//   key: scalar               # top-level scalar, comments start with '#'
//   names:                    # nested map, indented `key: value` lines
//     0: cone
//   steps:                    # list of maps, items introduced by "- "
//     - op: brightness
//       gain: [0.5, 1.5]
//
// Nothing deeper than one level of nesting is accepted.

struct Entry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

using Map = std::vector<Entry>;

struct Node {
  std::string key;
  std::size_t line = 0;
  enum class Kind { kScalar, kMap, kList } kind = Kind::kScalar;
  std::string scalar;
  Map map;
  std::vector<Map> list;
};

class Document {
 public:
  /// Throws ParseError on malformed lines or duplicate top-level keys.
  static Document parse(std::string_view text);

  const Node* find(std::string_view key) const;
  const std::vector<Node>& nodes() const noexcept { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

const Entry* find(const Map& map, std::string_view key);

/// Parses "1.5" as a double; throws ParseError naming `line`.
double to_double(const Entry& entry);
long long to_integer(const Entry& entry);
std::uint64_t to_u64(const Entry& entry);

/// Parses "[a, b, ...]" into its elements; a bare scalar yields one element.
std::vector<std::string> to_list(const Entry& entry);

std::string trim(std::string_view s);

}  // namespace czforge::kv
