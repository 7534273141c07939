#pragma once

#include <string_view>
#include <vector>

#include "wbh/classes.hpp"
#include "wbh/geometry.hpp"

namespace wbh {

/// Result of parsing one VOC-style annotation document.
struct VocParseResult {
  int width = 0;
  int height = 0;
  std::vector<Annotation> annotations; // only classes present in the active set
  int dropped = 0;                     // objects whose name was not in the set
};

/// Parses a VOC-style XML annotation document. One Annotation per <object>
/// whose <name> is in `classes`; others are dropped and counted. Malformed
/// XML raises ParseError with the byte offset; a missing <bndbox> field
/// raises ParseError naming the object index.
VocParseResult parse_voc_xml(std::string_view document, const ClassSet& classes);

} // namespace wbh
