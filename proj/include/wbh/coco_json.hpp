#pragma once

#include <string_view>

#include "wbh/manifest.hpp"

namespace wbh {

/// Result of parsing a COCO-layout annotation document.
struct CocoParseResult {
  DatasetManifest manifest; // condition "clean", class set = the active set
  int dropped = 0;          // annotations in categories outside the set
};

/// Parses a COCO-style JSON document (images / annotations / categories
/// arrays, boxes as [x,y,w,h]). Boxes are converted to (xmin,ymin,xmax,ymax);
/// categories are mapped through `classes` and unmapped ones dropped.
/// Missing required arrays raise ParseError; an annotation referencing an
/// unknown image or category id raises ParseError naming the annotation.
CocoParseResult parse_coco_json(std::string_view document, const ClassSet& classes);

} // namespace wbh
