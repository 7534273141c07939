#include "wbh/coco_json.hpp"

#include <map>
#include <string>

#include <json.hpp>

#include "wbh/error.hpp"

namespace wbh {

using nlohmann::json;

CocoParseResult parse_coco_json(std::string_view document, const ClassSet& classes) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), e.byte);
  }

  for (const char* key : {"images", "annotations", "categories"})
    if (!doc.contains(key) || !doc[key].is_array())
      throw ParseError(std::string("missing required array '") + key + "'", 0);

  // category id -> class id in the active set (or -1: drop)
  std::map<std::int64_t, int> category_map;
  for (const json& cat : doc["categories"]) {
    if (!cat.contains("id") || !cat.contains("name"))
      throw ParseError("category entry missing 'id' or 'name'", 0);
    auto mapped = classes.index_of(cat["name"].get<std::string>());
    category_map[cat["id"].get<std::int64_t>()] = mapped ? *mapped : -1;
  }

  CocoParseResult out;
  out.manifest.classes = classes;
  std::map<std::int64_t, std::size_t> image_index;
  for (const json& img : doc["images"]) {
    if (!img.contains("id") || !img.contains("file_name") ||
        !img.contains("width") || !img.contains("height"))
      throw ParseError("image entry missing id/file_name/width/height", 0);
    ImageRecord rec;
    rec.image_path = img["file_name"].get<std::string>();
    rec.width = img["width"].get<int>();
    rec.height = img["height"].get<int>();
    image_index[img["id"].get<std::int64_t>()] = out.manifest.records.size();
    out.manifest.records.push_back(std::move(rec));
  }

  std::size_t ann_index = 0;
  for (const json& ann : doc["annotations"]) {
    const std::string where = "annotation " + std::to_string(ann_index++);
    if (!ann.contains("image_id") || !ann.contains("category_id") ||
        !ann.contains("bbox") || !ann["bbox"].is_array() || ann["bbox"].size() != 4)
      throw ParseError(where + ": missing image_id/category_id/bbox[4]", 0);
    auto img_it = image_index.find(ann["image_id"].get<std::int64_t>());
    if (img_it == image_index.end())
      throw ParseError(where + ": unknown image id " +
                           ann["image_id"].dump(),
                       0);
    auto cat_it = category_map.find(ann["category_id"].get<std::int64_t>());
    if (cat_it == category_map.end())
      throw ParseError(where + ": unknown category id " +
                           ann["category_id"].dump(),
                       0);
    if (cat_it->second < 0) {
      ++out.dropped;
      continue;
    }
    const json& b = ann["bbox"];
    double x = b[0].get<double>(), y = b[1].get<double>();
    double w = b[2].get<double>(), h = b[3].get<double>();
    Annotation a;
    a.class_id = cat_it->second;
    a.bbox = BBox{x, y, x + w, y + h};
    if (!a.bbox.valid())
      throw ParseError(where + ": degenerate box", 0);
    if (ann.contains("iscrowd") && ann["iscrowd"].is_number() &&
        ann["iscrowd"].get<int>() != 0)
      a.difficult = true; // crowd regions follow the VOC "difficult" rule
    out.manifest.records[img_it->second].annotations.push_back(a);
  }
  return out;
}

} // namespace wbh
