#include "wbh/voc_xml.hpp"

#include <cctype>
#include <charconv>
#include <memory>
#include <string>

#include "wbh/error.hpp"

namespace wbh {
namespace {

struct XmlNode {
  std::string name;
  std::string text; // concatenated character data, trimmed
  std::size_t offset = 0;
  std::vector<XmlNode> children;

  const XmlNode* child(std::string_view n) const {
    for (const XmlNode& c : children)
      if (c.name == n)
        return &c;
    return nullptr;
  }
};

// Recursive-descent reader for the small XML subset VOC files use:
// prolog, comments, elements with optional attributes (ignored), text.
class XmlReader {
public:
  explicit XmlReader(std::string_view doc) : doc_(doc) {}

  XmlNode parse_document() {
    skip_misc();
    if (eof())
      throw ParseError("expected root element", pos_);
    XmlNode root = parse_element();
    skip_misc();
    if (!eof())
      throw ParseError("trailing content after root element", pos_);
    return root;
  }

private:
  bool eof() const { return pos_ >= doc_.size(); }
  char peek() const { return doc_[pos_]; }

  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(peek())))
      ++pos_;
  }

  // whitespace, <?...?> prologs and <!-- --> comments between elements
  void skip_misc() {
    while (true) {
      skip_ws();
      if (starts_with("<?")) {
        std::size_t end = doc_.find("?>", pos_);
        if (end == std::string_view::npos)
          throw ParseError("unterminated processing instruction", pos_);
        pos_ = end + 2;
      } else if (starts_with("<!--")) {
        std::size_t end = doc_.find("-->", pos_);
        if (end == std::string_view::npos)
          throw ParseError("unterminated comment", pos_);
        pos_ = end + 3;
      } else {
        return;
      }
    }
  }

  bool starts_with(std::string_view s) const {
    return doc_.substr(pos_, s.size()) == s;
  }

  std::string parse_name() {
    std::size_t start = pos_;
    while (!eof()) {
      char c = peek();
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
          c == '.' || c == ':')
        ++pos_;
      else
        break;
    }
    if (pos_ == start)
      throw ParseError("expected element name", pos_);
    return std::string(doc_.substr(start, pos_ - start));
  }

  void skip_attributes() {
    while (true) {
      skip_ws();
      if (eof())
        throw ParseError("unterminated start tag", pos_);
      char c = peek();
      if (c == '>' || c == '/')
        return;
      parse_name();
      skip_ws();
      if (eof() || peek() != '=')
        throw ParseError("expected '=' in attribute", pos_);
      ++pos_;
      skip_ws();
      if (eof() || (peek() != '"' && peek() != '\''))
        throw ParseError("expected quoted attribute value", pos_);
      char quote = peek();
      ++pos_;
      std::size_t end = doc_.find(quote, pos_);
      if (end == std::string_view::npos)
        throw ParseError("unterminated attribute value", pos_);
      pos_ = end + 1;
    }
  }

  std::string decode_entities(std::string_view raw, std::size_t raw_offset) {
    std::string out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size();) {
      if (raw[i] != '&') {
        out.push_back(raw[i]);
        ++i;
        continue;
      }
      std::size_t semi = raw.find(';', i);
      if (semi == std::string_view::npos)
        throw ParseError("unterminated entity", raw_offset + i);
      std::string_view ent = raw.substr(i + 1, semi - i - 1);
      if (ent == "lt")
        out.push_back('<');
      else if (ent == "gt")
        out.push_back('>');
      else if (ent == "amp")
        out.push_back('&');
      else if (ent == "quot")
        out.push_back('"');
      else if (ent == "apos")
        out.push_back('\'');
      else
        throw ParseError("unknown entity '&" + std::string(ent) + ";'",
                         raw_offset + i);
      i = semi + 1;
    }
    return out;
  }

  static void trim(std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
      ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
      --e;
    s = s.substr(b, e - b);
  }

  XmlNode parse_element() {
    if (eof() || peek() != '<')
      throw ParseError("expected '<'", pos_);
    XmlNode node;
    node.offset = pos_;
    ++pos_;
    node.name = parse_name();
    skip_attributes();
    if (peek() == '/') {
      ++pos_;
      if (eof() || peek() != '>')
        throw ParseError("expected '>' after '/'", pos_);
      ++pos_;
      return node; // self-closing
    }
    ++pos_; // consume '>'

    std::string text;
    while (true) {
      if (eof())
        throw ParseError("unterminated element <" + node.name + ">", pos_);
      if (peek() == '<') {
        if (starts_with("<!--")) {
          std::size_t end = doc_.find("-->", pos_);
          if (end == std::string_view::npos)
            throw ParseError("unterminated comment", pos_);
          pos_ = end + 3;
          continue;
        }
        if (starts_with("</")) {
          std::size_t close_at = pos_;
          pos_ += 2;
          std::string name = parse_name();
          if (name != node.name)
            throw ParseError("mismatched close tag </" + name + "> for <" +
                                 node.name + ">",
                             close_at);
          skip_ws();
          if (eof() || peek() != '>')
            throw ParseError("expected '>' in close tag", pos_);
          ++pos_;
          node.text = std::move(text);
          trim(node.text);
          return node;
        }
        node.children.push_back(parse_element());
      } else {
        std::size_t start = pos_;
        std::size_t end = doc_.find('<', pos_);
        if (end == std::string_view::npos)
          throw ParseError("unterminated element <" + node.name + ">",
                           doc_.size());
        text += decode_entities(doc_.substr(start, end - start), start);
        pos_ = end;
      }
    }
  }

  std::string_view doc_;
  std::size_t pos_ = 0;
};

double require_number(const XmlNode& parent, std::string_view field,
                      const std::string& where) {
  const XmlNode* n = parent.child(field);
  if (!n)
    throw ParseError(where + ": missing <" + std::string(field) + ">",
                     parent.offset);
  double v = 0.0;
  const std::string& s = n->text;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError(where + ": <" + std::string(field) +
                         "> is not a number: '" + s + "'",
                     n->offset);
  return v;
}

} // namespace

VocParseResult parse_voc_xml(std::string_view document, const ClassSet& classes) {
  XmlReader reader(document);
  XmlNode root = reader.parse_document();

  const XmlNode* size = root.child("size");
  if (!size)
    throw ParseError("missing <size> element", root.offset);
  VocParseResult out;
  out.width = int(require_number(*size, "width", "size"));
  out.height = int(require_number(*size, "height", "size"));
  if (out.width <= 0 || out.height <= 0)
    throw ParseError("non-positive image size", size->offset);

  int object_index = -1;
  for (const XmlNode& child : root.children) {
    if (child.name != "object")
      continue;
    ++object_index;
    const std::string where = "object " + std::to_string(object_index);
    const XmlNode* name = child.child("name");
    if (!name)
      throw ParseError(where + ": missing <name>", child.offset);
    auto class_id = classes.index_of(name->text);
    if (!class_id) {
      ++out.dropped;
      continue;
    }
    const XmlNode* box = child.child("bndbox");
    if (!box)
      throw ParseError(where + ": missing <bndbox>", child.offset);
    Annotation a;
    a.class_id = *class_id;
    a.bbox = BBox{require_number(*box, "xmin", where), require_number(*box, "ymin", where),
                  require_number(*box, "xmax", where), require_number(*box, "ymax", where)};
    if (!a.bbox.valid())
      throw ParseError(where + ": degenerate box", box->offset);
    if (const XmlNode* diff = child.child("difficult"))
      a.difficult = diff->text == "1";
    out.annotations.push_back(a);
  }
  return out;
}

} // namespace wbh
