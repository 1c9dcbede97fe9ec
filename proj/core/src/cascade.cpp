#include "rbi/cascade.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "rbi/error.hpp"

namespace rbi {
namespace {

namespace pt = boost::property_tree;

constexpr std::string_view kOldFormatType = "opencv-haar-classifier";
constexpr std::string_view kNewFormatType = "opencv-cascade-classifier";

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
  return out;
}

double to_real(std::string_view token, const std::string& where) {
  double v = 0.0;
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ParseError("invalid number '" + std::string(token) + "' at " + where);
  }
  return v;
}

int to_int(std::string_view token, const std::string& where) {
  int v = 0;
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("invalid integer '" + std::string(token) + "' at " + where);
  }
  return v;
}

// Children that are real elements (skips attributes and comments).
std::vector<const pt::ptree*> elements(const pt::ptree& node, std::string_view key) {
  std::vector<const pt::ptree*> out;
  for (const auto& [k, child] : node) {
    if (k == key) out.push_back(&child);
  }
  return out;
}

const pt::ptree& required(const pt::ptree& node, const std::string& key, const std::string& where) {
  const auto it = node.find(key);
  if (it == node.not_found()) throw ParseError("missing <" + key + "> in " + where);
  return it->second;
}

std::string text_of(const pt::ptree& node) { return trim(node.data()); }

RectWeight parse_rect(const pt::ptree& node, const std::string& where) {
  const auto fields = split_ws(text_of(node));
  if (fields.size() != 5) throw ParseError("rectangle needs 5 fields at " + where);
  RectWeight r;
  r.x = to_int(fields[0], where);
  r.y = to_int(fields[1], where);
  r.w = to_int(fields[2], where);
  r.h = to_int(fields[3], where);
  r.weight = to_real(fields[4], where);
  return r;
}

WeakClassifier parse_tree(const pt::ptree& tree, const std::string& where) {
  const auto nodes = elements(tree, "_");
  if (nodes.empty()) throw ParseError("empty tree at " + where);
  if (nodes.size() > 1) throw UnsupportedCascade("tree deeper than a stump at " + where);
  const pt::ptree& node = *nodes.front();
  const std::string node_where = where + "/_";
  if (node.find("left_node") != node.not_found() || node.find("right_node") != node.not_found()) {
    throw UnsupportedCascade("tree deeper than a stump at " + node_where);
  }

  WeakClassifier wc;
  const auto& feature = required(node, "feature", node_where);
  const auto& rects = required(feature, "rects", node_where + "/feature");
  int ri = 0;
  for (const auto* rect : elements(rects, "_")) {
    wc.feature.rects.push_back(
        parse_rect(*rect, node_where + "/feature/rects/_[" + std::to_string(ri++) + "]"));
  }
  if (const auto it = feature.find("tilted"); it != feature.not_found()) {
    wc.feature.tilted = to_int(text_of(it->second), node_where + "/feature/tilted") != 0;
  }
  wc.theta = to_real(text_of(required(node, "threshold", node_where)), node_where + "/threshold");
  wc.beta = to_real(text_of(required(node, "left_val", node_where)), node_where + "/left_val");
  wc.alpha = to_real(text_of(required(node, "right_val", node_where)), node_where + "/right_val");
  return wc;
}

Stage parse_stage(const pt::ptree& node, std::size_t index, const std::string& where) {
  Stage stage;
  const auto& trees = required(node, "trees", where);
  int ti = 0;
  for (const auto* tree : elements(trees, "_")) {
    stage.weak.push_back(parse_tree(*tree, where + "/trees/_[" + std::to_string(ti++) + "]"));
  }
  stage.threshold =
      to_real(text_of(required(node, "stage_threshold", where)), where + "/stage_threshold");
  // Stage trees (alt_tree style) branch via parent/next; only plain chains are modeled.
  if (const auto it = node.find("parent"); it != node.not_found()) {
    const int parent = to_int(text_of(it->second), where + "/parent");
    if (parent != static_cast<int>(index) - 1) {
      throw UnsupportedCascade("stage tree (parent " + std::to_string(parent) + ") at " + where);
    }
  }
  if (const auto it = node.find("next"); it != node.not_found()) {
    if (to_int(text_of(it->second), where + "/next") != -1) {
      throw UnsupportedCascade("stage tree (next link) at " + where);
    }
  }
  return stage;
}

bool rect_inside(const RectWeight& r, bool tilted, int ww, int wh) {
  if (r.x < 0 || r.y < 0 || r.w <= 0 || r.h <= 0) return false;
  if (tilted) return r.x - r.h >= 0 && r.x + r.w <= ww && r.y + r.w + r.h <= wh;
  return r.x + r.w <= ww && r.y + r.h <= wh;
}

std::string real_str(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void validate_cascade(const Cascade& c) {
  if (c.window_width < 4 || c.window_height < 4) {
    throw ParseError("window size must be at least 4x4");
  }
  if (c.stages.empty()) throw ParseError("cascade has no stages");
  for (std::size_t s = 0; s < c.stages.size(); ++s) {
    const auto& stage = c.stages[s];
    if (stage.weak.empty()) throw ParseError("stage " + std::to_string(s) + " has no classifiers");
    for (std::size_t n = 0; n < stage.weak.size(); ++n) {
      const auto& f = stage.weak[n].feature;
      const std::string where = "stage " + std::to_string(s) + " classifier " + std::to_string(n);
      if (f.rects.size() < 2 || f.rects.size() > 3) {
        throw ParseError("feature must have 2 or 3 rectangles at " + where);
      }
      for (const auto& r : f.rects) {
        if (!rect_inside(r, f.tilted, c.window_width, c.window_height)) {
          throw ParseError("rectangle outside the base window at " + where);
        }
      }
    }
  }
}

Cascade parse_cascade(std::string_view xml) {
  pt::ptree doc;
  try {
    std::istringstream in{std::string(xml)};
    pt::read_xml(in, doc, pt::xml_parser::no_comments | pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("malformed XML at line " + std::to_string(e.line()) + ": " + e.message());
  }

  const auto storage = doc.find("opencv_storage");
  if (storage == doc.not_found()) throw ParseError("missing <opencv_storage> root");

  const pt::ptree* root = nullptr;
  std::string name;
  for (const auto& [key, child] : storage->second) {
    if (key == "<xmlattr>" || key == "<xmlcomment>") continue;
    root = &child;
    name = key;
    break;
  }
  if (root == nullptr) throw ParseError("empty <opencv_storage>");

  const std::string type_id = root->get<std::string>("<xmlattr>.type_id", "");
  if (type_id == kNewFormatType || root->find("stageType") != root->not_found() ||
      root->find("featureType") != root->not_found()) {
    throw UnsupportedCascade("new-format cascade <" + name + "> is not supported");
  }
  if (type_id != kOldFormatType) {
    throw UnsupportedCascade("unknown cascade type '" + type_id + "' in <" + name + ">");
  }

  Cascade c;
  c.name = name;
  const std::string where = "<" + name + ">";
  const auto size_it = root->find("size");
  if (size_it == root->not_found()) throw ParseError("missing <size> in " + where);
  const auto size = split_ws(text_of(size_it->second));
  if (size.size() != 2) throw ParseError("<size> needs width and height in " + where);
  c.window_width = to_int(size[0], where + "/size");
  c.window_height = to_int(size[1], where + "/size");

  const auto& stages = required(*root, "stages", where);
  std::size_t si = 0;
  for (const auto* stage : elements(stages, "_")) {
    c.stages.push_back(parse_stage(*stage, si, where + "/stages/_[" + std::to_string(si) + "]"));
    ++si;
  }
  validate_cascade(c);
  return c;
}

Cascade load_cascade(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open cascade file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_cascade(ss.str());
}

CascadeStats cascade_stats(const Cascade& c) {
  CascadeStats s;
  s.stage_count = c.stages.size();
  s.window_width = c.window_width;
  s.window_height = c.window_height;
  for (const auto& stage : c.stages) {
    s.weak_per_stage.push_back(stage.weak.size());
    s.total_weak += stage.weak.size();
    s.max_weak = std::max(s.max_weak, stage.weak.size());
  }
  return s;
}

bool uses_tilted_features(const Cascade& c) {
  for (const auto& stage : c.stages) {
    for (const auto& wc : stage.weak) {
      if (wc.feature.tilted) return true;
    }
  }
  return false;
}

std::string dump_cascade(const Cascade& c) {
  std::ostringstream out;
  out << "cascade\t" << c.name << '\t' << c.window_width << '\t' << c.window_height << '\t'
      << c.stages.size() << '\n';
  for (std::size_t s = 0; s < c.stages.size(); ++s) {
    const auto& stage = c.stages[s];
    out << "stage\t" << s << '\t' << real_str(stage.threshold) << '\t' << stage.weak.size() << '\n';
    for (std::size_t n = 0; n < stage.weak.size(); ++n) {
      const auto& wc = stage.weak[n];
      out << s << '\t' << n << '\t' << real_str(wc.theta) << '\t' << real_str(wc.alpha) << '\t'
          << real_str(wc.beta) << '\t' << (wc.feature.tilted ? 1 : 0);
      for (const auto& r : wc.feature.rects) {
        out << '\t' << r.x << ',' << r.y << ',' << r.w << ',' << r.h << ',' << real_str(r.weight);
      }
      out << '\n';
    }
  }
  return out.str();
}

Cascade parse_cascade_dump(std::string_view text) {
  Cascade c;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::size_t expected_stages = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;

    std::vector<std::string_view> f;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      f.push_back(line.substr(start, tab == std::string_view::npos ? line.npos : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    const std::string where = "dump line " + std::to_string(line_no);

    if (f[0] == "cascade") {
      if (f.size() != 5) throw ParseError("bad cascade header at " + where);
      c.name = std::string(f[1]);
      c.window_width = to_int(f[2], where);
      c.window_height = to_int(f[3], where);
      expected_stages = static_cast<std::size_t>(to_int(f[4], where));
    } else if (f[0] == "stage") {
      if (f.size() != 4) throw ParseError("bad stage header at " + where);
      if (static_cast<std::size_t>(to_int(f[1], where)) != c.stages.size()) {
        throw ParseError("stage out of order at " + where);
      }
      Stage st;
      st.threshold = to_real(f[2], where);
      st.weak.reserve(static_cast<std::size_t>(to_int(f[3], where)));
      c.stages.push_back(std::move(st));
    } else {
      if (f.size() < 6 || c.stages.empty()) throw ParseError("bad classifier line at " + where);
      const auto s = static_cast<std::size_t>(to_int(f[0], where));
      const auto n = static_cast<std::size_t>(to_int(f[1], where));
      if (s + 1 != c.stages.size() || n != c.stages.back().weak.size()) {
        throw ParseError("classifier out of order at " + where);
      }
      WeakClassifier wc;
      wc.theta = to_real(f[2], where);
      wc.alpha = to_real(f[3], where);
      wc.beta = to_real(f[4], where);
      wc.feature.tilted = to_int(f[5], where) != 0;
      for (std::size_t i = 6; i < f.size(); ++i) {
        std::vector<std::string_view> parts;
        std::size_t b = 0;
        while (true) {
          const auto comma = f[i].find(',', b);
          parts.push_back(f[i].substr(b, comma == std::string_view::npos ? f[i].npos : comma - b));
          if (comma == std::string_view::npos) break;
          b = comma + 1;
        }
        if (parts.size() != 5) throw ParseError("bad rectangle at " + where);
        wc.feature.rects.push_back({to_int(parts[0], where), to_int(parts[1], where),
                                    to_int(parts[2], where), to_int(parts[3], where),
                                    to_real(parts[4], where)});
      }
      c.stages.back().weak.push_back(std::move(wc));
    }
  }
  if (c.stages.size() != expected_stages) throw ParseError("dump stage count mismatch");
  validate_cascade(c);
  return c;
}

}  // namespace rbi
