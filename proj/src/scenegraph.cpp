// SPDX-License-Identifier: Apache-2.0
#include "scenediff/scenegraph.hpp"

#include <algorithm>
#include <cctype>

#include "json.hpp"
#include "scenediff/errors.hpp"

namespace scenediff {
namespace grammar {
namespace {
template <std::size_t N>
int find(const std::array<std::string_view, N>& table, std::string_view name) {
  for (std::size_t i = 0; i < N; ++i)
    if (table[i] == name) return static_cast<int>(i);
  return -1;
}
}  // namespace

int category_id(std::string_view name) { return find(kCategories, name); }
int color_id(std::string_view name) { return find(kColors, name); }
int predicate_id(std::string_view name) { return find(kPredicates, name); }
}  // namespace grammar

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    auto first = std::find_if(cur.begin(), cur.end(), [](unsigned char c) { return std::isalnum(c); });
    auto last = std::find_if(cur.rbegin(), cur.rend(), [](unsigned char c) { return std::isalnum(c); }).base();
    if (first < last) words.emplace_back(first, last);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c))
      flush();
    else
      cur.push_back(static_cast<char>(std::tolower(c)));
  }
  flush();
  return words;
}

SceneGraph parse_caption(std::string_view caption) {
  const auto words = split_words(caption);
  SceneGraph g;
  std::size_t i = 0;
  auto fail = [&](const std::string& expected) -> ParseError {
    const std::string tok = i < words.size() ? words[i] : "<end>";
    return ParseError("caption parse error at word " + std::to_string(i) + ": expected " + expected + ", got '" +
                          tok + "'",
                      tok, i);
  };
  auto noun_phrase = [&] {
    if (i >= words.size() || words[i] != "a") throw fail("'a'");
    ++i;
    if (i >= words.size() || grammar::color_id(words[i]) < 0) throw fail("a color");
    const std::string color = words[i++];
    if (i >= words.size() || grammar::category_id(words[i]) < 0) throw fail("a shape");
    g.objects.push_back({words[i++], {color}});
  };
  noun_phrase();
  while (i < words.size()) {
    std::string pred;
    if (words[i] == "above" || words[i] == "below") {
      pred = words[i++];
    } else if ((words[i] == "left" || words[i] == "right") && i + 1 < words.size() && words[i + 1] == "of") {
      pred = words[i] + " of";
      i += 2;
    } else {
      throw fail("a relation");
    }
    const auto subject = static_cast<std::int64_t>(g.objects.size()) - 1;
    noun_phrase();
    g.edges.push_back({subject, pred, subject + 1});
  }
  return g;
}

std::string caption_of(const SceneGraph& graph) {
  validate(graph);
  for (std::size_t k = 0; k < graph.edges.size(); ++k)
    if (graph.edges[k].subject != static_cast<std::int64_t>(k) || graph.edges[k].object != static_cast<std::int64_t>(k + 1))
      throw SchemaError("caption_of needs a chain graph");
  if (graph.edges.size() + 1 != graph.objects.size()) throw SchemaError("caption_of needs a chain graph");
  std::string out;
  for (std::size_t k = 0; k < graph.objects.size(); ++k) {
    const auto& o = graph.objects[k];
    if (o.attributes.size() != 1) throw SchemaError("caption_of needs exactly one color per object");
    if (k > 0) out += " " + graph.edges[k - 1].predicate + " ";
    out += "a " + o.attributes[0] + " " + o.category;
  }
  return out;
}

void validate(const SceneGraph& graph) {
  if (graph.objects.empty()) throw SchemaError("scene graph has no objects");
  for (std::size_t i = 0; i < graph.objects.size(); ++i) {
    const auto& o = graph.objects[i];
    if (grammar::category_id(o.category) < 0)
      throw SchemaError("object " + std::to_string(i) + ": unknown category '" + o.category + "'");
    for (const auto& a : o.attributes)
      if (grammar::color_id(a) < 0) throw SchemaError("object " + std::to_string(i) + ": unknown attribute '" + a + "'");
  }
  const auto n = static_cast<std::int64_t>(graph.objects.size());
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    const auto& e = graph.edges[k];
    const std::string where = "edge " + std::to_string(k) + ": ";
    if (e.subject < 0 || e.subject >= n || e.object < 0 || e.object >= n)
      throw SchemaError(where + "endpoint out of range for " + std::to_string(n) + " objects");
    if (e.subject == e.object) throw SchemaError(where + "self-loop");
    if (grammar::predicate_id(e.predicate) < 0) throw SchemaError(where + "unknown predicate '" + e.predicate + "'");
  }
}

std::string serialize_scene_graph(const SceneGraph& graph) {
  nlohmann::json doc;
  doc["objects"] = nlohmann::json::array();
  for (const auto& o : graph.objects) doc["objects"].push_back({{"category", o.category}, {"attributes", o.attributes}});
  doc["edges"] = nlohmann::json::array();
  for (const auto& e : graph.edges) doc["edges"].push_back({{"s", e.subject}, {"p", e.predicate}, {"o", e.object}});
  return doc.dump();
}

SceneGraph load_scene_graph(std::string_view document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("scene graph document is not valid JSON: ") + e.what());
  }
  SceneGraph g;
  try {
    if (!doc.is_object() || !doc.contains("objects") || !doc["objects"].is_array())
      throw SchemaError("scene graph document needs an 'objects' array");
    for (const auto& o : doc["objects"]) {
      SceneObject obj;
      obj.category = o.at("category").get<std::string>();
      if (o.contains("attributes")) obj.attributes = o["attributes"].get<std::vector<std::string>>();
      g.objects.push_back(std::move(obj));
    }
    if (doc.contains("edges")) {
      if (!doc["edges"].is_array()) throw SchemaError("'edges' must be an array");
      for (const auto& e : doc["edges"])
        g.edges.push_back({e.at("s").get<std::int64_t>(), e.at("p").get<std::string>(), e.at("o").get<std::int64_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("scene graph schema violation: ") + e.what());
  }
  validate(g);
  return g;
}

}  // namespace scenediff
