// SPDX-License-Identifier: Apache-2.0
#include "scenediff/datagen.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "scenediff/diffusion.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/image_io.hpp"

namespace scenediff {
namespace {

constexpr int kSuper = 4;

// Offset of the object relative to the subject for "subject <p> object".
std::pair<std::int64_t, std::int64_t> step_of(const std::string& predicate) {
  if (predicate == "left of") return {0, 1};
  if (predicate == "right of") return {0, -1};
  if (predicate == "above") return {1, 0};
  if (predicate == "below") return {-1, 0};
  throw SchemaError("unknown predicate '" + predicate + "'");
}

std::array<double, 3> rgb_of(const std::string& color) {
  if (color == "red") return {1.0, -1.0, -1.0};
  if (color == "green") return {-1.0, 1.0, -1.0};
  if (color == "blue") return {-1.0, -1.0, 1.0};
  throw SchemaError("unknown color '" + color + "'");
}

// Shape geometry is defined for a 16-unit cell and scaled with it.
bool inside(const std::string& shape, double dy, double dx, double s) {
  if (shape == "circle") return dy * dy + dx * dx <= 36.0 * s * s;
  if (shape == "square") return std::abs(dy) <= 5.5 * s && std::abs(dx) <= 5.5 * s;
  if (shape == "triangle") {
    const double top = -6.0 * s, base = 5.0 * s;
    if (dy < top || dy > base) return false;
    return std::abs(dx) <= 6.0 * s * (dy - top) / (base - top);
  }
  throw SchemaError("unknown shape '" + shape + "'");
}

const std::string& color_of(const SceneObject& obj) {
  if (obj.attributes.size() != 1) throw SchemaError("generated objects carry exactly one color");
  return obj.attributes[0];
}

std::string image_name(std::size_t id, std::int64_t res) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "images/%05zu_%lld.png", id, static_cast<long long>(res));
  return buf;
}

}  // namespace

SceneSpec layout_of(const SceneGraph& graph) {
  validate(graph);
  const auto n = static_cast<std::int64_t>(graph.objects.size());
  if (n < 1 || n > 3) throw SchemaError("layouts hold 1 to 3 objects, got " + std::to_string(n));
  if (static_cast<std::int64_t>(graph.edges.size()) != n - 1) throw SchemaError("layouts need a chain graph");
  std::vector<std::pair<std::int64_t, std::int64_t>> pos(static_cast<std::size_t>(n), {0, 0});
  for (std::int64_t k = 0; k + 1 < n; ++k) {
    const auto& e = graph.edges[static_cast<std::size_t>(k)];
    if (e.subject != k || e.object != k + 1) throw SchemaError("layouts need a chain graph");
    const auto [dr, dc] = step_of(e.predicate);
    pos[static_cast<std::size_t>(k + 1)] = {pos[static_cast<std::size_t>(k)].first + dr,
                                            pos[static_cast<std::size_t>(k)].second + dc};
  }
  std::int64_t r0 = 0, c0 = 0, r1 = 0, c1 = 0;
  for (const auto& [r, c] : pos) {
    r0 = std::min(r0, r), c0 = std::min(c0, c), r1 = std::max(r1, r), c1 = std::max(c1, c);
  }
  if (r1 - r0 > 1 || c1 - c0 > 1) throw SchemaError("relations do not fit the 2x2 grid");
  std::set<std::pair<std::int64_t, std::int64_t>> used;
  SceneSpec spec;
  for (std::int64_t k = 0; k < n; ++k) {
    const auto& obj = graph.objects[static_cast<std::size_t>(k)];
    const auto [r, c] = pos[static_cast<std::size_t>(k)];
    if (!used.insert({r - r0, c - c0}).second) throw SchemaError("relations place two objects in one cell");
    spec.objects.push_back({obj.category, color_of(obj), r - r0, c - c0});
  }
  spec.relations = graph.edges;
  return spec;
}

Tensor render(const SceneSpec& spec, std::int64_t resolution) {
  if (resolution < 2 || resolution % 2 != 0) throw ShapeError("render: resolution must be even");
  const double cell = static_cast<double>(resolution) / 2.0;
  const double s = cell / 16.0;
  std::vector<double> img(static_cast<std::size_t>(resolution * resolution * 3), -1.0);
  for (const auto& obj : spec.objects) {
    const auto rgb = rgb_of(obj.color);
    const double cy = (static_cast<double>(obj.row) + 0.5) * cell;
    const double cx = (static_cast<double>(obj.col) + 0.5) * cell;
    for (std::int64_t y = 0; y < resolution; ++y) {
      for (std::int64_t x = 0; x < resolution; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSuper; ++sy)
          for (int sx = 0; sx < kSuper; ++sx) {
            const double py = static_cast<double>(y) + (sy + 0.5) / kSuper;
            const double px = static_cast<double>(x) + (sx + 0.5) / kSuper;
            hits += inside(obj.shape, py - cy, px - cx, s) ? 1 : 0;
          }
        if (hits == 0) continue;
        const double cov = static_cast<double>(hits) / (kSuper * kSuper);
        for (int ch = 0; ch < 3; ++ch) {
          auto& v = img[static_cast<std::size_t>((y * resolution + x) * 3 + ch)];
          v = v * (1.0 - cov) + rgb[static_cast<std::size_t>(ch)] * cov;
        }
      }
    }
  }
  return Tensor({resolution, resolution, 3}, std::move(img));
}

std::vector<std::string> all_captions() {
  std::vector<std::string> nps;
  for (auto color : grammar::kColors)
    for (auto shape : grammar::kCategories) nps.push_back("a " + std::string(color) + " " + std::string(shape));
  std::vector<std::string> out = nps;
  for (const auto& a : nps)
    for (auto p : grammar::kPredicates)
      for (const auto& b : nps) out.push_back(a + " " + std::string(p) + " " + b);
  for (const auto& a : nps)
    for (auto p : grammar::kPredicates)
      for (const auto& b : nps)
        for (auto q : grammar::kPredicates) {
          if (step_of(std::string(p)).first == 0 && step_of(std::string(q)).first == 0) continue;
          if (step_of(std::string(p)).second == 0 && step_of(std::string(q)).second == 0) continue;
          for (const auto& c : nps) out.push_back(a + " " + std::string(p) + " " + b + " " + std::string(q) + " " + c);
        }
  return out;
}

Sample make_sample(const std::string& caption) {
  Sample s;
  s.caption = caption;
  s.graph = parse_caption(caption);
  s.spec = layout_of(s.graph);
  Tensor full = render(s.spec, kLadder[2]);
  Tensor half = downsample_box(full, 2);
  s.images = {downsample_box(half, 2), half, full};
  return s;
}

std::vector<Sample> generate(std::uint64_t seed, std::int64_t n) {
  if (n < 1) throw ConfigError("generate: n must be at least 1");
  const auto captions = all_captions();
  if (n > static_cast<std::int64_t>(captions.size()))
    throw ConfigError("generate: only " + std::to_string(captions.size()) + " distinct captions exist");
  // Index ranges of the 1-, 2- and 3-object captions within all_captions().
  const std::uint64_t n1 = 9, n2 = 9 * 4 * 9, n3 = captions.size() - n1 - n2;
  Rng rng(seed);
  std::set<std::uint64_t> taken;
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  while (static_cast<std::int64_t>(out.size()) < n) {
    const auto count = rng.uniform_int(3);
    std::uint64_t idx = 0;
    if (count == 0) idx = rng.uniform_int(n1);
    else if (count == 1) idx = n1 + rng.uniform_int(n2);
    else idx = n1 + n2 + rng.uniform_int(n3);
    if (!taken.insert(idx).second) {
      // The small strata fill up; fall back to the next free caption.
      while (taken.count(idx)) idx = (idx + 1) % captions.size();
      taken.insert(idx);
    }
    out.push_back(make_sample(captions[idx]));
  }
  return out;
}

void write_dataset(const std::string& dir, const std::vector<Sample>& samples, std::int64_t heldout,
                   std::uint64_t seed) {
  if (heldout < 0 || heldout > static_cast<std::int64_t>(samples.size()))
    throw ConfigError("held-out count out of range");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["resolutions"] = {kLadder[0], kLadder[1], kLadder[2]};
  manifest["samples"] = nlohmann::json::array();
  const auto first_heldout = samples.size() - static_cast<std::size_t>(heldout);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    nlohmann::json row;
    row["id"] = i;
    row["caption"] = samples[i].caption;
    row["graph"] = nlohmann::json::parse(serialize_scene_graph(samples[i].graph));
    row["split"] = i >= first_heldout ? "heldout" : "train";
    nlohmann::json paths;
    for (std::size_t r = 0; r < 3; ++r) {
      const auto name = image_name(i, kLadder[r]);
      write_png((fs::path(dir) / name).string(), samples[i].images[r]);
      paths[std::to_string(kLadder[r])] = name;
    }
    row["images"] = paths;
    manifest["samples"].push_back(row);
  }
  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw IoError("cannot write manifest in " + dir);
  f << manifest.dump(2) << '\n';
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto path = fs::path(dir) / "manifest.json";
  std::ifstream f(path);
  if (!f) throw IoError("dataset manifest not found: " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  Dataset ds;
  try {
    const auto manifest = nlohmann::json::parse(buf.str());
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    for (const auto& row : manifest.at("samples")) {
      Sample s;
      s.caption = row.at("caption").get<std::string>();
      s.graph = load_scene_graph(row.at("graph").dump());
      s.spec = layout_of(s.graph);
      for (auto res : kLadder) {
        const auto name = row.at("images").at(std::to_string(res)).get<std::string>();
        Tensor img = read_png((fs::path(dir) / name).string());
        if (img.shape() != Shape{res, res, 3}) throw SchemaError("image " + name + " has the wrong size");
        s.images.push_back(img);
      }
      const auto split = row.at("split").get<std::string>();
      if (split == "train") ds.train.push_back(std::move(s));
      else if (split == "heldout") ds.heldout.push_back(std::move(s));
      else throw SchemaError("unknown split '" + split + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed dataset manifest: ") + e.what());
  }
  return ds;
}

}  // namespace scenediff
