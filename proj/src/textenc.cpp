// SPDX-License-Identifier: Apache-2.0
#include "scenediff/textenc.hpp"

#include <cmath>
#include <sstream>

#include "scenediff/attention.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/scenegraph.hpp"

namespace scenediff {

Vocabulary Vocabulary::grammar_default() {
  std::string lines = "<pad>\n<unk>\n<null>\na\n";
  for (auto c : grammar::kColors) lines += std::string(c) + "\n";
  for (auto c : grammar::kCategories) lines += std::string(c) + "\n";
  lines += "left\nright\nof\nabove\nbelow\n";
  return from_lines(lines);
}

Vocabulary Vocabulary::from_lines(std::string_view text) {
  Vocabulary v;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (v.ids_.count(line)) throw SchemaError("duplicate vocabulary token '" + line + "'");
    v.ids_.emplace(line, static_cast<std::int64_t>(v.tokens_.size()));
    v.tokens_.push_back(line);
  }
  if (v.tokens_.size() < 3) throw SchemaError("vocabulary must start with the three reserved tokens");
  return v;
}

std::string Vocabulary::to_lines() const {
  std::string out;
  for (const auto& t : tokens_) out += t + "\n";
  return out;
}

std::int64_t Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<std::int64_t> tokenize(std::string_view caption, const Vocabulary& vocab) {
  std::vector<std::int64_t> ids;
  for (const auto& w : split_words(caption)) ids.push_back(vocab.id(w));
  return ids;
}

std::vector<double> sinusoidal_table(std::int64_t length, std::int64_t dim) {
  std::vector<double> pe(static_cast<std::size_t>(length * dim));
  for (std::int64_t p = 0; p < length; ++p)
    for (std::int64_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(p) * freq;
      pe[static_cast<std::size_t>(p * dim + i)] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

TextEncoder::TextEncoder(ParamStore& store, const std::string& path, const TextEncoderConfig& config,
                         std::int64_t vocab_size, Rng& rng)
    : config_(config), vocab_size_(vocab_size) {
  if (config.d_text % config.heads != 0) throw ConfigError("text encoder width must divide into heads");
  embedding_ = store.add(path + ".embedding", init::normal(rng, {vocab_size, config.d_text}, 0.5));
  const auto d = config.d_text;
  for (std::int64_t l = 0; l < config.layers; ++l) {
    const std::string p = path + ".layer" + std::to_string(l);
    layers_.push_back({nn::LayerNorm(store, p + ".ln1", d), nn::LayerNorm(store, p + ".ln2", d),
                       nn::Linear(store, p + ".qkv", d, 3 * d, rng), nn::Linear(store, p + ".proj", d, d, rng),
                       nn::Mlp(store, p + ".mlp", d, config.mlp_ratio * d, d, rng)});
  }
  final_norm_ = nn::LayerNorm(store, path + ".final_norm", d);
}

TextEmbeddings TextEncoder::encode(std::vector<std::int64_t> tokens) const {
  if (tokens.empty()) tokens.push_back(Vocabulary::kNull);
  const auto len = static_cast<std::int64_t>(tokens.size());
  if (len > config_.max_len)
    throw ShapeError("caption has " + std::to_string(len) + " tokens; maximum is " + std::to_string(config_.max_len));
  for (auto t : tokens)
    if (t < 0 || t >= vocab_size_) throw ShapeError("token id out of range");
  const auto d = config_.d_text;

  TextEmbeddings out;
  out.mask.resize(tokens.size());
  std::vector<double> row_keep(static_cast<std::size_t>(len * d));
  for (std::int64_t i = 0; i < len; ++i) {
    const bool keep = tokens[static_cast<std::size_t>(i)] != Vocabulary::kPad;
    out.mask[static_cast<std::size_t>(i)] = keep ? 1 : 0;
    for (std::int64_t j = 0; j < d; ++j) row_keep[static_cast<std::size_t>(i * d + j)] = keep ? 1.0 : 0.0;
  }

  Tensor x = add(take_rows(embedding_, tokens), Tensor({len, d}, sinusoidal_table(len, d)));
  for (const auto& layer : layers_) {
    Tensor qkv = layer.qkv(layer.ln1(x));
    Tensor q = narrow_last(qkv, 0, d), k = narrow_last(qkv, d, d), v = narrow_last(qkv, 2 * d, d);
    x = add(x, layer.proj(attention::multi_head(q, k, v, config_.heads, &out.mask)));
    x = add(x, layer.mlp(layer.ln2(x)));
  }
  out.seq = mul(final_norm_(x), Tensor({len, d}, std::move(row_keep)));
  return out;
}

}  // namespace scenediff
