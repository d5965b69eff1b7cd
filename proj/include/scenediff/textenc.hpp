// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "scenediff/nn.hpp"

namespace scenediff {

// Dense token ids; the first three ids are reserved.
class Vocabulary {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kUnk = 1;
  static constexpr std::int64_t kNull = 2;

  // Reserved tokens followed by every word of the caption grammar.
  static Vocabulary grammar_default();
  // One token per line; line number is the id.
  static Vocabulary from_lines(std::string_view text);
  std::string to_lines() const;

  std::int64_t id(const std::string& token) const;  // kUnk when absent
  const std::string& token(std::int64_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::int64_t size() const { return static_cast<std::int64_t>(tokens_.size()); }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::int64_t> ids_;
};

std::vector<std::int64_t> tokenize(std::string_view caption, const Vocabulary& vocab);

struct TextEncoderConfig {
  std::int64_t d_text = 64;
  std::int64_t layers = 2;
  std::int64_t heads = 4;
  std::int64_t max_len = 16;
  std::int64_t mlp_ratio = 4;
};

struct TextEmbeddings {
  Tensor seq;  // [L, d_text]; PAD rows are zero
  Mask mask;   // L entries, 1 = real token
};

// Small pre-norm transformer encoder over token ids: embedding lookup plus
// sinusoidal positions, `layers` full-attention blocks, final LayerNorm.
class TextEncoder {
 public:
  TextEncoder(ParamStore& store, const std::string& path, const TextEncoderConfig& config,
              std::int64_t vocab_size, Rng& rng);

  // An empty sequence is encoded as the single NULL-condition token.
  TextEmbeddings encode(std::vector<std::int64_t> tokens) const;
  const TextEncoderConfig& config() const { return config_; }

 private:
  struct Layer {
    nn::LayerNorm ln1, ln2;
    nn::Linear qkv, proj;
    nn::Mlp mlp;
  };
  TextEncoderConfig config_;
  std::int64_t vocab_size_;
  Tensor embedding_;
  std::vector<Layer> layers_;
  nn::LayerNorm final_norm_;
};

// pe[pos, 2i] = sin(pos / 10000^(2i/d)), pe[pos, 2i+1] = cos(...)
std::vector<double> sinusoidal_table(std::int64_t length, std::int64_t dim);

}  // namespace scenediff
