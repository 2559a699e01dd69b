#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace salsum {

// Tokenized text. ids stay empty until encoded against a vocabulary;
// sentence spans are half-open [start, end) and partition [0, size()).
struct TokenSeq {
  std::vector<int> ids;
  std::vector<std::string> surfaces;
  std::vector<std::pair<int64_t, int64_t>> sentences;

  int64_t size() const { return static_cast<int64_t>(surfaces.size()); }
  bool empty() const { return surfaces.empty(); }
};

// Lowercases, splits on whitespace and punctuation boundaries (punctuation
// marks become their own tokens), and closes a sentence at . ? ! followed
// by whitespace or end of text.
TokenSeq tokenize(std::string_view text);

std::string detokenize(const std::vector<std::string>& surfaces);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kSep = 4;
  static constexpr int kReserved = 5;

  Vocabulary();

  // Corpus tokens ordered by descending frequency, ties lexicographic.
  static Vocabulary build(const std::vector<TokenSeq>& seqs);
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int encode(const std::string& surface) const;  // kUnk when absent
  const std::string& decode(int id) const;
  bool contains(const std::string& surface) const;
  int64_t size() const;  // including reserved ids

  // Corpus tokens only, id order (file format: one per line, line = id - 5).
  const std::vector<std::string>& tokens() const { return tokens_; }
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> id_to_surface_;  // reserved markers + tokens
  std::unordered_map<std::string, int> surface_to_id_;
};

struct Example {
  TokenSeq source;
  TokenSeq summary;
  std::optional<std::vector<int>> labels;  // 0/1 per source token
  std::optional<std::vector<int64_t>> oracle_sentences;
  std::optional<std::vector<int64_t>> salient_positions;  // synthetic truth
};

std::vector<Example> load_jsonl(const std::string& path);

// Dataset round trip: {"source":..., "summary":...} plus the synthetic
// ground-truth field when present. Loaders ignore unknown fields.
void save_jsonl(const std::string& path, const std::vector<Example>& examples);

// Encode ids in place against a vocabulary.
void encode_with(const Vocabulary& vocab, TokenSeq& seq);

// Clamp to the first max_len tokens, trimming sentence spans to match.
TokenSeq truncate(const TokenSeq& seq, int64_t max_len);

struct SynthParams {
  int64_t common_vocab = 35;
  int64_t salient_vocab = 15;
  int64_t common_per_example = 15;
  int64_t salient_per_example = 5;
  int64_t sentence_len = 6;  // content tokens per sentence before the period
};

// Synthetic summarization task: sources mix filler tokens with a handful of
// tokens from a disjoint salient sub-vocabulary; the summary is exactly the
// salient tokens in source order. salient_positions index the tokenized
// source (periods included), so pseudo labels can be checked exactly.
std::vector<Example> synth_corpus(uint64_t seed, int64_t n_examples,
                                  const SynthParams& params = {});

}  // namespace salsum
