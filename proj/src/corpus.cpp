#include "salsum/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace salsum {

namespace {

bool is_word_char(unsigned char c) {
  // Bytes >= 0x80 (UTF-8 lead/continuation) are treated as letters.
  return std::isalnum(c) || c == '\'' || c >= 0x80;
}

bool is_sentence_end(char c) { return c == '.' || c == '?' || c == '!'; }

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq seq;
  std::string current;
  int64_t sent_start = 0;
  auto flush_token = [&] {
    if (!current.empty()) {
      seq.surfaces.push_back(current);
      current.clear();
    }
  };
  auto close_sentence = [&] {
    const int64_t end = seq.size();
    if (end > sent_start) {
      seq.sentences.emplace_back(sent_start, end);
      sent_start = end;
    }
  };
  for (size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush_token();
    } else if (is_word_char(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush_token();
      seq.surfaces.push_back(std::string(1, static_cast<char>(c)));
      const bool at_end = i + 1 == text.size();
      if (is_sentence_end(static_cast<char>(c)) &&
          (at_end || std::isspace(static_cast<unsigned char>(text[i + 1]))))
        close_sentence();
    }
  }
  flush_token();
  close_sentence();
  return seq;
}

std::string detokenize(const std::vector<std::string>& surfaces) {
  std::string out;
  for (size_t i = 0; i < surfaces.size(); ++i) {
    if (i) out.push_back(' ');
    out += surfaces[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  id_to_surface_ = {"<pad>", "<bos>", "<eos>", "<unk>", "<sep>"};
}

Vocabulary Vocabulary::build(const std::vector<TokenSeq>& seqs) {
  std::map<std::string, int64_t> freq;
  for (const auto& s : seqs)
    for (const auto& t : s.surfaces) ++freq[t];
  std::vector<std::pair<std::string, int64_t>> entries(freq.begin(),
                                                       freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(entries.size());
  for (auto& [tok, _] : entries) tokens.push_back(tok);
  return from_tokens(tokens);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  for (const auto& t : tokens) {
    if (v.surface_to_id_.count(t))
      throw std::invalid_argument("vocabulary: duplicate token '" + t + "'");
    const int id = static_cast<int>(v.id_to_surface_.size());
    v.surface_to_id_.emplace(t, id);
    v.id_to_surface_.push_back(t);
    v.tokens_.push_back(t);
  }
  return v;
}

int Vocabulary::encode(const std::string& surface) const {
  auto it = surface_to_id_.find(surface);
  return it == surface_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::decode(int id) const {
  if (id < 0 || id >= static_cast<int>(id_to_surface_.size()))
    throw std::invalid_argument("vocabulary: id " + std::to_string(id) +
                                " out of range");
  return id_to_surface_[id];
}

bool Vocabulary::contains(const std::string& surface) const {
  return surface_to_id_.count(surface) != 0;
}

int64_t Vocabulary::size() const {
  return static_cast<int64_t>(id_to_surface_.size());
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("vocabulary: cannot write " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("vocabulary: cannot read " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) tokens.push_back(line);
  return from_tokens(tokens);
}

void encode_with(const Vocabulary& vocab, TokenSeq& seq) {
  seq.ids.resize(seq.surfaces.size());
  for (size_t i = 0; i < seq.surfaces.size(); ++i)
    seq.ids[i] = vocab.encode(seq.surfaces[i]);
}

TokenSeq truncate(const TokenSeq& seq, int64_t max_len) {
  if (seq.size() <= max_len) return seq;
  TokenSeq out;
  out.surfaces.assign(seq.surfaces.begin(), seq.surfaces.begin() + max_len);
  if (!seq.ids.empty())
    out.ids.assign(seq.ids.begin(), seq.ids.begin() + max_len);
  for (auto [s, e] : seq.sentences) {
    if (s >= max_len) break;
    out.sentences.emplace_back(s, std::min(e, max_len));
  }
  return out;
}

namespace {

Example parse_example(const nlohmann::json& j, int64_t line_no) {
  if (!j.contains("source"))
    throw std::runtime_error("dataset line " + std::to_string(line_no) +
                             ": missing \"source\" field");
  if (!j.contains("summary"))
    throw std::runtime_error("dataset line " + std::to_string(line_no) +
                             ": missing \"summary\" field");
  Example ex;
  ex.source = tokenize(j.at("source").get<std::string>());
  ex.summary = tokenize(j.at("summary").get<std::string>());
  if (j.contains("salient_positions"))
    ex.salient_positions =
        j.at("salient_positions").get<std::vector<int64_t>>();
  return ex;
}

}  // namespace

std::vector<Example> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset: cannot read " + path);
  std::vector<Example> out;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": bad JSON: " + e.what());
    }
    out.push_back(parse_example(j, line_no));
  }
  return out;
}

void save_jsonl(const std::string& path,
                const std::vector<Example>& examples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dataset: cannot write " + path);
  for (const auto& ex : examples) {
    nlohmann::json j;
    j["source"] = detokenize(ex.source.surfaces);
    j["summary"] = detokenize(ex.summary.surfaces);
    if (ex.salient_positions) j["salient_positions"] = *ex.salient_positions;
    out << j.dump() << '\n';
  }
}

std::vector<Example> synth_corpus(uint64_t seed, int64_t n_examples,
                                  const SynthParams& params) {
  if (params.salient_per_example > params.salient_vocab)
    throw std::invalid_argument("synth_corpus: more salient slots than vocab");
  std::mt19937_64 rng(seed);
  auto common_tok = [](int64_t i) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "w%02d", static_cast<int>(i));
    return std::string(buf);
  };
  auto salient_tok = [](int64_t i) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "k%02d", static_cast<int>(i));
    return std::string(buf);
  };

  std::vector<Example> out;
  out.reserve(n_examples);
  for (int64_t n = 0; n < n_examples; ++n) {
    const int64_t total =
        params.common_per_example + params.salient_per_example;
    // Distinct salient tokens at distinct positions; filler drawn with
    // repetition from the common vocabulary.
    std::vector<int64_t> salient_ids(params.salient_vocab);
    for (int64_t i = 0; i < params.salient_vocab; ++i) salient_ids[i] = i;
    std::shuffle(salient_ids.begin(), salient_ids.end(), rng);
    salient_ids.resize(params.salient_per_example);

    std::vector<int64_t> positions(total);
    for (int64_t i = 0; i < total; ++i) positions[i] = i;
    std::shuffle(positions.begin(), positions.end(), rng);
    positions.resize(params.salient_per_example);
    std::sort(positions.begin(), positions.end());

    std::vector<std::string> content(total);
    std::uniform_int_distribution<int64_t> common_dist(
        0, params.common_vocab - 1);
    for (int64_t i = 0; i < total; ++i)
      content[i] = common_tok(common_dist(rng));
    std::vector<std::string> summary;
    for (int64_t i = 0; i < params.salient_per_example; ++i) {
      content[positions[i]] = salient_tok(salient_ids[i]);
      summary.push_back(content[positions[i]]);
    }

    // A period closes every sentence_len content tokens; periods shift the
    // token positions, so the planted indices are tracked while rendering.
    std::string text;
    std::vector<int64_t> planted;
    int64_t emitted = 0;
    size_t next_salient = 0;
    for (int64_t i = 0; i < total; ++i) {
      if (!text.empty()) text.push_back(' ');
      if (next_salient < positions.size() && positions[next_salient] == i) {
        planted.push_back(emitted);
        ++next_salient;
      }
      text += content[i];
      ++emitted;
      if ((i + 1) % params.sentence_len == 0 || i + 1 == total) {
        text += " .";
        ++emitted;
      }
    }

    Example ex;
    ex.source = tokenize(text);
    ex.summary = tokenize(detokenize(summary));
    ex.salient_positions = planted;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace salsum
