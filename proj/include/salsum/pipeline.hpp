#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "salsum/checkpoint.hpp"
#include "salsum/metrics.hpp"
#include "salsum/strategies.hpp"

namespace salsum {

// Everything a reproducible run needs. The resolved config is captured
// verbatim (key=value lines) into every checkpoint header.
struct RunConfig {
  Strategy strategy = Strategy::FineTune;

  // model
  int64_t layers = 2;
  int64_t d_model = 64;
  int64_t heads = 4;
  int64_t ffn_width = 0;
  int64_t vocab_size = 0;  // resolved from the vocabulary
  int64_t max_src_len = 64;
  int64_t max_tgt_len = 16;
  double dropout = 0.0;
  double init_std = 0.08;

  // optimization
  double lr = 3e-4;
  int64_t warmup = 100;
  int64_t steps = 500;
  int64_t batch_size = 8;
  double ext_lr = 1e-3;
  int64_t ext_steps = 300;
  int64_t ext_batch_size = 16;
  uint64_t seed = 1;

  // strategy knobs (0 = derive from data)
  int64_t cit_k = 0;
  int64_t seg_p = 0;
  int64_t oracle_max_sentences = 4;
  bool filter_stopwords = false;
  bool dedup_tokens = false;

  // resolved run state
  int64_t step = 0;      // seq-to-seq steps already taken
  bool ext_done = false;  // extractor phase completed

  // paths and runtime controls (not part of the serialized header)
  std::string data_path;
  std::string labels_path;
  std::string out_path;       // checkpoint
  std::string loss_log_path;  // defaults to out_path + ".loss.jsonl"
  std::string vocab_out;
  std::string resume_from;
  int64_t save_every = 0;
  int jobs = 1;

  ModelConfig model_config() const;
};

std::string serialize_run_config(const RunConfig& cfg);
RunConfig parse_run_config(const std::string& text);

// Labels sidecar: one {"labels":[...], "oracle_sentences":[...]} per dataset
// line, attached positionally.
void attach_labels(std::vector<Example>& examples,
                   const std::string& labels_path);

struct MakeLabelsResult {
  int64_t examples = 0;
  int64_t average_oracle_p = 1;
};
MakeLabelsResult run_make_labels(const std::string& data_path,
                                 const std::string& out_path,
                                 int64_t oracle_max_sentences, int jobs);

struct TrainResult {
  std::string checkpoint_path;
  std::string loss_log_path;
  double final_l_abs = 0;
  std::optional<double> extractor_f1;  // on the training labels
  int64_t cit_k = 0;
  int64_t seg_p = 0;
};
TrainResult run_train(RunConfig cfg, std::ostream& info);

// A trained system restored from a checkpoint, ready for inference.
struct LoadedSystem {
  RunConfig cfg;
  std::unique_ptr<SummarizationSystem<float>> system;
};
LoadedSystem load_system(const std::string& checkpoint_path);

// Builds a system and copies matching records in; every expected parameter
// must be present with the right shape, and no unknown parameter records
// are tolerated. Returns leftover optimizer records ("adam.*").
void restore_params(SummarizationSystem<float>& system, const Checkpoint& ckpt);

int64_t run_generate(const std::string& checkpoint_path,
                     const std::string& data_path, const std::string& out_path,
                     int jobs);

CorpusRouge run_evaluate(const std::string& hyp_path,
                         const std::string& ref_path, int jobs);

int64_t run_extract(const std::string& checkpoint_path,
                    const std::string& data_path, const std::string& out_path,
                    int64_t k_override, int jobs);

}  // namespace salsum
