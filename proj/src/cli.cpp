#include "salsum/cli.hpp"

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "salsum/pipeline.hpp"
#include "salsum/verify.hpp"

namespace salsum {

namespace {

nlohmann::json rouge_json(const CorpusRouge& r) {
  auto one = [](const RougeScore& s) {
    return nlohmann::json{
        {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
  };
  return nlohmann::json{{"rouge1", one(r.rouge1)},
                        {"rouge2", one(r.rouge2)},
                        {"rougeL", one(r.rougeL)}};
}

void print_rouge_table(const CorpusRouge& r, std::ostream& os) {
  auto row = [&](const char* name, const RougeScore& s) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "  %-8s P %6.4f  R %6.4f  F1 %6.4f", name,
                  s.precision, s.recall, s.f1);
    os << buf << "\n";
  };
  os << "ROUGE (corpus mean)\n";
  row("rouge-1", r.rouge1);
  row("rouge-2", r.rouge2);
  row("rouge-L", r.rougeL);
}

struct CliState {
  int exit_code = 0;
};

void add_train(CLI::App& app, CliState& state) {
  auto* cmd = app.add_subcommand("train",
                                 "train an extractor (if the strategy uses "
                                 "one) and the seq-to-seq model");
  auto cfg = std::make_shared<RunConfig>();
  auto strategy_name_opt = std::make_shared<std::string>("finetune");
  cmd->set_config("--config", "", "key=value config file; flags override it");
  cmd->add_option("--strategy", *strategy_name_opt,
                  "finetune|mt|se|se-mt|sa|sa-mt|seg|cit|cit-se|cit-sa")
      ->envname("SSEQ_STRATEGY");
  cmd->add_option("--data", cfg->data_path, "training dataset (JSONL)")
      ->envname("SSEQ_DATA");
  cmd->add_option("--labels", cfg->labels_path,
                  "labels JSONL from make-labels");
  cmd->add_option("--out", cfg->out_path, "output checkpoint path")
      ->envname("SSEQ_OUT");
  cmd->add_option("--loss-log", cfg->loss_log_path,
                  "loss JSONL path (default <out>.loss.jsonl)");
  cmd->add_option("--vocab-out", cfg->vocab_out,
                  "also write the vocabulary as a text file");
  cmd->add_option("--resume", cfg->resume_from,
                  "resume the seq-to-seq phase from a checkpoint");
  cmd->add_option("--steps", cfg->steps, "seq-to-seq optimizer steps");
  cmd->add_option("--batch-size", cfg->batch_size, "examples per step");
  cmd->add_option("--lr", cfg->lr, "peak learning rate");
  cmd->add_option("--warmup", cfg->warmup, "linear warmup steps");
  cmd->add_option("--ext-steps", cfg->ext_steps, "extractor phase steps");
  cmd->add_option("--ext-batch-size", cfg->ext_batch_size,
                  "extractor batch size");
  cmd->add_option("--ext-lr", cfg->ext_lr, "extractor learning rate");
  cmd->add_option("--layers", cfg->layers, "encoder/decoder block count");
  cmd->add_option("--d-model", cfg->d_model, "model width");
  cmd->add_option("--heads", cfg->heads, "attention heads");
  cmd->add_option("--ffn-width", cfg->ffn_width,
                  "feed-forward width (0 = 4 * d-model)");
  cmd->add_option("--max-src-len", cfg->max_src_len, "source length cap");
  cmd->add_option("--max-tgt-len", cfg->max_tgt_len, "summary length cap");
  cmd->add_option("--dropout", cfg->dropout, "dropout rate");
  cmd->add_option("--init-std", cfg->init_std, "weight init scale");
  cmd->add_option("--seed", cfg->seed, "master seed")->envname("SSEQ_SEED");
  cmd->add_option("--k", cfg->cit_k,
                  "CIT: tokens to extract (0 = 30% of mean summary length)");
  cmd->add_option("--p", cfg->seg_p,
                  "SEG: sentences to keep at inference (0 = mean oracle size)");
  cmd->add_option("--oracle-max-sentences", cfg->oracle_max_sentences,
                  "cap for oracle sentence sets");
  cmd->add_flag("--filter-stopwords", cfg->filter_stopwords,
                "drop stop words from extracted token sets");
  cmd->add_flag("--dedup-tokens", cfg->dedup_tokens,
                "keep only the best-scoring occurrence of a surface form");
  cmd->add_option("--save-every", cfg->save_every,
                  "checkpoint every N steps (0 = final only)");
  cmd->add_option("--jobs", cfg->jobs, "worker threads for data-parallel "
                                       "phases")
      ->envname("SSEQ_JOBS");
  cmd->callback([cfg, strategy_name_opt, &state] {
    cfg->strategy = parse_strategy(*strategy_name_opt);
    auto result = run_train(*cfg, std::cerr);
    nlohmann::json j;
    j["checkpoint"] = result.checkpoint_path;
    j["loss_log"] = result.loss_log_path;
    j["final_L_abs"] = result.final_l_abs;
    if (result.extractor_f1) j["extractor_f1"] = *result.extractor_f1;
    j["cit_k"] = result.cit_k;
    j["seg_p"] = result.seg_p;
    std::cout << j.dump() << "\n";
    state.exit_code = 0;
  });
}

void add_make_labels(CLI::App& app, CliState& state) {
  auto* cmd = app.add_subcommand(
      "make-labels", "pseudo saliency labels and oracle sentence sets");
  auto data = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto max_sent = std::make_shared<int64_t>(4);
  auto jobs = std::make_shared<int>(1);
  cmd->add_option("--data", *data, "dataset JSONL")->required();
  cmd->add_option("--out", *out, "labels JSONL output")->required();
  cmd->add_option("--max-sentences", *max_sent, "oracle selection cap");
  cmd->add_option("--jobs", *jobs, "worker threads")->envname("SSEQ_JOBS");
  cmd->callback([=, &state] {
    auto result = run_make_labels(*data, *out, *max_sent, *jobs);
    std::cerr << "labeled " << result.examples << " examples; mean oracle size "
              << result.average_oracle_p << "\n";
    nlohmann::json j;
    j["examples"] = result.examples;
    j["average_oracle_p"] = result.average_oracle_p;
    std::cout << j.dump() << "\n";
    state.exit_code = 0;
  });
}

void add_generate(CLI::App& app, CliState& state) {
  auto* cmd = app.add_subcommand("generate", "greedy-decode summaries");
  auto ckpt = std::make_shared<std::string>();
  auto data = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto jobs = std::make_shared<int>(1);
  cmd->add_option("--checkpoint", *ckpt, "trained checkpoint")->required();
  cmd->add_option("--data", *data, "dataset JSONL")->required();
  cmd->add_option("--out", *out, "summaries JSONL output")->required();
  cmd->add_option("--jobs", *jobs, "worker threads")->envname("SSEQ_JOBS");
  cmd->callback([=, &state] {
    const int64_t n = run_generate(*ckpt, *data, *out, *jobs);
    std::cerr << "wrote " << n << " summaries to " << *out << "\n";
    nlohmann::json j;
    j["generated"] = n;
    j["out"] = *out;
    std::cout << j.dump() << "\n";
    state.exit_code = 0;
  });
}

void add_evaluate(CLI::App& app, CliState& state) {
  auto* cmd = app.add_subcommand("evaluate", "corpus ROUGE-1/2/L");
  auto hyp = std::make_shared<std::string>();
  auto ref = std::make_shared<std::string>();
  auto jobs = std::make_shared<int>(1);
  cmd->add_option("--hypotheses", *hyp, "summaries JSONL")->required();
  cmd->add_option("--references", *ref, "dataset JSONL with references")
      ->required();
  cmd->add_option("--jobs", *jobs, "worker threads")->envname("SSEQ_JOBS");
  cmd->callback([=, &state] {
    auto rouge = run_evaluate(*hyp, *ref, *jobs);
    print_rouge_table(rouge, std::cerr);
    std::cout << rouge_json(rouge).dump() << "\n";
    state.exit_code = 0;
  });
}

void add_extract(CLI::App& app, CliState& state) {
  auto* cmd = app.add_subcommand(
      "extract", "per-token saliency scores and top-k selections");
  auto ckpt = std::make_shared<std::string>();
  auto data = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto k = std::make_shared<int64_t>(0);
  auto jobs = std::make_shared<int>(1);
  cmd->add_option("--checkpoint", *ckpt, "trained checkpoint")->required();
  cmd->add_option("--data", *data, "dataset JSONL")->required();
  cmd->add_option("--out", *out, "extraction JSONL output")->required();
  cmd->add_option("--k", *k, "tokens to select (0 = checkpoint default)");
  cmd->add_option("--jobs", *jobs, "worker threads")->envname("SSEQ_JOBS");
  cmd->callback([=, &state] {
    const int64_t n = run_extract(*ckpt, *data, *out, *k, *jobs);
    std::cerr << "scored " << n << " examples into " << *out << "\n";
    nlohmann::json j;
    j["extracted"] = n;
    j["out"] = *out;
    std::cout << j.dump() << "\n";
    state.exit_code = 0;
  });
}

void add_verify(CLI::App& app, CliState& state) {
  auto* cmd = app.add_subcommand(
      "verify", "gradient checks, invariants, and oracle comparisons");
  auto opts = std::make_shared<VerifyOptions>();
  auto no_smoke = std::make_shared<bool>(false);
  cmd->add_option("--attention-configs", opts->attention_configs,
                  "random attention configurations");
  cmd->add_option("--oracle-cases", opts->oracle_cases,
                  "random oracle comparison cases");
  cmd->add_option("--seg-docs", opts->seg_docs, "documents for the greedy "
                                                "oracle comparison");
  cmd->add_option("--grad-coords", opts->grad_coords_per_param,
                  "sampled coordinates per parameter in full-model checks");
  cmd->add_flag("--no-smoke", *no_smoke, "skip the smoke training run");
  cmd->callback([=, &state] {
    opts->include_smoke = !*no_smoke;
    auto results = run_verification(*opts);
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& r : results) {
      std::fprintf(stderr, "[%s] %-40s %s\n", r.pass ? "PASS" : "FAIL",
                   r.name.c_str(), r.detail.c_str());
      checks.push_back(nlohmann::json{
          {"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
    }
    const bool ok = all_passed(results);
    nlohmann::json j;
    j["checks"] = checks;
    j["pass"] = ok;
    std::cout << j.dump() << "\n";
    state.exit_code = ok ? 0 : 1;
  });
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"salsum: saliency-guided abstractive summarization toolkit"};
  app.require_subcommand(1);
  CliState state;
  add_make_labels(app, state);
  add_train(app, state);
  add_generate(app, state);
  add_evaluate(app, state);
  add_extract(app, state);
  add_verify(app, state);
  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return state.exit_code;
}

}  // namespace salsum
