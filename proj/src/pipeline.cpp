#include "salsum/pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace salsum {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.layers = layers;
  m.d_model = d_model;
  m.heads = heads;
  m.ffn_width = ffn_width;
  m.vocab_size = vocab_size;
  m.max_src_len = max_src_len;
  m.max_tgt_len = max_tgt_len;
  m.dropout = dropout;
  m.init_std = init_std;
  m.strategy = strategy;
  return m;
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "strategy=" << strategy_name(cfg.strategy) << '\n'
     << "layers=" << cfg.layers << '\n'
     << "d_model=" << cfg.d_model << '\n'
     << "heads=" << cfg.heads << '\n'
     << "ffn_width=" << cfg.ffn_width << '\n'
     << "vocab_size=" << cfg.vocab_size << '\n'
     << "max_src_len=" << cfg.max_src_len << '\n'
     << "max_tgt_len=" << cfg.max_tgt_len << '\n'
     << "dropout=" << fmt_double(cfg.dropout) << '\n'
     << "init_std=" << fmt_double(cfg.init_std) << '\n'
     << "lr=" << fmt_double(cfg.lr) << '\n'
     << "warmup=" << cfg.warmup << '\n'
     << "steps=" << cfg.steps << '\n'
     << "batch_size=" << cfg.batch_size << '\n'
     << "ext_lr=" << fmt_double(cfg.ext_lr) << '\n'
     << "ext_steps=" << cfg.ext_steps << '\n'
     << "ext_batch_size=" << cfg.ext_batch_size << '\n'
     << "seed=" << cfg.seed << '\n'
     << "cit_k=" << cfg.cit_k << '\n'
     << "seg_p=" << cfg.seg_p << '\n'
     << "oracle_max_sentences=" << cfg.oracle_max_sentences << '\n'
     << "filter_stopwords=" << (cfg.filter_stopwords ? 1 : 0) << '\n'
     << "dedup_tokens=" << (cfg.dedup_tokens ? 1 : 0) << '\n'
     << "step=" << cfg.step << '\n'
     << "ext_done=" << (cfg.ext_done ? 1 : 0) << '\n';
  return os.str();
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected key=value, got '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    auto as_i64 = [&] { return static_cast<int64_t>(std::stoll(value)); };
    auto as_f64 = [&] { return std::stod(value); };
    if (key == "strategy") cfg.strategy = parse_strategy(value);
    else if (key == "layers") cfg.layers = as_i64();
    else if (key == "d_model") cfg.d_model = as_i64();
    else if (key == "heads") cfg.heads = as_i64();
    else if (key == "ffn_width") cfg.ffn_width = as_i64();
    else if (key == "vocab_size") cfg.vocab_size = as_i64();
    else if (key == "max_src_len") cfg.max_src_len = as_i64();
    else if (key == "max_tgt_len") cfg.max_tgt_len = as_i64();
    else if (key == "dropout") cfg.dropout = as_f64();
    else if (key == "init_std") cfg.init_std = as_f64();
    else if (key == "lr") cfg.lr = as_f64();
    else if (key == "warmup") cfg.warmup = as_i64();
    else if (key == "steps") cfg.steps = as_i64();
    else if (key == "batch_size") cfg.batch_size = as_i64();
    else if (key == "ext_lr") cfg.ext_lr = as_f64();
    else if (key == "ext_steps") cfg.ext_steps = as_i64();
    else if (key == "ext_batch_size") cfg.ext_batch_size = as_i64();
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(std::stoull(value));
    else if (key == "cit_k") cfg.cit_k = as_i64();
    else if (key == "seg_p") cfg.seg_p = as_i64();
    else if (key == "oracle_max_sentences") cfg.oracle_max_sentences = as_i64();
    else if (key == "filter_stopwords") cfg.filter_stopwords = value != "0";
    else if (key == "dedup_tokens") cfg.dedup_tokens = value != "0";
    else if (key == "step") cfg.step = as_i64();
    else if (key == "ext_done") cfg.ext_done = value != "0";
    else
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": unknown key '" + key + "'");
  }
  return cfg;
}

void attach_labels(std::vector<Example>& examples,
                   const std::string& labels_path) {
  std::ifstream in(labels_path);
  if (!in) throw std::runtime_error("labels: cannot read " + labels_path);
  std::string line;
  int64_t line_no = 0;
  for (auto& ex : examples) {
    if (!std::getline(in, line))
      throw std::runtime_error("labels: " + labels_path + " has only " +
                               std::to_string(line_no) + " lines for " +
                               std::to_string(examples.size()) + " examples");
    ++line_no;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("labels line " + std::to_string(line_no) +
                               ": bad JSON: " + e.what());
    }
    if (!j.contains("labels"))
      throw std::runtime_error("labels line " + std::to_string(line_no) +
                               ": missing \"labels\" field");
    ex.labels = j.at("labels").get<std::vector<int>>();
    if (static_cast<int64_t>(ex.labels->size()) != ex.source.size())
      throw std::runtime_error(
          "labels line " + std::to_string(line_no) + ": " +
          std::to_string(ex.labels->size()) + " labels for " +
          std::to_string(ex.source.size()) + " source tokens");
    if (j.contains("oracle_sentences"))
      ex.oracle_sentences =
          j.at("oracle_sentences").get<std::vector<int64_t>>();
  }
  if (std::getline(in, line) && !line.empty())
    throw std::runtime_error("labels: " + labels_path +
                             " has more lines than the dataset");
}

MakeLabelsResult run_make_labels(const std::string& data_path,
                                 const std::string& out_path,
                                 int64_t oracle_max_sentences, int jobs) {
  auto examples = load_jsonl(data_path);
  if (examples.empty()) throw std::runtime_error("make-labels: empty dataset");
  const int64_t n = static_cast<int64_t>(examples.size());
  std::vector<std::string> lines(n);
  std::vector<int64_t> sizes(n);
#pragma omp parallel for schedule(dynamic) num_threads(jobs > 0 ? jobs : 1)
  for (int64_t i = 0; i < n; ++i) {
    const auto& ex = examples[i];
    auto pl = pseudo_labels(ex.source, ex.summary);
    auto oracle = oracle_sentences(ex.source, ex.summary,
                                   oracle_max_sentences);
    sizes[i] = static_cast<int64_t>(oracle.size());
    nlohmann::json j;
    j["labels"] = pl.labels;
    j["oracle_sentences"] = oracle;
    lines[i] = j.dump();
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("make-labels: cannot write " + out_path);
  for (const auto& l : lines) out << l << '\n';

  std::vector<std::vector<int64_t>> dummy(n);
  for (int64_t i = 0; i < n; ++i) dummy[i].resize(sizes[i]);
  MakeLabelsResult result;
  result.examples = n;
  result.average_oracle_p = average_oracle_size(dummy);
  return result;
}

namespace {

std::vector<NamedParam<float>> prefixed_params(
    const std::string& prefix, const ParamStore<float>& store) {
  std::vector<NamedParam<float>> out;
  for (const auto& p : store.params())
    out.push_back({prefix + p.name, p.tensor});
  return out;
}

Checkpoint build_checkpoint(const RunConfig& cfg,
                            const SummarizationSystem<float>& system,
                            const AdamOptimizer<float>* opt) {
  Checkpoint ckpt;
  ckpt.config_text = serialize_run_config(cfg);
  ckpt.vocab_tokens = system.vocab().tokens();
  for (const auto& p : system.named_params())
    ckpt.records.emplace_back(p.name,
                              TensorBlob{p.tensor.shape(), p.tensor.value()});
  if (opt) {
    for (size_t i = 0; i < opt->params().size(); ++i) {
      const auto& name = opt->params()[i].name;
      const auto& shape = opt->params()[i].tensor.shape();
      ckpt.records.emplace_back("adam.m." + name,
                                TensorBlob{shape, opt->slots()[i].m});
      ckpt.records.emplace_back("adam.v." + name,
                                TensorBlob{shape, opt->slots()[i].v});
    }
  }
  return ckpt;
}

void restore_adam(AdamOptimizer<float>& opt, const Checkpoint& ckpt) {
  for (size_t i = 0; i < opt.params().size(); ++i) {
    const auto& name = opt.params()[i].name;
    const TensorBlob* m = ckpt.find("adam.m." + name);
    const TensorBlob* v = ckpt.find("adam.v." + name);
    if (!m || !v)
      throw std::runtime_error("checkpoint: missing optimizer state for " +
                               name);
    opt.slots()[i].m = m->data;
    opt.slots()[i].v = v->data;
  }
}

void write_loss_line(std::ofstream& log, const char* phase, int64_t step,
                     const LossReport& report) {
  nlohmann::json j;
  j["phase"] = phase;
  j["step"] = step;
  j["L_sum"] = report.l_sum;
  if (report.l_sal) j["L_sal"] = *report.l_sal;
  j["L_abs"] = report.l_abs;
  log << j.dump() << '\n';
}

}  // namespace

void restore_params(SummarizationSystem<float>& system,
                    const Checkpoint& ckpt) {
  auto expected = system.named_params();
  std::unordered_map<std::string, const TensorBlob*> by_name;
  for (const auto& [name, blob] : ckpt.records) by_name.emplace(name, &blob);

  for (auto& p : expected) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: missing parameter " + p.name);
    if (it->second->shape != p.tensor.shape())
      throw std::runtime_error("checkpoint: parameter " + p.name +
                               " has shape " + shape_str(it->second->shape) +
                               ", expected " + shape_str(p.tensor.shape()));
    p.tensor.raw_value() = it->second->data;
    by_name.erase(it);
  }
  for (const auto& [name, blob] : by_name)
    if (name.rfind("adam.", 0) != 0)
      throw std::runtime_error("checkpoint: unexpected parameter record " +
                               name);
}

TrainResult run_train(RunConfig cfg, std::ostream& info) {
  if (cfg.data_path.empty())
    throw std::invalid_argument("train: a dataset path is required");
  if (cfg.out_path.empty())
    throw std::invalid_argument("train: an output checkpoint path is required");
  const auto& tr = strategy_traits(cfg.strategy);

  auto examples = load_jsonl(cfg.data_path);
  if (examples.empty()) throw std::runtime_error("train: empty dataset");

  const bool needs_labels = tr.abs_includes_sal || tr.uses_extractor;
  if (needs_labels) {
    if (cfg.labels_path.empty())
      throw std::invalid_argument(
          std::string("strategy ") + tr.name +
          " requires a labels file; run `salsum make-labels` and pass it "
          "with --labels");
    attach_labels(examples, cfg.labels_path);
  }

  std::vector<TokenSeq> all_text;
  for (const auto& ex : examples) {
    all_text.push_back(ex.source);
    all_text.push_back(ex.summary);
  }
  Vocabulary vocab = Vocabulary::build(all_text);
  for (auto& ex : examples) {
    encode_with(vocab, ex.source);
    encode_with(vocab, ex.summary);
  }
  cfg.vocab_size = vocab.size();

  if (cfg.cit_k == 0) cfg.cit_k = default_cit_k(examples);
  if (cfg.strategy == Strategy::SEG && cfg.seg_p == 0) {
    std::vector<std::vector<int64_t>> oracles;
    for (const auto& ex : examples)
      oracles.push_back(ex.oracle_sentences.value_or(std::vector<int64_t>{}));
    cfg.seg_p = average_oracle_size(oracles);
  }
  if (cfg.seg_p == 0) cfg.seg_p = 1;

  SummarizationSystem<float> system(cfg.model_config(), vocab, cfg.seed);
  system.set_cit_k(cfg.cit_k);
  system.set_seg_p(cfg.seg_p);
  system.set_filter({cfg.filter_stopwords, cfg.dedup_tokens});

  AdamHyper hyper;
  hyper.lr = cfg.lr;
  hyper.warmup_steps = cfg.warmup;
  AdamOptimizer<float> opt(prefixed_params("seq2seq.", system.seq2seq().params()),
                           hyper);

  int64_t start_step = 0;
  if (!cfg.resume_from.empty()) {
    auto ckpt = load_checkpoint(cfg.resume_from);
    RunConfig old = parse_run_config(ckpt.config_text);
    if (old.strategy != cfg.strategy || old.d_model != cfg.d_model ||
        old.layers != cfg.layers || old.heads != cfg.heads ||
        old.vocab_size != cfg.vocab_size || old.seed != cfg.seed)
      throw std::runtime_error(
          "resume: checkpoint configuration does not match this run");
    restore_params(system, ckpt);
    restore_adam(opt, ckpt);
    opt.set_steps_taken(old.step);
    start_step = old.step;
    cfg.ext_done = old.ext_done;
    cfg.cit_k = old.cit_k;
    cfg.seg_p = old.seg_p;
    system.set_cit_k(cfg.cit_k);
    system.set_seg_p(cfg.seg_p);
  }

  TrainResult result;
  result.checkpoint_path = cfg.out_path;
  result.loss_log_path = cfg.loss_log_path.empty()
                             ? cfg.out_path + ".loss.jsonl"
                             : cfg.loss_log_path;
  result.cit_k = cfg.cit_k;
  result.seg_p = cfg.seg_p;
  std::ofstream log(result.loss_log_path);
  if (!log)
    throw std::runtime_error("train: cannot write " + result.loss_log_path);

  // Phase 1: supervised extractor (L_ext = L_sal).
  std::vector<std::vector<int>> ext_inputs;
  std::vector<std::vector<int>> ext_labels;
  if (tr.uses_extractor) {
    for (const auto& ex : examples) {
      TokenSeq x = truncate(ex.source, cfg.max_src_len);
      std::vector<int> lab(ex.labels->begin(),
                           ex.labels->begin() +
                               std::min<int64_t>(x.size(), ex.labels->size()));
      lab.resize(x.size(), 0);
      ext_inputs.push_back(x.ids);
      ext_labels.push_back(std::move(lab));
    }
  }
  if (tr.uses_extractor && !cfg.ext_done) {
    AdamHyper ext_hyper;
    ext_hyper.lr = cfg.ext_lr;
    ext_hyper.warmup_steps = cfg.warmup;
    AdamOptimizer<float> ext_opt(
        prefixed_params("extractor.", system.extractor().params()), ext_hyper);
    const int64_t n = static_cast<int64_t>(ext_inputs.size());
    for (int64_t step = 1; step <= cfg.ext_steps; ++step) {
      auto idx = batch_indices(derive_seed(cfg.seed, "ext"), step,
                               cfg.ext_batch_size, n);
      std::vector<std::pair<const std::vector<int>*, const std::vector<int>*>>
          batch;
      for (int64_t i : idx) batch.emplace_back(&ext_inputs[i], &ext_labels[i]);
      const double l_sal = extractor_train_step(system.extractor(), batch,
                                                ext_opt);
      nlohmann::json j;
      j["phase"] = "extractor";
      j["step"] = step;
      j["L_sal"] = l_sal;
      log << j.dump() << '\n';
    }
    cfg.ext_done = true;
  }
  if (tr.uses_extractor) {
    std::vector<std::pair<const std::vector<int>*, const std::vector<int>*>>
        eval_set;
    for (size_t i = 0; i < ext_inputs.size(); ++i)
      eval_set.emplace_back(&ext_inputs[i], &ext_labels[i]);
    result.extractor_f1 = extractor_token_f1(system.extractor(), eval_set);
    info << "extractor token F1 on training labels: " << *result.extractor_f1
         << "\n";
  }

  // Strategy-specific input construction happens once the extractor is
  // frozen, so CIT's C-parts are stable for the whole seq-to-seq phase.
  std::vector<PreparedExample> prepared;
  prepared.reserve(examples.size());
  for (const auto& ex : examples)
    prepared.push_back(system.prepare_train_example(ex));

  // Phase 2: seq-to-seq (L_abs).
  const int64_t n = static_cast<int64_t>(prepared.size());
  for (int64_t step = start_step + 1; step <= cfg.steps; ++step) {
    auto idx = batch_indices(derive_seed(cfg.seed, "seq2seq"), step,
                             cfg.batch_size, n);
    std::vector<const PreparedExample*> batch;
    for (int64_t i : idx) batch.push_back(&prepared[i]);
    std::mt19937_64 drop_rng(
        derive_seed(cfg.seed, "drop/" + std::to_string(step)));
    FwdCtx ctx{true, &drop_rng};
    auto report = system.train_step(batch, opt, ctx);
    write_loss_line(log, "seq2seq", step, report);
    result.final_l_abs = report.l_abs;
    if (cfg.save_every > 0 && step % cfg.save_every == 0) {
      RunConfig snapshot = cfg;
      snapshot.step = step;
      save_checkpoint(cfg.out_path, build_checkpoint(snapshot, system, &opt));
    }
  }

  cfg.step = cfg.steps;
  save_checkpoint(cfg.out_path, build_checkpoint(cfg, system, &opt));
  if (!cfg.vocab_out.empty()) vocab.save(cfg.vocab_out);
  log.close();
  info << "checkpoint written to " << cfg.out_path << "\n";
  return result;
}

LoadedSystem load_system(const std::string& checkpoint_path) {
  auto ckpt = load_checkpoint(checkpoint_path);
  LoadedSystem out;
  out.cfg = parse_run_config(ckpt.config_text);
  Vocabulary vocab = Vocabulary::from_tokens(ckpt.vocab_tokens);
  if (vocab.size() != out.cfg.vocab_size)
    throw std::runtime_error(
        "checkpoint: vocabulary size disagrees with its config");
  out.system = std::make_unique<SummarizationSystem<float>>(
      out.cfg.model_config(), vocab, out.cfg.seed);
  out.system->set_cit_k(out.cfg.cit_k);
  out.system->set_seg_p(out.cfg.seg_p);
  out.system->set_filter({out.cfg.filter_stopwords, out.cfg.dedup_tokens});
  restore_params(*out.system, ckpt);
  return out;
}

int64_t run_generate(const std::string& checkpoint_path,
                     const std::string& data_path, const std::string& out_path,
                     int jobs) {
  auto loaded = load_system(checkpoint_path);
  auto examples = load_jsonl(data_path);
  const int64_t n = static_cast<int64_t>(examples.size());
  std::vector<std::string> lines(n);
#pragma omp parallel for schedule(dynamic) num_threads(jobs > 0 ? jobs : 1)
  for (int64_t i = 0; i < n; ++i) {
    TokenSeq src = examples[i].source;
    encode_with(loaded.system->vocab(), src);
    auto gen = loaded.system->generate(src);
    nlohmann::json j;
    j["summary"] = detokenize(gen.summary.surfaces);
    if (gen.selected_tokens)
      j["selected_tokens"] = gen.selected_tokens->surfaces;
    lines[i] = j.dump();
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("generate: cannot write " + out_path);
  for (const auto& l : lines) out << l << '\n';
  return n;
}

CorpusRouge run_evaluate(const std::string& hyp_path,
                         const std::string& ref_path, int jobs) {
  std::ifstream hyp_in(hyp_path);
  if (!hyp_in) throw std::runtime_error("evaluate: cannot read " + hyp_path);
  std::vector<std::vector<std::string>> hyps;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(hyp_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("hypotheses line " + std::to_string(line_no) +
                               ": bad JSON: " + e.what());
    }
    if (!j.contains("summary"))
      throw std::runtime_error("hypotheses line " + std::to_string(line_no) +
                               ": missing \"summary\" field");
    hyps.push_back(tokenize(j.at("summary").get<std::string>()).surfaces);
  }
  auto refs = load_jsonl(ref_path);
  if (hyps.size() != refs.size())
    throw std::runtime_error(
        "evaluate: " + std::to_string(hyps.size()) + " hypotheses vs " +
        std::to_string(refs.size()) + " references");
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>
      pairs;
  pairs.reserve(hyps.size());
  for (size_t i = 0; i < hyps.size(); ++i)
    pairs.emplace_back(hyps[i], refs[i].summary.surfaces);
  return corpus_rouge(pairs, jobs);
}

int64_t run_extract(const std::string& checkpoint_path,
                    const std::string& data_path, const std::string& out_path,
                    int64_t k_override, int jobs) {
  auto loaded = load_system(checkpoint_path);
  const auto& tr = loaded.system->traits();
  if (!tr.uses_extractor && !tr.shared_head)
    throw std::invalid_argument(
        std::string("extract: strategy ") + tr.name +
        " has no saliency model to score tokens with");
  const int64_t k = k_override > 0 ? k_override : loaded.cfg.cit_k;
  auto examples = load_jsonl(data_path);
  const int64_t n = static_cast<int64_t>(examples.size());
  std::vector<std::string> lines(n);
#pragma omp parallel for schedule(dynamic) num_threads(jobs > 0 ? jobs : 1)
  for (int64_t i = 0; i < n; ++i) {
    TokenSeq src = truncate(examples[i].source, loaded.cfg.max_src_len);
    encode_with(loaded.system->vocab(), src);
    SaliencyScores scores;
    if (tr.uses_extractor) {
      scores = loaded.system->extractor_scores(src.ids);
    } else {
      auto enc = loaded.system->seq2seq().encode(src.ids);
      scores = materialize_scores(loaded.system->seq2seq().saliency_scores(enc),
                                  SaliencyScores::Source::SharedEncoder);
    }
    auto selected =
        top_k_indices(src, scores, k, loaded.system->filter());
    nlohmann::json j;
    j["tokens"] = src.surfaces;
    j["scores"] = scores.values;
    j["selected"] = selected;
    lines[i] = j.dump();
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("extract: cannot write " + out_path);
  for (const auto& l : lines) out << l << '\n';
  return n;
}

}  // namespace salsum
