#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "salsum/cli.hpp"
#include "salsum/oracles.hpp"
#include "salsum/pipeline.hpp"

using namespace salsum;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "salsum_cli_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

int cli(std::initializer_list<const char*> args) {
  std::vector<const char*> argv = {"salsum"};
  argv.insert(argv.end(), args.begin(), args.end());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(cli({"no-such-command"}) == 2);
  CHECK(cli({"make-labels"}) == 2);  // missing required flags
  CHECK(cli({"train", "--strategy", "bogus", "--data", "x", "--out", "y"}) ==
        2);
}

TEST_CASE("end-to-end: labels, train, generate, evaluate, extract") {
  TempDir dir;
  const auto data = dir.file("train.jsonl");
  const auto labels = dir.file("train.labels.jsonl");
  const auto ckpt = dir.file("model.ckpt");
  const auto gen = dir.file("out.jsonl");

  save_jsonl(data, synth_corpus(31, 40));

  CHECK(cli({"make-labels", "--data", data.c_str(), "--out", labels.c_str(),
             "--jobs", "2"}) == 0);
  auto label_lines = read_jsonl(labels);
  REQUIRE(label_lines.size() == 40);
  CHECK(label_lines[0].contains("labels"));
  CHECK(label_lines[0].contains("oracle_sentences"));

  // a short CIT run end to end
  CHECK(cli({"train", "--strategy", "cit", "--data", data.c_str(),
             "--labels", labels.c_str(), "--out", ckpt.c_str(), "--steps",
             "30", "--ext-steps", "40", "--batch-size", "4", "--d-model",
             "16", "--layers", "1", "--heads", "2", "--k", "5", "--seed",
             "3"}) == 0);
  CHECK(fs::exists(ckpt));
  auto loss_lines = read_jsonl(ckpt + ".loss.jsonl");
  // 40 extractor lines then 30 seq2seq lines
  REQUIRE(loss_lines.size() == 70);
  CHECK(loss_lines[0]["phase"] == "extractor");
  CHECK(loss_lines[0].contains("L_sal"));
  CHECK(loss_lines[69]["phase"] == "seq2seq");
  CHECK(loss_lines[69].contains("L_sum"));
  CHECK(loss_lines[69].contains("L_abs"));
  CHECK_FALSE(loss_lines[69].contains("L_sal"));  // CIT: L_abs = L_sum

  CHECK(cli({"generate", "--checkpoint", ckpt.c_str(), "--data", data.c_str(),
             "--out", gen.c_str(), "--jobs", "2"}) == 0);
  auto gen_lines = read_jsonl(gen);
  REQUIRE(gen_lines.size() == 40);  // one summary per input line
  auto sources = load_jsonl(data);
  for (size_t i = 0; i < gen_lines.size(); ++i) {
    REQUIRE(gen_lines[i].contains("selected_tokens"));
    auto selected =
        gen_lines[i]["selected_tokens"].get<std::vector<std::string>>();
    CHECK(selected.size() == 5);
    CHECK(oracles::is_subsequence(selected, sources[i].source.surfaces));
  }

  CHECK(cli({"evaluate", "--hypotheses", gen.c_str(), "--references",
             data.c_str()}) == 0);

  const auto extract_out = dir.file("extract.jsonl");
  CHECK(cli({"extract", "--checkpoint", ckpt.c_str(), "--data", data.c_str(),
             "--out", extract_out.c_str()}) == 0);
  auto ext_lines = read_jsonl(extract_out);
  REQUIRE(ext_lines.size() == 40);
  for (const auto& line : ext_lines) {
    const auto tokens = line["tokens"].get<std::vector<std::string>>();
    const auto scores = line["scores"].get<std::vector<double>>();
    const auto selected = line["selected"].get<std::vector<int64_t>>();
    CHECK(tokens.size() == scores.size());
    CHECK(selected.size() == 5);
    for (int64_t idx : selected) CHECK(idx < int64_t(tokens.size()));
  }
}

TEST_CASE("cit training without labels is a usage error") {
  TempDir dir;
  const auto data = dir.file("train.jsonl");
  save_jsonl(data, synth_corpus(5, 8));
  CHECK(cli({"train", "--strategy", "cit", "--data", data.c_str(), "--out",
             dir.file("m.ckpt").c_str(), "--steps", "2"}) == 2);
}

TEST_CASE("same seed and config give byte-identical logs and checkpoints") {
  TempDir dir;
  const auto data = dir.file("train.jsonl");
  save_jsonl(data, synth_corpus(17, 24));
  auto run = [&](const std::string& tag) {
    const auto out = dir.file(tag + ".ckpt");
    REQUIRE(cli({"train", "--strategy", "finetune", "--data", data.c_str(),
                 "--out", out.c_str(), "--steps", "25", "--batch-size", "4",
                 "--d-model", "16", "--layers", "1", "--heads", "2", "--seed",
                 "11"}) == 0);
    return out;
  };
  auto a = run("a");
  auto b = run("b");
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a + ".loss.jsonl") == slurp(b + ".loss.jsonl"));
}

TEST_CASE("resume reproduces the uninterrupted run") {
  TempDir dir;
  const auto data = dir.file("train.jsonl");
  save_jsonl(data, synth_corpus(23, 24));
  std::vector<const char*> base = {
      "--strategy", "finetune", "--data", data.c_str(), "--batch-size", "4",
      "--d-model", "16", "--layers", "1", "--heads", "2", "--seed", "7"};

  const auto full = dir.file("full.ckpt");
  {
    std::vector<const char*> args = {"salsum", "train", "--out", full.c_str(),
                                     "--steps", "20"};
    args.insert(args.end(), base.begin(), base.end());
    REQUIRE(run_cli(int(args.size()), args.data()) == 0);
  }
  const auto part = dir.file("part.ckpt");
  {
    std::vector<const char*> args = {"salsum", "train", "--out", part.c_str(),
                                     "--steps", "12"};
    args.insert(args.end(), base.begin(), base.end());
    REQUIRE(run_cli(int(args.size()), args.data()) == 0);
  }
  const auto resumed = dir.file("resumed.ckpt");
  {
    std::vector<const char*> args = {"salsum",  "train",
                                     "--out",   resumed.c_str(),
                                     "--steps", "20",
                                     "--resume", part.c_str()};
    args.insert(args.end(), base.begin(), base.end());
    REQUIRE(run_cli(int(args.size()), args.data()) == 0);
  }
  auto full_lines = read_jsonl(full + ".loss.jsonl");
  auto resumed_lines = read_jsonl(resumed + ".loss.jsonl");
  REQUIRE(full_lines.size() == 20);
  REQUIRE(resumed_lines.size() == 8);  // steps 13..20
  CHECK(resumed_lines[0]["step"] == 13);
  const double l_full = full_lines[12]["L_abs"].get<double>();
  const double l_resumed = resumed_lines[0]["L_abs"].get<double>();
  CHECK(l_resumed == doctest::Approx(l_full).epsilon(1e-5));
}

TEST_CASE("mt training logs both loss components") {
  TempDir dir;
  const auto data = dir.file("train.jsonl");
  const auto labels = dir.file("labels.jsonl");
  save_jsonl(data, synth_corpus(41, 16));
  REQUIRE(run_make_labels(data, labels, 4, 1).examples == 16);

  RunConfig cfg;
  cfg.strategy = Strategy::MT;
  cfg.data_path = data;
  cfg.labels_path = labels;
  cfg.out_path = dir.file("mt.ckpt");
  cfg.steps = 10;
  cfg.batch_size = 4;
  cfg.d_model = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  std::ostringstream sink;
  auto result = run_train(cfg, sink);
  auto lines = read_jsonl(result.loss_log_path);
  REQUIRE(lines.size() == 10);
  for (const auto& line : lines) {
    CHECK(line.contains("L_sum"));
    CHECK(line.contains("L_sal"));
    CHECK(line.contains("L_abs"));
    // the additive identity holds exactly in the training precision
    const float sum = float(line["L_sum"].get<double>()) +
                      float(line["L_sal"].get<double>());
    CHECK(float(line["L_abs"].get<double>()) == sum);
  }
}

TEST_CASE("generate with an EOS-rigged checkpoint emits empty summaries") {
  TempDir dir;
  const auto data = dir.file("data.jsonl");
  save_jsonl(data, synth_corpus(51, 6));
  RunConfig cfg;
  cfg.strategy = Strategy::FineTune;
  cfg.data_path = data;
  cfg.out_path = dir.file("m.ckpt");
  cfg.steps = 1;
  cfg.batch_size = 2;
  cfg.d_model = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  std::ostringstream sink;
  run_train(cfg, sink);

  // rig the output bias toward EOS and write the checkpoint back
  auto ckpt = load_checkpoint(cfg.out_path);
  for (auto& [name, blob] : ckpt.records) {
    if (name == "seq2seq.out.w")
      std::fill(blob.data.begin(), blob.data.end(), 0.0f);
    if (name == "seq2seq.out.b") {
      std::fill(blob.data.begin(), blob.data.end(), 0.0f);
      blob.data[2] = 50.0f;  // EOS id
    }
  }
  save_checkpoint(cfg.out_path, ckpt);

  const auto gen = dir.file("gen.jsonl");
  REQUIRE(run_generate(cfg.out_path, data, gen, 1) == 6);
  for (const auto& line : read_jsonl(gen))
    CHECK(line["summary"].get<std::string>().empty());
}

TEST_CASE("evaluate rejects mismatched file lengths") {
  TempDir dir;
  const auto refs = dir.file("refs.jsonl");
  save_jsonl(refs, synth_corpus(61, 4));
  const auto hyps = dir.file("hyps.jsonl");
  {
    std::ofstream out(hyps);
    out << R"({"summary": "k00 k01"})" << "\n";
  }
  CHECK_THROWS_AS(run_evaluate(hyps, refs, 1), std::runtime_error);
}
