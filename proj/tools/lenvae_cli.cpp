// Command-line entry point: preprocess, train, summarize, evaluate, probe,
// gradcheck and toy-corpus.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lenvae/checkpoint.hpp"
#include "lenvae/eval.hpp"
#include "lenvae/inference.hpp"
#include "lenvae/probe.hpp"
#include "lenvae/run_config.hpp"
#include "lenvae/textpipe.hpp"
#include "lenvae/training.hpp"

namespace fs = std::filesystem;
using namespace lenvae;

namespace {

// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitMissingFile = 3;
constexpr int kExitIncompatible = 4;
constexpr int kExitCorrupt = 5;
constexpr int kExitGradCheck = 6;

class MissingFile : public Error {
 public:
  using Error::Error;
};

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw MissingFile("no such file: " + path.string());
}

struct GlobalOptions {
  std::string config_file;
  std::string preset = "desk";
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig config = RunConfig::preset(g.preset);
  if (!g.config_file.empty()) {
    require_file(g.config_file);
    config.apply_file(g.config_file);
  }
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

void echo_config(const fs::path& dir, const RunConfig& config) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.txt");
  out << "# effective configuration\n" << config.to_text();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::vector<TokenizedSentence> encode_lines(const std::vector<std::string>& lines,
                                            const Vocabulary& vocab) {
  std::vector<TokenizedSentence> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(encode_sentence(l, vocab));
  return out;
}

Checkpoint load_model(const fs::path& path) {
  require_file(path);
  return load_checkpoint(path);
}

std::vector<std::string> decode_texts(const std::vector<std::string>& inputs,
                                      const DecodeRequest& request, const Checkpoint& ckpt) {
  std::vector<std::string> texts;
  for (const auto& s : summarize_all(encode_lines(inputs, ckpt.vocab), request, ckpt.model,
                                     ckpt.vocab))
    texts.push_back(s.text);
  return texts;
}

// ---------------------------------------------------------------------------

struct ToyCorpusArgs {
  std::uint64_t seed = 1;
  std::size_t size = 5000;
  std::string out;
};

int run_toy_corpus(const ToyCorpusArgs& a) {
  const auto lines = generate_toy_corpus(default_toy_grammar(), a.size, a.seed);
  if (a.out.empty()) {
    for (const auto& l : lines) std::cout << l << '\n';
  } else {
    write_lines(a.out, lines);
  }
  return kExitOk;
}

struct PreprocessArgs {
  std::string input;
  std::string out_dir;
};

int run_preprocess(const PreprocessArgs& a, const RunConfig& config) {
  require_file(a.input);
  std::vector<std::string> kept;
  std::vector<Tokens> tokenized;
  std::size_t dropped = 0;
  for (const auto& line : read_lines(a.input)) {
    Tokens tokens = normalize(line);
    if (tokens.empty() || tokens.size() > config.max_words) {
      ++dropped;
      continue;
    }
    kept.push_back(line);
    tokenized.push_back(std::move(tokens));
  }
  if (kept.empty()) throw Error("no sentences left after filtering");
  const Vocabulary vocab = build_vocab(tokenized, config.top_k);
  const fs::path dir = a.out_dir;
  echo_config(dir, config);
  write_lines(dir / "sentences.txt", kept);
  std::vector<std::string> joined;
  for (const auto& t : tokenized) joined.push_back(join_tokens(t));
  write_lines(dir / "tokens.txt", joined);
  vocab.save(dir / "vocab.txt");
  std::cerr << "kept " << kept.size() << " sentences, dropped " << dropped << ", vocabulary "
            << vocab.size() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string input;
  std::string vocab;
  std::string out_dir;
  bool no_lenemb = false;
  std::size_t log_every = 100;
};

int run_train(const TrainArgs& a, RunConfig config) {
  require_file(a.input);
  const auto lines = read_lines(a.input);
  Vocabulary vocab;
  if (!a.vocab.empty()) {
    require_file(a.vocab);
    vocab = Vocabulary::load(a.vocab);
  } else {
    std::vector<Tokens> tokenized;
    for (const auto& l : lines) tokenized.push_back(normalize(l));
    vocab = build_vocab(tokenized, config.top_k);
  }
  std::vector<TokenizedSentence> corpus;
  for (const auto& l : lines) {
    auto s = encode_sentence(l, vocab);
    if (s.word_count() > 0 && s.word_count() <= config.max_words) corpus.push_back(std::move(s));
  }
  if (corpus.empty()) throw Error("training corpus is empty");

  if (a.no_lenemb) config.model.use_length_embedding = false;
  config.model.vocab_size = vocab.size();
  const fs::path dir = a.out_dir;
  echo_config(dir, config);

  auto progress = [&](const MetricRecord& r) {
    if (a.log_every > 0 && (r.step % a.log_every == 0 || r.step == config.train.total_steps))
      std::fprintf(stderr, "step %zu  kl_weight %.3f  kl %.4f  rec %.4f  bow %.4f  total %.4f\n",
                   r.step, r.kl_weight, r.kl, r.reconstruction, r.bow, r.total);
  };
  const TrainResult result =
      train(corpus, vocab, config.model, config.train,
            config.train.checkpoint_interval > 0 ? std::optional<fs::path>(dir / "checkpoints")
                                                 : std::nullopt,
            progress);
  save_checkpoint(dir / "model.lvae", result.model, vocab,
                  static_cast<std::int64_t>(config.train.total_steps));
  result.metrics.write_csv(dir / "metrics.csv");
  vocab.save(dir / "vocab.txt");
  return kExitOk;
}

struct SummarizeArgs {
  std::string model;
  std::string input;
  std::string output;
  std::string length;
};

std::optional<std::size_t> parse_length(const std::string& text, RunConfig& config) {
  if (!text.empty()) config.set("desired_length", text);
  return config.decode.desired_length;
}

int run_summarize(const SummarizeArgs& a, RunConfig config) {
  const Checkpoint ckpt = load_model(a.model);
  require_file(a.input);
  config.decode.desired_length = parse_length(a.length, config);
  if (config.decode.desired_length) require_length_embedding(ckpt);
  const auto outputs = decode_texts(read_lines(a.input), config.decode, ckpt);
  if (a.output.empty()) {
    for (const auto& o : outputs) std::cout << o << '\n';
  } else {
    write_lines(a.output, outputs);
    if (fs::path(a.output).has_parent_path()) echo_config(fs::path(a.output).parent_path(), config);
  }
  return kExitOk;
}

struct EvaluateArgs {
  std::vector<std::string> references;
  std::string input;
  std::string model;
  std::vector<std::string> candidates;  // NAME=FILE
  std::string out_dir;
  bool no_cap = false;
};

int run_evaluate(const EvaluateArgs& a, RunConfig config) {
  if (a.references.empty()) throw ConfigError("at least one --references file is required");
  std::vector<std::vector<std::string>> ref_files;
  for (const auto& r : a.references) {
    require_file(r);
    ref_files.push_back(read_lines(r));
  }
  const std::size_t n = ref_files.front().size();
  for (const auto& r : ref_files)
    if (r.size() != n) throw Error("reference files differ in line count");
  std::vector<std::vector<std::string>> references(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& r : ref_files) references[i].push_back(r[i]);

  std::vector<std::string> inputs;
  if (!a.input.empty()) {
    require_file(a.input);
    inputs = read_lines(a.input);
    if (inputs.size() != n) throw Error("input and reference files differ in line count");
  }

  std::vector<std::pair<std::string, std::vector<std::string>>> systems;
  if (!inputs.empty()) {
    std::vector<std::string> prefix;
    for (const auto& in : inputs) prefix.push_back(prefix_baseline(in));
    systems.emplace_back("PREFIX", std::move(prefix));
  }
  for (const auto& spec : a.candidates) {
    const auto eq = spec.find('=');
    const std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    const std::string file = eq == std::string::npos ? spec : spec.substr(eq + 1);
    require_file(file);
    auto lines = read_lines(file);
    if (lines.size() != n) throw Error("candidate file " + file + " has the wrong line count");
    systems.emplace_back(name, std::move(lines));
  }
  if (!a.model.empty()) {
    if (inputs.empty()) throw ConfigError("--model needs --input");
    const Checkpoint ckpt = load_model(a.model);
    DecodeRequest natural = config.decode;
    natural.desired_length.reset();
    if (config.decode.desired_length && ckpt.model.hp.use_length_embedding)
      systems.emplace_back("LenEmb", decode_texts(inputs, config.decode, ckpt));
    systems.emplace_back("no len limit", decode_texts(inputs, natural, ckpt));
  }
  if (systems.empty()) throw ConfigError("nothing to evaluate: give --input, --candidates or --model");

  EvalSettings settings;
  if (a.no_cap) settings.byte_limit.reset();
  else settings.byte_limit = config.byte_limit;

  EvalReport report;
  const fs::path dir = a.out_dir;
  echo_config(dir, config);
  for (const auto& [name, texts] : systems) {
    report.systems.push_back(score_system(name, texts, references, inputs, settings));
    std::string file = name;
    for (char& c : file)
      if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    write_text(dir / ("histogram_" + file + ".csv"),
               format_histogram(length_histogram(texts, config.histogram_bucket)));
    write_lines(dir / ("outputs_" + file + ".txt"), texts);
  }
  const std::string table = format_report_table(report);
  write_text(dir / "report.txt", table);
  write_text(dir / "report.csv", format_report_csv(report));
  std::cout << table;
  return kExitOk;
}

struct ProbeArgs {
  std::string with_model;
  std::string without_model;
  std::string input;
  std::string out_dir;
  std::uint64_t seed = 1;
};

int run_probe(const ProbeArgs& a, const RunConfig& config) {
  const Checkpoint with = load_model(a.with_model);
  const Checkpoint without = load_model(a.without_model);
  require_length_embedding(with);
  if (!(with.vocab == without.vocab))
    throw CheckpointError(CheckpointErrorKind::kIncompatible,
                          "the two checkpoints use different vocabularies");
  require_file(a.input);
  std::vector<TokenizedSentence> sentences;
  for (auto& s : encode_lines(read_lines(a.input), with.vocab))
    if (s.word_count() > 0) sentences.push_back(std::move(s));
  const ProbeReport report = probe_experiment(with.model, without.model, sentences, a.seed);
  const std::string table = format_probe_table(report);
  std::cout << table;
  if (!a.out_dir.empty()) {
    echo_config(a.out_dir, config);
    write_text(fs::path(a.out_dir) / "probe.txt", table);
  }
  return kExitOk;
}

struct GradCheckArgs {
  std::uint64_t seed = 1;
  std::size_t layers = 2;
  bool no_lenemb = false;
  double threshold = 1e-4;
};

int run_gradcheck(const GradCheckArgs& a) {
  HyperParams hp;
  hp.vocab_size = 7;
  hp.cell_size = 4;
  hp.embedding_size = 3;
  hp.latent_size = 3;
  hp.bow_hidden_size = 4;
  hp.length_embedding_size = 2;
  hp.decoder_layers = a.layers;
  hp.max_length_index = 4;
  hp.sample_count = 3;
  hp.use_length_embedding = !a.no_lenemb;
  auto model = VaeModel::create(hp, a.seed, 0.5);

  RandomStream data_rng(a.seed + 1000);
  std::vector<TokenizedSentence> sentences(3);
  for (auto& s : sentences)
    for (std::size_t t = 0, n = 1 + data_rng.index(4); t < n; ++t)
      s.ids.push_back(static_cast<TokenId>(special::kCount + data_rng.index(2)));
  const Batch batch = make_batch(sentences, hp.vocab_size);

  LossOptions opts;
  opts.kl_weight = 0.7;
  opts.mode = Mode::kTrain;
  opts.keep_rate = 0.8;
  auto loss = [&](ParamStore& params) {
    params.zero_grad();
    RandomStream rng(a.seed * 7 + 1);
    return forward_backward(model, batch, opts, rng).total;
  };
  const auto result = grad_check(loss, model.params, 1e-5);
  std::printf("max relative error %.3e (%s[%zu], %zu entries checked)\n",
              result.max_relative_error, result.worst_parameter.c_str(), result.worst_index,
              result.checked);
  return result.max_relative_error < a.threshold ? kExitOk : kExitGradCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Length-controllable sentence VAE: training, decoding and evaluation"};
  app.require_subcommand(1);
  GlobalOptions global;
  app.add_option("--config", global.config_file, "key = value configuration file");
  app.add_option("--preset", global.preset, "base configuration: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--set", global.overrides, "override a configuration key (key=value)");

  ToyCorpusArgs toy;
  auto* toy_cmd = app.add_subcommand("toy-corpus", "generate a synthetic corpus");
  toy_cmd->add_option("--seed", toy.seed, "random seed");
  toy_cmd->add_option("--size", toy.size, "number of sentences");
  toy_cmd->add_option("--out", toy.out, "output file (default: standard output)");

  PreprocessArgs pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "normalize, filter and build a vocabulary");
  pre_cmd->add_option("--input", pre.input, "raw corpus, one sentence per line")->required();
  pre_cmd->add_option("--out-dir", pre.out_dir, "output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--input", tr.input, "corpus, one sentence per line")->required();
  train_cmd->add_option("--vocab", tr.vocab, "vocabulary file (default: built from the corpus)");
  train_cmd->add_option("--out-dir", tr.out_dir, "output directory")->required();
  train_cmd->add_flag("--no-lenemb", tr.no_lenemb, "train without length embeddings");
  train_cmd->add_option("--log-every", tr.log_every, "progress interval in steps (0: silent)");

  SummarizeArgs sum;
  auto* sum_cmd = app.add_subcommand("summarize", "decode sentences at a desired length");
  sum_cmd->add_option("--model", sum.model, "checkpoint")->required();
  sum_cmd->add_option("--input", sum.input, "sentences, one per line")->required();
  sum_cmd->add_option("--output", sum.output, "output file (default: standard output)");
  sum_cmd->add_option("--length", sum.length, "desired words, or 'natural' (default 20)");

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "ROUGE report with the PREFIX baseline");
  eval_cmd->add_option("--references", ev.references, "reference files, aligned by line")
      ->required();
  eval_cmd->add_option("--input", ev.input, "source sentences (enables PREFIX and Ext. %)");
  eval_cmd->add_option("--model", ev.model, "checkpoint to decode the inputs with");
  eval_cmd->add_option("--candidates", ev.candidates, "extra systems as NAME=FILE");
  eval_cmd->add_option("--out-dir", ev.out_dir, "output directory")->required();
  eval_cmd->add_flag("--no-cap", ev.no_cap, "score candidates without byte capping");

  ProbeArgs pr;
  auto* probe_cmd = app.add_subcommand("probe", "linear length probe on posterior means");
  probe_cmd->add_option("--with", pr.with_model, "checkpoint trained with length embeddings")
      ->required();
  probe_cmd->add_option("--without", pr.without_model, "checkpoint trained without them")
      ->required();
  probe_cmd->add_option("--input", pr.input, "sentences, one per line")->required();
  probe_cmd->add_option("--out-dir", pr.out_dir, "output directory");
  probe_cmd->add_option("--seed", pr.seed, "train/test split seed");

  GradCheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full model");
  gc_cmd->add_option("--seed", gc.seed, "random seed");
  gc_cmd->add_option("--layers", gc.layers, "decoder layers");
  gc_cmd->add_flag("--no-lenemb", gc.no_lenemb, "check the model without length embeddings");
  gc_cmd->add_option("--threshold", gc.threshold, "maximum accepted relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    // Resolve first so configuration errors surface for every subcommand.
    const RunConfig config = resolve_config(global);
    if (*toy_cmd) return run_toy_corpus(toy);
    if (*gc_cmd) return run_gradcheck(gc);
    if (*pre_cmd) return run_preprocess(pre, config);
    if (*train_cmd) return run_train(tr, config);
    if (*sum_cmd) return run_summarize(sum, config);
    if (*eval_cmd) return run_evaluate(ev, config);
    if (*probe_cmd) return run_probe(pr, config);
  } catch (const MissingFile& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitMissingFile;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    if (e.kind() == CheckpointErrorKind::kIncompatible) return kExitIncompatible;
    if (e.kind() == CheckpointErrorKind::kIo) return kExitMissingFile;
    return kExitCorrupt;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
