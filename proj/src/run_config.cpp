#include "lenvae/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace lenvae {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

std::string real_text(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <typename Member>
ConfigField count_field(std::string key, std::string doc, Member member) {
  return {key, std::move(doc),
          [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, const std::string& v) { member(c) = parse_count(key, v); }};
}

template <typename Member>
ConfigField real_field(std::string key, std::string doc, Member member) {
  return {key, std::move(doc),
          [member](const RunConfig& c) { return real_text(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, const std::string& v) { member(c) = parse_real(key, v); }};
}

}  // namespace

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    f.push_back(count_field("cell_size", "encoder/decoder LSTM width",
                            [](RunConfig& c) -> std::size_t& { return c.model.cell_size; }));
    f.push_back(count_field("embedding_size", "word embedding width",
                            [](RunConfig& c) -> std::size_t& { return c.model.embedding_size; }));
    f.push_back(count_field("latent_size", "latent dimension",
                            [](RunConfig& c) -> std::size_t& { return c.model.latent_size; }));
    f.push_back(count_field("bow_hidden_size", "bag-of-words hidden width",
                            [](RunConfig& c) -> std::size_t& { return c.model.bow_hidden_size; }));
    f.push_back(count_field("length_embedding_size", "length embedding width",
                            [](RunConfig& c) -> std::size_t& { return c.model.length_embedding_size; }));
    f.push_back(count_field("decoder_layers", "decoder LSTM layers",
                            [](RunConfig& c) -> std::size_t& { return c.model.decoder_layers; }));
    f.push_back(count_field("max_length_index", "last row of the length table",
                            [](RunConfig& c) -> std::size_t& { return c.model.max_length_index; }));
    f.push_back(count_field("sample_count", "sampled-softmax negatives (clamped to V-1)",
                            [](RunConfig& c) -> std::size_t& { return c.model.sample_count; }));
    f.push_back({"use_length_embedding", "feed the remaining-length embedding",
                 [](const RunConfig& c) { return std::string(c.model.use_length_embedding ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) {
                   c.model.use_length_embedding = parse_bool("use_length_embedding", v);
                 }});
    f.push_back(count_field("batch_size", "sentences per batch",
                            [](RunConfig& c) -> std::size_t& { return c.train.batch_size; }));
    f.push_back(count_field("total_steps", "training steps",
                            [](RunConfig& c) -> std::size_t& { return c.train.total_steps; }));
    f.push_back({"anneal", "KL weight schedule: linear or logistic",
                 [](const RunConfig& c) {
                   return std::string(c.train.anneal == AnnealKind::kLinear ? "linear" : "logistic");
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "linear") c.train.anneal = AnnealKind::kLinear;
                   else if (v == "logistic") c.train.anneal = AnnealKind::kLogistic;
                   else throw ConfigError("'anneal' expects linear or logistic, got '" + v + "'");
                 }});
    f.push_back(count_field("anneal_horizon", "step at which the KL weight reaches 1",
                            [](RunConfig& c) -> std::size_t& { return c.train.anneal_horizon; }));
    f.push_back(real_field("word_drop", "probability of replacing a decoder input word by UNK",
                           [](RunConfig& c) -> double& { return c.train.word_drop; }));
    f.push_back(real_field("keep_rate", "dropout keep rate on the decoder output layer",
                           [](RunConfig& c) -> double& { return c.train.keep_rate; }));
    f.push_back(real_field("learning_rate", "Adam learning rate",
                           [](RunConfig& c) -> double& { return c.train.adam.learning_rate; }));
    f.push_back(real_field("beta1", "Adam first-moment decay",
                           [](RunConfig& c) -> double& { return c.train.adam.beta1; }));
    f.push_back(real_field("beta2", "Adam second-moment decay",
                           [](RunConfig& c) -> double& { return c.train.adam.beta2; }));
    f.push_back(real_field("adam_epsilon", "Adam stabilizer",
                           [](RunConfig& c) -> double& { return c.train.adam.epsilon; }));
    f.push_back(real_field("clip_norm", "global gradient-norm clip",
                           [](RunConfig& c) -> double& { return c.train.clip_norm; }));
    f.push_back({"seed", "random seed",
                 [](const RunConfig& c) { return std::to_string(c.train.seed); },
                 [](RunConfig& c, const std::string& v) { c.train.seed = parse_count("seed", v); }});
    f.push_back(count_field("checkpoint_interval", "steps between checkpoints (0: final only)",
                            [](RunConfig& c) -> std::size_t& { return c.train.checkpoint_interval; }));
    f.push_back({"desired_length", "decode length in words, or natural",
                 [](const RunConfig& c) {
                   return c.decode.desired_length ? std::to_string(*c.decode.desired_length)
                                                  : std::string("natural");
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "natural") c.decode.desired_length.reset();
                   else c.decode.desired_length = parse_count("desired_length", v);
                 }});
    f.push_back(count_field("beam_width", "beam size",
                            [](RunConfig& c) -> std::size_t& { return c.decode.beam_width; }));
    f.push_back(count_field("max_tokens", "decode length cap",
                            [](RunConfig& c) -> std::size_t& { return c.decode.max_tokens; }));
    f.push_back(count_field("top_k", "vocabulary size without reserved tokens",
                            [](RunConfig& c) -> std::size_t& { return c.top_k; }));
    f.push_back(count_field("max_words", "longest sentence kept by preprocess",
                            [](RunConfig& c) -> std::size_t& { return c.max_words; }));
    f.push_back(count_field("byte_limit", "candidate byte cap for ROUGE",
                            [](RunConfig& c) -> std::size_t& { return c.byte_limit; }));
    f.push_back(count_field("histogram_bucket", "character-length histogram bucket width",
                            [](RunConfig& c) -> std::size_t& { return c.histogram_bucket; }));
    return f;
  }();
  return fields;
}

RunConfig RunConfig::desk() { return RunConfig{}; }

RunConfig RunConfig::paper() {
  RunConfig c;
  c.model = paper_hyperparams(0);
  c.train.batch_size = 512;
  c.train.word_drop = 0.20;
  c.train.keep_rate = 0.87;
  c.decode.beam_width = 100;
  c.decode.desired_length = 20;
  c.top_k = 40000;
  c.max_words = 30;
  return c;
}

RunConfig RunConfig::preset(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : config_fields())
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const {
  for (const auto& f : config_fields())
    if (f.key == key) return f.get(*this);
  throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(number) + ": expected 'key = value'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  apply_text(text.str());
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : config_fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

}  // namespace lenvae
