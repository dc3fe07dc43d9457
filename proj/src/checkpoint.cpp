#include "lenvae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <boost/crc.hpp>

namespace lenvae {

namespace {

constexpr char kMagic[4] = {'L', 'V', 'A', 'E'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    buffer_.insert(buffer_.end(), p, p + n);
  }
  template <typename T>
  void little_endian(T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i)
      buffer_.push_back(static_cast<unsigned char>(
          (static_cast<std::make_unsigned_t<T>>(value) >> (8 * i)) & 0xFF));
  }
  void u32(std::uint32_t v) { little_endian(v); }
  void u64(std::uint64_t v) { little_endian(v); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void string32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<unsigned char>& buffer() { return buffer_; }

 private:
  std::vector<unsigned char> buffer_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& data) : data_(data) {}

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n)
      throw CheckpointError(CheckpointErrorKind::kTruncated,
                            "file ends inside a record");
  }
  template <typename T>
  T little_endian() {
    need(sizeof(T));
    std::make_unsigned_t<T> v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::make_unsigned_t<T>>(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  std::uint32_t u32() { return little_endian<std::uint32_t>(); }
  std::uint64_t u64() { return little_endian<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string string32() { return string(u32()); }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  const std::vector<unsigned char>& data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32(const unsigned char* data, std::size_t n) {
  boost::crc_32_type crc;
  crc.process_bytes(data, n);
  return crc.checksum();
}

}  // namespace

std::string_view to_string(CheckpointErrorKind kind) {
  switch (kind) {
    case CheckpointErrorKind::kIo: return "io";
    case CheckpointErrorKind::kBadMagic: return "bad-magic";
    case CheckpointErrorKind::kVersionMismatch: return "version-mismatch";
    case CheckpointErrorKind::kTruncated: return "truncated";
    case CheckpointErrorKind::kChecksumMismatch: return "checksum-mismatch";
    case CheckpointErrorKind::kMalformed: return "malformed";
    case CheckpointErrorKind::kIncompatible: return "incompatible";
  }
  return "unknown";
}

std::string serialize_hyperparams(const HyperParams& hp) {
  std::ostringstream out;
  out << "vocab_size = " << hp.vocab_size << '\n'
      << "cell_size = " << hp.cell_size << '\n'
      << "embedding_size = " << hp.embedding_size << '\n'
      << "latent_size = " << hp.latent_size << '\n'
      << "bow_hidden_size = " << hp.bow_hidden_size << '\n'
      << "length_embedding_size = " << hp.length_embedding_size << '\n'
      << "decoder_layers = " << hp.decoder_layers << '\n'
      << "max_length_index = " << hp.max_length_index << '\n'
      << "sample_count = " << hp.sample_count << '\n'
      << "use_length_embedding = " << (hp.use_length_embedding ? 1 : 0) << '\n';
  return out.str();
}

HyperParams parse_hyperparams(const std::string& text) {
  std::map<std::string, std::size_t> fields;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos)
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            "bad config line '" + line + "'");
    try {
      fields[line.substr(0, eq)] = std::stoull(line.substr(eq + 3));
    } catch (const std::exception&) {
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            "bad config value in '" + line + "'");
    }
  }
  auto get = [&](const char* key) {
    auto it = fields.find(key);
    if (it == fields.end())
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            std::string("config lacks '") + key + "'");
    return it->second;
  };
  HyperParams hp;
  hp.vocab_size = get("vocab_size");
  hp.cell_size = get("cell_size");
  hp.embedding_size = get("embedding_size");
  hp.latent_size = get("latent_size");
  hp.bow_hidden_size = get("bow_hidden_size");
  hp.length_embedding_size = get("length_embedding_size");
  hp.decoder_layers = get("decoder_layers");
  hp.max_length_index = get("max_length_index");
  hp.sample_count = get("sample_count");
  hp.use_length_embedding = get("use_length_embedding") != 0;
  return hp;
}

void save_checkpoint(const std::filesystem::path& path, const VaeModel& model,
                     const Vocabulary& vocab, std::int64_t step) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  const std::string config =
      serialize_hyperparams(model.hp) + "step = " + std::to_string(step) + '\n';
  w.u64(config.size());
  w.bytes(config.data(), config.size());
  w.u64(vocab.size());
  for (const auto& token : vocab.tokens()) w.string32(token);
  w.u64(model.params.count());
  for (const auto& p : model.params) {
    w.string32(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto extent : p.value.shape()) w.u64(extent);
    for (double v : p.value.values()) w.f64(v);
  }
  auto& buffer = w.buffer();
  w.u32(crc32(buffer.data(), buffer.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw CheckpointError(CheckpointErrorKind::kIo,
                          "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size()));
  if (!out)
    throw CheckpointError(CheckpointErrorKind::kIo,
                          "write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointError(CheckpointErrorKind::kIo,
                          "cannot open '" + path.string() + "'");
  const std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  Reader r(data);
  if (data.size() < sizeof kMagic) {
    if (std::memcmp(data.data(), kMagic, data.size()) == 0)
      throw CheckpointError(CheckpointErrorKind::kTruncated, "file too short");
    throw CheckpointError(CheckpointErrorKind::kBadMagic, "not a checkpoint");
  }
  if (std::memcmp(data.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError(CheckpointErrorKind::kBadMagic, "not a checkpoint");
  r.string(sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrorKind::kVersionMismatch,
                          "format version " + std::to_string(version) +
                              ", expected " + std::to_string(kCheckpointVersion));

  const std::uint64_t config_size = r.u64();
  const std::string config = r.string(config_size);
  const auto step_pos = config.find("step = ");
  if (step_pos == std::string::npos)
    throw CheckpointError(CheckpointErrorKind::kMalformed, "config lacks 'step'");

  Checkpoint ckpt;
  const HyperParams hp = parse_hyperparams(config.substr(0, step_pos));
  ckpt.step = std::stoll(config.substr(step_pos + 7));

  const std::uint64_t vocab_size = r.u64();
  std::vector<std::string> tokens;
  for (std::uint64_t i = 0; i < vocab_size; ++i) {
    r.need(4);
    tokens.push_back(r.string32());
  }

  ParamStore store;
  const std::uint64_t tensor_count = r.u64();
  for (std::uint64_t k = 0; k < tensor_count; ++k) {
    std::string name = r.string32();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8)
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            "bad rank for tensor '" + name + "'");
    Tensor::Shape shape;
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(r.u64());
      if (shape.back() == 0)
        throw CheckpointError(CheckpointErrorKind::kMalformed,
                              "zero extent in tensor '" + name + "'");
      n *= shape.back();
    }
    r.need(n * 8);
    Parameter* p;
    try {
      p = &store.add(name, shape);
    } catch (const Error& e) {
      throw CheckpointError(CheckpointErrorKind::kMalformed, e.what());
    }
    for (auto& v : p->value.values()) v = r.f64();
  }

  const std::size_t payload = r.position();
  const std::uint32_t stored_crc = r.u32();
  if (r.remaining() != 0)
    throw CheckpointError(CheckpointErrorKind::kMalformed,
                          "trailing bytes after checksum");
  if (crc32(data.data(), payload) != stored_crc)
    throw CheckpointError(CheckpointErrorKind::kChecksumMismatch,
                          "checksum does not match contents");

  try {
    ckpt.vocab = Vocabulary(std::move(tokens));
    ckpt.model = VaeModel::create(hp, 0);
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(CheckpointErrorKind::kMalformed, e.what());
  }
  if (ckpt.vocab.size() != hp.vocab_size)
    throw CheckpointError(CheckpointErrorKind::kMalformed,
                          "vocabulary size disagrees with the config");
  if (ckpt.model.params.count() != store.count())
    throw CheckpointError(CheckpointErrorKind::kMalformed,
                          "tensor count disagrees with the config");
  for (auto& p : ckpt.model.params) {
    if (!store.contains(p.name))
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            "missing tensor '" + p.name + "'");
    const auto& stored = store.at(p.name);
    if (stored.value.shape() != p.value.shape())
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            "shape mismatch for tensor '" + p.name + "'");
    p.value = stored.value;
  }
  // Keep the file's tensor order.
  std::size_t k = 0;
  for (const auto& stored : store) {
    if (std::next(ckpt.model.params.begin(), static_cast<std::ptrdiff_t>(k))->name != stored.name)
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            "unexpected tensor order at '" + stored.name + "'");
    ++k;
  }
  return ckpt;
}

void require_length_embedding(const Checkpoint& checkpoint) {
  if (!checkpoint.model.hp.use_length_embedding)
    throw CheckpointError(CheckpointErrorKind::kIncompatible,
                          "checkpoint was trained without length embeddings; "
                          "only natural-length decoding is available");
}

}  // namespace lenvae
