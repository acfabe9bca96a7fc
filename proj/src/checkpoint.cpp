#include "chanmt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "chanmt/error.hpp"
#include "chanmt/hash.hpp"

namespace chanmt {

namespace {

constexpr char kMagic[8] = {'C', 'H', 'M', 'T', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    raw(&v, sizeof(T));
  }
  void raw(const void* data, std::size_t n) {
    const auto* b = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end, const std::filesystem::path& path)
      : bytes_(bytes), end_(end), path_(path) {}

  template <typename T>
  T pod() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void raw(void* out, std::size_t n) {
    if (n > end_ - pos_) throw IntegrityError("checkpoint " + path_.string() + ": truncated payload");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
  const std::filesystem::path& path_;
};

void write_vocab(Writer& w, const Vocab& v) {
  w.pod(static_cast<std::uint32_t>(v.size()));
  for (const auto& t : v.tokens()) w.str(t);
}

Vocab read_vocab(Reader& r) {
  const auto n = r.pod<std::uint32_t>();
  std::vector<std::string> tokens;
  for (std::uint32_t i = 0; i < n; ++i) tokens.push_back(r.str());
  return Vocab(std::move(tokens));
}

}  // namespace

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << v;
  return out.str();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const ModelConfig& mc = c.model.config();
  if (static_cast<int>(c.source_vocab.size()) != mc.src_vocab || static_cast<int>(c.target_vocab.size()) != mc.tgt_vocab) {
    throw ContractError("checkpoint: vocabulary sizes do not match the model config");
  }
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod(kCheckpointVersion);
  w.str(c.role);
  w.pod(c.config_hash);
  w.pod(c.seed);
  for (int v : {mc.src_vocab, mc.tgt_vocab, mc.embed_dim, mc.hidden_dim, mc.layers, mc.heads, mc.max_positions}) {
    w.pod(static_cast<std::int32_t>(v));
  }
  write_vocab(w, c.source_vocab);
  write_vocab(w, c.target_vocab);
  const auto& params = c.model.parameters();
  w.pod(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.pod(static_cast<std::int64_t>(p.rows()));
    w.pod(static_cast<std::int64_t>(p.cols()));
    w.raw(p.data(), static_cast<std::size_t>(p.size()) * sizeof(double));
  }
  const std::uint64_t sum = fnv1a(w.bytes().data(), w.bytes().size());
  w.pod(sum);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("checkpoint: cannot write " + path.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw IntegrityError("checkpoint: write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("checkpoint " + path.string() + ": cannot open");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t)) {
    throw IntegrityError("checkpoint " + path.string() + ": truncated (" + std::to_string(bytes.size()) + " bytes)");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IntegrityError("checkpoint " + path.string() + ": not a checkpoint file");
  }
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof(stored));
  const std::uint64_t computed = fnv1a(bytes.data(), body);
  if (stored != computed) {
    throw IntegrityError("checkpoint " + path.string() + ": checksum mismatch (stored " + hex64(stored) +
                         ", computed " + hex64(computed) + ")");
  }
  Reader r(bytes, body, path);
  char magic[sizeof(kMagic)];
  r.raw(magic, sizeof(magic));
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IntegrityError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version) +
                         " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  c.role = r.str();
  c.config_hash = r.pod<std::uint64_t>();
  c.seed = r.pod<std::uint64_t>();
  ModelConfig mc;
  for (int* f : {&mc.src_vocab, &mc.tgt_vocab, &mc.embed_dim, &mc.hidden_dim, &mc.layers, &mc.heads,
                 &mc.max_positions}) {
    *f = r.pod<std::int32_t>();
  }
  if (expected != nullptr) {
    const std::string field = expected->first_difference(mc);
    if (!field.empty()) {
      throw IntegrityError("checkpoint " + path.string() + ": model config mismatch in field '" + field + "'");
    }
  }
  try {
    c.source_vocab = read_vocab(r);
    c.target_vocab = read_vocab(r);
    const auto n = r.pod<std::uint32_t>();
    std::vector<ad::Matrix> params;
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto rows = r.pod<std::int64_t>();
      const auto cols = r.pod<std::int64_t>();
      if (rows < 0 || cols < 0) throw IntegrityError("checkpoint " + path.string() + ": bad parameter shape");
      ad::Matrix m(rows, cols);
      r.raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
      params.push_back(std::move(m));
    }
    if (!r.done()) throw IntegrityError("checkpoint " + path.string() + ": trailing bytes");
    c.model = Seq2SeqModel(mc, std::move(params));
  } catch (const IntegrityError&) {
    throw;
  } catch (const Error& e) {
    throw IntegrityError("checkpoint " + path.string() + ": " + e.what());
  }
  return c;
}

}  // namespace chanmt
