#include "salsum/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace salsum {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[5] = {'S', 'S', 'E', 'Q', '1'};
constexpr uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read_pod(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error(std::string("checkpoint: truncated while reading ") +
                             what);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const char* what) {
  const auto len = read_pod<uint32_t>(in, what);
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len))
    throw std::runtime_error(std::string("checkpoint: truncated while reading ") +
                             what);
  return s;
}

}  // namespace

const TensorBlob* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, blob] : records)
    if (n == name) return &blob;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  write_pod<uint32_t>(out, kVersion);
  write_pod<uint64_t>(out, ckpt.config_text.size());
  out.write(ckpt.config_text.data(),
            static_cast<std::streamsize>(ckpt.config_text.size()));
  write_pod<uint32_t>(out, static_cast<uint32_t>(ckpt.vocab_tokens.size()));
  for (const auto& t : ckpt.vocab_tokens) write_string(out, t);
  write_pod<uint32_t>(out, static_cast<uint32_t>(ckpt.records.size()));
  for (const auto& [name, blob] : ckpt.records) {
    if (shape_numel(blob.shape) != static_cast<int64_t>(blob.data.size()))
      throw std::invalid_argument("checkpoint: record " + name +
                                  " data does not match its shape");
    write_string(out, name);
    write_pod<uint32_t>(out, static_cast<uint32_t>(blob.shape.size()));
    for (int64_t d : blob.shape) write_pod<uint64_t>(out, uint64_t(d));
    out.write(reinterpret_cast<const char*>(blob.data.data()),
              static_cast<std::streamsize>(blob.data.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  char magic[5];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, 5) != 0)
    throw std::runtime_error("checkpoint: " + path +
                             " is not a SSEQ1 checkpoint");
  const auto version = read_pod<uint32_t>(in, "version");
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  Checkpoint ckpt;
  const auto cfg_len = read_pod<uint64_t>(in, "config length");
  ckpt.config_text.resize(cfg_len);
  if (cfg_len && !in.read(ckpt.config_text.data(),
                          static_cast<std::streamsize>(cfg_len)))
    throw std::runtime_error("checkpoint: truncated config block");
  const auto vocab_count = read_pod<uint32_t>(in, "vocab count");
  ckpt.vocab_tokens.reserve(vocab_count);
  for (uint32_t i = 0; i < vocab_count; ++i)
    ckpt.vocab_tokens.push_back(read_string(in, "vocab token"));
  const auto record_count = read_pod<uint32_t>(in, "record count");
  ckpt.records.reserve(record_count);
  for (uint32_t r = 0; r < record_count; ++r) {
    const std::string name = read_string(in, "record name");
    const auto rank = read_pod<uint32_t>(in, "record rank");
    TensorBlob blob;
    for (uint32_t d = 0; d < rank; ++d)
      blob.shape.push_back(
          static_cast<int64_t>(read_pod<uint64_t>(in, "record dim")));
    const int64_t numel = shape_numel(blob.shape);
    blob.data.resize(numel);
    if (numel && !in.read(reinterpret_cast<char*>(blob.data.data()),
                          static_cast<std::streamsize>(numel * sizeof(float))))
      throw std::runtime_error("checkpoint: truncated data for record " + name);
    ckpt.records.emplace_back(name, std::move(blob));
  }
  return ckpt;
}

}  // namespace salsum
