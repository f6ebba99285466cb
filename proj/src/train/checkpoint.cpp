#include "ddflow/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace ddflow {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'D', 'F', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kMaxName = 1024;
constexpr std::uint32_t kMaxRank = 8;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), std::streamsize(n)); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(std::uint32_t(s.size()));
    bytes(s.data(), s.size());
  }
  void list(const std::vector<Index>& xs) {
    u32(std::uint32_t(xs.size()));
    for (Index x : xs) u32(std::uint32_t(x));
  }
  void record(const std::string& name, const Tensor<float>& t) {
    str(name);
    u32(std::uint32_t(t.rank()));
    for (Index e : t.shape()) u32(std::uint32_t(e));
    bytes(t.data(), std::size_t(t.size()) * sizeof(float));
  }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed for " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open checkpoint " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(in_.gcount()) != n) fail("truncated");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::string str(std::uint32_t max_len) {
    std::uint32_t n = u32();
    if (n > max_len) fail("implausible string length " + std::to_string(n));
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::vector<Index> list() {
    std::uint32_t n = u32();
    if (n > 64) fail("implausible list length " + std::to_string(n));
    std::vector<Index> xs(n);
    for (auto& x : xs) x = Index(u32());
    return xs;
  }
  Tensor<float> record(const std::string& expected_name) {
    std::string name = str(kMaxName);
    if (name != expected_name) fail("expected record '" + expected_name + "', found '" + name + "'");
    std::uint32_t rank = u32();
    if (rank == 0 || rank > kMaxRank) fail("bad rank " + std::to_string(rank) + " for " + name);
    Shape shape(rank);
    for (auto& e : shape) {
      e = Index(u32());
      if (e == 0) fail("zero extent in " + name);
    }
    Tensor<float> t(shape);
    bytes(t.data(), std::size_t(t.size()) * sizeof(float));
    return t;
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) fail("trailing bytes");
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("checkpoint " + path_.string() + ": " + what);
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

void write_params(Writer& w, const std::string& prefix, const ModelParams<float>& params) {
  w.u32(std::uint32_t(params.size()));
  for (const auto& e : params.entries()) w.record(prefix + e.name, e.value);
}

ModelParams<float> read_params(Reader& r, const std::string& prefix, const ModelParams<float>& layout) {
  std::uint32_t n = r.u32();
  if (n != layout.size()) r.fail("parameter count " + std::to_string(n) + " does not match the network config");
  ModelParams<float> out;
  for (const auto& e : layout.entries()) {
    Tensor<float> t = r.record(prefix + e.name);
    if (t.shape() != e.value.shape()) r.fail("shape mismatch for " + e.name);
    out.add(e.name, std::move(t));
  }
  return out;
}

void write_opt(Writer& w, const std::string& name, const ModelParams<float>& params, const AdamState<float>& s) {
  w.str(name);
  w.u64(s.t);
  for (std::size_t i = 0; i < params.size(); ++i) w.record("m/" + params.entries()[i].name, s.m[i]);
  for (std::size_t i = 0; i < params.size(); ++i) w.record("v/" + params.entries()[i].name, s.v[i]);
}

AdamState<float> read_opt(Reader& r, const std::string& name, const ModelParams<float>& layout) {
  std::string found = r.str(kMaxName);
  if (found != name) r.fail("expected optimizer '" + name + "', found '" + found + "'");
  AdamState<float> s;
  s.t = r.u64();
  for (const auto& e : layout.entries()) s.m.push_back(r.record("m/" + e.name));
  for (const auto& e : layout.entries()) s.v.push_back(r.record("v/" + e.name));
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (ckpt.student.has_value() != ckpt.student_opt.has_value()) {
    throw std::invalid_argument("save_checkpoint: student params and optimizer state must come together");
  }
  if (ckpt.teacher_opt.m.size() != ckpt.teacher.size() ||
      (ckpt.student && ckpt.student_opt->m.size() != ckpt.student->size())) {
    throw std::invalid_argument("save_checkpoint: optimizer state does not match parameters");
  }
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.u32(ckpt.version);
  w.u32(std::uint32_t(ckpt.net.levels));
  w.u32(std::uint32_t(ckpt.net.correlation_radius));
  w.list(ckpt.net.feature_channels);
  w.list(ckpt.net.decoder_hidden);
  w.u32(1);
  w.u32(ckpt.student ? 1 : 0);
  write_params(w, "teacher/", ckpt.teacher);
  if (ckpt.student) write_params(w, "student/", *ckpt.student);
  write_opt(w, "teacher", ckpt.teacher, ckpt.teacher_opt);
  if (ckpt.student) write_opt(w, "student", *ckpt.student, *ckpt.student_opt);
  w.u64(ckpt.global_step);
  w.str(ckpt.rng_state);
  w.finish(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) r.fail("bad magic");
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCheckpointVersion) r.fail("unsupported format version " + std::to_string(c.version));
  c.net.levels = Index(r.u32());
  c.net.correlation_radius = Index(r.u32());
  c.net.feature_channels = r.list();
  c.net.decoder_hidden = r.list();
  try {
    c.net.validate();
  } catch (const std::exception& e) {
    r.fail(std::string("invalid network config: ") + e.what());
  }
  std::uint32_t has_teacher = r.u32();
  std::uint32_t has_student = r.u32();
  if (has_teacher != 1 || has_student > 1) r.fail("bad model flags");
  // Shapes are fully determined by the config; names and extents are checked against it.
  std::mt19937_64 dummy(0);
  const ModelParams<float> layout = init_params<float>(c.net, dummy);
  c.teacher = read_params(r, "teacher/", layout);
  if (has_student) c.student = read_params(r, "student/", layout);
  c.teacher_opt = read_opt(r, "teacher", layout);
  if (has_student) c.student_opt = read_opt(r, "student", layout);
  c.global_step = r.u64();
  c.rng_state = r.str(1u << 16);
  r.expect_end();
  return c;
}

}  // namespace ddflow
