#include "msatr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "msatr/config.hpp"
#include "msatr/errors.hpp"

namespace msatr {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'T', 'R'};

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  void tensors(const ParamList& list) {
    u32(static_cast<std::uint32_t>(list.size()));
    for (const auto& [name, t] : list) {
      str(name);
      u32(static_cast<std::uint32_t>(t.ndim()));
      for (std::size_t d : t.shape()) u64(d);
      for (double v : t.data()) f64(v);
    }
  }
  void adam(const AdamState& s) {
    u64(static_cast<std::uint64_t>(s.t));
    u32(static_cast<std::uint32_t>(s.m.size()));
    for (const auto& [name, m] : s.m) {
      const auto& v = s.v.at(name);
      str(name);
      u64(m.size());
      for (double x : m) f64(x);
      for (double x : v) f64(x);
    }
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : b_(bytes) {}

  [[noreturn]] void fail(const std::string& what) const { throw CheckpointError("checkpoint: " + what, pos_); }
  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) fail(std::string("truncated while reading ") + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(b_.begin() + static_cast<long>(pos_), b_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }
  ParamList tensors(const char* what) {
    const std::uint32_t count = u32(what);
    ParamList out;
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = str("tensor name");
      const std::uint32_t nd = u32("tensor rank");
      if (nd == 0 || nd > 8) fail("tensor '" + name + "' has invalid rank " + std::to_string(nd));
      Shape shape;
      std::uint64_t numel = 1;
      for (std::uint32_t d = 0; d < nd; ++d) {
        const std::uint64_t dim = u64("tensor shape");
        if (dim == 0 || dim > (std::uint64_t{1} << 32)) fail("tensor '" + name + "' has invalid dimension");
        numel *= dim;
        if (numel > (std::uint64_t{1} << 32)) fail("tensor '" + name + "' is implausibly large");
        shape.push_back(static_cast<std::size_t>(dim));
      }
      need(numel * 8, "tensor data");
      std::vector<double> data(numel);
      for (auto& v : data) v = f64("tensor data");
      out.push_back({std::move(name), Tensor::from_data(std::move(shape), std::move(data))});
    }
    return out;
  }
  AdamState adam() {
    AdamState s;
    s.t = static_cast<long long>(u64("adam step"));
    const std::uint32_t count = u32("adam entry count");
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = str("adam entry name");
      const std::uint64_t n = u64("adam entry size");
      need(n * 16, "adam moments");
      std::vector<double> m(n), v(n);
      for (auto& x : m) x = f64("adam moments");
      for (auto& x : v) x = f64("adam moments");
      s.m.emplace(name, std::move(m));
      s.v.emplace(std::move(name), std::move(v));
    }
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

ParamList copy_params(const ParamList& live) {
  ParamList out;
  for (const auto& [name, t] : live) out.push_back({name, t.clone()});
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.out.insert(w.out.end(), std::begin(kMagic), std::end(kMagic));
  w.u32(kCheckpointVersion);
  w.str(generator_to_text(ckpt.generator_config));
  w.tensors(ckpt.generator);
  w.u8(ckpt.train ? 1 : 0);
  if (ckpt.train) {
    const TrainSnapshot& t = *ckpt.train;
    w.str(train_to_text(t.config));
    w.u64(t.state.step);
    w.str(t.state.rng.save_state());
    w.f64(t.state.last_total);
    w.f64(t.state.best_total);
    w.u64(t.state.best_step);
    w.tensors(t.d_global);
    w.tensors(t.d_local);
    w.adam(t.state.g_adam);
    w.adam(t.state.d_global_adam);
    w.adam(t.state.d_local_adam);
  }
  return std::move(w.out);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) r.fail("bad magic (expected MSTR)");
  r.u32("magic");
  const std::size_t version_at = r.pos();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version), version_at);
  }
  Checkpoint ckpt;
  const std::size_t cfg_at = r.pos();
  try {
    ckpt.generator_config = generator_from_text(r.str("generator config"));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: invalid generator config: ") + e.what(), cfg_at);
  }
  ckpt.generator = r.tensors("generator tensors");
  const std::size_t flag_at = r.pos();
  const std::uint8_t has_train = r.u8("train-state flag");
  if (has_train > 1) throw CheckpointError("checkpoint: invalid train-state flag", flag_at);
  if (has_train) {
    TrainSnapshot t;
    const std::size_t tcfg_at = r.pos();
    try {
      t.config = train_from_text(r.str("train config"));
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("checkpoint: invalid train config: ") + e.what(), tcfg_at);
    }
    t.state.step = r.u64("step");
    const std::size_t rng_at = r.pos();
    const std::string rng_state = r.str("rng state");
    try {
      t.state.rng.load_state(rng_state);
    } catch (const std::exception&) {
      throw CheckpointError("checkpoint: unreadable rng state", rng_at);
    }
    t.state.last_total = r.f64("loss record");
    t.state.best_total = r.f64("loss record");
    t.state.best_step = r.u64("loss record");
    t.d_global = r.tensors("global discriminator tensors");
    t.d_local = r.tensors("local discriminator tensors");
    t.state.g_adam = r.adam();
    t.state.d_global_adam = r.adam();
    t.state.d_local_adam = r.adam();
    ckpt.train = std::move(t);
  }
  if (!r.done()) r.fail("unexpected trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint snapshot(const Generator& g) {
  Checkpoint c;
  c.generator_config = g.config();
  c.generator = copy_params(g.parameters());
  return c;
}

Checkpoint snapshot(const Trainer& t) {
  Checkpoint c = snapshot(t.networks().generator);
  TrainSnapshot s;
  s.config = t.config();
  s.state = t.state();
  s.d_global = copy_params(t.networks().d_global.parameters());
  s.d_local = copy_params(t.networks().d_local.parameters());
  c.train = std::move(s);
  return c;
}

Generator restore_generator(const Checkpoint& ckpt) {
  Generator g = Generator::create(ckpt.generator_config, 0);
  ParamList target = g.parameters();
  if (target.size() != ckpt.generator.size()) {
    throw CheckpointError("checkpoint: holds " + std::to_string(ckpt.generator.size()) + " generator tensors, model needs " +
                              std::to_string(target.size()),
                          0);
  }
  copy_values(ckpt.generator, target);
  return g;
}

Trainer restore_trainer(const Checkpoint& ckpt, Dataset data) {
  if (!ckpt.train) throw CheckpointError("checkpoint: no training state to resume from", 0);
  const TrainSnapshot& t = *ckpt.train;
  Rng unused;
  Networks nets = init_networks(ckpt.generator_config, t.config, unused);
  ParamList g = nets.generator.parameters();
  ParamList dg = nets.d_global.parameters();
  ParamList dl = nets.d_local.parameters();
  copy_values(restore_generator(ckpt).parameters(), g);
  copy_values(t.d_global, dg);
  copy_values(t.d_local, dl);
  return Trainer(std::move(nets), t.config, t.state, std::move(data));
}

}  // namespace msatr
