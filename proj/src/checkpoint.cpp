// SPDX-License-Identifier: Apache-2.0

#include "fcnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fcnet/config.hpp"
#include "fcnet/image_io.hpp"

namespace fcnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof v);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void floats(const Tensor& t) { buf_.append(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(float)); }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str() {
    const auto len = pod<std::uint32_t>();
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }
  void floats(Tensor& t) {
    need(t.numel() * sizeof(float));
    std::memcpy(t.data(), bytes_.data() + pos_, t.numel() * sizeof(float));
    pos_ += t.numel() * sizeof(float);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Model& model, const Adam& optimizer, std::uint64_t epoch,
                              const std::string& rng_state) {
  const auto& params = model.parameters().items();
  if (optimizer.first_moments().size() != params.size())
    throw InvalidArgument("checkpoint: optimizer does not match model parameters");
  Writer w;
  for (char c : kCheckpointMagic) w.pod(c);
  w.pod(kCheckpointVersion);
  w.str(to_text(model.config()));
  w.pod(epoch);
  w.str(rng_state);
  w.pod(static_cast<std::uint64_t>(optimizer.step_count()));
  w.pod(optimizer.options().lr);
  w.pod(optimizer.options().beta1);
  w.pod(optimizer.options().beta2);
  w.pod(optimizer.options().eps);
  w.pod(static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& v = params[i].var.value();
    w.str(params[i].name);
    w.pod(static_cast<std::uint32_t>(v.rank()));
    for (int e : v.shape()) w.pod(static_cast<std::uint32_t>(e));
    w.floats(v);
    w.floats(optimizer.first_moments()[i]);
    w.floats(optimizer.second_moments()[i]);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes, const ModelConfig* expected) {
  Reader r(bytes);
  for (char c : kCheckpointMagic)
    if (r.pod<char>() != c) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const ModelConfig config = model_config_from(parse_key_values(r.str()));
  if (expected && to_text(*expected) != to_text(config))
    throw ConfigMismatch("checkpoint config differs from the requested model config:\n" + to_text(config));

  Checkpoint ck;
  ck.epoch = r.pod<std::uint64_t>();
  ck.rng_state = r.str();
  const auto steps = r.pod<std::uint64_t>();
  AdamOptions opts;
  opts.lr = r.pod<float>();
  opts.beta1 = r.pod<float>();
  opts.beta2 = r.pod<float>();
  opts.eps = r.pod<float>();

  ck.model = std::make_unique<Model>(config, 0);
  ParameterSet& params = ck.model->parameters();
  ck.optimizer = Adam(params, opts);
  ck.optimizer.set_step_count(static_cast<std::int64_t>(steps));
  const auto count = r.pod<std::uint32_t>();
  if (count != params.size())
    throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                      std::to_string(params.size()));
  for (std::size_t i = 0; i < count; ++i) {
    const Parameter& p = params.items()[i];
    const std::string name = r.str();
    if (name != p.name) throw FormatError("checkpoint parameter '" + name + "' where '" + p.name + "' expected");
    Shape shape(r.pod<std::uint32_t>());
    for (int& e : shape) e = static_cast<int>(r.pod<std::uint32_t>());
    if (shape != p.var.shape())
      throw FormatError("checkpoint parameter " + name + " has shape " + to_string(shape) + ", expected " +
                        to_string(p.var.shape()));
    ad::Var var = p.var;
    r.floats(var.mutable_value());
    r.floats(ck.optimizer.first_moments()[i]);
    r.floats(ck.optimizer.second_moments()[i]);
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const Adam& optimizer,
                     std::uint64_t epoch, const std::string& rng_state) {
  write_file_atomic(path, encode_checkpoint(model, optimizer, epoch, rng_state));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, expected);
}

}  // namespace fcnet
