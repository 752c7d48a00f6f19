#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>

#include "gbm/hash.hpp"
#include "gbm/model.hpp"

namespace gbm {

namespace detail {

constexpr char kCheckpointMagic[8] = {'G', 'B', 'M', 'C', 'K', 'P', 'T', '\n'};
constexpr uint32_t kCheckpointVersion = 1;

inline void append_u16(std::string& out, uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void append_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void append_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw ValidationError("checkpoint truncated");
  }
  void raw(void* dst, size_t n) {
    need(n);
    std::memcpy(dst, buf.data() + pos, n);
    pos += n;
  }
  uint16_t u16() {
    need(2);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace detail

// Single-file binary checkpoint: magic, version, scalar width, model spec
// JSON, epoch counter, named parameter tensors, trailing FNV-1a checksum.
template <typename S>
void save_checkpoint(const std::filesystem::path& path, const Model<S>& model,
                     int trained_epochs) {
  std::string out;
  out.append(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::append_u32(out, detail::kCheckpointVersion);
  out.push_back(static_cast<char>(sizeof(S)));
  const std::string spec_json = model.spec().to_json().dump();
  detail::append_u32(out, static_cast<uint32_t>(spec_json.size()));
  out += spec_json;
  detail::append_u32(out, static_cast<uint32_t>(trained_epochs));
  detail::append_u32(out, static_cast<uint32_t>(model.params().size()));
  for (const auto& p : model.params()) {
    detail::append_u16(out, static_cast<uint16_t>(p.name.size()));
    out += p.name;
    const auto& t = p.value();
    for (int d : {t.n, t.c, t.h, t.w}) detail::append_u32(out, static_cast<uint32_t>(d));
    const size_t bytes = static_cast<size_t>(t.size()) * sizeof(S);
    out.append(reinterpret_cast<const char*>(t.data.data()), bytes);
  }
  detail::append_u64(out, fnv1a64(std::string_view(out.data(), out.size())));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  f.flush();
  if (!f) throw IoError("failed writing checkpoint: " + path.string());
}

template <typename S>
struct LoadedCheckpoint {
  ModelSpec spec;
  int trained_epochs = 0;
  std::unique_ptr<Model<S>> model;
};

template <typename S>
LoadedCheckpoint<S> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (buf.size() < sizeof(detail::kCheckpointMagic) + 8) {
    throw ValidationError("checkpoint truncated");
  }
  const uint64_t stored_hash = [&] {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[buf.size() - 8 + i])) << (8 * i);
    }
    return v;
  }();
  if (fnv1a64(std::string_view(buf.data(), buf.size() - 8)) != stored_hash) {
    throw ValidationError("checkpoint checksum mismatch (file corrupt)");
  }

  detail::ByteReader r{buf};
  char magic[sizeof(detail::kCheckpointMagic)];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0) {
    throw ValidationError("not a model checkpoint (bad magic)");
  }
  const uint32_t version = r.u32();
  if (version != detail::kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  uint8_t scalar_size = 0;
  r.raw(&scalar_size, 1);
  if (scalar_size != 4 && scalar_size != 8) {
    throw ValidationError("checkpoint has unsupported scalar width");
  }

  LoadedCheckpoint<S> out;
  const uint32_t spec_len = r.u32();
  nlohmann::json spec_json;
  try {
    spec_json = nlohmann::json::parse(r.str(spec_len));
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("checkpoint model spec is not valid JSON");
  }
  out.spec = ModelSpec::from_json(spec_json);
  out.trained_epochs = static_cast<int>(r.u32());
  out.model = build_model<S>(out.spec);

  const uint32_t count = r.u32();
  if (count != out.model->params().size()) {
    throw ValidationError("checkpoint parameter count does not match model spec");
  }
  for (const auto& p : out.model->params()) {
    const std::string name = r.str(r.u16());
    if (name != p.name) {
      throw ValidationError("checkpoint parameter '" + name + "' does not match expected '" +
                            p.name + "'");
    }
    int dims[4];
    for (int& d : dims) d = static_cast<int>(r.u32());
    auto& t = p.value();
    if (dims[0] != t.n || dims[1] != t.c || dims[2] != t.h || dims[3] != t.w) {
      throw ValidationError("checkpoint parameter '" + name + "' has mismatched shape");
    }
    if (scalar_size == sizeof(S)) {
      r.raw(t.data.data(), static_cast<size_t>(t.size()) * sizeof(S));
    } else if (scalar_size == 4) {
      std::vector<float> tmp(static_cast<size_t>(t.size()));
      r.raw(tmp.data(), tmp.size() * sizeof(float));
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = static_cast<S>(tmp[static_cast<size_t>(i)]);
    } else {
      std::vector<double> tmp(static_cast<size_t>(t.size()));
      r.raw(tmp.data(), tmp.size() * sizeof(double));
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = static_cast<S>(tmp[static_cast<size_t>(i)]);
    }
  }
  if (r.pos != buf.size() - 8) throw ValidationError("checkpoint has trailing garbage");
  return out;
}

}  // namespace gbm
