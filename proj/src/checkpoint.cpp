#include "sqalab/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace sqalab {

using nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw CorruptFileError("checkpoint is truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(*take(1)); }
  std::uint32_t u32() {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4));
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  std::string str() {
    const std::uint32_t n = u32();
    return std::string(take(n), n);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(Model<float>& model, const CheckpointMeta& meta) {
  std::string out = "SQAL";
  put_u32(out, kCheckpointVersion);
  const json header{{"spec", spec_to_json(model.spec())},
                    {"meta",
                     {{"seed", meta.seed},
                      {"epoch", meta.epoch},
                      {"label_metric", meta.label_metric},
                      {"config_hash", meta.config_hash}}}};
  put_string(out, header.dump());
  const auto tensors = model.named_tensors();
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_string(out, name);
    out.push_back(0);  // dtype f32
    put_u32(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->dims()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t->values()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  }
  return out;
}

LoadedCheckpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4) throw CorruptFileError("checkpoint is truncated");
  if (std::string(r.take(4), 4) != "SQAL") throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version));
  }
  json header;
  try {
    header = json::parse(r.str());
  } catch (const json::parse_error& e) {
    throw CorruptFileError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  LoadedCheckpoint out;
  ModelSpec spec;
  try {
    spec = spec_from_json(header.at("spec"));
    const auto& m = header.at("meta");
    out.meta.seed = m.at("seed").get<std::uint64_t>();
    out.meta.epoch = m.at("epoch").get<std::size_t>();
    out.meta.label_metric = m.at("label_metric").get<std::string>();
    out.meta.config_hash = m.at("config_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("checkpoint header is incomplete: ") + e.what());
  }
  out.model = std::make_unique<Model<float>>(spec, 0);

  std::map<std::string, BasicTensor<float>*> slots;
  for (const auto& [name, t] : out.model->named_tensors()) slots[name] = t;
  const std::uint32_t count = r.u32();
  if (count != slots.size()) {
    throw CorruptFileError("checkpoint holds " + std::to_string(count) + " tensors, spec needs " +
                           std::to_string(slots.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const std::uint8_t dtype = r.u8();
    if (dtype != 0) throw VersionError("unsupported tensor dtype " + std::to_string(dtype));
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CorruptFileError("implausible tensor rank");
    Shape dims(rank);
    for (auto& d : dims) d = r.u32();
    auto it = slots.find(name);
    if (it == slots.end()) throw CorruptFileError("unexpected tensor '" + name + "'");
    if (it->second->dims() != dims) {
      throw CorruptFileError("tensor '" + name + "' has shape " + shape_string(dims) +
                             ", expected " + shape_string(it->second->dims()));
    }
    for (float& v : it->second->values()) {
      const std::uint32_t bits = r.u32();
      std::memcpy(&v, &bits, 4);
    }
    slots.erase(it);
  }
  if (!r.done()) throw CorruptFileError("trailing bytes after checkpoint payload");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, Model<float>& model,
                     const CheckpointMeta& meta) {
  const std::string bytes = encode_checkpoint(model, meta);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace sqalab
