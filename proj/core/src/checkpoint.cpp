#include "fdq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fdq/error.hpp"

namespace fdq {
namespace {

constexpr char kMagic[4] = {'F', 'D', 'Q', '1'};
constexpr std::string_view kMetaPrefix = "meta/";
constexpr std::string_view kTypePrefix = "meta/type/";

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw LoadError("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::add(std::string name, Tensor tensor) {
  if (has(name)) throw ContractError("duplicate checkpoint entry " + name);
  entries_.push_back({std::move(name), std::move(tensor)});
}

void Checkpoint::add_parameters(const ParameterSet& params, std::string_view prefix) {
  for (std::size_t i = 0; i < params.size(); ++i) add(std::string(prefix) + params[i].name, params[i].value);
}

void Checkpoint::load_parameters(ParameterSet& params, std::string_view prefix) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = get(std::string(prefix) + params[i].name);
    if (t.shape() != params[i].value.shape()) {
      throw LoadError("checkpoint entry " + params[i].name + " has shape " + t.shape_str() + ", model expects " +
                      params[i].value.shape_str());
    }
    params[i].value = t;
  }
}

void Checkpoint::set_meta(std::string_view key, double value) {
  add(std::string(kMetaPrefix) + std::string(key), Tensor::scalar(static_cast<float>(value)));
}

std::optional<double> Checkpoint::find_meta(std::string_view key) const {
  const std::string name = std::string(kMetaPrefix) + std::string(key);
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor.item();
  }
  return std::nullopt;
}

double Checkpoint::meta(std::string_view key) const {
  if (auto v = find_meta(key)) return *v;
  throw LoadError("checkpoint lacks metadata '" + std::string(key) + "'");
}

void Checkpoint::set_type(std::string_view tag) { add(std::string(kTypePrefix) + std::string(tag), Tensor::scalar(1.0f)); }

std::string Checkpoint::type() const {
  for (const auto& e : entries_) {
    if (e.name.starts_with(kTypePrefix)) return e.name.substr(kTypePrefix.size());
  }
  return {};
}

bool Checkpoint::has(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::get(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw LoadError("checkpoint lacks entry '" + std::string(name) + "'");
}

std::string Checkpoint::to_bytes() const {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, entries_.size());
  for (const auto& e : entries_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) put_le<std::uint64_t>(out, d);
  }
  for (const auto& e : entries_) {
    for (float v : e.tensor.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint Checkpoint::from_bytes(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string_view(kMagic, 4)) throw LoadError("not an FDQ1 checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw LoadError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint64_t>();
  std::vector<std::pair<std::string, Shape>> manifest;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len));
    const auto rank = r.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    manifest.emplace_back(std::move(name), std::move(shape));
  }
  Checkpoint ck;
  for (auto& [name, shape] : manifest) {
    std::vector<float> values(shape_size(shape));
    for (auto& v : values) v = std::bit_cast<float>(r.get<std::uint32_t>());
    ck.entries_.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (!r.done()) throw LoadError("trailing bytes after checkpoint payload");
  return ck;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw LoadError("cannot write checkpoint " + path);
  const auto bytes = to_bytes();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw LoadError("failed writing checkpoint " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_bytes(ss.str());
}

}  // namespace fdq
