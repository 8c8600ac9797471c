#include "srave/container.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace srave {

static_assert(std::endian::native == std::endian::little,
              "container codec assumes a little-endian host");

void WeightContainer::put(std::string name, Tensor t) {
  if (contains(name)) {
    throw ContainerError(ContainerError::Kind::DuplicateName, "duplicate entry name: " + name);
  }
  if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ContainerError(ContainerError::Kind::Malformed, "entry name too long");
  }
  entries_.emplace_back(std::move(name), std::move(t));
}

void WeightContainer::set(std::string name, Tensor t) {
  for (auto& [n, v] : entries_) {
    if (n == name) {
      v = std::move(t);
      return;
    }
  }
  put(std::move(name), std::move(t));
}

const Tensor* WeightContainer::find(std::string_view name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const auto& e) { return e.first == name; });
  return it == entries_.end() ? nullptr : &it->second;
}

bool WeightContainer::contains(std::string_view name) const { return find(name) != nullptr; }

const Tensor& WeightContainer::get(std::string_view name) const {
  if (const Tensor* t = find(name)) return *t;
  throw ModelError("missing entry: " + std::string(name));
}

void WeightContainer::put_text(std::string name, std::string_view text) {
  Tensor t({text.size()});
  std::transform(text.begin(), text.end(), t.data.begin(),
                 [](char ch) { return static_cast<float>(static_cast<unsigned char>(ch)); });
  set(std::move(name), std::move(t));
}

std::string WeightContainer::get_text(std::string_view name) const {
  const Tensor& t = get(name);
  std::string s(t.numel(), '\0');
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const float v = t.data[i];
    if (!(v >= 0.0f && v <= 255.0f) || v != std::floor(v)) {
      throw ContainerError(ContainerError::Kind::Malformed,
                           "entry " + std::string(name) + " is not byte text");
    }
    s[i] = static_cast<char>(static_cast<unsigned char>(v));
  }
  return s;
}

namespace {

template <typename T>
void put_le(std::vector<char>& out, T v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& b) : bytes_(b) {}

  template <typename T>
  T take() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  const char* take_bytes(std::size_t n) {
    need(n);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw ContainerError(ContainerError::Kind::Truncated, "container truncated at byte " +
                                                                std::to_string(pos_));
    }
  }
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> serialize_container(const WeightContainer& c) {
  std::vector<char> out;
  out.insert(out.end(), {'S', 'R', 'A', 'V'});
  put_le<std::uint32_t>(out, WeightContainer::kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.size()));
  for (const auto& [name, t] : c.entries()) {
    if (t.rank() > std::numeric_limits<std::uint8_t>::max()) {
      throw ContainerError(ContainerError::Kind::Malformed, "tensor rank too large: " + name);
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    const auto* p = reinterpret_cast<const char*>(t.data.data());
    out.insert(out.end(), p, p + t.numel() * sizeof(float));
  }
  return out;
}

WeightContainer parse_container(const std::vector<char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "SRAV", 4) != 0) {
    throw ContainerError(ContainerError::Kind::BadMagic, "bad magic: not an SRAV container");
  }
  Reader r(bytes);
  r.take_bytes(4);
  const auto version = r.take<std::uint32_t>();
  if (version != WeightContainer::kVersion) {
    throw ContainerError(ContainerError::Kind::VersionMismatch,
                         "container version " + std::to_string(version) + " unsupported (expected " +
                             std::to_string(WeightContainer::kVersion) + ")");
  }
  const auto count = r.take<std::uint32_t>();
  WeightContainer c;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.take<std::uint16_t>();
    std::string name(r.take_bytes(name_len), name_len);
    const auto rank = r.take<std::uint8_t>();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = r.take<std::uint32_t>();
    std::size_t n = 1;
    for (auto d : shape) {
      if (d != 0 && n > bytes.size() / d) {
        throw ContainerError(ContainerError::Kind::Truncated, "entry " + name + " exceeds file size");
      }
      n *= d;
    }
    const char* payload = r.take_bytes(n * sizeof(float));
    Tensor t(shape);
    std::memcpy(t.data.data(), payload, t.numel() * sizeof(float));
    c.put(std::move(name), std::move(t));
  }
  if (!r.at_end()) {
    throw ContainerError(ContainerError::Kind::Malformed, "trailing bytes after last entry");
  }
  return c;
}

void save_container(const WeightContainer& c, const std::filesystem::path& path) {
  const auto bytes = serialize_container(c);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContainerError(ContainerError::Kind::Io, "cannot write " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw ContainerError(ContainerError::Kind::Io, "write failed: " + path.string());
}

WeightContainer load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError(ContainerError::Kind::Io, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_container(bytes);
}

}  // namespace srave
