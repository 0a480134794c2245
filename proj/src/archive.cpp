#include "inbed/archive.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace inbed::io {

namespace {

constexpr char kMagic[8] = {'I', 'N', 'B', 'D', 'A', 'R', 'C', '\0'};

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::byte*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<std::byte> take() { return std::move(out_); }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  template <typename T>
  T pod() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::byte> raw(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > in_.size() - pos_) throw FormatError("archive truncated");
  }
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

std::string shape_str(const std::vector<std::int64_t>& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

}  // namespace

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i32: return 4;
    case DType::u8: return 1;
  }
  throw FormatError("unknown dtype");
}

const char* dtype_name(DType d) {
  switch (d) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i32: return "i32";
    case DType::u8: return "u8";
  }
  return "?";
}

std::int64_t NamedArray::numel() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void Archive::put_raw(const std::string& name, DType dtype, std::vector<std::int64_t> shape, const void* data,
                      std::size_t n_elems) {
  NamedArray a;
  a.dtype = dtype;
  a.shape = std::move(shape);
  if (a.numel() != static_cast<std::int64_t>(n_elems))
    throw FormatError("array '" + name + "': shape " + shape_str(a.shape) + " does not match " +
                      std::to_string(n_elems) + " elements");
  a.bytes.resize(n_elems * dtype_size(dtype));
  if (n_elems) std::memcpy(a.bytes.data(), data, a.bytes.size());
  arrays_[name] = std::move(a);
}

void Archive::put_f32(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> values) {
  put_raw(name, DType::f32, std::move(shape), values.data(), values.size());
}
void Archive::put_f64(const std::string& name, std::vector<std::int64_t> shape, std::span<const double> values) {
  put_raw(name, DType::f64, std::move(shape), values.data(), values.size());
}
void Archive::put_i32(const std::string& name, std::vector<std::int64_t> shape,
                      std::span<const std::int32_t> values) {
  put_raw(name, DType::i32, std::move(shape), values.data(), values.size());
}
void Archive::put_u8(const std::string& name, std::vector<std::int64_t> shape,
                     std::span<const std::uint8_t> values) {
  put_raw(name, DType::u8, std::move(shape), values.data(), values.size());
}

const NamedArray& Archive::at(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw FormatError("missing array '" + name + "'");
  return it->second;
}

const NamedArray& Archive::checked(const std::string& name, DType dtype,
                                   const std::vector<std::int64_t>& expected) const {
  const auto& a = at(name);
  if (a.dtype != dtype)
    throw FormatError("array '" + name + "' has dtype " + dtype_name(a.dtype) + ", expected " + dtype_name(dtype));
  if (!expected.empty()) {
    bool ok = expected.size() == a.shape.size();
    for (std::size_t i = 0; ok && i < expected.size(); ++i) ok = expected[i] < 0 || expected[i] == a.shape[i];
    if (!ok)
      throw FormatError("array '" + name + "' has shape " + shape_str(a.shape) + ", expected " +
                        shape_str(expected));
  }
  return a;
}

template <typename T>
static std::vector<T> copy_out(const NamedArray& a) {
  std::vector<T> v(a.bytes.size() / sizeof(T));
  if (!v.empty()) std::memcpy(v.data(), a.bytes.data(), a.bytes.size());
  return v;
}

std::vector<float> Archive::get_f32(const std::string& n, const std::vector<std::int64_t>& s) const {
  return copy_out<float>(checked(n, DType::f32, s));
}
std::vector<double> Archive::get_f64(const std::string& n, const std::vector<std::int64_t>& s) const {
  return copy_out<double>(checked(n, DType::f64, s));
}
std::vector<std::int32_t> Archive::get_i32(const std::string& n, const std::vector<std::int64_t>& s) const {
  return copy_out<std::int32_t>(checked(n, DType::i32, s));
}
std::vector<std::uint8_t> Archive::get_u8(const std::string& n, const std::vector<std::int64_t>& s) const {
  return copy_out<std::uint8_t>(checked(n, DType::u8, s));
}

std::vector<std::byte> Archive::serialize() const {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kContainerVersion);
  const std::string meta = meta_.dump();
  w.pod<std::uint64_t>(meta.size());
  w.raw(meta.data(), meta.size());
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(arrays_.size()));
  for (const auto& [name, a] : arrays_) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(a.dtype));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) w.pod<std::int64_t>(d);
    w.pod<std::uint64_t>(a.bytes.size());
    w.raw(a.bytes.data(), a.bytes.size());
  }
  return w.take();
}

Archive Archive::deserialize(std::span<const std::byte> bytes) {
  Reader r(bytes);
  auto magic = r.raw(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError("not an inbed archive (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kContainerVersion)
    throw VersionError("archive container version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kContainerVersion) + ")");
  Archive ar;
  const auto meta_len = r.pod<std::uint64_t>();
  auto meta = r.raw(meta_len);
  try {
    ar.meta_ = nlohmann::json::parse(reinterpret_cast<const char*>(meta.data()),
                                     reinterpret_cast<const char*>(meta.data()) + meta.size());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("archive metadata unreadable: ") + e.what());
  }
  const auto n = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto name_len = r.pod<std::uint32_t>();
    auto name_bytes = r.raw(name_len);
    std::string name(reinterpret_cast<const char*>(name_bytes.data()), name_len);
    NamedArray a;
    const auto dt = r.pod<std::uint8_t>();
    if (dt > static_cast<std::uint8_t>(DType::u8)) throw FormatError("array '" + name + "': unknown dtype");
    a.dtype = static_cast<DType>(dt);
    const auto ndim = r.pod<std::uint32_t>();
    if (ndim > 16) throw FormatError("array '" + name + "': implausible rank");
    for (std::uint32_t k = 0; k < ndim; ++k) {
      a.shape.push_back(r.pod<std::int64_t>());
      if (a.shape.back() < 0) throw FormatError("array '" + name + "': negative extent");
    }
    const auto nbytes = r.pod<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(a.numel()) * dtype_size(a.dtype))
      throw FormatError("array '" + name + "': payload size does not match shape");
    auto payload = r.raw(nbytes);
    a.bytes.assign(payload.begin(), payload.end());
    ar.arrays_[name] = std::move(a);
  }
  if (!r.done()) throw FormatError("trailing bytes after archive");
  return ar;
}

void Archive::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(std::as_bytes(std::span<const char>(buf)));
}

void set_format(Archive& ar, const std::string& format, int version) {
  ar.meta()["format"] = format;
  ar.meta()["version"] = version;
}

void require_format(const Archive& ar, const std::string& format, int version) {
  const auto& m = ar.meta();
  if (!m.contains("format") || m["format"] != format)
    throw FormatError("archive is not a '" + format + "' file");
  if (!m.contains("version") || !m["version"].is_number_integer() || m["version"].get<int>() != version)
    throw VersionError("'" + format + "' version " + (m.contains("version") ? m["version"].dump() : "<none>") +
                       " unsupported (expected " + std::to_string(version) + ")");
}

std::uint64_t fnv1a(std::span<const std::byte> bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (auto b : bytes) {
    h ^= static_cast<std::uint8_t>(b);
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& text) { return fnv1a(std::as_bytes(std::span<const char>(text))); }

std::string hex64(std::uint64_t value) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << value;
  return os.str();
}

}  // namespace inbed::io
