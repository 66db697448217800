#include "derrt/numerics/param_file.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace derrt::num {

namespace {

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get_le() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("parameter file truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& ParamFile::get(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.tensor;
  throw std::out_of_range("parameter file has no tensor named '" + name + "'");
}

std::string encode_params(const ParamFile& file) {
  std::string out(kParamMagic, sizeof(kParamMagic));
  put_le<std::uint32_t>(out, kParamVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.manifest_json.size()));
  out += file.manifest_json;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, t] : file.tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
    for (double v : t.values()) put_f64(out, v);
  }
  return out;
}

ParamFile decode_params(const std::string& bytes) {
  Reader r(bytes);
  if (r.get_bytes(sizeof(kParamMagic)) != std::string(kParamMagic, sizeof(kParamMagic)))
    throw std::runtime_error("not a parameter file (bad magic)");
  const auto version = r.get_le<std::uint32_t>();
  if (version != kParamVersion)
    throw std::runtime_error("unsupported parameter file version " + std::to_string(version));
  ParamFile file;
  file.manifest_json = r.get_bytes(r.get_le<std::uint32_t>());
  const auto count = r.get_le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.get_bytes(r.get_le<std::uint32_t>());
    Shape shape(r.get_le<std::uint32_t>());
    for (auto& d : shape) d = r.get_le<std::uint64_t>();
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = r.get_f64();
    nt.tensor = Tensor(std::move(shape), std::move(values));
    file.tensors.push_back(std::move(nt));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes in parameter file");
  return file;
}

void write_params(const std::filesystem::path& path, const ParamFile& file) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_params(file);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ParamFile read_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return decode_params(ss.str());
}

}  // namespace derrt::num
