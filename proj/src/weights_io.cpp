#include "advarena/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace advarena {

namespace {

static_assert(std::endian::native == std::endian::little, "weights codec assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* section) {
    need(sizeof(T), section);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n, const char* section) {
    need(n, section);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* section) const {
    if (bytes_.size() - pos_ < n)
      throw FormatError("weights file truncated in " + std::string(section) + " at byte " + std::to_string(pos_) +
                        ": need " + std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) +
                        " remain");
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_weights(const WeightsFile& file) {
  std::vector<std::uint8_t> out{'A', 'D', 'V', 'W'};
  put<std::uint16_t>(out, WeightsFile::kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.spec_text.size()));
  out.insert(out.end(), file.spec_text.begin(), file.spec_text.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(out, e);
    for (double v : t.data()) put<double>(out, v);
  }
  return out;
}

WeightsFile decode_weights(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.get_string(4, "magic") != "ADVW") throw FormatError("weights file: bad magic at byte 0");
  const auto version = r.get<std::uint16_t>("version");
  if (version != WeightsFile::kVersion)
    throw FormatError("weights file: unsupported version " + std::to_string(version) + " at byte 4");
  WeightsFile file;
  const auto spec_len = r.get<std::uint32_t>("spec length");
  file.spec_text = r.get_string(spec_len, "spec text");
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string section = "tensor " + std::to_string(i);
    const auto rank = r.get<std::uint32_t>(section.c_str());
    if (rank == 0 || rank > 8)
      throw FormatError("weights file: " + section + " has invalid rank " + std::to_string(rank) + " at byte " +
                        std::to_string(r.pos() - 4));
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      e = r.get<std::uint64_t>(section.c_str());
      if (e == 0 || e > (std::size_t{1} << 32))
        throw FormatError("weights file: " + section + " has invalid extent at byte " + std::to_string(r.pos() - 8));
      n *= e;
    }
    r.need(n * sizeof(double), (section + " data").c_str());
    std::vector<double> data(n);
    for (auto& v : data) v = r.get<double>(section.c_str());
    file.tensors.emplace_back(std::move(shape), std::move(data));
  }
  if (r.remaining() != 0)
    throw FormatError("weights file: " + std::to_string(r.remaining()) + " trailing bytes after byte " +
                      std::to_string(r.pos()) + " (declared length does not match file)");
  return file;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_weights_file(const std::filesystem::path& path, const WeightsFile& file) {
  write_bytes(path, encode_weights(file));
}

WeightsFile read_weights_file(const std::filesystem::path& path) {
  try {
    return decode_weights(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::uint64_t hash_tensors(const std::vector<Tensor>& tensors) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& t : tensors) {
    for (auto e : t.shape()) feed(&e, sizeof e);
    feed(t.data().data(), t.size() * sizeof(double));
  }
  return h;
}

}  // namespace advarena
