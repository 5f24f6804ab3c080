#include "lagds/grid_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace lagds {

namespace {

constexpr char kMagic[4] = {'G', 'R', 'D', '1'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "GRD1 I/O assumes a little-endian host");

template <class T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, const std::string& name) : data_(data), name_(name) {}

  template <class T>
  T get(const char* what) {
    T v;
    need(sizeof(T), what);
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw GridFormatError(GridErrorKind::Truncated,
                            name_ + ": truncated while reading " + what);
    }
  }
  const std::string& data_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw GridFormatError(GridErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dataset_name(std::size_t i) {
  std::ostringstream ss;
  ss << std::setw(6) << std::setfill('0') << i << ".grd1";
  return ss.str();
}

}  // namespace

void write_grid(const GridField& field, const std::filesystem::path& path) {
  field.validate();
  std::string names;
  for (std::size_t c = 0; c < field.channel_names.size(); ++c) {
    if (field.channel_names[c].find('\n') != std::string::npos) {
      throw std::invalid_argument("write_grid: channel name contains a newline");
    }
    if (c) names += '\n';
    names += field.channel_names[c];
  }
  std::string buf(kMagic, 4);
  put<std::uint32_t>(buf, kVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(field.channels));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(field.height));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(field.width));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(names.size()));
  buf += names;
  put<std::uint64_t>(buf, static_cast<std::uint64_t>(field.timestamp.value_or(0)));
  buf.reserve(buf.size() + field.values.size() * 4);
  for (double v : field.values) put<float>(buf, static_cast<float>(v));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw GridFormatError(GridErrorKind::Io, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw GridFormatError(GridErrorKind::Io, "write failed for " + path.string());
}

GridField read_grid(const std::filesystem::path& path) {
  const std::string data = slurp(path);
  const std::string name = path.string();
  Reader r(data, name);
  if (r.remaining() < 4 || std::memcmp(data.data(), kMagic, 4) != 0) {
    throw GridFormatError(GridErrorKind::BadMagic, name + ": not a GRD1 file (bad magic)");
  }
  r.bytes(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw GridFormatError(GridErrorKind::UnsupportedVersion,
                          name + ": unsupported GRD1 version " + std::to_string(version));
  }
  const auto channels = r.get<std::uint32_t>("channels");
  const auto height = r.get<std::uint32_t>("height");
  const auto width = r.get<std::uint32_t>("width");
  if (channels == 0 || height == 0 || width == 0 || channels > (1u << 16) ||
      height > (1u << 16) || width > (1u << 16)) {
    throw GridFormatError(GridErrorKind::Malformed, name + ": invalid dimensions in header");
  }
  const auto name_len = r.get<std::uint32_t>("name-block length");
  const std::string names = r.bytes(name_len, "channel names");
  const auto ts = r.get<std::uint64_t>("timestamp");

  GridField f;
  f.channels = static_cast<int>(channels);
  f.height = static_cast<int>(height);
  f.width = static_cast<int>(width);
  if (ts != 0) f.timestamp = static_cast<std::int64_t>(ts);
  std::size_t start = 0;
  while (true) {
    const std::size_t nl = names.find('\n', start);
    f.channel_names.push_back(names.substr(start, nl - start));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  if (f.channel_names.size() != channels) {
    throw GridFormatError(GridErrorKind::Malformed,
                          name + ": header declares " + std::to_string(channels) +
                              " channels but lists " + std::to_string(f.channel_names.size()) +
                              " names");
  }
  const std::size_t count = static_cast<std::size_t>(channels) * height * width;
  if (r.remaining() != count * 4) {
    throw GridFormatError(GridErrorKind::Truncated,
                          name + ": payload has " + std::to_string(r.remaining()) +
                              " bytes, header requires " + std::to_string(count * 4));
  }
  f.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float v = r.get<float>("values");
    if (!std::isfinite(v)) {
      throw GridFormatError(GridErrorKind::NonFinite,
                            name + ": non-finite value at flat index " + std::to_string(i));
    }
    f.values[i] = v;
  }
  return f;
}

void write_dataset(const std::vector<GridField>& fields, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw GridFormatError(GridErrorKind::Io, "cannot write manifest in " + dir.string());
  manifest << "filename\ttimestamp\n";
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const std::string file = dataset_name(i);
    write_grid(fields[i], dir / file);
    manifest << file << '\t' << (fields[i].timestamp ? format_iso8601(*fields[i].timestamp) : "")
             << '\n';
  }
}

std::vector<GridField> read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw GridFormatError(GridErrorKind::Io, "no manifest.tsv in " + dir.string());
  std::vector<GridField> out;
  std::string line;
  bool header = true;
  while (std::getline(manifest, line)) {
    if (header) {
      header = false;
      if (line.rfind("filename", 0) == 0) continue;
    }
    if (line.empty()) continue;
    const std::string file = line.substr(0, line.find('\t'));
    out.push_back(read_grid(dir / file));
  }
  return out;
}

}  // namespace lagds
