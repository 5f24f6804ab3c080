#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "lagds/grid_io.hpp"

using namespace lagds;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lagds_test_grid_io";
  fs::create_directories(dir);
  return dir / name;
}

GridField sample_field() {
  SyntheticFieldConfig cfg;
  cfg.seed = 3;
  cfg.size = 16;
  cfg.channels = 2;
  GridField f = generate_synthetic(cfg)[0];
  f.channel_names = {"u", "v"};
  return f;
}

void overwrite(const fs::path& p, std::size_t offset, const void* bytes, std::size_t n) {
  std::fstream io(p, std::ios::binary | std::ios::in | std::ios::out);
  io.seekp(static_cast<std::streamoff>(offset));
  io.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
}

GridErrorKind kind_of(const fs::path& p) {
  try {
    read_grid(p);
  } catch (const GridFormatError& e) {
    return e.kind();
  }
  FAIL("expected a format error");
  return GridErrorKind::Io;
}

}  // namespace

TEST_CASE("round trip is bit-exact") {
  const GridField f = sample_field();
  const fs::path p = scratch("roundtrip.grd1");
  write_grid(f, p);
  CHECK(read_grid(p) == f);
  CHECK(fs::file_size(p) == 4 + 5 * 4 + 3 + 8 + f.size() * 4);

  GridField no_time = f;
  no_time.timestamp.reset();
  write_grid(no_time, p);
  CHECK(read_grid(p) == no_time);
}

TEST_CASE("format errors are distinguished") {
  const GridField f = sample_field();
  const fs::path p = scratch("broken.grd1");

  write_grid(f, p);
  overwrite(p, 0, "GRD2", 4);
  CHECK(kind_of(p) == GridErrorKind::BadMagic);

  write_grid(f, p);
  fs::resize_file(p, fs::file_size(p) - 4);
  CHECK(kind_of(p) == GridErrorKind::Truncated);

  write_grid(f, p);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  overwrite(p, fs::file_size(p) - 4, &nan, 4);
  CHECK(kind_of(p) == GridErrorKind::NonFinite);

  write_grid(f, p);
  const std::uint32_t v = 9;
  overwrite(p, 4, &v, 4);
  CHECK(kind_of(p) == GridErrorKind::UnsupportedVersion);

  CHECK(kind_of(scratch("missing.grd1")) == GridErrorKind::Io);
}

TEST_CASE("dataset directory round trip") {
  SyntheticFieldConfig cfg;
  cfg.seed = 5;
  cfg.count = 4;
  cfg.size = 8;
  const auto fields = generate_synthetic(cfg);
  const fs::path dir = scratch("dataset");
  fs::remove_all(dir);
  write_dataset(fields, dir);
  CHECK(fs::exists(dir / "000003.grd1"));
  CHECK(read_dataset(dir) == fields);
}
