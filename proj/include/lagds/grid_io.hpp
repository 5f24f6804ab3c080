#pragma once
// GRD1 binary grid files and dataset directories (NNNNNN.grd1 + manifest.tsv).

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "lagds/grid.hpp"

namespace lagds {

enum class GridErrorKind { Io, BadMagic, UnsupportedVersion, Truncated, NonFinite, Malformed };

class GridFormatError : public std::runtime_error {
 public:
  GridFormatError(GridErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  GridErrorKind kind() const { return kind_; }

 private:
  GridErrorKind kind_;
};

// Layout (little-endian): "GRD1", u32 version, u32 channels, u32 height,
// u32 width, u32 name-block length, newline-separated names, u64 timestamp
// (0 if absent), channels*height*width binary32 values.
void write_grid(const GridField& field, const std::filesystem::path& path);
GridField read_grid(const std::filesystem::path& path);

// Writes 000000.grd1, 000001.grd1, ... and manifest.tsv into dir.
void write_dataset(const std::vector<GridField>& fields, const std::filesystem::path& dir);
// Reads the files listed in manifest.tsv, in manifest order.
std::vector<GridField> read_dataset(const std::filesystem::path& dir);

}  // namespace lagds
