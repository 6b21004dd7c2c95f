#pragma once

#include <string>
#include <vector>

#include "chanform/raster.hpp"
#include "chanform/voxel.hpp"

namespace chanform::io {

// Single-file container shared by all binary artifacts: an 8-byte magic, a
// little-endian uint64 header length, a UTF-8 JSON header, then raw
// little-endian float64 payload blocks in header-declared order.
struct Container {
    std::string magic;       // exactly 8 bytes
    std::string header_json;
    std::vector<std::vector<double>> blocks;
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path, const std::string& expected_magic);

inline constexpr const char* kRasterMagic = "CHFGRID1";
inline constexpr const char* kVoxelMagic = "CHFVOXL1";

void save_raster(const env::RasterEnv& r, const std::string& path);
env::RasterEnv load_raster(const std::string& path);
void raster_to_csv(const env::RasterEnv& r, const std::string& path);

void save_voxels(const env::VoxelEnv& v, const std::string& path);
env::VoxelEnv load_voxels(const std::string& path);
void voxels_to_csv(const env::VoxelEnv& v, const std::string& path);

std::uint64_t file_hash(const std::string& path); // FNV-1a over raw bytes

} // namespace chanform::io
