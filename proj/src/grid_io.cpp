#include "chanform/grid_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chanform/common.hpp"

using nlohmann::json;

namespace chanform::io {

void write_container(const std::string& path, const Container& c) {
    require(c.magic.size() == 8, ErrorKind::io, "container magic must be 8 bytes");
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
    out.write(c.magic.data(), 8);
    std::uint64_t hlen = c.header_json.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(c.header_json.data(), static_cast<std::streamsize>(hlen));
    for (const auto& block : c.blocks) {
        out.write(reinterpret_cast<const char*>(block.data()),
                  static_cast<std::streamsize>(block.size() * sizeof(double)));
    }
    require(out.good(), ErrorKind::io, "write failed for '" + path + "'");
}

Container read_container(const std::string& path, const std::string& expected_magic) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::io, "cannot open '" + path + "'");
    Container c;
    c.magic.resize(8);
    in.read(c.magic.data(), 8);
    require(in.good() && c.magic == expected_magic, ErrorKind::io,
            "'" + path + "' is not a " + expected_magic + " file");
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    require(in.good() && hlen < (1ull << 32), ErrorKind::io, "corrupt container header");
    c.header_json.resize(hlen);
    in.read(c.header_json.data(), static_cast<std::streamsize>(hlen));
    require(in.good(), ErrorKind::io, "truncated container header");

    // Block sizes come from the JSON header's "blocks" list.
    json h;
    try {
        h = json::parse(c.header_json);
    } catch (const json::exception& e) {
        fail(ErrorKind::io, std::string("corrupt container JSON: ") + e.what());
    }
    for (const auto& b : h.at("blocks")) {
        std::size_t count = b.at("count").get<std::size_t>();
        std::vector<double> block(count);
        in.read(reinterpret_cast<char*>(block.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        require(in.good() || count == 0, ErrorKind::io, "truncated container payload");
        c.blocks.push_back(std::move(block));
    }
    return c;
}

namespace {

json block_desc(const std::string& name, std::size_t count) {
    return json{{"name", name}, {"count", count}};
}

} // namespace

void save_raster(const env::RasterEnv& r, const std::string& path) {
    json h;
    h["format_version"] = 1;
    h["kind"] = "raster2d";
    h["resolution_m"] = r.resolution_m;
    h["nx"] = r.nx;
    h["ny"] = r.ny;
    h["origin"] = {r.origin.x, r.origin.y};
    h["blocks"] = json::array();
    const char* names[] = {"building", "road", "vegetation", "open", "height", "texture"};
    const std::vector<double>* chans[] = {&r.building, &r.road, &r.vegetation,
                                          &r.open, &r.height, &r.texture};
    Container c;
    c.magic = kRasterMagic;
    for (int i = 0; i < 6; ++i) {
        h["blocks"].push_back(block_desc(names[i], chans[i]->size()));
        c.blocks.push_back(*chans[i]);
    }
    c.header_json = h.dump();
    write_container(path, c);
}

env::RasterEnv load_raster(const std::string& path) {
    Container c = read_container(path, kRasterMagic);
    json h = json::parse(c.header_json);
    require(h.at("kind") == "raster2d", ErrorKind::io, "container is not a raster");
    env::RasterEnv r;
    r.resolution_m = h.at("resolution_m").get<double>();
    r.nx = h.at("nx").get<int>();
    r.ny = h.at("ny").get<int>();
    r.origin = {h.at("origin").at(0).get<double>(), h.at("origin").at(1).get<double>()};
    require(c.blocks.size() == 6, ErrorKind::io, "raster container needs 6 channels");
    r.building = c.blocks[0];
    r.road = c.blocks[1];
    r.vegetation = c.blocks[2];
    r.open = c.blocks[3];
    r.height = c.blocks[4];
    r.texture = c.blocks[5];
    std::size_t n = static_cast<std::size_t>(r.nx) * r.ny;
    require(r.building.size() == n, ErrorKind::io, "raster channel size mismatch");
    return r;
}

void raster_to_csv(const env::RasterEnv& r, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
    out << "ix,iy,x,y,building,road,vegetation,open,height,texture\n";
    for (int iy = 0; iy < r.ny; ++iy) {
        for (int ix = 0; ix < r.nx; ++ix) {
            std::size_t i = r.idx(ix, iy);
            Vec2 c = r.cell_center(ix, iy);
            out << ix << ',' << iy << ',' << c.x << ',' << c.y << ','
                << r.building[i] << ',' << r.road[i] << ',' << r.vegetation[i] << ','
                << r.open[i] << ',' << r.height[i] << ',' << r.texture[i] << '\n';
        }
    }
}

void save_voxels(const env::VoxelEnv& v, const std::string& path) {
    json h;
    h["format_version"] = 1;
    h["kind"] = "voxel3d";
    h["voxel_size_m"] = v.voxel_size_m;
    h["nx"] = v.nx;
    h["ny"] = v.ny;
    h["nz"] = v.nz;
    h["origin"] = {v.origin.x, v.origin.y};
    json mats = json::array();
    for (const auto& m : v.materials) {
        mats.push_back({{"id", m.id},
                        {"relative_permittivity", m.relative_permittivity},
                        {"conductivity_s_per_m", m.conductivity_s_per_m},
                        {"scattering_coefficient", m.scattering_coefficient},
                        {"perfect_conductor", m.perfect_conductor}});
    }
    h["materials"] = mats;

    std::size_t n = v.occupancy.size();
    Container c;
    c.magic = kVoxelMagic;
    c.blocks.resize(3);
    c.blocks[0].resize(n);
    c.blocks[1].resize(n);
    c.blocks[2].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        c.blocks[0][i] = v.occupancy[i];
        c.blocks[1][i] = v.material[i];
        c.blocks[2][i] = v.exposed_mask[i];
    }
    h["blocks"] = json::array({block_desc("occupancy", n), block_desc("material", n),
                               block_desc("exposed_mask", n)});
    c.header_json = h.dump();
    write_container(path, c);
}

env::VoxelEnv load_voxels(const std::string& path) {
    Container c = read_container(path, kVoxelMagic);
    json h = json::parse(c.header_json);
    require(h.at("kind") == "voxel3d", ErrorKind::io, "container is not a voxel grid");
    env::VoxelEnv v;
    v.voxel_size_m = h.at("voxel_size_m").get<double>();
    v.nx = h.at("nx").get<int>();
    v.ny = h.at("ny").get<int>();
    v.nz = h.at("nz").get<int>();
    v.origin = {h.at("origin").at(0).get<double>(), h.at("origin").at(1).get<double>()};
    for (const auto& m : h.at("materials")) {
        env::MaterialSpec spec;
        spec.id = m.at("id").get<std::string>();
        spec.relative_permittivity = m.at("relative_permittivity").get<double>();
        spec.conductivity_s_per_m = m.at("conductivity_s_per_m").get<double>();
        spec.scattering_coefficient = m.at("scattering_coefficient").get<double>();
        spec.perfect_conductor = m.value("perfect_conductor", false);
        v.materials.push_back(spec);
    }
    require(c.blocks.size() == 3, ErrorKind::io, "voxel container needs 3 blocks");
    std::size_t n = c.blocks[0].size();
    v.occupancy.resize(n);
    v.material.resize(n);
    v.exposed_mask.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        v.occupancy[i] = static_cast<std::uint8_t>(c.blocks[0][i]);
        v.material[i] = static_cast<std::int16_t>(c.blocks[1][i]);
        v.exposed_mask[i] = static_cast<std::uint8_t>(c.blocks[2][i]);
    }
    return v;
}

void voxels_to_csv(const env::VoxelEnv& v, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
    out << "ix,iy,iz,material,exposed_mask\n";
    for (int iz = 0; iz < v.nz; ++iz) {
        for (int iy = 0; iy < v.ny; ++iy) {
            for (int ix = 0; ix < v.nx; ++ix) {
                std::size_t i = v.idx(ix, iy, iz);
                if (!v.occupancy[i]) continue;
                out << ix << ',' << iy << ',' << iz << ',' << v.material[i] << ','
                    << static_cast<int>(v.exposed_mask[i]) << '\n';
            }
        }
    }
}

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::io, "cannot open '" + path + "' for hashing");
    std::uint64_t h = 1469598103934665603ull;
    char buf[65536];
    while (in.good()) {
        in.read(buf, sizeof(buf));
        std::streamsize got = in.gcount();
        if (got > 0) h = fnv1a(buf, static_cast<std::size_t>(got), h);
    }
    return h;
}

} // namespace chanform::io
