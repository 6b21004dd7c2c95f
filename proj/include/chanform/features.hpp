#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chanform/channel.hpp"
#include "chanform/raster.hpp"
#include "chanform/voxel.hpp"

namespace chanform::feat {

enum class FeatureGroup {
    geometric,
    semantic_building,
    semantic_road,
    semantic_vegetation,
    physics,
    material,
    texture,
};

inline constexpr FeatureGroup kAllGroups[] = {
    FeatureGroup::geometric,        FeatureGroup::semantic_building,
    FeatureGroup::semantic_road,    FeatureGroup::semantic_vegetation,
    FeatureGroup::physics,          FeatureGroup::material,
    FeatureGroup::texture,
};

const char* group_name(FeatureGroup g);
FeatureGroup group_from_name(const std::string& name);

struct FeatureDef {
    std::string name;
    FeatureGroup group;
};

// Knobs controlling receptive fields and the material ray fan. Stored inside
// the schema so extraction is reproducible from the schema alone.
struct FeatureConfig {
    std::vector<double> ring_radii_m{10.0, 25.0, 50.0};
    int ring_samples = 32;            // points per ring
    int corridor_samples_along = 32;  // TX->RX corridor sampling grid
    int corridor_samples_across = 5;
    int fan_rays = 16;                // horizontal material probe fan at RX
    double fan_range_m = 60.0;
    bool include_normal_features = false; // wall-orientation features (voxels)
};

struct FeatureSchema {
    std::vector<FeatureDef> features;
    FeatureConfig config;

    std::size_t size() const { return features.size(); }
    // -1 when the name is absent.
    int index_of(const std::string& name) const;
    std::vector<std::size_t> group_indices(FeatureGroup g) const;
    bool has_group(FeatureGroup g) const;
    std::vector<FeatureGroup> groups_present() const;
    std::uint64_t fingerprint() const;
};

// The full feature set over the given groups (default: every group).
FeatureSchema default_schema(const FeatureConfig& cfg = {});
FeatureSchema schema_for_groups(const FeatureConfig& cfg,
                                const std::vector<FeatureGroup>& groups);

std::string schema_to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const std::string& text);

struct FeatureVector {
    std::vector<double> values;
    oracle::Link link;
};

// Compute one link's features. `voxels` may be null unless the schema
// contains the material group (or normal features), in which case a missing
// voxel grid raises missing_modality.
FeatureVector extract_link_features(const env::RasterEnv& raster,
                                    const env::VoxelEnv* voxels, const oracle::Link& link,
                                    const FeatureSchema& schema);

} // namespace chanform::feat
