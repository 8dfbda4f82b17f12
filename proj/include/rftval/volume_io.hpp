#pragma once

#include <filesystem>

#include "rftval/lattice.hpp"

namespace rftval {

// Raw format: `<stem>.raw` holds little-endian float32 values in x-fastest
// order followed by the mask as one byte per voxel; `<stem>.txt` is the
// sidecar with lines `dims nx ny nz`, `voxel_size vx vy vz`, `mask_offset B`.
void write_raw(const Volume& vol, const std::filesystem::path& raw_path);
Volume read_raw(const std::filesystem::path& raw_path);

/// Sidecar path for a raw volume: same stem, `.txt` extension.
std::filesystem::path raw_sidecar_path(const std::filesystem::path& raw_path);

// Single-file NIfTI-1 (`n+1`), float32 only. The mask is not stored; volumes
// read back get a full mask.
void write_nifti(const Volume& vol, const std::filesystem::path& path);
Volume read_nifti(const std::filesystem::path& path);

/// Dispatches on extension: `.nii` or `.raw`.
Volume read_volume(const std::filesystem::path& path);
void write_volume(const Volume& vol, const std::filesystem::path& path);

}  // namespace rftval
