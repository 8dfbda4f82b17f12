#include "rftval/volume_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rftval/error.hpp"

namespace rftval {
namespace {

static_assert(std::endian::native == std::endian::little, "volume I/O assumes a little-endian host");

constexpr std::size_t nifti_header_size = 348;
constexpr std::size_t nifti_vox_offset = 352;
constexpr std::int16_t nifti_float32 = 16;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io_error, "cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io_error, "cannot open " + path.string());
  return in;
}

std::vector<float> to_float32(const Volume& vol) {
  std::vector<float> out(vol.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(vol[i]);
  return out;
}

template <typename T>
void put(std::array<char, nifti_header_size>& hdr, std::size_t offset, T value) {
  std::memcpy(hdr.data() + offset, &value, sizeof(T));
}

template <typename T>
T get(const std::array<char, nifti_header_size>& hdr, std::size_t offset) {
  T value;
  std::memcpy(&value, hdr.data() + offset, sizeof(T));
  return value;
}

}  // namespace

std::filesystem::path raw_sidecar_path(const std::filesystem::path& raw_path) {
  auto p = raw_path;
  p.replace_extension(".txt");
  return p;
}

void write_raw(const Volume& vol, const std::filesystem::path& raw_path) {
  const auto values = to_float32(vol);
  const std::size_t mask_offset = values.size() * sizeof(float);
  {
    auto out = open_out(raw_path);
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(mask_offset));
    out.write(reinterpret_cast<const char*>(vol.mask().data()), static_cast<std::streamsize>(vol.mask().size()));
    if (!out) fail(ErrorKind::io_error, "write failed: " + raw_path.string());
  }
  auto side = open_out(raw_sidecar_path(raw_path));
  const auto& d = vol.grid().dims();
  const auto& v = vol.grid().voxel_size();
  side.precision(17);
  side << "dims " << d[0] << ' ' << d[1] << ' ' << d[2] << '\n'
       << "voxel_size " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n'
       << "mask_offset " << mask_offset << '\n';
  if (!side) fail(ErrorKind::io_error, "write failed: " + raw_sidecar_path(raw_path).string());
}

Volume read_raw(const std::filesystem::path& raw_path) {
  auto side = open_in(raw_sidecar_path(raw_path));
  Index3 dims{0, 0, 0};
  Vec3 vox{0, 0, 0};
  std::size_t mask_offset = 0;
  bool have_dims = false, have_vox = false, have_mask = false;
  std::string line;
  while (std::getline(side, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "dims") have_dims = static_cast<bool>(ls >> dims[0] >> dims[1] >> dims[2]);
    else if (key == "voxel_size") have_vox = static_cast<bool>(ls >> vox[0] >> vox[1] >> vox[2]);
    else if (key == "mask_offset") have_mask = static_cast<bool>(ls >> mask_offset);
  }
  if (!have_dims || !have_vox || !have_mask)
    fail(ErrorKind::io_error, "incomplete raw sidecar for " + raw_path.string());
  Grid grid(dims, vox);
  std::vector<float> values(grid.size());
  Mask mask(grid.size());
  auto in = open_in(raw_path);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  in.seekg(static_cast<std::streamoff>(mask_offset));
  in.read(reinterpret_cast<char*>(mask.data()), static_cast<std::streamsize>(mask.size()));
  if (!in) fail(ErrorKind::io_error, "truncated raw volume " + raw_path.string());
  return Volume(grid, std::move(mask), std::vector<double>(values.begin(), values.end()));
}

void write_nifti(const Volume& vol, const std::filesystem::path& path) {
  std::array<char, nifti_header_size> hdr{};
  const auto& d = vol.grid().dims();
  const auto& v = vol.grid().voxel_size();
  put<std::int32_t>(hdr, 0, static_cast<std::int32_t>(nifti_header_size));  // sizeof_hdr
  put<std::int16_t>(hdr, 40, 3);                                            // dim[0]
  for (int a = 0; a < 3; ++a) put<std::int16_t>(hdr, 42 + 2 * a, static_cast<std::int16_t>(d[a]));
  for (int a = 3; a < 8; ++a) put<std::int16_t>(hdr, 42 + 2 * a, 1);
  put<std::int16_t>(hdr, 70, nifti_float32);  // datatype
  put<std::int16_t>(hdr, 72, 32);             // bitpix
  put<float>(hdr, 76, 1.0f);                  // pixdim[0] (qfac)
  for (int a = 0; a < 3; ++a) put<float>(hdr, 80 + 4 * a, static_cast<float>(v[a]));
  put<float>(hdr, 108, static_cast<float>(nifti_vox_offset));  // vox_offset
  put<float>(hdr, 112, 1.0f);                                   // scl_slope
  put<char>(hdr, 123, 2);                                       // xyzt_units: mm
  std::memcpy(hdr.data() + 344, "n+1\0", 4);

  const auto values = to_float32(vol);
  auto out = open_out(path);
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  const char extension[4] = {0, 0, 0, 0};
  out.write(extension, 4);
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) fail(ErrorKind::io_error, "write failed: " + path.string());
}

Volume read_nifti(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::array<char, nifti_header_size> hdr{};
  in.read(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  if (!in) fail(ErrorKind::io_error, "truncated NIfTI header in " + path.string());
  if (get<std::int32_t>(hdr, 0) != static_cast<std::int32_t>(nifti_header_size))
    fail(ErrorKind::io_error, "not a little-endian NIfTI-1 file: " + path.string());
  if (std::memcmp(hdr.data() + 344, "n+1", 4) != 0)
    fail(ErrorKind::io_error, "only single-file NIfTI (magic n+1) is supported: " + path.string());
  if (get<std::int16_t>(hdr, 70) != nifti_float32)
    fail(ErrorKind::io_error, "only float32 NIfTI data is supported: " + path.string());
  const auto ndim = get<std::int16_t>(hdr, 40);
  if (ndim < 1 || ndim > 3) fail(ErrorKind::io_error, "only 1-3 dimensional NIfTI volumes are supported");
  Index3 dims{1, 1, 1};
  Vec3 vox{1.0, 1.0, 1.0};
  for (int a = 0; a < ndim; ++a) {
    const auto n = get<std::int16_t>(hdr, 42 + 2 * a);
    if (n < 1) fail(ErrorKind::io_error, "invalid NIfTI dimension");
    dims[a] = static_cast<std::size_t>(n);
    const float p = get<float>(hdr, 80 + 4 * a);
    vox[a] = p > 0.0f ? static_cast<double>(p) : 1.0;
  }
  Grid grid(dims, vox);
  const auto offset = static_cast<std::streamoff>(get<float>(hdr, 108));
  std::vector<float> values(grid.size());
  in.seekg(offset);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!in) fail(ErrorKind::io_error, "truncated NIfTI data in " + path.string());
  float slope = get<float>(hdr, 112);
  const float inter = get<float>(hdr, 116);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = slope != 0.0f ? static_cast<double>(values[i]) * slope + inter : static_cast<double>(values[i]);
  return Volume(grid, Mask(grid.size(), 1), std::move(out));
}

Volume read_volume(const std::filesystem::path& path) {
  if (path.extension() == ".nii") return read_nifti(path);
  if (path.extension() == ".raw") return read_raw(path);
  fail(ErrorKind::io_error, "unsupported volume format (expected .nii or .raw): " + path.string());
}

void write_volume(const Volume& vol, const std::filesystem::path& path) {
  if (path.extension() == ".nii") return write_nifti(vol, path);
  if (path.extension() == ".raw") return write_raw(vol, path);
  fail(ErrorKind::io_error, "unsupported volume format (expected .nii or .raw): " + path.string());
}

}  // namespace rftval
