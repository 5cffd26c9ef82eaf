#include "dceus/nifti.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <zlib.h>

namespace dceus {

namespace {

struct RawHeader {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
static_assert(sizeof(RawHeader) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::size_t kVoxOffset = 352;

template <typename T>
void swap_bytes(T& v) {
  auto* p = reinterpret_cast<unsigned char*>(&v);
  std::reverse(p, p + sizeof(T));
}

void swap_header(RawHeader& h) {
  swap_bytes(h.sizeof_hdr);
  swap_bytes(h.extents);
  swap_bytes(h.session_error);
  for (auto& d : h.dim) swap_bytes(d);
  swap_bytes(h.intent_p1);
  swap_bytes(h.intent_p2);
  swap_bytes(h.intent_p3);
  swap_bytes(h.intent_code);
  swap_bytes(h.datatype);
  swap_bytes(h.bitpix);
  swap_bytes(h.slice_start);
  for (auto& p : h.pixdim) swap_bytes(p);
  swap_bytes(h.vox_offset);
  swap_bytes(h.scl_slope);
  swap_bytes(h.scl_inter);
  swap_bytes(h.slice_end);
  swap_bytes(h.cal_max);
  swap_bytes(h.cal_min);
  swap_bytes(h.slice_duration);
  swap_bytes(h.toffset);
  swap_bytes(h.glmax);
  swap_bytes(h.glmin);
  swap_bytes(h.qform_code);
  swap_bytes(h.sform_code);
  swap_bytes(h.quatern_b);
  swap_bytes(h.quatern_c);
  swap_bytes(h.quatern_d);
  swap_bytes(h.qoffset_x);
  swap_bytes(h.qoffset_y);
  swap_bytes(h.qoffset_z);
  for (auto& s : h.srow_x) swap_bytes(s);
  for (auto& s : h.srow_y) swap_bytes(s);
  for (auto& s : h.srow_z) swap_bytes(s);
}

int bytes_per_voxel(NiftiType t) {
  switch (t) {
    case NiftiType::uint8: return 1;
    case NiftiType::int16:
    case NiftiType::uint16: return 2;
    case NiftiType::float32: return 4;
    case NiftiType::float64: return 8;
  }
  return 0;
}

bool supported_type(std::int16_t code) {
  switch (code) {
    case 2: case 4: case 16: case 64: case 512: return true;
    default: return false;
  }
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open " + path);
  unsigned char magic[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(magic), 2);
  const bool gz = probe.gcount() == 2 && magic[0] == 0x1f && magic[1] == 0x8b;
  probe.close();

  std::vector<unsigned char> bytes;
  if (!gz) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    bytes.resize(size);
    if (size && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
      throw IoError("short read from " + path);
    return bytes;
  }
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path);
  unsigned char chunk[1 << 16];
  int n = 0;
  while ((n = gzread(f, chunk, sizeof chunk)) > 0) bytes.insert(bytes.end(), chunk, chunk + n);
  int err = 0;
  const char* msg = gzerror(f, &err);
  gzclose(f);
  if (n < 0 || err < 0) throw FormatError(path + ": corrupt gzip stream (" + msg + ")");
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  if (ends_with(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "wb6");
    if (!f) throw IoError("cannot open " + path + " for writing");
    std::size_t done = 0;
    while (done < bytes.size()) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
      if (gzwrite(f, bytes.data() + done, chunk) != static_cast<int>(chunk)) {
        gzclose(f);
        throw IoError("failed writing " + path);
      }
      done += chunk;
    }
    if (gzclose(f) != Z_OK) throw IoError("failed closing " + path);
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

double spatial_unit_to_mm(int units) {
  switch (units & 0x07) {
    case 1: return 1000.0;  // metre
    case 3: return 1e-3;    // micron
    default: return 1.0;
  }
}

double time_unit_to_s(int units) {
  switch (units & 0x38) {
    case 16: return 1e-3;
    case 24: return 1e-6;
    default: return 1.0;
  }
}

struct Decoded {
  NiftiHeaderView view;
  std::size_t voxel_offset = 0;
  bool swapped = false;
};

Decoded decode_header(const std::vector<unsigned char>& bytes, const std::string& path) {
  if (bytes.size() < sizeof(RawHeader)) throw FormatError(path + ": truncated header");
  RawHeader h;
  std::memcpy(&h, bytes.data(), sizeof h);
  Decoded d;
  if (h.sizeof_hdr != 348) {
    swap_header(h);
    if (h.sizeof_hdr != 348) throw FormatError(path + ": not a NIfTI-1 file");
    d.swapped = true;
  }
  if (std::memcmp(h.magic, "n+1", 4) != 0)
    throw FormatError(path + ": unsupported magic (only single-file n+1 is read)");
  if (h.dim[0] != 3 && h.dim[0] != 4)
    throw FormatError(path + ": dim[0] must be 3 or 4, found " + std::to_string(h.dim[0]));
  if (!supported_type(h.datatype))
    throw FormatError(path + ": unsupported datatype code " + std::to_string(h.datatype));

  auto& v = d.view;
  v.ndim = h.dim[0];
  for (int a = 0; a < 4; ++a) v.dims[a] = (a < h.dim[0]) ? h.dim[a + 1] : 1;
  for (int a = 0; a < 4; ++a)
    if (v.dims[a] < 1) throw FormatError(path + ": non-positive dimension");
  v.datatype = static_cast<NiftiType>(h.datatype);
  const double to_mm = spatial_unit_to_mm(h.xyzt_units);
  for (int a = 0; a < 3; ++a) {
    const double p = std::abs(static_cast<double>(h.pixdim[a + 1]));
    if (!(p > 0.0) || !std::isfinite(p)) throw FormatError(path + ": non-positive pixdim");
    v.spacing_mm[a] = p * to_mm;
  }
  if (v.ndim == 4 && h.pixdim[4] > 0.0f && std::isfinite(h.pixdim[4]))
    v.time_step_s = h.pixdim[4] * time_unit_to_s(h.xyzt_units);
  v.time_offset_s = std::isfinite(h.toffset) ? h.toffset * time_unit_to_s(h.xyzt_units) : 0.0;
  v.scl_slope = h.scl_slope;
  v.scl_inter = h.scl_inter;
  auto& o = v.orientation;
  o.qform_code = h.qform_code;
  o.sform_code = h.sform_code;
  o.quatern = {h.quatern_b, h.quatern_c, h.quatern_d};
  o.qoffset = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
  for (int c = 0; c < 4; ++c) {
    o.srow[c] = h.srow_x[c];
    o.srow[4 + c] = h.srow_y[c];
    o.srow[8 + c] = h.srow_z[c];
  }
  o.qfac = h.pixdim[0] < 0.0f ? -1.0f : 1.0f;
  v.description.assign(h.descrip, strnlen(h.descrip, sizeof h.descrip));
  const double offset = h.vox_offset;
  if (!(offset >= 0.0) || offset < 348.0) throw FormatError(path + ": invalid vox_offset");
  d.voxel_offset = static_cast<std::size_t>(offset);
  return d;
}

template <typename T>
void decode_voxels(const unsigned char* src, std::size_t count, bool swapped, double slope,
                   double inter, std::vector<double>& out) {
  out.resize(count);
  // Identity scaling is skipped so -0.0 survives (-0.0 + 0.0 is +0.0).
  const bool identity = slope == 1.0 && inter == 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    T v;
    std::memcpy(&v, src + i * sizeof(T), sizeof(T));
    if (swapped) swap_bytes(v);
    out[i] = identity ? static_cast<double>(v) : slope * static_cast<double>(v) + inter;
  }
}

template <typename T>
void encode_voxels(std::span<const double> values, unsigned char* dst, const std::string& path) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    T v;
    if constexpr (std::is_floating_point_v<T>) {
      v = static_cast<T>(values[i]);
    } else {
      const double r = std::round(values[i]);
      if (!(r >= std::numeric_limits<T>::min() && r <= std::numeric_limits<T>::max()))
        throw FormatError(path + ": value " + std::to_string(values[i]) +
                          " overflows the integer datatype");
      v = static_cast<T>(r);
    }
    std::memcpy(dst + i * sizeof(T), &v, sizeof(T));
  }
}

NiftiHeaderView header_for(const Geometry& g, int frames, const NiftiOrientation* orientation) {
  NiftiHeaderView h;
  h.ndim = frames > 1 ? 4 : 3;
  h.dims = {g.dims[0], g.dims[1], g.dims[2], frames};
  h.spacing_mm = {g.spacing[0], g.spacing[1], g.spacing[2]};
  if (orientation) {
    h.orientation = *orientation;
  } else {
    h.orientation.qform_code = 1;
    h.orientation.qoffset = {static_cast<float>(g.origin[0]), static_cast<float>(g.origin[1]),
                             static_cast<float>(g.origin[2])};
  }
  return h;
}

}  // namespace

Geometry NiftiHeaderView::geometry() const {
  Geometry g;
  g.dims = {dims[0], dims[1], dims[2]};
  g.spacing = Vec3(spacing_mm[0], spacing_mm[1], spacing_mm[2]);
  if (orientation.qform_code > 0) {
    g.origin = Vec3(orientation.qoffset[0], orientation.qoffset[1], orientation.qoffset[2]);
  } else if (orientation.sform_code > 0) {
    g.origin = Vec3(orientation.srow[3], orientation.srow[7], orientation.srow[11]);
  }
  return g;
}

NiftiHeaderView read_nifti_header(const std::string& path) {
  return read_nifti(path).header;
}

NiftiImage read_nifti(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  const Decoded d = decode_header(bytes, path);
  const auto& v = d.view;
  const std::size_t count = static_cast<std::size_t>(v.dims[0]) * v.dims[1] * v.dims[2] * v.dims[3];
  const std::size_t nbytes = count * bytes_per_voxel(v.datatype);
  if (d.voxel_offset > bytes.size() || bytes.size() - d.voxel_offset != nbytes)
    throw FormatError(path + ": file length disagrees with the declared image size");

  const double slope = (v.scl_slope == 0.0f || !std::isfinite(v.scl_slope)) ? 1.0 : v.scl_slope;
  const double inter = std::isfinite(v.scl_inter) && v.scl_slope != 0.0f ? v.scl_inter : 0.0;
  NiftiImage image;
  image.header = v;
  const unsigned char* src = bytes.data() + d.voxel_offset;
  switch (v.datatype) {
    case NiftiType::uint8: decode_voxels<std::uint8_t>(src, count, d.swapped, slope, inter, image.voxels); break;
    case NiftiType::int16: decode_voxels<std::int16_t>(src, count, d.swapped, slope, inter, image.voxels); break;
    case NiftiType::uint16: decode_voxels<std::uint16_t>(src, count, d.swapped, slope, inter, image.voxels); break;
    case NiftiType::float32: decode_voxels<float>(src, count, d.swapped, slope, inter, image.voxels); break;
    case NiftiType::float64: decode_voxels<double>(src, count, d.swapped, slope, inter, image.voxels); break;
  }
  for (double x : image.voxels)
    if (!std::isfinite(x)) throw FormatError(path + ": non-finite voxel value");
  return image;
}

void write_nifti(const std::string& path, const NiftiHeaderView& view,
                 std::span<const double> voxels, NiftiType datatype) {
  const std::size_t count =
      static_cast<std::size_t>(view.dims[0]) * view.dims[1] * view.dims[2] * view.dims[3];
  if (voxels.size() != count) throw GeometryError(path + ": voxel count disagrees with dims");

  RawHeader h;
  std::memset(&h, 0, sizeof h);
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = static_cast<std::int16_t>(view.dims[3] > 1 || view.ndim == 4 ? 4 : 3);
  for (int a = 0; a < 4; ++a) {
    if (view.dims[a] > std::numeric_limits<std::int16_t>::max())
      throw FormatError(path + ": dimension too large for NIfTI-1");
    h.dim[a + 1] = static_cast<std::int16_t>(view.dims[a]);
  }
  for (int a = 5; a < 8; ++a) h.dim[a] = 1;
  h.datatype = static_cast<std::int16_t>(datatype);
  h.bitpix = static_cast<std::int16_t>(8 * bytes_per_voxel(datatype));
  h.pixdim[0] = view.orientation.qfac;
  for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(view.spacing_mm[a]);
  h.pixdim[4] = static_cast<float>(view.time_step_s);
  for (int a = 5; a < 8; ++a) h.pixdim[a] = 1.0f;
  h.vox_offset = static_cast<float>(kVoxOffset);
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2 | 8;  // mm, s
  h.toffset = static_cast<float>(view.time_offset_s);
  std::strncpy(h.descrip, view.description.c_str(), sizeof h.descrip - 1);
  const auto& o = view.orientation;
  h.qform_code = o.qform_code;
  h.sform_code = o.sform_code;
  h.quatern_b = o.quatern[0];
  h.quatern_c = o.quatern[1];
  h.quatern_d = o.quatern[2];
  h.qoffset_x = o.qoffset[0];
  h.qoffset_y = o.qoffset[1];
  h.qoffset_z = o.qoffset[2];
  for (int c = 0; c < 4; ++c) {
    h.srow_x[c] = o.srow[c];
    h.srow_y[c] = o.srow[4 + c];
    h.srow_z[c] = o.srow[8 + c];
  }
  std::memcpy(h.magic, "n+1", 4);

  std::vector<unsigned char> bytes(kVoxOffset + count * bytes_per_voxel(datatype), 0);
  std::memcpy(bytes.data(), &h, sizeof h);
  unsigned char* dst = bytes.data() + kVoxOffset;
  switch (datatype) {
    case NiftiType::uint8: encode_voxels<std::uint8_t>(voxels, dst, path); break;
    case NiftiType::int16: encode_voxels<std::int16_t>(voxels, dst, path); break;
    case NiftiType::uint16: encode_voxels<std::uint16_t>(voxels, dst, path); break;
    case NiftiType::float32: encode_voxels<float>(voxels, dst, path); break;
    case NiftiType::float64: encode_voxels<double>(voxels, dst, path); break;
  }
  write_file_bytes(path, bytes);
}

Volume3 load_volume(const std::string& path) {
  const NiftiImage image = read_nifti(path);
  if (image.header.dims[3] != 1) throw FormatError(path + ": expected a 3D volume, found 4D");
  std::vector<float> data(image.voxels.begin(), image.voxels.end());
  return Volume3(image.header.geometry(), std::move(data));
}

Cine4 load_cine(const std::string& path, std::optional<double> frame_rate) {
  const NiftiImage image = read_nifti(path);
  const int frames = image.header.dims[3];
  if (frames < 2) throw FormatError(path + ": a cine needs at least two frames");
  const Geometry g = image.header.geometry();
  const std::size_t n = g.voxel_count();
  std::vector<Volume3> volumes;
  volumes.reserve(frames);
  for (int f = 0; f < frames; ++f) {
    std::vector<float> data(image.voxels.begin() + f * n, image.voxels.begin() + (f + 1) * n);
    volumes.emplace_back(g, std::move(data));
  }
  if (frame_rate) return Cine4::uniform(std::move(volumes), *frame_rate);
  const double dt = image.header.time_step_s > 0.0 ? image.header.time_step_s : 1.0;
  std::vector<double> times(frames);
  for (int f = 0; f < frames; ++f) times[f] = image.header.time_offset_s + f * dt;
  return Cine4(std::move(volumes), std::move(times), 1.0 / dt);
}

Mask3 load_mask(const std::string& path) {
  const NiftiImage image = read_nifti(path);
  if (image.header.dims[3] != 1) throw FormatError(path + ": expected a 3D mask");
  std::vector<std::uint8_t> bits(image.voxels.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = image.voxels[i] > 0.0 ? 1 : 0;
  return Mask3(image.header.geometry(), std::move(bits));
}

std::vector<Mask3> load_mask_sequence(const std::string& path) {
  const NiftiImage image = read_nifti(path);
  const Geometry g = image.header.geometry();
  const std::size_t n = g.voxel_count();
  std::vector<Mask3> masks;
  for (int f = 0; f < image.header.dims[3]; ++f) {
    std::vector<std::uint8_t> bits(n);
    for (std::size_t i = 0; i < n; ++i) bits[i] = image.voxels[f * n + i] > 0.0 ? 1 : 0;
    masks.emplace_back(g, std::move(bits));
  }
  return masks;
}

LoadedImage load(const std::string& path, LoadKind kind, std::optional<double> frame_rate) {
  switch (kind) {
    case LoadKind::volume: return load_volume(path);
    case LoadKind::cine: return load_cine(path, frame_rate);
    case LoadKind::mask: return load_mask(path);
    case LoadKind::automatic: break;
  }
  const NiftiImage image = read_nifti(path);
  const Geometry g = image.header.geometry();
  if (image.header.dims[3] > 1) return load_cine(path, frame_rate);
  std::vector<float> data(image.voxels.begin(), image.voxels.end());
  return Volume3(g, std::move(data));
}

void save(const Volume3& volume, const std::string& path, NiftiType datatype,
          const NiftiOrientation* orientation) {
  const NiftiHeaderView h = header_for(volume.geometry(), 1, orientation);
  const std::vector<double> values(volume.data().begin(), volume.data().end());
  write_nifti(path, h, values, datatype);
}

void save(const Cine4& cine, const std::string& path, NiftiType datatype,
          const NiftiOrientation* orientation) {
  NiftiHeaderView h = header_for(cine.geometry(), static_cast<int>(cine.frame_count()), orientation);
  const auto& t = cine.times();
  h.time_step_s = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  h.time_offset_s = t.front();
  std::vector<double> values;
  values.reserve(cine.geometry().voxel_count() * cine.frame_count());
  for (const auto& f : cine.frames()) values.insert(values.end(), f.data().begin(), f.data().end());
  write_nifti(path, h, values, datatype);
}

void save(const Mask3& mask, const std::string& path, const NiftiOrientation* orientation) {
  const NiftiHeaderView h = header_for(mask.geometry(), 1, orientation);
  const std::vector<double> values(mask.data().begin(), mask.data().end());
  write_nifti(path, h, values, NiftiType::uint8);
}

void save_mask_sequence(std::span<const Mask3> masks, const std::string& path,
                        const NiftiOrientation* orientation) {
  if (masks.empty()) throw ConfigError("save_mask_sequence: no masks");
  NiftiHeaderView h = header_for(masks[0].geometry(), static_cast<int>(masks.size()), orientation);
  h.ndim = 4;
  std::vector<double> values;
  for (const auto& m : masks) {
    require_same_grid(masks[0].geometry(), m.geometry(), "save_mask_sequence");
    values.insert(values.end(), m.data().begin(), m.data().end());
  }
  write_nifti(path, h, values, NiftiType::uint8);
}

}  // namespace dceus
