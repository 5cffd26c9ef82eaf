#include <doctest.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <vector>

#include "dceus/nifti.hpp"
#include "support.hpp"

using namespace dceus;
using dceus::testing::cube;
using dceus::testing::TempDir;

namespace {

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Geometry odd_geometry() {
  Geometry g;
  g.dims = {5, 4, 3};
  g.spacing = Vec3(0.5, 0.75, 1.25);
  g.origin = Vec3(-3.0, 2.5, 10.0);
  return g;
}

}  // namespace

TEST_SUITE("nifti-io") {
  TEST_CASE("constant float32 volume round trip") {
    TempDir dir("nifti");
    const Volume3 v(cube(8), 3.5f);
    save(v, dir.file("c.nii"));
    const Volume3 back = load_volume(dir.file("c.nii"));
    CHECK(back == v);
  }

  TEST_CASE("float32 round trip is bit exact, plain and gzip") {
    TempDir dir("nifti");
    Volume3 v = dceus::testing::uniform_noise(odd_geometry(), 17, -1e3f, 1e3f);
    v[0] = -0.0f;
    v[1] = std::numeric_limits<float>::denorm_min();
    v[2] = -std::numeric_limits<float>::max();
    for (const char* name : {"v.nii", "v.nii.gz"}) {
      save(v, dir.file(name));
      const Volume3 back = load_volume(dir.file(name));
      CHECK(back.geometry() == v.geometry());
      CHECK(std::memcmp(back.data().data(), v.data().data(), v.size() * sizeof(float)) == 0);
    }
  }

  TEST_CASE("cine of 10 frames read at 2 Hz") {
    TempDir dir("nifti");
    std::vector<Volume3> frames;
    for (int k = 0; k < 10; ++k) frames.emplace_back(cube(3), static_cast<float>(k));
    save(Cine4::uniform(frames, 1.0), dir.file("c.nii.gz"));
    const Cine4 c = load_cine(dir.file("c.nii.gz"), 2.0);
    REQUIRE(c.frame_count() == 10);
    for (int k = 0; k < 10; ++k) {
      CHECK(c.times()[k] == doctest::Approx(0.5 * k));
      CHECK(c.frame(k)(1, 1, 1) == static_cast<float>(k));
    }
    const Cine4 header_timed = load_cine(dir.file("c.nii.gz"));
    CHECK(header_timed.times()[3] == doctest::Approx(3.0));
  }

  TEST_CASE("20-frame cine header declares 4 dims and 20 frames") {
    TempDir dir("nifti");
    std::vector<Volume3> frames(20, Volume3(cube(2), 1.0f));
    save(Cine4::uniform(frames, 1.0), dir.file("c.nii"));
    const NiftiHeaderView h = read_nifti_header(dir.file("c.nii"));
    CHECK(h.ndim == 4);
    CHECK(h.dims[3] == 20);
    CHECK(std::holds_alternative<Cine4>(load(dir.file("c.nii"))));
  }

  TEST_CASE("uint8 with slope 2 and intercept 1") {
    TempDir dir("nifti");
    NiftiHeaderView h;
    h.dims = {2, 2, 2, 1};
    const std::vector<double> raw(8, 4.0);
    write_nifti(dir.file("u.nii"), h, raw, NiftiType::uint8);
    auto bytes = slurp(dir.file("u.nii"));
    const float slope = 2.0f, inter = 1.0f;
    std::memcpy(bytes.data() + 112, &slope, 4);
    std::memcpy(bytes.data() + 116, &inter, 4);
    spit(dir.file("u.nii"), bytes);
    const Volume3 v = load_volume(dir.file("u.nii"));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == 9.0f);
  }

  TEST_CASE("integer datatypes quantize and overflow is an error") {
    TempDir dir("nifti");
    Volume3 v(cube(2), 0.0f);
    v[0] = 12.4f;
    v[1] = -3.6f;
    save(v, dir.file("i.nii"), NiftiType::int16);
    const Volume3 back = load_volume(dir.file("i.nii"));
    CHECK(back[0] == 12.0f);
    CHECK(back[1] == -4.0f);
    v[2] = 300.0f;
    CHECK_THROWS_AS(save(v, dir.file("o.nii"), NiftiType::uint8), FormatError);
  }

  TEST_CASE("masks are written as uint8 zero and one") {
    TempDir dir("nifti");
    Mask3 m(cube(4));
    m.set(1, 2, 3, true);
    m.set(0, 0, 0, true);
    save(m, dir.file("m.nii"));
    const NiftiHeaderView h = read_nifti_header(dir.file("m.nii"));
    CHECK(h.datatype == NiftiType::uint8);
    const NiftiImage img = read_nifti(dir.file("m.nii"));
    for (double x : img.voxels) CHECK((x == 0.0 || x == 1.0));
    CHECK(load_mask(dir.file("m.nii")) == m);
  }

  TEST_CASE("mask sequence round trip") {
    TempDir dir("nifti");
    std::vector<Mask3> masks(3, Mask3(cube(3)));
    masks[1].set(2, 2, 2, true);
    save_mask_sequence(masks, dir.file("s.nii.gz"));
    CHECK(load_mask_sequence(dir.file("s.nii.gz")) == masks);
  }

  TEST_CASE("orientation fields survive a rewrite") {
    TempDir dir("nifti");
    NiftiOrientation o;
    o.qform_code = 2;
    o.sform_code = 1;
    o.quatern = {0.1f, 0.2f, 0.3f};
    o.qoffset = {-3.0f, 2.5f, 10.0f};
    o.srow = {1, 0, 0, -3, 0, 1, 0, 2.5f, 0, 0, 1, 10};
    o.qfac = -1.0f;
    save(Volume3(odd_geometry(), 1.0f), dir.file("o.nii"), NiftiType::float32, &o);
    const NiftiHeaderView h = read_nifti_header(dir.file("o.nii"));
    CHECK(h.orientation.qform_code == 2);
    CHECK(h.orientation.quatern == o.quatern);
    CHECK(h.orientation.srow == o.srow);
    CHECK(h.orientation.qfac == -1.0f);
    CHECK(h.geometry() == odd_geometry());
  }

  TEST_CASE("malformed files are rejected with errors") {
    TempDir dir("nifti");
    CHECK_THROWS_AS(load_volume(dir.file("missing.nii")), IoError);

    save(Volume3(cube(4), 1.0f), dir.file("ok.nii"));
    const auto good = slurp(dir.file("ok.nii"));

    auto truncated = good;
    truncated.resize(truncated.size() - 10);
    spit(dir.file("t.nii"), truncated);
    CHECK_THROWS_AS(load_volume(dir.file("t.nii")), FormatError);

    auto padded = good;
    padded.resize(padded.size() + 64, 0);
    spit(dir.file("p.nii"), padded);
    CHECK_THROWS_AS(load_volume(dir.file("p.nii")), FormatError);

    auto bad_type = good;
    const std::int16_t complex64 = 32;
    std::memcpy(bad_type.data() + 70, &complex64, 2);
    spit(dir.file("d.nii"), bad_type);
    CHECK_THROWS_AS(load_volume(dir.file("d.nii")), FormatError);

    auto bad_dim = good;
    const std::int16_t five = 5;
    std::memcpy(bad_dim.data() + 40, &five, 2);
    spit(dir.file("n.nii"), bad_dim);
    CHECK_THROWS_AS(load_volume(dir.file("n.nii")), FormatError);

    auto bad_pixdim = good;
    const float zero = 0.0f;
    std::memcpy(bad_pixdim.data() + 80, &zero, 4);
    spit(dir.file("x.nii"), bad_pixdim);
    CHECK_THROWS_AS(load_volume(dir.file("x.nii")), FormatError);

    // A negative spacing is read as its magnitude.
    auto neg_pixdim = good;
    const float neg = -2.0f;
    std::memcpy(neg_pixdim.data() + 80, &neg, 4);
    spit(dir.file("m.nii"), neg_pixdim);
    CHECK(load_volume(dir.file("m.nii")).geometry().spacing[0] == 2.0);

    spit(dir.file("g.nii"), std::vector<char>(20, 'x'));
    CHECK_THROWS_AS(load_volume(dir.file("g.nii")), FormatError);
  }
}
