#include <doctest.h>

#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include "dceus/affine.hpp"
#include "dceus/pyramid.hpp"
#include "dceus/resample.hpp"
#include "dceus/volume.hpp"
#include "support.hpp"

using namespace dceus;
using dceus::testing::cube;

TEST_SUITE("core-volume") {
  TEST_CASE("average of constant frames 0 and 10 is 5") {
    const std::vector<Volume3> frames{Volume3(cube(4), 0.0f), Volume3(cube(4), 10.0f)};
    const Volume3 avg = average_frames(frames);
    for (std::size_t i = 0; i < avg.size(); ++i) CHECK(avg[i] == doctest::Approx(5.0));
    CHECK(avg.geometry() == cube(4));
  }

  TEST_CASE("single frame average is the frame") {
    const Volume3 v = dceus::testing::uniform_noise(cube(5), 3);
    const std::vector<Volume3> frames{v};
    const std::vector<double> w{3.0};
    CHECK(average_frames(frames, w) == v);
  }

  TEST_CASE("weighted average 2, 4, 12 with weights 1, 1, 2") {
    const std::vector<Volume3> frames{Volume3(cube(3), 2.0f), Volume3(cube(3), 4.0f),
                                      Volume3(cube(3), 12.0f)};
    const std::vector<double> w{1.0, 1.0, 2.0};
    const Volume3 avg = average_frames(frames, w);
    for (std::size_t i = 0; i < avg.size(); ++i) CHECK(avg[i] == doctest::Approx(7.5));
  }

  TEST_CASE("average rejects bad input") {
    CHECK_THROWS_AS(average_frames(std::vector<Volume3>{}), ConfigError);
    const std::vector<Volume3> mixed{Volume3(cube(3)), Volume3(cube(4))};
    CHECK_THROWS_AS(average_frames(mixed), GeometryError);
    const std::vector<Volume3> two{Volume3(cube(3)), Volume3(cube(3))};
    const std::vector<double> zero{0.0, 0.0};
    CHECK_THROWS_AS(average_frames(two, zero), DegenerateError);
  }

  TEST_CASE("uniform average is permutation invariant") {
    std::vector<Volume3> frames;
    for (int k = 0; k < 4; ++k) frames.push_back(dceus::testing::uniform_noise(cube(6), 10 + k));
    const Volume3 a = average_frames(frames);
    std::vector<Volume3> shuffled{frames[2], frames[0], frames[3], frames[1]};
    const Volume3 b = average_frames(shuffled);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-6));
  }

  TEST_CASE("frame mean intensity") {
    CHECK(frame_mean_intensity(Volume3(cube(4), 7.0f)) == doctest::Approx(7.0));
    Volume3 half(cube(4));
    for (std::size_t i = 0; i < half.size(); i += 2) half[i] = 10.0f;
    CHECK(frame_mean_intensity(half) == doctest::Approx(5.0));

    Volume3 ramp(cube(8));
    Mask3 octant(cube(8));
    double sum = 0.0;
    int n = 0;
    for (int z = 0; z < 8; ++z)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          ramp(x, y, z) = static_cast<float>(x + 10 * y + 100 * z);
          if (x < 4 && y < 4 && z < 4) {
            octant.set(x, y, z, true);
            sum += ramp(x, y, z);
            ++n;
          }
        }
    CHECK(frame_mean_intensity(ramp, &octant) == doctest::Approx(sum / n));
    const Mask3 full(cube(8), true), none(cube(8));
    CHECK(frame_mean_intensity(ramp, nullptr) == doctest::Approx(frame_mean_intensity(ramp, &full)));
    CHECK_THROWS_AS(frame_mean_intensity(ramp, &none), DegenerateError);
  }

  TEST_CASE("volume and cine invariants") {
    std::vector<float> bad(27, 0.0f);
    bad[4] = std::nanf("");
    CHECK_THROWS(Volume3(cube(3), bad));
    CHECK_THROWS_AS(Volume3(cube(3), std::vector<float>(26)), GeometryError);
    Geometry g = cube(3);
    g.spacing[1] = 0.0;
    CHECK_THROWS_AS(g.validate(), ConfigError);
    CHECK_THROWS(Cine4({Volume3(cube(3))}, {0.0}));
    CHECK_THROWS(Cine4({Volume3(cube(3)), Volume3(cube(3))}, {1.0, 1.0}));
    CHECK_THROWS(Cine4({Volume3(cube(3)), Volume3(cube(4))}, {0.0, 1.0}));
    const Cine4 c = Cine4::uniform({Volume3(cube(3)), Volume3(cube(3)), Volume3(cube(3))}, 2.0);
    CHECK(c.times() == std::vector<double>{0.0, 0.5, 1.0});
  }
}

TEST_SUITE("core-affine") {
  TEST_CASE("composition and inverse") {
    Mat3 l;
    l << 1.02, 0.01, 0.0, -0.02, 0.97, 0.03, 0.0, 0.01, 1.05;
    const AffineTransform a(l, Vec3(1.0, -2.0, 0.5));
    const AffineTransform b = AffineTransform::translation(Vec3(3.0, 0.0, -1.0));
    const Vec3 p(4.0, 5.0, 6.0);
    CHECK(((a * b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
    CHECK(((a * a.inverse()).apply(p) - p).norm() < 1e-12);
    const AffineTransform c = AffineTransform::about_center(l, p, Vec3::Zero());
    CHECK((c.apply(p) - p).norm() < 1e-12);
  }

  TEST_CASE("singular or non-finite matrices are rejected") {
    Mat34 m = Mat34::Zero();
    CHECK_THROWS_AS(AffineTransform{m}, DegenerateError);
    m.leftCols<3>().setIdentity();
    m(0, 3) = std::nan("");
    CHECK_THROWS_AS(AffineTransform{m}, DegenerateError);
  }

  TEST_CASE("text round trip") {
    Mat3 l;
    l << 1.0 / 3.0, 0.1, 0.2, 0.0, 1.1, -0.4, 0.25, 0.0, 0.9;
    const AffineTransform a(l, Vec3(0.1, 1e-7, -12.5));
    std::stringstream s;
    write_affine(s, a);
    CHECK(s.str().rfind(kAffineFileTag, 0) == 0);
    const AffineTransform b = read_affine(s);
    CHECK(a.max_abs_difference(b) == 0.0);
    std::stringstream junk("not an affine\n1 2 3\n");
    CHECK_THROWS(read_affine(junk));
  }
}

TEST_SUITE("core-resample") {
  Volume3 ramp_x(const Geometry& g) {
    Volume3 v(g);
    for (int z = 0; z < g.dims[2]; ++z)
      for (int y = 0; y < g.dims[1]; ++y)
        for (int x = 0; x < g.dims[0]; ++x) v(x, y, z) = static_cast<float>(2.0 * x + 1.0);
    return v;
  }

  TEST_CASE("identity is lossless at grid points for every interpolation mode") {
    const Volume3 v = dceus::testing::uniform_noise(cube(7), 5);
    for (Interpolation mode : {Interpolation::nearest, Interpolation::linear, Interpolation::cubic}) {
      SpatialMapping m;
      m.interpolation = mode;
      const Volume3 out = resample(v, m);
      for (std::size_t i = 0; i < v.size(); ++i) CHECK(out[i] == doctest::Approx(v[i]).epsilon(1e-5));
    }
  }

  TEST_CASE("one voxel translation shifts with a padding column") {
    Geometry g = cube(6);
    g.spacing = Vec3(2.0, 1.0, 1.0);
    const Volume3 v = dceus::testing::uniform_noise(g, 9, 1.0f, 2.0f);
    SpatialMapping m;
    m.transform = AffineTransform::translation(Vec3(2.0, 0.0, 0.0));
    m.padding = -1.0f;
    const Volume3 out = resample(v, m);
    for (int z = 0; z < 6; ++z)
      for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 5; ++x) CHECK(out(x, y, z) == doctest::Approx(v(x + 1, y, z)));
        CHECK(out(5, y, z) == -1.0f);
      }
  }

  TEST_CASE("half voxel translation of a ramp matches the analytic ramp") {
    const Geometry g = cube(8);
    const Volume3 v = ramp_x(g);
    SpatialMapping m;
    m.transform = AffineTransform::translation(Vec3(0.5, 0.0, 0.0));
    const Volume3 out = resample(v, m);
    for (int x = 0; x < 7; ++x) CHECK(out(x, 3, 3) == doctest::Approx(2.0 * (x + 0.5) + 1.0));
  }

  TEST_CASE("forward then inverse reconstructs, cubic better than linear") {
    PhantomSpec spec = dceus::testing::texture_spec(32, 3.0);
    const Volume3 v = phantom_texture(spec);
    Mat3 l = Mat3::Identity();
    l(0, 1) = 0.03;
    l(2, 2) = 1.04;
    const AffineTransform t = AffineTransform::about_center(l, spec.geometry().extent() * 0.5,
                                                            Vec3(1.3, -0.7, 0.4));
    double err[2] = {0.0, 0.0};
    int k = 0;
    for (Interpolation mode : {Interpolation::linear, Interpolation::cubic}) {
      SpatialMapping fwd{t, mode, 0.0f};
      SpatialMapping back{t.inverse(), mode, 0.0f};
      const Volume3 round = resample(resample(v, fwd), back);
      for (int z = 8; z < 24; ++z)
        for (int y = 8; y < 24; ++y)
          for (int x = 8; x < 24; ++x)
            err[k] = std::max(err[k], static_cast<double>(std::abs(round(x, y, z) - v(x, y, z))));
      ++k;
    }
    CHECK(err[1] < err[0]);
    CHECK(err[1] < 0.1);
  }

  TEST_CASE("displacement field mapping matches the equivalent affine") {
    const Volume3 v = dceus::testing::uniform_noise(cube(6), 4);
    DenseDisplacementField f(cube(6));
    for (std::size_t i = 0; i < v.size(); ++i) f.set(i, Vec3(0.5, -1.0, 0.25));
    SpatialMapping a{AffineTransform::translation(Vec3(0.5, -1.0, 0.25)), Interpolation::linear, 0.0f};
    SpatialMapping d{f, Interpolation::linear, 0.0f};
    CHECK(resample(v, a) == resample(v, d));
  }

  TEST_CASE("non-finite padding is rejected") {
    SpatialMapping m;
    m.padding = std::nanf("");
    CHECK_THROWS(resample(Volume3(cube(3)), m));
  }

  TEST_CASE("mask warp by an integer shift is exact") {
    Mask3 m(cube(8));
    for (int z = 2; z < 5; ++z)
      for (int y = 2; y < 5; ++y)
        for (int x = 2; x < 5; ++x) m.set(x, y, z, true);
    const Mask3 out = resample_mask(m, AffineTransform::translation(Vec3(-1.0, 0.0, 0.0)));
    CHECK(out.count() == m.count());
    CHECK(out(3, 3, 3));
    CHECK(out(5, 3, 3));
    CHECK_FALSE(out(2, 3, 3));
  }

  TEST_CASE("pyramid halves dims and keeps the origin") {
    const Volume3 v(cube(40), 1.0f);
    const auto pyr = build_pyramid(v, 3, 8);
    REQUIRE(pyr.size() == 3);
    CHECK(pyr[1].dims() == Index3{20, 20, 20});
    CHECK(pyr[2].geometry().spacing[0] == doctest::Approx(4.0));
    CHECK(pyr[2](3, 3, 3) == doctest::Approx(1.0f));
    CHECK(feasible_levels(cube(40), 5, 12) == 2);
    CHECK(build_pyramid(v, 3, 12).size() == 2);
  }
}
