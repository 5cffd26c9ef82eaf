#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dceus/similarity.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace dceus;
using dceus::testing::cube;

namespace {

JointHistogram from_counts(int bins, const std::vector<double>& counts) {
  JointHistogram h;
  h.bins = bins;
  h.counts = counts;
  h.total = 0.0;
  for (double c : counts) h.total += c;
  return h;
}

Volume3 two_level(const Geometry& g) {
  Volume3 v(g);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i % 2);
  return v;
}

}  // namespace

TEST_SUITE("similarity") {
  TEST_CASE("nmi of a diagonal histogram is exactly 2") {
    const JointHistogram h = from_counts(3, {2, 0, 0, 0, 5, 0, 0, 0, 1});
    CHECK(std::abs(nmi(h) - 2.0) < 1e-12);
  }

  TEST_CASE("nmi of an outer-product histogram is exactly 1") {
    const std::vector<double> a{1, 2, 3}, b{4, 1, 5};
    std::vector<double> c;
    for (double x : a)
      for (double y : b) c.push_back(x * y);
    CHECK(std::abs(nmi(from_counts(3, c)) - 1.0) < 1e-12);
  }

  TEST_CASE("nmi of [[2,1],[1,2]] matches hand arithmetic") {
    const double p = 2.0 / 6.0, q = 1.0 / 6.0;
    const double hrf = -2.0 * (p * std::log(p) + q * std::log(q));
    const double expected = 2.0 * std::log(2.0) / hrf;
    CHECK(nmi(from_counts(2, {2, 1, 1, 2})) == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("two-level self histogram is diagonal up to Parzen spill") {
    const Volume3 v = two_level(cube(4));
    const JointHistogram h = joint_histogram(v, v, 4);
    CHECK(h.total == doctest::Approx(64.0));
    double diag = 0.0;
    for (int b = 0; b < 4; ++b) diag += h.at(b, b);
    CHECK(diag > 0.6 * h.total);
    CHECK(h.at(0, 3) == 0.0);
    CHECK(h.at(3, 0) == 0.0);
    const auto rm = h.ref_marginal(), fm = h.flt_marginal();
    double rs = 0.0, fs = 0.0;
    for (int b = 0; b < 4; ++b) {
      rs += rm[b];
      fs += fm[b];
    }
    CHECK(rs == doctest::Approx(h.total));
    CHECK(fs == doctest::Approx(h.total));
  }

  TEST_CASE("independent noise approaches the product of marginals") {
    const Geometry g = cube(40);
    const Volume3 a = dceus::testing::uniform_noise(g, 1);
    const Volume3 b = dceus::testing::uniform_noise(g, 2);
    const JointHistogram h = joint_histogram(a, b, 8);
    const auto rm = h.ref_marginal(), fm = h.flt_marginal();
    double worst = 0.0;
    for (int r = 0; r < 8; ++r)
      for (int f = 0; f < 8; ++f) {
        const double expect = rm[r] * fm[f] / h.total;
        worst = std::max(worst, std::abs(h.at(r, f) - expect) / expect);
      }
    CHECK(worst < 0.1);
    CHECK(nmi(h) < 1.005);
  }

  TEST_CASE("masked histogram equals histogram of the extracted sub-volume") {
    const Volume3 a = dceus::testing::uniform_noise(cube(8), 3);
    const Volume3 b = dceus::testing::uniform_noise(cube(8), 4);
    Mask3 m(cube(8));
    std::vector<double> ra, rb;
    for (int z = 2; z < 6; ++z)
      for (int y = 1; y < 7; ++y)
        for (int x = 0; x < 5; ++x) {
          m.set(x, y, z, true);
          ra.push_back(a(x, y, z));
          rb.push_back(b(x, y, z));
        }
    const JointHistogram masked = joint_histogram(a, b, 16, &m);
    const JointHistogram direct = histogram_from_samples(ra, rb, {}, 16, sample_range(ra, {}),
                                                         sample_range(rb, {}));
    REQUIRE(masked.counts.size() == direct.counts.size());
    for (std::size_t i = 0; i < direct.counts.size(); ++i)
      CHECK(masked.counts[i] == doctest::Approx(direct.counts[i]).epsilon(1e-12));
  }

  TEST_CASE("nmi is symmetric and bounded") {
    const Volume3 a = dceus::testing::uniform_noise(cube(10), 5);
    Volume3 b = dceus::testing::uniform_noise(cube(10), 6);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.5f * b[i] + a[i];
    const JointHistogram h = joint_histogram(a, b, 16);
    const double v = nmi(h);
    CHECK(v > 1.0);
    CHECK(v <= 2.0);
    CHECK(nmi(h.transposed()) == doctest::Approx(v).epsilon(1e-12));
    CHECK(nmi(joint_histogram(b, a, 16)) == doctest::Approx(v).epsilon(1e-12));
  }

  TEST_CASE("nmi unchanged by a monotone relabelling that keeps bin assignment") {
    const Volume3 a = dceus::testing::uniform_noise(cube(8), 7);
    const Volume3 b = dceus::testing::uniform_noise(cube(8), 8);
    Volume3 scaled = b;
    for (std::size_t i = 0; i < b.size(); ++i) scaled[i] = 3.0f * b[i] + 2.0f;
    CHECK(nmi(joint_histogram(a, scaled, 16)) ==
          doctest::Approx(nmi(joint_histogram(a, b, 16))).epsilon(1e-6));
  }

  TEST_CASE("constant image or empty mask is degenerate") {
    const Volume3 a = dceus::testing::uniform_noise(cube(4), 1);
    CHECK_THROWS_AS(joint_histogram(a, Volume3(cube(4), 2.0f), 8), DegenerateError);
    const Mask3 none(cube(4));
    CHECK_THROWS_AS(joint_histogram(a, a, 8, &none), DegenerateError);
    CHECK_THROWS_AS(joint_histogram(a, a, 1), ConfigError);
  }

  TEST_CASE("nmi gradient matches central differences on a random 8^3 pair") {
    const auto check = dceus::testing::check_intensity_gradient(8, 100, 1e-3, 11);
    CHECK(check.failures == 0);
    CHECK(check.worst < 1e-3);
  }

  TEST_CASE("nmi gradient is stationary at self-similarity and zero outside the mask") {
    const Volume3 a = dceus::testing::uniform_noise(cube(8), 12);
    Mask3 m(cube(8), true);
    m.set(3, 3, 3, false);
    const JointHistogram h = joint_histogram(a, a, 32, &m);
    const auto g = nmi_gradient(a, a, h, &m);
    CHECK(g[cube(8).index(3, 3, 3)] == 0.0);

    std::vector<double> ref(a.data().begin(), a.data().end());
    const JointHistogram full = histogram_from_samples(ref, ref, {}, 32, {-0.1, 1.1}, {-0.1, 1.1});
    const double base = nmi(full);
    const double h_step = 1e-4;
    for (std::size_t i : {5u, 100u, 400u}) {
      std::vector<double> f = ref;
      f[i] += h_step;
      const double up = nmi(histogram_from_samples(ref, f, {}, 32, {-0.1, 1.1}, {-0.1, 1.1}));
      f[i] = ref[i] - h_step;
      const double down = nmi(histogram_from_samples(ref, f, {}, 32, {-0.1, 1.1}, {-0.1, 1.1}));
      CHECK(std::abs(up - down) / (2.0 * h_step) < 1e-3);
      // Parzen smoothing keeps self-NMI flat to second order, not strictly maximal.
      CHECK(std::abs(up - base) < 1e-6);
      CHECK(std::abs(down - base) < 1e-6);
    }
  }

  TEST_CASE("ncc basics") {
    const Volume3 a = dceus::testing::uniform_noise(cube(6), 13);
    CHECK(ncc(a, a) == doctest::Approx(1.0));
    Volume3 neg = a;
    for (std::size_t i = 0; i < a.size(); ++i) neg[i] = 4.0f - a[i];
    CHECK(ncc(a, neg) == doctest::Approx(-1.0));
    Volume3 resc = a;
    for (std::size_t i = 0; i < a.size(); ++i) resc[i] = 2.5f * a[i] + 7.0f;
    const Volume3 b = dceus::testing::uniform_noise(cube(6), 14);
    CHECK(ncc(resc, b) == doctest::Approx(ncc(a, b)).epsilon(1e-5));
    CHECK_THROWS_AS(ncc(a, Volume3(cube(6), 1.0f)), DegenerateError);
  }

  TEST_CASE("ncc of two fixed 3x3x3 integer volumes equals Pearson") {
    Volume3 a(cube(3)), b(cube(3));
    double sa = 0, sb = 0;
    for (int i = 0; i < 27; ++i) {
      a[i] = static_cast<float>((i * 7) % 5);
      b[i] = static_cast<float>((i * 3 + 1) % 4 + (i % 2));
      sa += a[i];
      sb += b[i];
    }
    sa /= 27;
    sb /= 27;
    double cov = 0, va = 0, vb = 0;
    for (int i = 0; i < 27; ++i) {
      cov += (a[i] - sa) * (b[i] - sb);
      va += (a[i] - sa) * (a[i] - sa);
      vb += (b[i] - sb) * (b[i] - sb);
    }
    CHECK(ncc(a, b) == doctest::Approx(cov / std::sqrt(va * vb)).epsilon(1e-12));
  }
}
