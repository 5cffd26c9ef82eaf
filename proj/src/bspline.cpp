#include "dceus/bspline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "dceus/bspline_basis.hpp"

namespace dceus {

namespace {

int controls_for(double extent_mm, double spacing_mm) {
  return static_cast<int>(std::floor(extent_mm / spacing_mm + 1e-9)) + 4;
}

/// Cell index and fractional offset of a lattice coordinate u, clamped so the
/// four taps stay inside [0, n).
inline std::pair<int, double> locate(double u, int n) {
  int cell = static_cast<int>(std::floor(u));
  cell = std::clamp(cell, 0, n - 4);
  return {cell, u - cell};
}

void subdivide_axis(const std::vector<double>& in, const Index3& dims_in, int axis, int n_out,
                    std::vector<double>& out, Index3& dims_out) {
  dims_out = dims_in;
  dims_out[axis] = n_out;
  out.assign(static_cast<std::size_t>(dims_out[0]) * dims_out[1] * dims_out[2], 0.0);
  auto at_in = [&](int i, int j, int k) {
    return in[(static_cast<std::size_t>(k) * dims_in[1] + j) * dims_in[0] + i];
  };
  const int n_in = dims_in[axis];
  for (int k = 0; k < dims_out[2]; ++k)
    for (int j = 0; j < dims_out[1]; ++j)
      for (int i = 0; i < dims_out[0]; ++i) {
        int idx[3] = {i, j, k};
        const int f = idx[axis];
        auto coarse = [&](int c) {
          int q[3] = {idx[0], idx[1], idx[2]};
          q[axis] = std::clamp(c, 0, n_in - 1);
          return at_in(q[0], q[1], q[2]);
        };
        double v;
        if (f % 2 == 0) {
          const int c = f / 2;
          v = 0.5 * (coarse(c) + coarse(c + 1));
        } else {
          const int c = (f + 1) / 2;
          v = (coarse(c - 1) + 6.0 * coarse(c) + coarse(c + 1)) / 8.0;
        }
        out[(static_cast<std::size_t>(k) * dims_out[1] + j) * dims_out[0] + i] = v;
      }
}

struct JacobianFields {
  std::array<std::vector<double>, 9> d;  ///< d[3 * c + a] = du_c / dx_a
};

JacobianFields jacobian_fields(const BSplineGrid& grid) {
  const Geometry& g = grid.reference;
  detail::AxisBasis b[3];
  for (int a = 0; a < 3; ++a)
    b[a] = detail::make_axis_basis(g.dims[a], 0.0, g.spacing[a], grid.control_spacing[a],
                                   grid.control_dims[a]);
  JacobianFields f;
  for (auto& v : f.d) v.resize(g.voxel_count());
  for (int c = 0; c < 3; ++c)
    detail::evaluate_separable(grid.coefficients[c], grid.control_dims, b[0], b[1], b[2], nullptr,
                               f.d[3 * c].data(), f.d[3 * c + 1].data(), f.d[3 * c + 2].data());
  return f;
}

double determinant_at(const JacobianFields& f, std::size_t i) {
  Mat3 j;
  for (int c = 0; c < 3; ++c)
    for (int a = 0; a < 3; ++a) j(c, a) = f.d[3 * c + a][i] + (c == a ? 1.0 : 0.0);
  return j.determinant();
}

}  // namespace

BSplineGrid BSplineGrid::create(const Geometry& reference, const Vec3& spacing_mm,
                                const AffineTransform& init) {
  reference.validate();
  BSplineGrid grid;
  grid.reference = reference;
  grid.control_spacing = spacing_mm;
  grid.init = init;
  const Vec3 extent = reference.extent();
  for (int a = 0; a < 3; ++a) {
    if (!(spacing_mm[a] > 0.0)) throw ConfigError("bspline grid: spacing must be positive");
    grid.control_dims[a] = controls_for(extent[a], spacing_mm[a]);
  }
  for (auto& c : grid.coefficients) c.assign(grid.control_count(), 0.0);
  return grid;
}

Vec3 BSplineGrid::control_position(int i, int j, int k) const {
  return reference.origin + control_spacing.cwiseProduct(Vec3(i - 1, j - 1, k - 1));
}

Vec3 BSplineGrid::displacement_at(const Vec3& mm) const {
  const Vec3 u = (mm - reference.origin).cwiseQuotient(control_spacing);
  int first[3];
  std::array<double, 4> w[3];
  for (int a = 0; a < 3; ++a) {
    const auto [cell, t] = locate(u[a], control_dims[a]);
    first[a] = cell;
    w[a] = cubic_weights(t);
  }
  Vec3 d = Vec3::Zero();
  for (int c = 0; c < 4; ++c)
    for (int b = 0; b < 4; ++b)
      for (int a = 0; a < 4; ++a) {
        const double weight = w[0][a] * w[1][b] * w[2][c];
        d += weight * displacement(control_index(first[0] + a, first[1] + b, first[2] + c));
      }
  return d;
}

BSplineGrid BSplineGrid::refined() const {
  BSplineGrid fine = create(reference, 0.5 * control_spacing, init);
  for (int comp = 0; comp < 3; ++comp) {
    std::vector<double> cur = coefficients[comp];
    Index3 dims = control_dims;
    for (int axis = 0; axis < 3; ++axis) {
      std::vector<double> next;
      Index3 next_dims;
      subdivide_axis(cur, dims, axis, fine.control_dims[axis], next, next_dims);
      cur.swap(next);
      dims = next_dims;
    }
    fine.coefficients[comp] = std::move(cur);
  }
  return fine;
}

bool BSplineGrid::all_finite() const {
  for (const auto& c : coefficients)
    for (double v : c)
      if (!std::isfinite(v)) return false;
  return true;
}

double BSplineGrid::max_abs_coefficient() const {
  double m = 0.0;
  for (const auto& c : coefficients)
    for (double v : c) m = std::max(m, std::abs(v));
  return m;
}

namespace detail {

AxisBasis make_axis_basis(int count, double offset_mm, double step_mm, double spacing_mm,
                          int control_count) {
  AxisBasis b;
  b.first.resize(count);
  b.value.resize(count);
  b.slope.resize(count);
  for (int i = 0; i < count; ++i) {
    const double u = (offset_mm + i * step_mm) / spacing_mm;
    const auto [cell, t] = locate(u, control_count);
    b.first[i] = cell;
    b.value[i] = cubic_weights(t);
    auto d = cubic_first_derivatives(t);
    for (double& v : d) v /= spacing_mm;
    b.slope[i] = d;
  }
  return b;
}

void evaluate_separable(const std::vector<double>& coeff, const Index3& cd, const AxisBasis& bx,
                        const AxisBasis& by, const AxisBasis& bz, double* value, double* dx,
                        double* dy, double* dz) {
  const int nx = static_cast<int>(bx.first.size());
  const int ny = static_cast<int>(by.first.size());
  const int nz = static_cast<int>(bz.first.size());
  if (nx == 0 || ny == 0 || nz == 0) return;
  const int ylo = *std::min_element(by.first.begin(), by.first.end());
  const int yhi = *std::max_element(by.first.begin(), by.first.end()) + 3;
  const int zlo = *std::min_element(bz.first.begin(), bz.first.end());
  const int zhi = *std::max_element(bz.first.begin(), bz.first.end()) + 3;
  const int NY = yhi - ylo + 1, NZ = zhi - zlo + 1;

  const bool need_x_slope = dx != nullptr;
  const bool need_u00 = value || dz;
  std::vector<double> t0(static_cast<std::size_t>(NZ) * NY * nx);
  std::vector<double> t1(need_x_slope ? t0.size() : 0);
  for (int kz = 0; kz < NZ; ++kz)
    for (int ky = 0; ky < NY; ++ky) {
      const double* row = &coeff[(static_cast<std::size_t>(zlo + kz) * cd[1] + ylo + ky) * cd[0]];
      double* o0 = &t0[(static_cast<std::size_t>(kz) * NY + ky) * nx];
      double* o1 = need_x_slope ? &t1[(static_cast<std::size_t>(kz) * NY + ky) * nx] : nullptr;
      for (int x = 0; x < nx; ++x) {
        const double* c = row + bx.first[x];
        const auto& w = bx.value[x];
        o0[x] = w[0] * c[0] + w[1] * c[1] + w[2] * c[2] + w[3] * c[3];
        if (o1) {
          const auto& s = bx.slope[x];
          o1[x] = s[0] * c[0] + s[1] * c[1] + s[2] * c[2] + s[3] * c[3];
        }
      }
    }

  const std::size_t plane = static_cast<std::size_t>(ny) * nx;
  std::vector<double> u00(need_u00 ? NZ * plane : 0);
  std::vector<double> u10(dx ? NZ * plane : 0);
  std::vector<double> u01(dy ? NZ * plane : 0);
  for (int kz = 0; kz < NZ; ++kz)
    for (int y = 0; y < ny; ++y) {
      const int fy = by.first[y] - ylo;
      const auto& w = by.value[y];
      const auto& s = by.slope[y];
      const std::size_t out_off = (static_cast<std::size_t>(kz) * ny + y) * nx;
      for (int b = 0; b < 4; ++b) {
        const std::size_t in_off = (static_cast<std::size_t>(kz) * NY + fy + b) * nx;
        const double* a0 = &t0[in_off];
        if (need_u00) {
          double* o = &u00[out_off];
          for (int x = 0; x < nx; ++x) o[x] += w[b] * a0[x];
        }
        if (dy) {
          double* o = &u01[out_off];
          for (int x = 0; x < nx; ++x) o[x] += s[b] * a0[x];
        }
        if (dx) {
          const double* a1 = &t1[in_off];
          double* o = &u10[out_off];
          for (int x = 0; x < nx; ++x) o[x] += w[b] * a1[x];
        }
      }
    }

  for (int z = 0; z < nz; ++z) {
    const int fz = bz.first[z] - zlo;
    const auto& w = bz.value[z];
    const auto& s = bz.slope[z];
    const std::size_t out_off = z * plane;
    if (value) std::fill(value + out_off, value + out_off + plane, 0.0);
    if (dx) std::fill(dx + out_off, dx + out_off + plane, 0.0);
    if (dy) std::fill(dy + out_off, dy + out_off + plane, 0.0);
    if (dz) std::fill(dz + out_off, dz + out_off + plane, 0.0);
    for (int c = 0; c < 4; ++c) {
      const std::size_t in_off = (fz + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (value) value[out_off + i] += w[c] * u00[in_off + i];
        if (dz) dz[out_off + i] += s[c] * u00[in_off + i];
        if (dx) dx[out_off + i] += w[c] * u10[in_off + i];
        if (dy) dy[out_off + i] += w[c] * u01[in_off + i];
      }
    }
  }
}

void accumulate_separable(std::vector<double>& grad, const Index3& cd, const AxisBasis& bx,
                          const AxisBasis& by, const AxisBasis& bz, const double* gv,
                          const double* gx, const double* gy, const double* gz) {
  const int nx = static_cast<int>(bx.first.size());
  const int ny = static_cast<int>(by.first.size());
  const int nz = static_cast<int>(bz.first.size());
  if (nx == 0 || ny == 0 || nz == 0) return;
  const int ylo = *std::min_element(by.first.begin(), by.first.end());
  const int yhi = *std::max_element(by.first.begin(), by.first.end()) + 3;
  const int zlo = *std::min_element(bz.first.begin(), bz.first.end());
  const int zhi = *std::max_element(bz.first.begin(), bz.first.end()) + 3;
  const int NY = yhi - ylo + 1, NZ = zhi - zlo + 1;
  const std::size_t plane = static_cast<std::size_t>(ny) * nx;

  const bool need_a00 = gv || gz;
  std::vector<double> a00(need_a00 ? NZ * plane : 0);
  std::vector<double> a10(gx ? NZ * plane : 0);
  std::vector<double> a01(gy ? NZ * plane : 0);
  for (int z = 0; z < nz; ++z) {
    const int fz = bz.first[z] - zlo;
    const auto& w = bz.value[z];
    const auto& s = bz.slope[z];
    const std::size_t in_off = z * plane;
    for (int c = 0; c < 4; ++c) {
      const std::size_t out_off = (fz + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (need_a00) {
          double v = 0.0;
          if (gv) v += w[c] * gv[in_off + i];
          if (gz) v += s[c] * gz[in_off + i];
          a00[out_off + i] += v;
        }
        if (gx) a10[out_off + i] += w[c] * gx[in_off + i];
        if (gy) a01[out_off + i] += w[c] * gy[in_off + i];
      }
    }
  }

  std::vector<double> b0(static_cast<std::size_t>(NZ) * NY * nx, 0.0);
  std::vector<double> b1(gx ? b0.size() : 0, 0.0);
  for (int kz = 0; kz < NZ; ++kz)
    for (int y = 0; y < ny; ++y) {
      const int fy = by.first[y] - ylo;
      const auto& w = by.value[y];
      const auto& s = by.slope[y];
      const std::size_t in_off = (static_cast<std::size_t>(kz) * ny + y) * nx;
      for (int b = 0; b < 4; ++b) {
        const std::size_t out_off = (static_cast<std::size_t>(kz) * NY + fy + b) * nx;
        double* o0 = &b0[out_off];
        if (need_a00)
          for (int x = 0; x < nx; ++x) o0[x] += w[b] * a00[in_off + x];
        if (gy)
          for (int x = 0; x < nx; ++x) o0[x] += s[b] * a01[in_off + x];
        if (gx) {
          double* o1 = &b1[out_off];
          for (int x = 0; x < nx; ++x) o1[x] += w[b] * a10[in_off + x];
        }
      }
    }

  for (int kz = 0; kz < NZ; ++kz)
    for (int ky = 0; ky < NY; ++ky) {
      double* row = &grad[(static_cast<std::size_t>(zlo + kz) * cd[1] + ylo + ky) * cd[0]];
      const std::size_t off = (static_cast<std::size_t>(kz) * NY + ky) * nx;
      for (int x = 0; x < nx; ++x) {
        double* c = row + bx.first[x];
        const double v0 = b0[off + x];
        const auto& w = bx.value[x];
        for (int a = 0; a < 4; ++a) c[a] += w[a] * v0;
        if (gx) {
          const double v1 = b1[off + x];
          const auto& s = bx.slope[x];
          for (int a = 0; a < 4; ++a) c[a] += s[a] * v1;
        }
      }
    }
}

BendingEnergyForm::BendingEnergyForm(const BSplineGrid& grid) : dims_(grid.control_dims) {
  // 4-point Gauss-Legendre on [0, 1]: exact for the degree-6 products.
  static const double gx[4] = {0.0694318442029737, 0.3300094782075719, 0.6699905217924281,
                               0.9305681557970263};
  static const double gw[4] = {0.1739274225587269, 0.3260725774412731, 0.3260725774412731,
                               0.1739274225587269};
  const Vec3 extent = grid.reference.extent();
  inv_volume_ = 1.0;
  for (int axis = 0; axis < 3; ++axis) {
    const int n = grid.control_dims[axis];
    const double s = grid.control_spacing[axis];
    const double e = extent[axis];
    for (int order = 0; order < 3; ++order) {
      bands_[axis][order].n = n;
      bands_[axis][order].rows.assign(n, std::array<double, 7>{});
    }
    auto deposit = [&](double x, double weight) {
      const auto [cell, t] = locate(x / s, n);
      const std::array<double, 4> w[3] = {cubic_weights(t), cubic_first_derivatives(t),
                                          cubic_second_derivatives(t)};
      const double scale[3] = {1.0, 1.0 / s, 1.0 / (s * s)};
      for (int order = 0; order < 3; ++order) {
        auto& rows = bands_[axis][order].rows;
        const double f = scale[order] * scale[order] * weight;
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) rows[cell + a][b - a + 3] += f * w[order][a] * w[order][b];
      }
    };
    if (e <= 0.0) {
      deposit(0.0, 1.0);
      continue;
    }
    inv_volume_ /= e;
    for (int m = 0; m * s < e; ++m) {
      const double lo = m * s;
      const double hi = std::min((m + 1) * s, e);
      const double len = hi - lo;
      for (int q = 0; q < 4; ++q) deposit(lo + gx[q] * len, gw[q] * len);
    }
  }
}

void BendingEnergyForm::apply(const std::vector<double>& c, const Band& gx, const Band& gy,
                              const Band& gz, std::vector<double>& out) const {
  const int nx = dims_[0], ny = dims_[1], nz = dims_[2];
  auto idx = [&](int i, int j, int k) { return (static_cast<std::size_t>(k) * ny + j) * nx + i; };
  std::vector<double> t1(c.size(), 0.0), t2(c.size(), 0.0);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        double s = 0.0;
        for (int d = 0; d < 7; ++d) {
          const int q = i + d - 3;
          if (q >= 0 && q < nx) s += gx.rows[i][d] * c[idx(q, j, k)];
        }
        t1[idx(i, j, k)] = s;
      }
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        double s = 0.0;
        for (int d = 0; d < 7; ++d) {
          const int q = j + d - 3;
          if (q >= 0 && q < ny) s += gy.rows[j][d] * t1[idx(i, q, k)];
        }
        t2[idx(i, j, k)] = s;
      }
  out.assign(c.size(), 0.0);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        double s = 0.0;
        for (int d = 0; d < 7; ++d) {
          const int q = k + d - 3;
          if (q >= 0 && q < nz) s += gz.rows[k][d] * t2[idx(i, j, q)];
        }
        out[idx(i, j, k)] = s;
      }
}

double BendingEnergyForm::evaluate(const std::array<std::vector<double>, 3>& coeff,
                                   std::array<std::vector<double>, 3>* gradient) const {
  struct Term {
    int ox, oy, oz;
    double weight;
  };
  static const Term terms[6] = {{2, 0, 0, 1.0}, {0, 2, 0, 1.0}, {0, 0, 2, 1.0},
                                {1, 1, 0, 2.0}, {1, 0, 1, 2.0}, {0, 1, 1, 2.0}};
  double energy = 0.0;
  std::vector<double> kc;
  for (int comp = 0; comp < 3; ++comp) {
    const auto& c = coeff[comp];
    if (gradient) (*gradient)[comp].assign(c.size(), 0.0);
    for (const Term& t : terms) {
      apply(c, bands_[0][t.ox], bands_[1][t.oy], bands_[2][t.oz], kc);
      double dot = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) dot += c[i] * kc[i];
      energy += t.weight * dot;
      if (gradient) {
        auto& g = (*gradient)[comp];
        const double f = 2.0 * t.weight * inv_volume_;
        for (std::size_t i = 0; i < c.size(); ++i) g[i] += f * kc[i];
      }
    }
  }
  return energy * inv_volume_;
}

}  // namespace detail

DenseDisplacementField evaluate_field(const BSplineGrid& grid) {
  const Geometry& g = grid.reference;
  detail::AxisBasis b[3];
  for (int a = 0; a < 3; ++a)
    b[a] = detail::make_axis_basis(g.dims[a], 0.0, g.spacing[a], grid.control_spacing[a],
                                   grid.control_dims[a]);
  DenseDisplacementField field(g);
  std::vector<double> comp(g.voxel_count());
  for (int c = 0; c < 3; ++c) {
    detail::evaluate_separable(grid.coefficients[c], grid.control_dims, b[0], b[1], b[2],
                               comp.data(), nullptr, nullptr, nullptr);
    for (std::size_t i = 0; i < comp.size(); ++i) field.components[3 * i + c] = static_cast<float>(comp[i]);
  }
  return field;
}

DenseDisplacementField deformation_field(const BSplineGrid& grid) {
  DenseDisplacementField field = evaluate_field(grid);
  const Geometry& g = grid.reference;
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        const std::size_t i = g.index(x, y, z);
        const Vec3 p = g.to_physical(x, y, z);
        field.set(i, field.at(i) + grid.init.apply(p) - p);
      }
  return field;
}

double bending_energy(const BSplineGrid& grid) {
  return detail::BendingEnergyForm(grid).evaluate(grid.coefficients, nullptr);
}

std::array<std::vector<double>, 3> bending_energy_gradient(const BSplineGrid& grid) {
  std::array<std::vector<double>, 3> g;
  detail::BendingEnergyForm(grid).evaluate(grid.coefficients, &g);
  return g;
}

double log_jacobian_penalty(const BSplineGrid& grid) {
  const JacobianFields f = jacobian_fields(grid);
  const std::size_t n = grid.reference.voxel_count();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double det = determinant_at(f, i);
    if (!(det > 0.0)) return std::numeric_limits<double>::infinity();
    const double l = std::log(det);
    sum += l * l;
  }
  return sum / static_cast<double>(n);
}

double min_jacobian_determinant(const BSplineGrid& grid) {
  const JacobianFields f = jacobian_fields(grid);
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.reference.voxel_count(); ++i) m = std::min(m, determinant_at(f, i));
  return m;
}

}  // namespace dceus
