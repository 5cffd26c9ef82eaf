#include "dceus/affine.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/LU>

namespace dceus {

AffineTransform::AffineTransform(const Mat34& matrix) : matrix_(matrix) {
  if (!matrix_.allFinite()) throw DegenerateError("affine: non-finite entries");
  if (std::abs(matrix_.leftCols<3>().determinant()) <= 1e-9)
    throw DegenerateError("affine: singular linear part");
}

AffineTransform::AffineTransform(const Mat3& linear, const Vec3& translation)
    : AffineTransform([&] {
        Mat34 m;
        m << linear, translation;
        return m;
      }()) {}

AffineTransform AffineTransform::translation(const Vec3& offset) {
  return AffineTransform(Mat3::Identity(), offset);
}

AffineTransform AffineTransform::about_center(const Mat3& linear, const Vec3& center,
                                              const Vec3& offset) {
  return AffineTransform(linear, center - linear * center + offset);
}

AffineTransform AffineTransform::inverse() const {
  const Mat3 inv = linear().inverse();
  return AffineTransform(inv, -inv * offset());
}

AffineTransform operator*(const AffineTransform& a, const AffineTransform& b) {
  return AffineTransform(a.linear() * b.linear(), a.linear() * b.offset() + a.offset());
}

double AffineTransform::max_abs_difference(const AffineTransform& other) const {
  return (matrix_ - other.matrix_).cwiseAbs().maxCoeff();
}

void write_affine(std::ostream& out, const AffineTransform& transform) {
  out << kAffineFileTag << '\n' << std::setprecision(17);
  const auto& m = transform.matrix();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) out << (c ? " " : "") << m(r, c);
    out << '\n';
  }
}

AffineTransform read_affine(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# dceus-affine", 0) != 0)
    throw FormatError("affine file: missing header tag");
  Mat34 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c)
      if (!(in >> m(r, c))) throw FormatError("affine file: expected 12 numbers");
  return AffineTransform(m);
}

void save_affine(const std::string& path, const AffineTransform& transform) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_affine(out, transform);
  if (!out) throw IoError("failed writing " + path);
}

AffineTransform load_affine(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_affine(in);
}

}  // namespace dceus
