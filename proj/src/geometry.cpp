#include "ep2t/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "ep2t/binary.hpp"
#include "ep2t/error.hpp"

namespace ep2t {

void validate(const Intrinsics& intr) {
  if (!(intr.fx > 0.0) || !(intr.fy > 0.0) || !std::isfinite(intr.fx) || !std::isfinite(intr.fy)) {
    throw Error(ErrorCode::ConfigError, "focal lengths must be positive and finite");
  }
  if (intr.width < 1 || intr.height < 1) {
    throw Error(ErrorCode::ConfigError, "image size must be at least 1x1");
  }
  if (!(intr.cx >= 0.0 && intr.cx <= intr.width && intr.cy >= 0.0 && intr.cy <= intr.height)) {
    throw Error(ErrorCode::ConfigError, "principal point lies outside the image");
  }
}

void check_rotation(const Eigen::Matrix3d& R, double tol) {
  const double ortho = (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  const double det = R.determinant();
  if (!(ortho <= tol) || !(std::abs(det - 1.0) <= tol)) {
    std::ostringstream msg;
    msg << "matrix is not a rotation (|R^T R - I|_max = " << ortho << ", det = " << det << ")";
    throw Error(ErrorCode::NotARotation, msg.str());
  }
}

bool Frustum::contains(const Eigen::Vector3d& x) const {
  for (const Plane& p : planes) {
    if (p.distance(x) < 0.0) return false;
  }
  return true;
}

double Frustum::boundary_distance(const Eigen::Vector3d& x) const {
  double best = std::numeric_limits<double>::infinity();
  for (const Plane& p : planes) best = std::min(best, std::abs(p.distance(x)));
  return best;
}

namespace {

Plane camera_plane_to_world(const Pose& pose, Eigen::Vector3d n, double d) {
  const double len = n.norm();
  n /= len;
  d /= len;
  Plane out;
  out.n = pose.R * n;
  out.d = d - out.n.dot(pose.T);
  return out;
}

}  // namespace

Frustum build_frustum(const Pose& pose, const Intrinsics& intr, double near, double far,
                      double scale) {
  if (!(near > 0.0) || !(far > near) || !std::isfinite(far)) {
    std::ostringstream msg;
    msg << "need 0 < near < far, got near=" << near << " far=" << far;
    throw Error(ErrorCode::InvalidDepths, msg.str());
  }
  if (!(scale >= 1.0) || !std::isfinite(scale)) {
    throw Error(ErrorCode::ConfigError, "frustum scale must be >= 1");
  }
  validate(intr);
  check_rotation(pose.R);

  // Image rectangle scaled about the principal point.
  const double u0 = intr.cx - scale * intr.cx;
  const double u1 = intr.cx + scale * (intr.width - intr.cx);
  const double v0 = intr.cy - scale * intr.cy;
  const double v1 = intr.cy + scale * (intr.height - intr.cy);

  Frustum fr;
  fr.near = near;
  fr.far = far * scale;
  fr.planes[0] = camera_plane_to_world(pose, {0.0, 0.0, 1.0}, -near);
  fr.planes[1] = camera_plane_to_world(pose, {intr.fx, 0.0, intr.cx - u0}, 0.0);
  fr.planes[2] = camera_plane_to_world(pose, {-intr.fx, 0.0, u1 - intr.cx}, 0.0);
  fr.planes[3] = camera_plane_to_world(pose, {0.0, intr.fy, intr.cy - v0}, 0.0);
  fr.planes[4] = camera_plane_to_world(pose, {0.0, -intr.fy, v1 - intr.cy}, 0.0);
  fr.planes[5] = camera_plane_to_world(pose, {0.0, 0.0, -1.0}, fr.far);
  return fr;
}

std::vector<std::size_t> frustum_select(const PointCloud3D& cloud, const Frustum& fr) {
  // Branchless plane tests over fixed blocks (vectorizable), then compaction.
  constexpr std::size_t kBlock = 512;
  double nx[6], ny[6], nz[6], nd[6];
  for (int p = 0; p < 6; ++p) {
    nx[p] = fr.planes[p].n.x();
    ny[p] = fr.planes[p].n.y();
    nz[p] = fr.planes[p].n.z();
    nd[p] = fr.planes[p].d;
  }
  const double* xyz = cloud.points.empty() ? nullptr : cloud.points.front().data();
  std::vector<std::size_t> out;
  unsigned char mask[kBlock];
  for (std::size_t base = 0; base < cloud.points.size(); base += kBlock) {
    const std::size_t n = std::min(kBlock, cloud.points.size() - base);
    const double* blk = xyz + 3 * base;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = blk[3 * i], y = blk[3 * i + 1], z = blk[3 * i + 2];
      unsigned char in = 1;
      for (int p = 0; p < 6; ++p) in &= (nx[p] * x + ny[p] * y + nz[p] * z + nd[p] >= 0.0);
      mask[i] = in;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) out.push_back(base + i);
    }
  }
  return out;
}

std::vector<std::size_t> project_select(const PointCloud3D& cloud, const Pose& pose,
                                        const Intrinsics& intr, double near, double far) {
  const Eigen::Matrix3d rt = pose.R.transpose();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Eigen::Vector3d c = rt * (cloud.points[i] - pose.T);
    const double z = c.z();
    if (!(z >= near && z <= far)) continue;
    const double u = intr.fx * c.x() / z + intr.cx;
    const double v = intr.fy * c.y() / z + intr.cy;
    if (u >= 0.0 && u < intr.width && v >= 0.0 && v < intr.height) out.push_back(i);
  }
  return out;
}

bool selections_agree(const PointCloud3D& cloud, const Frustum& fr,
                      const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                      double slack) {
  std::vector<std::size_t> diff;
  std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(diff));
  return std::all_of(diff.begin(), diff.end(), [&](std::size_t i) {
    return fr.boundary_distance(cloud.points[i]) <= slack;
  });
}

FramePair make_pair(const PointCloud3D& scene, const Pose& pose, const Intrinsics& intr,
                    double near, double far, double enlarge) {
  if (!(enlarge >= 0.0)) throw Error(ErrorCode::ConfigError, "enlargement must be >= 0");
  FramePair pair;
  pair.visible = frustum_select(scene, build_frustum(pose, intr, near, far));
  pair.enlarged = enlarge == 0.0 ? pair.visible
                                 : frustum_select(scene, build_frustum(pose, intr, near, far,
                                                                       1.0 + enlarge));
  return pair;
}

double rotation_error(const Eigen::Matrix3d& r_gt, const Eigen::Matrix3d& r_pred) {
  check_rotation(r_gt);
  check_rotation(r_pred);
  // M = r_gt^T r_pred, summed in a fixed order so that swapping the
  // arguments yields exactly the transpose.
  double m[3][3];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      m[i][j] = r_gt(0, i) * r_pred(0, j) + r_gt(1, i) * r_pred(1, j) + r_gt(2, i) * r_pred(2, j);
    }
  }
  const double cos_part = 0.5 * (m[0][0] + m[1][1] + m[2][2] - 1.0);
  const double sx = m[2][1] - m[1][2];
  const double sy = m[0][2] - m[2][0];
  const double sz = m[1][0] - m[0][1];
  const double sin_part = 0.5 * std::sqrt(sx * sx + sy * sy + sz * sz);
  return std::atan2(sin_part, cos_part);
}

double translation_error(const Eigen::Vector3d& t_gt, const Eigen::Vector3d& t_pred) {
  return (t_gt - t_pred).norm();
}

Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Eigen::Matrix3d random_rotation(double u1, double u2, double u3) {
  const double two_pi = 2.0 * std::numbers::pi;
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  Eigen::Quaterniond q(b * std::cos(two_pi * u3), a * std::sin(two_pi * u2),
                       a * std::cos(two_pi * u2), b * std::sin(two_pi * u3));
  return q.normalized().toRotationMatrix();
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  const double u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  const double u3 = uniform_unit(rng);
  return random_rotation(u1, u2, u3);
}

// ---------------------------------------------------------------------------
// Point cloud files

void write_ply(std::ostream& out, const PointCloud3D& cloud) {
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  out << std::setprecision(17);
  for (const Eigen::Vector3d& p : cloud.points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

PointCloud3D read_ply(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  const auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::ParseError, "PLY line " + std::to_string(line_no) + ": " + what);
  };
  const auto next = [&]() {
    if (!std::getline(in, line)) fail("unexpected end of file");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };

  next();
  if (line != "ply") fail("missing 'ply' signature");
  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::vector<std::string> props;
  while (true) {
    next();
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "end_header") break;
    if (key == "comment" || key == "obj_info" || key.empty()) continue;
    if (key == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "ascii") fail("only ascii PLY is supported, got '" + fmt + "'");
    } else if (key == "element") {
      std::string name;
      ss >> name;
      in_vertex = name == "vertex";
      if (in_vertex) {
        if (seen_vertex) fail("duplicate vertex element");
        if (!(ss >> vertex_count)) fail("bad vertex count");
        seen_vertex = true;
      } else if (!seen_vertex) {
        fail("vertex element must come first");
      }
    } else if (key == "property") {
      if (!in_vertex) continue;
      std::string type, name;
      ss >> type;
      if (type == "list") fail("list properties on vertices are not supported");
      ss >> name;
      props.push_back(name);
    } else {
      fail("unknown header keyword '" + key + "'");
    }
  }
  const auto find = [&](const char* name) {
    const auto it = std::find(props.begin(), props.end(), name);
    if (it == props.end()) fail(std::string("vertex property '") + name + "' missing");
    return static_cast<std::size_t>(it - props.begin());
  };
  const std::size_t ix = find("x"), iy = find("y"), iz = find("z");

  PointCloud3D cloud;
  cloud.points.reserve(vertex_count);
  std::vector<double> vals(props.size());
  for (std::size_t v = 0; v < vertex_count; ++v) {
    next();
    std::istringstream ss(line);
    for (double& x : vals) {
      if (!(ss >> x)) fail("expected " + std::to_string(props.size()) + " numbers");
    }
    const Eigen::Vector3d p(vals[ix], vals[iy], vals[iz]);
    if (!p.allFinite()) fail("non-finite coordinate");
    cloud.points.push_back(p);
  }
  return cloud;
}

void write_pc31(std::ostream& out, const PointCloud3D& cloud) {
  binary::put_magic(out, "PC31");
  binary::put(out, static_cast<std::uint64_t>(cloud.size()));
  for (const Eigen::Vector3d& p : cloud.points) {
    binary::put(out, p.x());
    binary::put(out, p.y());
    binary::put(out, p.z());
  }
}

PointCloud3D read_pc31(std::istream& in) {
  binary::Reader reader(in);
  reader.expect_magic("PC31");
  const auto n = reader.get<std::uint64_t>("point count");
  PointCloud3D cloud;
  for (std::uint64_t i = 0; i < n; ++i) {
    Eigen::Vector3d p;
    p.x() = reader.get<double>("x");
    p.y() = reader.get<double>("y");
    p.z() = reader.get<double>("z");
    if (!p.allFinite()) {
      throw Error(ErrorCode::ParseError, "non-finite coordinate in point " + std::to_string(i));
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

namespace {

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return in;
}

}  // namespace

PointCloud3D load_cloud(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  const bool binary = in.gcount() == 4 && std::string_view(magic, 4) == "PC31";
  in.clear();
  in.seekg(0);
  if (binary) return read_pc31(in);
  return read_ply(in);
}

void save_cloud(const std::filesystem::path& path, const PointCloud3D& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  if (path.extension() == ".ply") {
    write_ply(out, cloud);
  } else {
    write_pc31(out, cloud);
  }
}

// ---------------------------------------------------------------------------
// Pose and intrinsics files

std::vector<StampedPose> read_poses(std::istream& in) {
  std::vector<StampedPose> poses;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    StampedPose sp;
    double qw, qx, qy, qz, tx, ty, tz;
    if (!(ss >> sp.stamp >> qw >> qx >> qy >> qz >> tx >> ty >> tz)) {
      throw Error(ErrorCode::ParseError,
                  "pose line " + std::to_string(line_no) + ": expected `ts qw qx qy qz tx ty tz`");
    }
    Eigen::Quaterniond q(qw, qx, qy, qz);
    const double norm = q.norm();
    if (!(norm > 0.0) || !std::isfinite(norm) || !std::isfinite(tx + ty + tz)) {
      throw Error(ErrorCode::ParseError,
                  "pose line " + std::to_string(line_no) + ": degenerate quaternion or translation");
    }
    sp.pose.R = q.normalized().toRotationMatrix();
    sp.pose.T = {tx, ty, tz};
    poses.push_back(std::move(sp));
  }
  return poses;
}

void write_poses(std::ostream& out, const std::vector<StampedPose>& poses) {
  out << std::setprecision(17);
  for (const StampedPose& sp : poses) {
    const Eigen::Quaterniond q(sp.pose.R);
    out << sp.stamp << ' ' << q.w() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' '
        << sp.pose.T.x() << ' ' << sp.pose.T.y() << ' ' << sp.pose.T.z() << '\n';
  }
}

std::vector<StampedPose> load_poses(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return read_poses(in);
}

Intrinsics load_intrinsics(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  Intrinsics intr;
  if (!(in >> intr.fx >> intr.fy >> intr.cx >> intr.cy >> intr.width >> intr.height)) {
    throw Error(ErrorCode::ParseError,
                path.string() + ": expected `fx fy cx cy width height`");
  }
  validate(intr);
  return intr;
}

}  // namespace ep2t
