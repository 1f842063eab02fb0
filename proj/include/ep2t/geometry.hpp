#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "ep2t/rng.hpp"

namespace ep2t {

/// Camera-to-world rigid transform: X_world = R * X_cam + T.
struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d T = Eigen::Vector3d::Zero();

  /// Camera-frame coordinates of a world point.
  Eigen::Vector3d to_camera(const Eigen::Vector3d& x) const { return R.transpose() * (x - T); }
};

/// Pinhole camera with z forward, u = fx X / Z + cx, v = fy Y / Z + cy.
struct Intrinsics {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int height = 0;
  int width = 0;
};

void validate(const Intrinsics& intr);

/// Throws NotARotation unless R^T R = I and det R = 1 within `tol`.
void check_rotation(const Eigen::Matrix3d& R, double tol = 1e-9);

inline constexpr double kDefaultNear = 0.1;
inline constexpr double kDefaultFar = 50.0;

/// n . x + d >= 0 on the inside; n is unit length.
struct Plane {
  Eigen::Vector3d n = Eigen::Vector3d::UnitZ();
  double d = 0.0;

  double distance(const Eigen::Vector3d& x) const {
    return n.x() * x.x() + n.y() * x.y() + n.z() * x.z() + d;
  }
};

/// World-frame viewing frustum. Plane order: near, left, right, top, bottom, far.
struct Frustum {
  std::array<Plane, 6> planes;
  double near = kDefaultNear;
  double far = kDefaultFar;

  bool contains(const Eigen::Vector3d& x) const;
  /// Smallest absolute plane distance; used to excuse boundary disagreements.
  double boundary_distance(const Eigen::Vector3d& x) const;
};

static_assert(sizeof(Eigen::Vector3d) == 3 * sizeof(double), "points are read as packed xyz");

struct PointCloud3D {
  std::vector<Eigen::Vector3d> points;

  std::size_t size() const { return points.size(); }
};

/// Throws InvalidDepths unless 0 < near < far (both finite).
/// `scale` grows the image rectangle about the principal point and the far
/// depth by the same factor.
Frustum build_frustum(const Pose& pose, const Intrinsics& intr, double near, double far,
                      double scale = 1.0);

/// Ascending indices of points on or inside all six planes.
std::vector<std::size_t> frustum_select(const PointCloud3D& cloud, const Frustum& fr);

/// Naive oracle: transform, keep near <= Z <= far, project, keep u in [0, W), v in [0, H).
std::vector<std::size_t> project_select(const PointCloud3D& cloud, const Pose& pose,
                                        const Intrinsics& intr, double near, double far);

/// True when the two selections differ only at points within `slack` of a plane.
bool selections_agree(const PointCloud3D& cloud, const Frustum& fr,
                      const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                      double slack = 1e-9);

struct FramePair {
  std::vector<std::size_t> visible;
  std::vector<std::size_t> enlarged;
};

/// Visible frustum plus the surrounding region with the image rectangle and
/// far depth scaled by (1 + enlarge).
FramePair make_pair(const PointCloud3D& scene, const Pose& pose, const Intrinsics& intr,
                    double near, double far, double enlarge);

/// Angle of R_gt^T R_pred in radians. Computed as atan2 of the skew and trace
/// parts, which equals arccos((tr - 1) / 2) but keeps full precision near 0 and pi.
double rotation_error(const Eigen::Matrix3d& r_gt, const Eigen::Matrix3d& r_pred);

double translation_error(const Eigen::Vector3d& t_gt, const Eigen::Vector3d& t_pred);

Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double angle);

/// Haar-uniform rotation from three uniform draws (Shoemake).
Eigen::Matrix3d random_rotation(Rng& rng);
Eigen::Matrix3d random_rotation(double u1, double u2, double u3);

// Point clouds: ASCII PLY subset and "PC31" | u64 N | N x 3 f64.
void write_ply(std::ostream& out, const PointCloud3D& cloud);
PointCloud3D read_ply(std::istream& in);
void write_pc31(std::ostream& out, const PointCloud3D& cloud);
PointCloud3D read_pc31(std::istream& in);
PointCloud3D load_cloud(const std::filesystem::path& path);
void save_cloud(const std::filesystem::path& path, const PointCloud3D& cloud);

/// Pose file line: `timestamp qw qx qy qz tx ty tz`. The timestamp token is
/// kept verbatim as the matching key; quaternions are normalized on load.
struct StampedPose {
  std::string stamp;
  Pose pose;
};
std::vector<StampedPose> read_poses(std::istream& in);
void write_poses(std::ostream& out, const std::vector<StampedPose>& poses);
std::vector<StampedPose> load_poses(const std::filesystem::path& path);

/// Intrinsics file: `fx fy cx cy width height` on one line.
Intrinsics load_intrinsics(const std::filesystem::path& path);

}  // namespace ep2t
