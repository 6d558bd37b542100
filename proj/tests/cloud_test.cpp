#include "priorloc/cloud.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <unordered_map>

#include "priorloc/cloud_io.hpp"
#include "priorloc/kdtree.hpp"

using namespace priorloc;
namespace fs = std::filesystem;

namespace {

std::mt19937_64 rng(11);

Vec3 random_vec3(double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return Vec3(d(rng), d(rng), d(rng));
}

PointCloud random_cloud(int n, double scale, bool with_normals,
                        bool with_errors) {
  PointCloud c;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    c.points.push_back(random_vec3(scale));
    if (with_normals) {
      c.normals.push_back(random_vec3(1.0).normalized());
      c.normal_valid.push_back(1);
    }
    if (with_errors) c.errors.push_back(u(rng));
  }
  return c;
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / name;
}

// Mirrors the voxel convention: floor(coord / leaf) per axis.
uint64_t oracle_key(const Vec3& p, double leaf) {
  const auto idx = [&](double v) {
    return static_cast<uint64_t>(
        static_cast<int64_t>(std::floor(v / leaf)) + (1 << 20));
  };
  return (idx(p.x()) << 42) | (idx(p.y()) << 21) | idx(p.z());
}

}  // namespace

TEST_CASE("binary pcd round trip is bit exact") {
  const PointCloud c = random_cloud(500, 50.0, true, true);
  const fs::path path = temp_file("cloud_test_bin.pcd");
  save_cloud(c, path.string(), PcdFormat::kBinary);
  const LoadResult res = load_cloud(path.string());
  REQUIRE(res.cloud.size() == c.size());
  CHECK(res.dropped_nan == 0);
  for (size_t i = 0; i < c.size(); ++i) {
    CHECK(res.cloud.points[i] == c.points[i]);
    CHECK(res.cloud.normals[i] == c.normals[i]);
    CHECK(res.cloud.errors[i] == c.errors[i]);
  }
}

TEST_CASE("ascii pcd round trip recovers every value") {
  const PointCloud c = random_cloud(200, 10.0, false, false);
  const fs::path path = temp_file("cloud_test_ascii.pcd");
  save_cloud(c, path.string(), PcdFormat::kAscii);
  const LoadResult res = load_cloud(path.string());
  REQUIRE(res.cloud.size() == c.size());
  for (size_t i = 0; i < c.size(); ++i) {
    // 17 significant digits round-trip IEEE doubles exactly.
    CHECK(res.cloud.points[i] == c.points[i]);
  }
}

TEST_CASE("empty ply yields an empty cloud") {
  const fs::path path = temp_file("cloud_test_empty.ply");
  std::ofstream(path) << "ply\nformat ascii 1.0\nelement vertex 0\n"
                         "property float x\nproperty float y\n"
                         "property float z\nend_header\n";
  const LoadResult res = load_cloud(path.string());
  CHECK(res.cloud.empty());
  CHECK(res.dropped_nan == 0);
}

TEST_CASE("non finite rows are dropped and counted") {
  const fs::path path = temp_file("cloud_test_nan.pcd");
  {
    std::ofstream out(path, std::ios::binary);
    out << "VERSION 0.7\nFIELDS x y z\nSIZE 8 8 8\n"
           "TYPE F F F\nCOUNT 1 1 1\nWIDTH 3\nHEIGHT 1\n"
           "POINTS 3\nDATA binary\n";
    const double rows[9] = {1, 2, 3,
                            4, std::numeric_limits<double>::quiet_NaN(), 6,
                            7, 8, 9};
    out.write(reinterpret_cast<const char*>(rows), sizeof(rows));
  }
  const LoadResult res = load_cloud(path.string());
  CHECK(res.cloud.size() == 2);
  CHECK(res.dropped_nan == 1);
  CHECK(res.cloud.points[1] == Vec3(7, 8, 9));
}

TEST_CASE("malformed pcd header names the offending line") {
  const fs::path path = temp_file("cloud_test_bad.pcd");
  std::ofstream(path) << "VERSION 0.7\nBOGUS 3\nDATA ascii\n";
  try {
    load_cloud(path.string());
    FAIL("expected CloudIoError");
  } catch (const CloudIoError& e) {
    CHECK(std::string(e.what()).find("BOGUS") != std::string::npos);
  }
}

TEST_CASE("unknown extensions are rejected") {
  CHECK_THROWS_AS(load_cloud("cloud.xyz"), CloudIoError);
  CHECK_THROWS_AS(load_cloud(temp_file("does_not_exist.pcd").string()),
                  CloudIoError);
}

TEST_CASE("eight points in one voxel collapse to their centroid") {
  PointCloud c;
  Vec3 sum = Vec3::Zero();
  for (int i = 0; i < 8; ++i) {
    const Vec3 p(0.01 + 0.01 * (i & 1), 0.01 + 0.01 * ((i >> 1) & 1),
                 0.01 + 0.01 * ((i >> 2) & 1));
    c.points.push_back(p);
    sum += p;
  }
  const PointCloud out = voxel_downsample(c, {0.1});
  REQUIRE(out.size() == 1);
  CHECK((out.points[0] - sum / 8.0).norm() < 1e-15);
}

TEST_CASE("a grid coarser than the leaf passes through unchanged") {
  PointCloud c;
  for (int x = 0; x < 5; ++x) {
    for (int y = 0; y < 5; ++y) {
      c.points.push_back(Vec3(0.5 * x + 0.1, 0.5 * y + 0.1, 0.1));
    }
  }
  const PointCloud out = voxel_downsample(c, {0.25});
  REQUIRE(out.size() == c.size());
  for (size_t i = 0; i < c.size(); ++i) {
    CHECK(out.points[i] == c.points[i]);
  }
}

TEST_CASE("downsampling matches the per voxel centroid oracle") {
  const double leaf = 0.2;
  const PointCloud c = random_cloud(10000, 3.0, false, false);

  std::unordered_map<uint64_t, std::pair<Vec3, int>> oracle;
  for (const Vec3& p : c.points) {
    auto& [sum, count] = oracle[oracle_key(p, leaf)];
    if (count == 0) sum = Vec3::Zero();
    sum += p;
    ++count;
  }

  const PointCloud out = voxel_downsample(c, {leaf});
  REQUIRE(out.size() == oracle.size());
  for (const Vec3& q : out.points) {
    const auto it = oracle.find(oracle_key(q, leaf));
    REQUIRE(it != oracle.end());
    const Vec3 centroid = it->second.first / it->second.second;
    CHECK((q - centroid).norm() < 1e-12);
  }
}

TEST_CASE("downsampling is idempotent") {
  const PointCloud c = random_cloud(5000, 2.0, false, false);
  const PointCloud once = voxel_downsample(c, {0.15});
  const PointCloud twice = voxel_downsample(once, {0.15});
  REQUIRE(twice.size() == once.size());
  for (size_t i = 0; i < once.size(); ++i) {
    CHECK(twice.points[i] == once.points[i]);
  }
}

TEST_CASE("plane normals point toward the viewpoint") {
  PointCloud c;
  for (int x = 0; x < 10; ++x) {
    for (int y = 0; y < 10; ++y) {
      c.points.push_back(Vec3(0.1 * x, 0.1 * y, 0.0));
    }
  }
  const PointCloud above = estimate_normals(c, 8, Vec3(0.5, 0.5, 5.0));
  const PointCloud below = estimate_normals(c, 8, Vec3(0.5, 0.5, -5.0));
  REQUIRE(above.has_normals());
  for (size_t i = 0; i < c.size(); ++i) {
    REQUIRE(above.normal_valid[i] == 1);
    CHECK((above.normals[i] - Vec3(0, 0, 1)).norm() < 1e-9);
    CHECK((below.normals[i] - Vec3(0, 0, -1)).norm() < 1e-9);
  }
}

TEST_CASE("collinear neighborhoods are marked invalid") {
  PointCloud c;
  for (int i = 0; i < 30; ++i) c.points.push_back(Vec3(0.05 * i, 0, 0));
  const PointCloud out = estimate_normals(c, 6, Vec3(0, 1, 0));
  for (size_t i = 0; i < c.size(); ++i) CHECK(out.normal_valid[i] == 0);
}

TEST_CASE("noisy plane normals stay within two degrees") {
  std::normal_distribution<double> noise(0.0, 0.002);
  PointCloud c;
  for (int x = 0; x < 30; ++x) {
    for (int y = 0; y < 30; ++y) {
      c.points.push_back(Vec3(0.05 * x, 0.05 * y, noise(rng)));
    }
  }
  const PointCloud out = estimate_normals(c, 20, Vec3(0.75, 0.75, 10.0));
  int valid = 0;
  for (size_t i = 0; i < c.size(); ++i) {
    if (!out.normal_valid[i]) continue;
    ++valid;
    CHECK(std::abs(out.normals[i].norm() - 1.0) < 1e-12);
    const double cosang = out.normals[i].dot(Vec3::UnitZ());
    CHECK(cosang > std::cos(2.0 * M_PI / 180.0));
  }
  CHECK(valid == static_cast<int>(c.size()));
}

TEST_CASE("too few points leave every normal invalid") {
  const PointCloud c = random_cloud(5, 1.0, false, false);
  const PointCloud out = estimate_normals(c, 10, Vec3::Zero());
  for (size_t i = 0; i < c.size(); ++i) CHECK(out.normal_valid[i] == 0);
}

TEST_CASE("nearest finds exact matches at distance zero") {
  const PointCloud c = random_cloud(300, 5.0, false, false);
  const SpatialIndex index(c);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int> pick(0, 299);
    const int i = pick(rng);
    const auto hit = index.nearest(c.points[i], 1e-9);
    REQUIRE(hit.has_value());
    CHECK(hit->second == 0.0);
    CHECK(c.points[hit->first] == c.points[i]);
  }
}

TEST_CASE("nearest respects the search radius") {
  PointCloud c;
  c.points.push_back(Vec3(10, 0, 0));
  const SpatialIndex index(c);
  CHECK(!index.nearest(Vec3::Zero(), 5.0).has_value());
  const auto hit = index.nearest(Vec3::Zero(), 15.0);
  REQUIRE(hit.has_value());
  CHECK(hit->second == doctest::Approx(10.0));
}

TEST_CASE("nearest agrees with a linear scan") {
  const PointCloud c = random_cloud(2000, 4.0, false, false);
  const SpatialIndex index(c);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 q = random_vec3(5.0);
    double best_d = std::numeric_limits<double>::infinity();
    int best = -1;
    for (size_t i = 0; i < c.size(); ++i) {
      const double d = (c.points[i] - q).norm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    const auto hit = index.nearest(q, 100.0);
    REQUIRE(hit.has_value());
    CHECK(hit->second == doctest::Approx(best_d).epsilon(1e-12));
    CHECK((c.points[hit->first] - c.points[best]).norm() < 1e-12);
  }
}

TEST_CASE("knn agrees with a brute force sort") {
  const PointCloud c = random_cloud(500, 3.0, false, false);
  const SpatialIndex index(c);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 q = random_vec3(4.0);
    const int k = 12;
    std::vector<std::pair<double, int>> all;
    for (size_t i = 0; i < c.size(); ++i) {
      all.emplace_back((c.points[i] - q).squaredNorm(), static_cast<int>(i));
    }
    std::sort(all.begin(), all.end());
    std::set<int> expected;
    for (int i = 0; i < k; ++i) expected.insert(all[i].second);

    const std::vector<int> got = index.knn(q, k);
    REQUIRE(got.size() == static_cast<size_t>(k));
    for (int id : got) CHECK(expected.count(id) == 1);
  }
}

TEST_CASE("identity transform leaves the cloud unchanged") {
  const PointCloud c = random_cloud(100, 2.0, true, false);
  const PointCloud out = transform_cloud(c, Pose::Identity());
  for (size_t i = 0; i < c.size(); ++i) {
    CHECK(out.points[i] == c.points[i]);
    CHECK(out.normals[i] == c.normals[i]);
  }
}

TEST_CASE("pure translation preserves normals bitwise") {
  const PointCloud c = random_cloud(100, 2.0, true, false);
  const Pose shift(Mat3::Identity(), Vec3(1.5, -2.0, 0.25));
  const PointCloud out = transform_cloud(c, shift);
  for (size_t i = 0; i < c.size(); ++i) {
    CHECK(out.normals[i] == c.normals[i]);
    CHECK((out.points[i] - (c.points[i] + shift.t)).norm() == 0.0);
  }
}

TEST_CASE("transform round trip through the inverse") {
  const PointCloud c = random_cloud(200, 2.0, true, false);
  Twist xi;
  xi << 0.4, -0.2, 0.9, 1.0, -2.0, 0.5;
  const Pose x = lie::se3_exp(xi);
  const PointCloud back = transform_cloud(transform_cloud(c, x),
                                          lie::inverse(x));
  for (size_t i = 0; i < c.size(); ++i) {
    CHECK((back.points[i] - c.points[i]).norm() < 1e-12);
    CHECK((back.normals[i] - c.normals[i]).norm() < 1e-12);
    CHECK(std::abs(back.normals[i].norm() - 1.0) < 1e-12);
  }
}
