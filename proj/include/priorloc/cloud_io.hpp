// PCD v0.7 (ASCII / little-endian binary) and ASCII PLY point cloud I/O.
// Binary PCD is the canonical bit-exact interchange format; PLY is read-only.

#pragma once

#include <stdexcept>
#include <string>

#include "priorloc/cloud.hpp"

namespace priorloc {

class CloudIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadResult {
  PointCloud cloud;
  int dropped_nan = 0;  // non-finite rows removed on load
};

/// Dispatches on extension: .pcd or .ply. Throws CloudIoError on malformed
/// input, naming the offending header line where possible.
LoadResult load_cloud(const std::string& path);

enum class PcdFormat { kAscii, kBinary };

/// Writes fields x y z [normal_x normal_y normal_z] [error] as FLOAT8 (double)
/// so binary round-trips are bit-exact.
void save_cloud(const PointCloud& cloud, const std::string& path,
                PcdFormat format = PcdFormat::kBinary);

}  // namespace priorloc
