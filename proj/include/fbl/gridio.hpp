#pragma once

// Grid sample files.
//
// Binary layout (little-endian):
//   char[8]  magic "FBLGRID1"
//   int32    d
//   int32    n          points per axis
//   float64  L          half-width of the box [-L, L]^d
//   int32    components
//   int32    boundary   0 = periodic, 1 = absorbing
//   float64  samples[n^d][components]   row-major nodes, last axis fastest,
//                                       components interleaved per node
//
// CSV layout (files ending in .csv): first line "# d n L components boundary",
// then one line per node with the component values, same node order.
//
// An optional JSON sidecar "<file>.meta.json" carries free-form metadata.

#include <string>
#include <vector>

#include <json.hpp>

#include "fbl/grid.hpp"

namespace fbl {

struct GridFile {
  BoxGrid grid;
  std::vector<std::vector<double>> comp;
  nlohmann::json meta;
};

void write_grid_file(const std::string& path, const BoxGrid& grid,
                     const std::vector<std::vector<double>>& comp, const nlohmann::json& meta = nullptr);
GridFile read_grid_file(const std::string& path);

inline void write_grid_file(const std::string& path, const ScalarField& f, const nlohmann::json& meta = nullptr) {
  write_grid_file(path, f.grid, {f.data}, meta);
}
inline void write_grid_file(const std::string& path, const VectorField& f, const nlohmann::json& meta = nullptr) {
  write_grid_file(path, f.grid, f.comp, meta);
}

}  // namespace fbl
