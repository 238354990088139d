#include "fbl/gridio.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace fbl {
namespace {

constexpr char kMagic[8] = {'F', 'B', 'L', 'G', 'R', 'I', 'D', '1'};

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("grid file: truncated header");
  return v;
}

}  // namespace

void write_grid_file(const std::string& path, const BoxGrid& grid,
                     const std::vector<std::vector<double>>& comp, const nlohmann::json& meta) {
  for (const auto& c : comp)
    if (c.size() != grid.size()) throw std::invalid_argument("write_grid_file: component size mismatch");
  const std::size_t nc = comp.size();
  if (ends_with(path, ".csv")) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "# " << grid.dim() << ' ' << grid.points_per_axis() << ' ' << std::setprecision(17)
       << grid.half_width() << ' ' << nc << ' ' << (grid.boundary() == Boundary::periodic ? 0 : 1) << '\n';
    for (std::size_t i = 0; i < grid.size(); ++i) {
      for (std::size_t k = 0; k < nc; ++k) os << (k ? "," : "") << comp[k][i];
      os << '\n';
    }
  } else {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    os.write(kMagic, sizeof kMagic);
    put<std::int32_t>(os, grid.dim());
    put<std::int32_t>(os, grid.points_per_axis());
    put<double>(os, grid.half_width());
    put<std::int32_t>(os, static_cast<std::int32_t>(nc));
    put<std::int32_t>(os, grid.boundary() == Boundary::periodic ? 0 : 1);
    std::vector<double> row(nc);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      for (std::size_t k = 0; k < nc; ++k) row[k] = comp[k][i];
      os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(nc * sizeof(double)));
    }
  }
  if (!meta.is_null()) {
    std::ofstream ms(path + ".meta.json");
    ms << meta.dump(2) << '\n';
  }
}

GridFile read_grid_file(const std::string& path) {
  GridFile out;
  int d = 0, n = 0, nc = 0, bnd = 0;
  double L = 0.0;
  if (ends_with(path, ".csv")) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open grid file " + path);
    std::string line;
    std::getline(is, line);
    if (line.empty() || line[0] != '#') throw std::runtime_error("grid csv: missing header line in " + path);
    std::istringstream hs(line.substr(1));
    if (!(hs >> d >> n >> L >> nc >> bnd)) throw std::runtime_error("grid csv: malformed header in " + path);
    out.grid = BoxGrid(d, L, n, bnd == 0 ? Boundary::periodic : Boundary::absorbing);
    out.comp.assign(static_cast<std::size_t>(nc), std::vector<double>(out.grid.size()));
    for (std::size_t i = 0; i < out.grid.size(); ++i) {
      if (!std::getline(is, line)) throw std::runtime_error("grid csv: too few rows in " + path);
      std::istringstream rs(line);
      for (int k = 0; k < nc; ++k) {
        std::string cell;
        if (!std::getline(rs, cell, ',')) throw std::runtime_error("grid csv: short row in " + path);
        out.comp[k][i] = std::stod(cell);
      }
    }
  } else {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open grid file " + path);
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
      throw std::runtime_error("grid file: bad magic in " + path);
    d = get<std::int32_t>(is);
    n = get<std::int32_t>(is);
    L = get<double>(is);
    nc = get<std::int32_t>(is);
    bnd = get<std::int32_t>(is);
    out.grid = BoxGrid(d, L, n, bnd == 0 ? Boundary::periodic : Boundary::absorbing);
    out.comp.assign(static_cast<std::size_t>(nc), std::vector<double>(out.grid.size()));
    std::vector<double> row(static_cast<std::size_t>(nc));
    for (std::size_t i = 0; i < out.grid.size(); ++i) {
      is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(nc * sizeof(double)));
      if (!is) throw std::runtime_error("grid file: truncated samples in " + path);
      for (int k = 0; k < nc; ++k) out.comp[k][i] = row[k];
    }
  }
  std::ifstream ms(path + ".meta.json");
  if (ms) out.meta = nlohmann::json::parse(ms);
  return out;
}

}  // namespace fbl
