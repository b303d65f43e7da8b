#include "dcsflow/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "dcsflow/errors.hpp"

namespace dcsflow {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'S', 'M'};

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  write_u32(out, sizeof(double));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!out) throw ValidationError("short write to " + path.string());
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ValidationError(path.string() + ": not a DCSM matrix file");
  const std::uint32_t rows = read_u32(in);
  const std::uint32_t cols = read_u32(in);
  const std::uint32_t width = read_u32(in);
  if (width != sizeof(double))
    throw ValidationError(path.string() + ": unsupported element width");
  Eigen::MatrixXd m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw ValidationError(path.string() + ": truncated matrix data");
  return m;
}

void write_vector(const std::filesystem::path& path, const Eigen::VectorXd& v) {
  write_matrix(path, v);
}

Eigen::VectorXd read_vector(const std::filesystem::path& path) {
  const Eigen::MatrixXd m = read_matrix(path);
  if (m.cols() != 1) throw ValidationError(path.string() + ": expected a single-column file");
  return m.col(0);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_snapshot_csv(const std::filesystem::path& path, const SnapshotMatrix& snapshots) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out << "location,component";
  for (Eigen::Index k = 0; k < snapshots.snapshot_count(); ++k) out << ",t" << k;
  out << "\n";
  const int n_loc = snapshots.grid.node_count();
  for (Eigen::Index row = 0; row < snapshots.rows(); ++row) {
    const int id = static_cast<int>(row) % n_loc;
    out << id << ',' << (row < n_loc ? 'u' : 'v');
    for (Eigen::Index k = 0; k < snapshots.snapshot_count(); ++k)
      out << ',' << format_double(snapshots.data(row, k));
    out << "\n";
  }
}

void write_field_map_csv(const std::filesystem::path& path, const Eigen::VectorXd& field,
                         const GridSpec& grid, int component) {
  const int n_loc = grid.node_count();
  if (field.size() != 2 * n_loc)
    throw ValidationError("field map: vector length does not match the grid");
  if (component != 0 && component != 1)
    throw ValidationError("field map: component must be 0 (u) or 1 (v)");
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out << "# x," << format_double(grid.x_range.lo) << ',' << format_double(grid.x_range.hi)
      << ",nx," << grid.nx << ",y," << format_double(grid.y_range.lo) << ','
      << format_double(grid.y_range.hi) << ",ny," << grid.ny << ",row-major\n";
  const int offset = component * n_loc;
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      if (i) out << ',';
      out << format_double(field(offset + grid.node_id(i, j)));
    }
    out << "\n";
  }
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string file_hash_hex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace dcsflow
