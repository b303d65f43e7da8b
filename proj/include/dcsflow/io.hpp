#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dcsflow/flow.hpp"

namespace dcsflow {

/// Binary matrix file: 16-byte header (magic "DCSM", u32 rows, u32 cols,
/// u32 element width in bytes), then column-major little-endian float64 data.
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

void write_vector(const std::filesystem::path& path, const Eigen::VectorXd& v);
Eigen::VectorXd read_vector(const std::filesystem::path& path);

/// Snapshot CSV: one row per stacked component with columns
/// location,component,<T snapshot values>.
void write_snapshot_csv(const std::filesystem::path& path, const SnapshotMatrix& snapshots);

/// Field map CSV: ny rows x nx columns in row-major node order, preceded by an
/// axis header line describing the grid.
void write_field_map_csv(const std::filesystem::path& path, const Eigen::VectorXd& field,
                         const GridSpec& grid, int component);

/// Deterministic float formatting for all CSV output ('.' decimal separator,
/// round-trip precision).
std::string format_double(double v);

/// FNV-1a 64-bit over a file's bytes, hex-encoded; used for manifests and
/// determinism checks.
std::string file_hash_hex(const std::filesystem::path& path);
std::uint64_t fnv1a64(const void* data, std::size_t size);

}  // namespace dcsflow
