#pragma once

// Plain-text artifacts: numeric CSV tables, key=value sidecars, and SHA-256
// digests for run manifests. Numbers are written with 17 significant digits.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "narxmpc/config.hpp"
#include "narxmpc/kernel.hpp"
#include "narxmpc/mpc.hpp"
#include "narxmpc/stability.hpp"

namespace narxmpc {

namespace fs = std::filesystem;

using KvList = std::vector<std::pair<std::string, std::string>>;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  // Throws IoError if the column is missing.
  std::size_t column(const std::string& name) const;
};

// Throws IoError naming the file and line for malformed rows.
CsvTable read_csv(const fs::path& path);
void write_csv(const fs::path& path, const CsvTable& table);

KeyValues read_key_values(const fs::path& path);
void write_key_values(const fs::path& path, const KvList& values);

// foo.csv -> foo.meta
fs::path sidecar_path(const fs::path& csv);

// Header xi_1..xi_d, y_1..y_p plus a sidecar with dims and normalization.
void write_dataset(const Dataset& data, const fs::path& csv, const KvList& provenance = {});
Dataset read_dataset(const fs::path& csv);

// Sites, targets and coefficients (alpha_1..alpha_p) in one CSV; the sidecar
// holds the kernel spec. Reading refits and checks the stored coefficients.
void write_model(const KernelInterpolant& model, const fs::path& csv, const KvList& extra = {});
KernelInterpolant read_model(const fs::path& csv);

// Normalized trace plus a raw-unit companion with the same columns. Rows are
// steps k = 0..S-1 holding x(k), u(k), y(k+1).
void write_trace(const ClosedLoopTrace& trace, const StorageMatrix& storage,
                 const AffineNormalization& normalization, const fs::path& csv,
                 const fs::path& raw_csv);
// The terminal regressor is rebuilt from the last row; terminal_V is left empty.
ClosedLoopTrace read_trace(const fs::path& csv, const NarxDims& dims);

std::string sha256_file(const fs::path& path);

struct RunManifest {
  std::string subcommand;
  std::string config_path;
  std::string config_text;
  std::uint64_t seed = 0;
  std::string version;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::vector<std::string> failures;
  double seconds = 0.0;
};

// Digests are computed here. The wall-clock duration is the only field that
// varies between identical runs.
void write_manifest(const fs::path& path, const RunManifest& manifest);

std::string toolkit_version();

}  // namespace narxmpc
