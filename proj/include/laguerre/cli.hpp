#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "laguerre/lloyd.hpp"
#include "laguerre/seeding.hpp"

namespace laguerre::cli {

inline constexpr const char* kConfigSchema = "laguerre-config/1";
inline constexpr const char* kDiagramFormat = "laguerre-diagram/1";
inline constexpr const char* kVersion = "0.1.0";

enum class Mode { kGenerate, kFit, kDiagram, kReport };

const char* to_string(Mode mode);
Mode mode_from_string(const std::string& name);

enum class WeightInit { kZeros, kSpherePacking, kFile };

const char* to_string(WeightInit init);
WeightInit weight_init_from_string(const std::string& name);

struct RunConfig {
  Mode mode = Mode::kGenerate;
  std::uint64_t rng_seed = 0;
  /// 0 leaves the OpenMP default.
  int threads = 0;

  int dimension = 2;
  std::vector<double> lower;
  std::vector<double> upper;
  bool periodic = false;

  /// Exactly one of seeds_file / spatial is used.
  std::optional<std::filesystem::path> seeds_file;
  SpatialSpec spatial;
  bool spatial_seed_given = false;

  std::optional<std::filesystem::path> targets_file;
  std::optional<VolumeSpec> volumes;

  SolveOptions solver;
  WeightInit w_init = WeightInit::kZeros;
  std::optional<std::filesystem::path> weights_file;

  LloydConfig lloyd;

  std::filesystem::path output_dir = ".";
  std::string diagram_name = "diagram.json";
  std::string report_name = "report.json";
  std::string generators_name = "generators.csv";
  std::string statistics_name = "statistics.json";
  bool write_vtk = false;

  /// Report mode inputs.
  std::optional<std::filesystem::path> report_diagram;
  std::optional<std::filesystem::path> reference_centroids;
};

/// Relative paths in the config are resolved against `base_dir`.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

/// Rows of a seed/target CSV: `id,x,y[,z][,w][,m]`.
struct PointTable {
  int dimension = 2;
  std::vector<std::int64_t> ids;
  std::vector<std::vector<double>> points;
  /// Empty when the column is absent.
  std::vector<double> weights;
  std::vector<double> masses;

  std::size_t size() const { return ids.size(); }
};

PointTable parse_point_csv(const std::string& text, int dimension);
std::string format_point_csv(const PointTable& table);
PointTable read_point_csv(const std::filesystem::path& path, int dimension);

struct FaceRecord {
  std::vector<int> vertices;
  /// Neighbour cell id, or the wall id 2*axis + side.
  std::optional<std::int64_t> neighbor;
  std::optional<int> wall;
  std::array<int, 3> image{0, 0, 0};
  double area = 0.0;
};

struct CellRecord {
  std::int64_t id = 0;
  std::vector<double> seed;
  double weight = 0.0;
  double volume = 0.0;
  std::optional<double> target;
  std::optional<double> relative_error;
  /// Absent for empty cells.
  std::optional<std::vector<double>> centroid;
  std::optional<double> sphericity;
  std::vector<FaceRecord> faces;
  /// Opaque pass-through (null when absent).
  nlohmann::json attribute;
};

struct DiagramExport {
  int dimension = 2;
  bool periodic = false;
  std::vector<double> lower;
  std::vector<double> upper;
  double volume = 0.0;
  std::string version = kVersion;
  /// Shared by every face; periodic cells are stored unwrapped.
  std::vector<std::vector<double>> vertices;
  std::vector<CellRecord> cells;
};

template <int D>
DiagramExport make_export(const LaguerreDiagram<D>& diagram, const TargetSpec* targets = nullptr,
                          std::span<const std::int64_t> ids = {},
                          std::span<const nlohmann::json> attributes = {});

nlohmann::json to_json(const DiagramExport& e);
DiagramExport export_from_json(const nlohmann::json& doc);
/// Compact JSON with shortest round-trip numbers and a trailing newline.
std::string serialise(const DiagramExport& e);
DiagramExport parse_export(const std::string& text);

/// Legacy VTK polydata: polygons (2D cells or 3D faces) with per-polygon
/// cell id, volume and relative error.
std::string to_vtk(const DiagramExport& e);

struct Distribution {
  std::vector<double> values;
  /// (x, fraction of grains with value > x) at every sorted sample.
  std::vector<std::pair<double, double>> ccdf;
  double mean = 0.0;
  double median = 0.0;
  double p90 = 0.0;
  double p99 = 0.0;
  double max = 0.0;

  double ccdf_at(double x) const;
};

Distribution make_distribution(std::vector<double> values);

struct ErrorStatistics {
  /// 100 |V_i - m_i| / m_i.
  Distribution volume_error_percent;
  /// |c_i - c_i^ref| / r_i with r_i the volume-equivalent radius.
  std::optional<Distribution> centroid_relative_error;
  std::optional<double> fraction_centroid_below_one;
};

/// `targets` overrides the export's target volumes; both it and `reference`
/// must carry exactly the export's ids. Throws IdMismatch.
ErrorStatistics report_errors(const DiagramExport& e, const PointTable* targets = nullptr,
                              const PointTable* reference = nullptr);

nlohmann::json to_json(const ErrorStatistics& s);
nlohmann::json to_json(const SolveReport& r);
nlohmann::json to_json(const LloydTrace& t);

/// Writes to a temporary file in the same directory, then renames it.
void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// 2 configuration/input errors, 3 solver failures, 4 IO errors.
int exit_code_for(const Error& error);

/// Executes the configured pipeline. Errors are caught, reported to `err`
/// as a one-line JSON record and mapped to an exit code.
int run(const RunConfig& config, std::ostream& err);

}  // namespace laguerre::cli
