#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lightattack/attack.hpp"
#include "lightattack/image.hpp"

namespace lightattack {

// ---- images ---------------------------------------------------------------

enum class ImageFormat { png, ppm };

/// 8-bit RGB PNG, values rounded half up.
std::vector<std::uint8_t> encode_png(const ImageBuffer& img);
std::vector<std::uint8_t> encode_gray_png(std::span<const std::uint8_t> gray, int width, int height);
/// PNG (8-bit RGB/RGBA; gray and palette are expanded, alpha dropped). Throws FormatError.
ImageBuffer decode_png(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_ppm(const ImageBuffer& img);
/// Binary PPM (P6, maxval 255). Throws FormatError.
ImageBuffer decode_ppm(std::span<const std::uint8_t> bytes);

/// Sniffs the magic bytes and decodes PNG or P6. Throws FormatError or TransportError.
ImageBuffer load_image(const std::filesystem::path& path);
void save_image(const ImageBuffer& img, const std::filesystem::path& path,
                ImageFormat format = ImageFormat::png);
void save_light_map(const LightMap& map, const std::filesystem::path& path);

/// Writes through a temporary sibling and renames it over the destination.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// ---- labels ---------------------------------------------------------------

inline constexpr const char* kBuiltinCoco30 = "builtin:coco30";

struct LabelList {
  std::vector<std::string> labels;
  /// Optional "@truth <file>: <label>" annotations keyed by file name.
  std::map<std::string, std::string> truth_by_file;
};

/// The bundled 30-category list, in table order.
const std::vector<std::string>& coco30_labels();

/// One label per line; blank lines and lines starting with '#' are skipped.
/// Throws ValidationError on duplicates or an empty list.
LabelList parse_labels(const std::string& text);
/// "builtin:coco30" or a file path.
LabelList load_labels(const std::string& source);

// ---- run report -----------------------------------------------------------

inline constexpr int kReportSchemaVersion = 1;

struct PredictionRecord {
  std::size_t index = 0;
  std::string label;
  double similarity = 0.0;
  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

struct TrajectoryRecord {
  int iter = 0;
  double best_fitness = 0.0;
  double adv = 0.0;
  double pecp = 0.0;
  double dis = 0.0;
  double sigma = 0.0;
  std::vector<double> mean;
  std::vector<double> cov_diag;
  friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

struct RunReport {
  int schema_version = kReportSchemaVersion;
  std::string mode;  // "attack" or "baseline"
  nlohmann::json config = nlohmann::json::object();
  PredictionRecord clean_prediction;
  PredictionRecord adversarial_prediction;
  bool success = false;
  std::vector<double> lambda_star;
  std::vector<double> lambda_mean;
  LossBreakdown best;
  std::vector<TrajectoryRecord> trajectory;
  std::string stop_reason;
  std::int64_t evaluations = 0;
  std::int64_t faults = 0;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
  bool images_quantized = true;
};

nlohmann::json config_to_json(const AttackConfig& config);

RunReport make_report(const AttackResult& result, const AttackConfig& config,
                      const std::string& mode, nlohmann::json extra_config = nlohmann::json::object());

std::string serialize_report(const RunReport& report);
/// Throws ValidationError on a missing field or an unsupported schema version.
RunReport parse_report(const std::string& text);
void save_report(const RunReport& report, const std::filesystem::path& path);

// ---- config file ----------------------------------------------------------

/// Flat key=value document; '#' comments and blank lines allowed.
/// Throws ValidationError on a malformed line or a repeated key.
std::map<std::string, std::string> parse_config_text(const std::string& text);

}  // namespace lightattack
