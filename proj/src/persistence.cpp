#include "lightattack/persistence.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <unistd.h>

#include "lightattack/errors.hpp"

namespace lightattack {

namespace {

std::uint8_t to_byte(double x) { return static_cast<std::uint8_t>(std::floor(x * 255.0 + 0.5)); }

// ---- libpng glue. Errors longjmp back into the calling function, which then
// throws; no C++ exception ever crosses libpng frames.

struct PngWriteSink {
  std::vector<std::uint8_t> bytes;
};

void png_write_cb(png_structp png, png_bytep data, png_size_t length) {
  auto* sink = static_cast<PngWriteSink*>(png_get_io_ptr(png));
  sink->bytes.insert(sink->bytes.end(), data, data + length);
}

void png_flush_cb(png_structp) {}

struct PngReadSource {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
  std::size_t failed_at = 0;
  bool truncated = false;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t length) {
  auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
  if (src->offset + length > src->bytes.size()) {
    src->truncated = true;
    src->failed_at = src->offset;
    png_error(png, "truncated");
  }
  std::memcpy(out, src->bytes.data() + src->offset, length);
  src->offset += length;
}

struct PngError {
  char message[256] = {};
};

void png_error_cb(png_structp png, png_const_charp msg) {
  auto* err = static_cast<PngError*>(png_get_error_ptr(png));
  std::snprintf(err->message, sizeof(err->message), "%s", msg);
  png_longjmp(png, 1);
}

void png_warning_cb(png_structp, png_const_charp) {}

std::vector<std::uint8_t> encode_png_rows(const std::vector<std::uint8_t>& pixels, int width,
                                          int height, int color_type, int channels) {
  PngWriteSink sink;
  PngError err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_cb, png_warning_cb);
  if (!png) throw std::bad_alloc();
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::bad_alloc();
  }
  std::vector<png_bytep> rows(height);
  for (int v = 0; v < height; ++v) {
    rows[v] = const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(v) * width * channels);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(std::string("PNG encode failed: ") + err.message);
  }
  png_set_write_fn(png, &sink, png_write_cb, png_flush_cb);
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(sink.bytes);
}

const std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

bool is_png(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && std::equal(kPngSignature, kPngSignature + 8, bytes.begin());
}

bool is_ppm(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6';
}

}  // namespace

std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  std::vector<std::uint8_t> px(img.values().size());
  std::transform(img.values().begin(), img.values().end(), px.begin(), to_byte);
  return encode_png_rows(px, img.width(), img.height(), PNG_COLOR_TYPE_RGB, 3);
}

std::vector<std::uint8_t> encode_gray_png(std::span<const std::uint8_t> gray, int width, int height) {
  if (width <= 0 || height <= 0 || gray.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("gray image size mismatch");
  }
  return encode_png_rows(std::vector<std::uint8_t>(gray.begin(), gray.end()), width, height,
                         PNG_COLOR_TYPE_GRAY, 1);
}

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  if (!is_png(bytes)) {
    throw FormatError("not a PNG file: bad signature at offset 0");
  }
  PngReadSource src{bytes};
  PngError err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_cb, png_warning_cb);
  if (!png) throw std::bad_alloc();
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::bad_alloc();
  }
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    if (src.truncated) {
      throw FormatError("truncated PNG at offset " + std::to_string(src.failed_at));
    }
    throw FormatError("malformed PNG near offset " + std::to_string(src.offset) + ": " + err.message);
  }
  png_set_read_fn(png, &src, png_read_cb);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(width) * 3) {
    png_error(png, "unsupported pixel layout");
  }
  pixels.resize(static_cast<std::size_t>(width) * height * 3);
  rows.resize(height);
  for (png_uint_32 v = 0; v < height; ++v) rows[v] = pixels.data() + static_cast<std::size_t>(v) * width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<double> values(pixels.size());
  std::transform(pixels.begin(), pixels.end(), values.begin(),
                 [](std::uint8_t b) { return b / 255.0; });
  return ImageBuffer(static_cast<int>(width), static_cast<int>(height), std::move(values));
}

std::vector<std::uint8_t> encode_ppm(const ImageBuffer& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.values().size());
  for (double x : img.values()) out.push_back(to_byte(x));
  return out;
}

ImageBuffer decode_ppm(std::span<const std::uint8_t> bytes) {
  if (!is_ppm(bytes)) {
    throw FormatError("not a binary PPM: bad magic at offset 0");
  }
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    const std::size_t begin = pos;
    long value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1'000'000) throw FormatError(std::string("PPM ") + what + " too large at offset " + std::to_string(begin));
      ++pos;
    }
    if (pos == begin) {
      throw FormatError(std::string("PPM ") + what + " missing at offset " + std::to_string(begin));
    }
    return static_cast<int>(value);
  };
  const int width = read_int("width");
  const int height = read_int("height");
  const int maxval = read_int("maxval");
  if (width <= 0 || height <= 0) throw FormatError("PPM has zero dimensions");
  if (maxval != 255) {
    throw FormatError("PPM maxval " + std::to_string(maxval) + " unsupported (only 255)");
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FormatError("PPM header not terminated at offset " + std::to_string(pos));
  }
  ++pos;
  const std::size_t need = static_cast<std::size_t>(width) * height * 3;
  if (bytes.size() - pos < need) {
    throw FormatError("truncated PPM at offset " + std::to_string(bytes.size()) + ": expected " +
                      std::to_string(need) + " pixel bytes from offset " + std::to_string(pos));
  }
  std::vector<double> values(need);
  for (std::size_t i = 0; i < need; ++i) values[i] = bytes[pos + i] / 255.0;
  return ImageBuffer(width, height, std::move(values));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename onto " + path.string() + ": " + ec.message());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ImageBuffer load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.empty()) throw FormatError(path.string() + ": empty file (offset 0)");
  if (is_png(bytes)) return decode_png(bytes);
  if (is_ppm(bytes)) return decode_ppm(bytes);
  throw FormatError(path.string() + ": unsupported image format at offset 0");
}

void save_image(const ImageBuffer& img, const std::filesystem::path& path, ImageFormat format) {
  write_file_atomic(path, format == ImageFormat::png ? encode_png(img) : encode_ppm(img));
}

void save_light_map(const LightMap& map, const std::filesystem::path& path) {
  write_file_atomic(path, encode_gray_png(light_map_to_gray8(map), map.width, map.height));
}

// ---- labels -----------------------------------------------------------------

const std::vector<std::string>& coco30_labels() {
  static const std::vector<std::string> labels = {
      "airplane", "banana",     "bear",  "bed",        "bird",          "boat",
      "broccoli", "bus",        "cake",  "cell phone", "clock",         "cow",
      "dog",      "donut",      "elephant", "fire hydrant", "horse",    "kite",
      "motorcycle", "pizza",    "sandwich", "teddy bear", "traffic light", "stop sign",
      "toilet",   "train",      "umbrella", "vase",     "zebra",         "sheep"};
  return labels;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

LabelList parse_labels(const std::string& text) {
  LabelList out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.rfind("@truth", 0) == 0) {
      const std::string rest = trim(t.substr(6));
      const auto colon = rest.rfind(':');
      if (colon == std::string::npos || trim(rest.substr(0, colon)).empty() ||
          trim(rest.substr(colon + 1)).empty()) {
        throw ValidationError("line " + std::to_string(lineno) + ": expected '@truth <file>: <label>'");
      }
      out.truth_by_file[trim(rest.substr(0, colon))] = trim(rest.substr(colon + 1));
      continue;
    }
    if (!seen.insert(t).second) {
      throw ValidationError("line " + std::to_string(lineno) + ": duplicate label '" + t + "'");
    }
    out.labels.push_back(t);
  }
  if (out.labels.empty()) throw ValidationError("label list is empty");
  for (const auto& [file, label] : out.truth_by_file) {
    if (!seen.count(label)) {
      throw ValidationError("truth label '" + label + "' for " + file + " is not in the list");
    }
  }
  return out;
}

LabelList load_labels(const std::string& source) {
  if (source == kBuiltinCoco30) return {coco30_labels(), {}};
  if (source.rfind("builtin:", 0) == 0) {
    throw ValidationError("unknown builtin label list '" + source + "'");
  }
  const auto bytes = read_file(source);
  return parse_labels(std::string(bytes.begin(), bytes.end()));
}

// ---- report -----------------------------------------------------------------

namespace {

using nlohmann::json;

// JSON has no infinity; non-finite values travel as null.
json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double get_num(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("report is missing '") + key + "'");
  return *it;
}

json to_json(const PredictionRecord& p) {
  return {{"index", p.index}, {"label", p.label}, {"similarity", num(p.similarity)}};
}

PredictionRecord prediction_from(const json& j) {
  return {field(j, "index").get<std::size_t>(), field(j, "label").get<std::string>(),
          get_num(field(j, "similarity"))};
}

json to_json(const LossBreakdown& l) {
  return {{"adv", num(l.adv)}, {"pecp", num(l.pecp)}, {"dis", num(l.dis)}, {"fitness", num(l.fitness)}};
}

LossBreakdown loss_from(const json& j) {
  return {get_num(field(j, "adv")), get_num(field(j, "pecp")), get_num(field(j, "dis")),
          get_num(field(j, "fitness"))};
}

PredictionRecord record(const Prediction& p) { return {p.index, p.label, p.similarity}; }

}  // namespace

json config_to_json(const AttackConfig& c) {
  return {{"lights", c.n_lights},
          {"pop", c.population},
          {"iters", c.max_iters},
          {"patience", c.patience},
          {"min-delta", c.min_delta},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"delta", c.dist_threshold},
          {"ambient", c.ambient_gain},
          {"seed", c.seed},
          {"lra", c.lra},
          {"workers", c.workers},
          {"provider", c.provider == ProviderKind::local ? "local" : "remote"},
          {"endpoint", c.endpoint}};
}

RunReport make_report(const AttackResult& result, const AttackConfig& config, const std::string& mode,
                      json extra_config) {
  RunReport r;
  r.mode = mode;
  r.config = config_to_json(config);
  for (auto& [k, v] : extra_config.items()) r.config[k] = v;
  r.clean_prediction = record(result.clean);
  r.adversarial_prediction = record(result.adversarial_prediction);
  r.success = result.success;
  r.lambda_star = result.lambda_star.to_flat();
  r.lambda_mean = result.lambda_mean.to_flat();
  r.best = result.best_loss;
  for (const auto& it : result.trajectory) {
    r.trajectory.push_back({it.iter, it.best_fitness, it.best.adv, it.best.pecp, it.best.dis, it.sigma,
                            it.mean, it.cov_diag});
  }
  r.stop_reason = to_string(result.stop_reason);
  r.evaluations = result.evaluations;
  r.faults = result.faults;
  r.seed = config.seed;
  r.wall_ms = result.wall_ms;
  r.images_quantized = true;
  return r;
}

std::string serialize_report(const RunReport& r) {
  json traj = json::array();
  for (const auto& t : r.trajectory) {
    json mean = json::array();
    for (double x : t.mean) mean.push_back(num(x));
    json diag = json::array();
    for (double x : t.cov_diag) diag.push_back(num(x));
    traj.push_back({{"iter", t.iter},
                    {"best_fitness", num(t.best_fitness)},
                    {"adv", num(t.adv)},
                    {"pecp", num(t.pecp)},
                    {"dis", num(t.dis)},
                    {"sigma", num(t.sigma)},
                    {"mean", std::move(mean)},
                    {"cov_diag", std::move(diag)}});
  }
  json j = {{"schema_version", r.schema_version},
            {"mode", r.mode},
            {"config", r.config},
            {"clean_prediction", to_json(r.clean_prediction)},
            {"adversarial_prediction", to_json(r.adversarial_prediction)},
            {"success", r.success},
            {"lambda_star", r.lambda_star},
            {"lambda_mean", r.lambda_mean},
            {"best", to_json(r.best)},
            {"trajectory", std::move(traj)},
            {"stop_reason", r.stop_reason},
            {"evaluations", r.evaluations},
            {"faults", r.faults},
            {"seed", r.seed},
            {"wall_ms", num(r.wall_ms)},
            {"images_quantized", r.images_quantized}};
  return j.dump(2) + "\n";
}

RunReport parse_report(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("report is not valid JSON: ") + e.what());
  }
  try {
    RunReport r;
    r.schema_version = field(j, "schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion) {
      throw ValidationError("unsupported report schema version " + std::to_string(r.schema_version));
    }
    r.mode = field(j, "mode").get<std::string>();
    r.config = field(j, "config");
    r.clean_prediction = prediction_from(field(j, "clean_prediction"));
    r.adversarial_prediction = prediction_from(field(j, "adversarial_prediction"));
    r.success = field(j, "success").get<bool>();
    r.lambda_star = field(j, "lambda_star").get<std::vector<double>>();
    r.lambda_mean = field(j, "lambda_mean").get<std::vector<double>>();
    r.best = loss_from(field(j, "best"));
    for (const auto& t : field(j, "trajectory")) {
      TrajectoryRecord rec;
      rec.iter = field(t, "iter").get<int>();
      rec.best_fitness = get_num(field(t, "best_fitness"));
      rec.adv = get_num(field(t, "adv"));
      rec.pecp = get_num(field(t, "pecp"));
      rec.dis = get_num(field(t, "dis"));
      rec.sigma = get_num(field(t, "sigma"));
      for (const auto& x : field(t, "mean")) rec.mean.push_back(get_num(x));
      for (const auto& x : field(t, "cov_diag")) rec.cov_diag.push_back(get_num(x));
      r.trajectory.push_back(std::move(rec));
    }
    r.stop_reason = field(j, "stop_reason").get<std::string>();
    r.evaluations = field(j, "evaluations").get<std::int64_t>();
    r.faults = field(j, "faults").get<std::int64_t>();
    r.seed = field(j, "seed").get<std::uint64_t>();
    r.wall_ms = get_num(field(j, "wall_ms"));
    r.images_quantized = field(j, "images_quantized").get<bool>();
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

void save_report(const RunReport& report, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_report(report));
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(t.substr(0, eq));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key.empty()) {
      throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    }
    if (!out.emplace(key, trim(t.substr(eq + 1))).second) {
      throw ValidationError("config line " + std::to_string(lineno) + ": repeated key '" + key + "'");
    }
  }
  return out;
}

}  // namespace lightattack
