#include "advarena/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "advarena/rng.hpp"
#include "advarena/weights_io.hpp"

namespace advarena {

const std::vector<std::string>& shape_class_names() {
  static const std::vector<std::string> names{"filled_circle",      "ring",          "square",
                                              "diamond",            "triangle",      "horizontal_stripes",
                                              "vertical_stripes",   "checkerboard",  "cross",
                                              "gradient_disk"};
  return names;
}

namespace {

using Rgb = std::array<double, 3>;

Rgb hsv_to_rgb(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0:
      return {v, t, p};
    case 1:
      return {q, v, p};
    case 2:
      return {p, v, t};
    case 3:
      return {p, q, v};
    case 4:
      return {t, p, v};
    default:
      return {v, p, q};
  }
}

bool stripe(double t, double bands) { return static_cast<long>(std::floor((t + 1.0) * bands * 0.5)) % 2 == 0; }

// Coverage of the shape at local coordinates (dx, dy), radius-normalised. For the gradient disk the value is
// a foreground weight in [0,1] rather than a hard mask.
double shape_value(std::size_t cls, double dx, double dy) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  const double d = std::sqrt(dx * dx + dy * dy);
  const bool in_box = ax <= 1.0 && ay <= 1.0;
  switch (cls) {
    case 0:
      return d <= 1.0;
    case 1:
      return d <= 1.0 && d >= 0.55;
    case 2:
      return ax <= 0.8 && ay <= 0.8;
    case 3:
      return ax + ay <= 1.0;
    case 4:
      return dy <= 0.8 && dy >= -0.9 && ax <= (dy + 0.9) / 1.7;
    case 5:
      return in_box && stripe(dy, 5.0);
    case 6:
      return in_box && stripe(dx, 5.0);
    case 7:
      return in_box && (stripe(dx, 4.0) != stripe(dy, 4.0));
    case 8:
      return (ax <= 0.3 && ay <= 1.0) || (ay <= 0.3 && ax <= 1.0);
    case 9:
      return d <= 1.0 ? 1.0 - d : 0.0;
    default:
      return 0.0;
  }
}

Tensor render(std::size_t cls, std::size_t size, Rng& rng) {
  const double cx = rng.uniform(-0.2, 0.2);
  const double cy = rng.uniform(-0.2, 0.2);
  const double radius = rng.uniform(0.45, 0.7);
  const Rgb fg = hsv_to_rgb(rng.uniform(), rng.uniform(0.6, 1.0), rng.uniform(0.7, 1.0));
  const Rgb bg = hsv_to_rgb(rng.uniform(), rng.uniform(0.0, 0.5), rng.uniform(0.1, 0.45));
  const double noise = 0.06;

  Tensor img = Tensor::image(3, size, size);
  const double s = static_cast<double>(size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      // 2x2 supersampling for soft edges.
      double a = 0.0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double u = (static_cast<double>(x) + 0.25 + 0.5 * sx) / s * 2.0 - 1.0;
          const double v = (static_cast<double>(y) + 0.25 + 0.5 * sy) / s * 2.0 - 1.0;
          a += shape_value(cls, (u - cx) / radius, (v - cy) / radius);
        }
      a *= 0.25;
      for (std::size_t c = 0; c < 3; ++c) {
        const double n = rng.uniform(-noise, noise);
        img.at(c, y, x) = std::clamp(bg[c] * (1.0 - a) + fg[c] * a + n, 0.0, 1.0);
      }
    }
  return quantize_to_grid(img);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) {
    while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) cur.pop_back();
    out.push_back(cur);
  }
  return out;
}

}  // namespace

Tensor quantize_to_grid(const Tensor& pixels) {
  Tensor out = pixels;
  for (double& v : out.data()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

DatasetSplit generate(std::size_t n_classes, std::size_t n_per_class, std::size_t size, std::uint64_t seed,
                      std::string name) {
  if (n_classes < 2 || n_classes > kMaxShapeClasses)
    throw std::invalid_argument("generate: n_classes must be in [2, " + std::to_string(kMaxShapeClasses) + "], got " +
                                std::to_string(n_classes));
  if (n_per_class == 0) throw std::invalid_argument("generate: n_per_class must be positive");
  if (size < 8) throw std::invalid_argument("generate: size must be >= 8, got " + std::to_string(size));

  std::vector<std::size_t> labels;
  labels.reserve(n_classes * n_per_class);
  for (std::size_t c = 0; c < n_classes; ++c) labels.insert(labels.end(), n_per_class, c);
  Rng order_rng(derive_seed(seed, hash_name("order")));
  order_rng.shuffle(labels);

  DatasetSplit split;
  split.name = name;
  split.seed = seed;
  split.n_classes = n_classes;
  split.records.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Rng rng(derive_seed(seed, hash_name("image"), i));
    char id[64];
    std::snprintf(id, sizeof id, "%s_%05zu", name.c_str(), i);
    split.records.push_back({id, render(labels[i], size, rng), labels[i], labels[i]});
  }
  assign_targets(split, derive_seed(seed, hash_name("targets")));
  return split;
}

void assign_targets(DatasetSplit& split, std::uint64_t seed) {
  if (split.n_classes < 2) throw std::invalid_argument("assign_targets: need at least 2 classes");
  Rng rng(seed);
  for (auto& r : split.records) {
    if (r.true_label >= split.n_classes) throw std::invalid_argument("assign_targets: label out of range in " + r.id);
    const auto k = static_cast<std::size_t>(rng.uniform_int(split.n_classes - 1));
    r.target_label = k < r.true_label ? k : k + 1;
  }
}

// ---- portable pixmap -------------------------------------------------------------------------------

std::vector<std::uint8_t> encode_ppm(const Tensor& pixels) {
  if (pixels.rank() != 3 || pixels.dim(0) != 3)
    throw std::invalid_argument("encode_ppm: expected [3,H,W], got " + shape_str(pixels.shape()));
  const std::size_t H = pixels.dim(1), W = pixels.dim(2);
  const std::string header = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + 3 * H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(pixels.at(c, y, x), 0.0, 1.0) * 255.0)));
  return out;
}

Tensor decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
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
  auto read_uint = [&](const char* field) -> std::size_t {
    skip_space_and_comments();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) throw FormatError(std::string("ppm: ") + field + " too large at byte " + std::to_string(start));
      ++pos;
    }
    if (pos == start) throw FormatError(std::string("ppm: malformed header, expected ") + field + " at byte " +
                                        std::to_string(start));
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("ppm: bad magic, expected P6");
  pos = 2;
  const std::size_t W = read_uint("width");
  const std::size_t H = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (W == 0 || H == 0) throw FormatError("ppm: zero extent in header");
  if (maxval != 255) throw FormatError("ppm: unsupported maxval " + std::to_string(maxval) + ", expected 255");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("ppm: missing separator after maxval");
  ++pos;
  const std::size_t need = 3 * W * H;
  if (bytes.size() - pos < need)
    throw FormatError("ppm: truncated payload, expected " + std::to_string(need) + " bytes, found " +
                      std::to_string(bytes.size() - pos));
  Tensor img = Tensor::image(3, H, W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<double>(bytes[pos++]) / 255.0;
  return img;
}

void write_image(const Tensor& pixels, const std::filesystem::path& path) { write_bytes(path, encode_ppm(pixels)); }

Tensor read_image(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_split(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "labels.csv", std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + (dir / "labels.csv").string());
  csv << "image_id,true_label,target_label\n";
  for (const auto& r : split.records) {
    write_image(r.pixels, dir / (r.id + ".ppm"));
    csv << r.id << ',' << r.true_label << ',' << r.target_label << '\n';
  }
}

DatasetSplit load_split(const std::filesystem::path& dir, std::string name) {
  const auto csv_path = dir / "labels.csv";
  std::ifstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(csv, line) || split_csv_line(line) != std::vector<std::string>{"image_id", "true_label", "target_label"})
    throw FormatError(csv_path.string() + ": expected header image_id,true_label,target_label");
  DatasetSplit split;
  split.name = name.empty() ? dir.filename().string() : std::move(name);
  std::set<std::string> ids;
  std::size_t line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 3) throw FormatError(csv_path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    ImageRecord r;
    r.id = f[0];
    try {
      r.true_label = std::stoul(f[1]);
      r.target_label = std::stoul(f[2]);
    } catch (const std::exception&) {
      throw FormatError(csv_path.string() + ":" + std::to_string(line_no) + ": bad label");
    }
    if (!ids.insert(r.id).second)
      throw FormatError(csv_path.string() + ":" + std::to_string(line_no) + ": duplicate id " + r.id);
    r.pixels = read_image(dir / (r.id + ".ppm"));
    split.n_classes = std::max({split.n_classes, r.true_label + 1, r.target_label + 1});
    split.records.push_back(std::move(r));
  }
  return split;
}

}  // namespace advarena
