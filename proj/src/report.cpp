#include "lenslearn/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lenslearn/errors.hpp"
#include "lenslearn/io.hpp"

namespace lenslearn::report {

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != image.height * image.width) {
    throw DimensionError("pgm: " + std::to_string(image.pixels.size()) + " pixels for " +
                         std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  const std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    if (start == pos) throw ParseError(source, start, "truncated pgm header");
    return std::string(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                       bytes.begin() + static_cast<std::ptrdiff_t>(pos));
  };
  if (token() != "P5") throw ParseError(source, 0, "not a binary pgm");
  GrayImage img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    if (token() != "255") throw ParseError(source, pos, "maxval must be 255");
  } catch (const std::logic_error&) {
    throw ParseError(source, pos, "bad pgm header");
  }
  ++pos;  // single whitespace after maxval
  if (bytes.size() - std::min(pos, bytes.size()) != img.width * img.height) {
    throw ParseError(source, pos, "pgm payload has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                                      std::to_string(img.width * img.height));
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) { write_file(path, encode_pgm(image)); }

std::uint8_t to_gray(float v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(255.0 * c));
}

GrayImage tile_grid(const std::vector<std::vector<Tensor>>& rows, const GridLayout& layout) {
  GrayImage img;
  img.height = layout.height(rows.size());
  img.width = layout.width();
  img.pixels.assign(img.height * img.width, 255);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != layout.columns) {
      throw DimensionError("grid row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                           " tiles, expected " + std::to_string(layout.columns));
    }
    for (std::size_t c = 0; c < layout.columns; ++c) {
      const Tensor& t = rows[r][c];
      if (t.shape() != Shape{layout.cell, layout.cell}) {
        throw DimensionError("grid tile " + shape_string(t.shape()) + " is not " + std::to_string(layout.cell) +
                             " square");
      }
      const std::size_t y0 = r * (layout.cell + layout.gutter), x0 = c * (layout.cell + layout.gutter);
      for (std::size_t y = 0; y < layout.cell; ++y) {
        for (std::size_t x = 0; x < layout.cell; ++x) {
          img.pixels[(y0 + y) * img.width + x0 + x] = to_gray(t[y * layout.cell + x]);
        }
      }
    }
  }
  return img;
}

GrayImage confusion_heatmap(const nn::ConfusionMatrix& m, std::size_t cell) {
  const std::size_t k = m.size();
  GrayImage img{k * cell, k * cell, std::vector<std::uint8_t>(k * cell * k * cell, 0)};
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t support = 0;
    for (auto v : m[i]) support += v;
    for (std::size_t j = 0; j < k; ++j) {
      const float frac = support ? static_cast<float>(m[i][j]) / static_cast<float>(support) : 0.0f;
      const std::uint8_t g = to_gray(frac);
      for (std::size_t y = 0; y < cell; ++y) {
        std::fill_n(img.pixels.begin() + static_cast<std::ptrdiff_t>((i * cell + y) * img.width + j * cell), cell, g);
      }
    }
  }
  return img;
}

std::string confusion_csv(const nn::ConfusionMatrix& m) {
  std::string out = "true\\pred";
  for (std::size_t j = 0; j < m.size(); ++j) out += "," + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    out += std::to_string(i);
    for (auto v : m[i]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

nn::ConfusionMatrix parse_confusion_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("true\\pred", 0) != 0) {
    throw ParseError(source, 0, "missing confusion header");
  }
  const auto classes = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::size_t offset = line.size() + 1;
  nn::ConfusionMatrix m;
  while (std::getline(in, line)) {
    const std::size_t at = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    if (cell != std::to_string(m.size())) throw ParseError(source, at, "expected row label " + std::to_string(m.size()));
    std::vector<std::size_t> counts;
    while (std::getline(row, cell, ',')) {
      if (cell.empty() || cell.find_first_not_of("0123456789") != std::string::npos) {
        throw ParseError(source, at, "count '" + cell + "' is not a non-negative integer");
      }
      counts.push_back(std::stoul(cell));
    }
    if (counts.size() != classes) {
      throw ParseError(source, at, "row has " + std::to_string(counts.size()) + " counts, header names " +
                                       std::to_string(classes) + " classes");
    }
    m.push_back(std::move(counts));
  }
  if (m.size() != classes) {
    throw ParseError(source, offset, std::to_string(m.size()) + " rows for " + std::to_string(classes) + " classes");
  }
  return m;
}

namespace {
std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}
}  // namespace

std::string accuracy_summary_csv(const std::vector<AccuracyRow>& rows) {
  std::string out = "Dataset,Route,TrainAccuracy,TestAccuracy\n";
  for (const auto& r : rows) {
    out += r.dataset + "," + r.route + "," + fixed(r.train_accuracy) + "," + fixed(r.test_accuracy) + "\n";
  }
  return out;
}

std::string dataset_summary_csv(const std::vector<DatasetRow>& rows) {
  std::string out = "Name,#images,#classes,TrainMAE,TestMAE\n";
  for (const auto& r : rows) {
    out += r.name + "," + std::to_string(r.images) + "," + std::to_string(r.classes) + "," + fixed(r.train_mae) +
           "," + fixed(r.test_mae) + "\n";
  }
  return out;
}

}  // namespace lenslearn::report
